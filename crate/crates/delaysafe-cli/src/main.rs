use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use delaysafe::model::ScenarioConfig;
use delaysafe::oracles::{omega_decay, psi_decay, tail_start, target_residuals};
use delaysafe::platoon::{self, PlatoonConfig};
use delaysafe::scenario::load_scenario;
use delaysafe::sim::{self, metrics, Controller, SimLog};

#[derive(Parser)]
#[command(name = "delaysafe", version, about = "Safe delay-adaptive control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one controller variant.
    Run(RunArgs),
    /// Run all three variants and tabulate them side by side.
    Compare(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Preset name (platoon-table1) or scenario file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    dx: Option<f64>,
    /// Candidate-grid spacing of the delay bank.
    #[arg(long = "dD")]
    d_d: Option<f64>,
    #[arg(long)]
    tfinal: Option<f64>,
    #[arg(long, env = "DELAYSAFE_OUT", default_value = "out")]
    out: PathBuf,
    /// Comma-separated oracle suites: residuals, decay, cbf.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<String>,
    /// Run even if the initial-data assumptions fail.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_controller)]
    controller: Controller,
}

fn parse_controller(s: &str) -> std::result::Result<Controller, String> {
    Controller::from_name(s).ok_or_else(|| format!("unknown controller '{s}' (nominal, adaptive, uncompensated)"))
}

enum Scenario {
    Platoon(Box<PlatoonConfig>),
    Single(Box<ScenarioConfig>),
}

impl Scenario {
    fn load(c: &Common) -> Result<Scenario> {
        let mut sc = if c.scenario == platoon::PRESET {
            Scenario::Platoon(Box::new(platoon::table1()))
        } else {
            let cfg = load_scenario(Path::new(&c.scenario)).with_context(|| format!("loading {}", c.scenario))?;
            Scenario::Single(Box::new(cfg))
        };
        for cfg in sc.configs_mut() {
            if let Some(dt) = c.dt {
                cfg.numerics.dt = dt;
                cfg.numerics.d_pred = dt;
            }
            if let Some(dx) = c.dx {
                cfg.numerics.dx = dx;
            }
            if let Some(d) = c.d_d {
                cfg.delay.d_d = d;
            }
            if let Some(t) = c.tfinal {
                cfg.numerics.t_final = t;
            }
            cfg.validate()?;
        }
        Ok(sc)
    }

    fn configs_mut(&mut self) -> Vec<&mut ScenarioConfig> {
        match self {
            Scenario::Platoon(p) => p.vehicles.iter_mut().collect(),
            Scenario::Single(c) => vec![c.as_mut()],
        }
    }

    fn stem(&self, c: &Common) -> String {
        match self {
            Scenario::Platoon(_) => platoon::PRESET.to_string(),
            Scenario::Single(cfg) => {
                if cfg.name.is_empty() {
                    Path::new(&c.scenario).file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
                } else {
                    cfg.name.clone()
                }
            }
        }
    }

    fn run(&self, controller: Controller, force: bool, out: &Path, stem: &str) -> Result<Vec<SimLog>> {
        match self {
            Scenario::Platoon(p) => {
                let run = platoon::run_platoon(p, controller, force)?;
                run.write_figures(out, &format!("{stem}_{}", controller.name()))?;
                Ok(run.logs.to_vec())
            }
            Scenario::Single(cfg) => Ok(vec![sim::run(cfg, controller, force)?]),
        }
    }
}

struct Verdict {
    text: String,
    failed: Vec<String>,
}

fn evaluate(logs: &[SimLog], controller: Controller, checks: &[String]) -> Verdict {
    let mut text = String::new();
    let mut failed = Vec::new();
    for log in logs {
        let s = metrics(log);
        let _ = writeln!(text, "[{}]", log.name);
        text.push_str(&s.to_text());
        if let Some(t) = s.divergence {
            if controller == Controller::Uncompensated {
                let _ = writeln!(text, "verdict = divergence expected for the uncompensated baseline (t = {t})");
            } else {
                failed.push(format!("{} diverged at t = {t}", log.name));
            }
        }
        for check in checks {
            match check.as_str() {
                "residuals" => {
                    let t0 = if controller == Controller::Adaptive { tail_start(log) } else { 0.0 };
                    let r = target_residuals(log, t0);
                    let bound = 10.0 * log.dt;
                    let ok = r.z_max <= bound && r.r_max <= bound;
                    let _ = writeln!(text, "check.residuals = z {:e}, r {:e}, bound {bound:e}, {}", r.z_max, r.r_max, pass(ok));
                    if !ok {
                        failed.push(format!("{}: target residuals", log.name));
                    }
                }
                "decay" => {
                    let o = omega_decay(log);
                    let p = psi_decay(log);
                    let _ = writeln!(
                        text,
                        "check.decay = omega slope {:?}, psi slope {:?} from t = {}, {}",
                        o.slope,
                        p.slope,
                        o.start,
                        pass(o.decays())
                    );
                    if !o.decays() {
                        failed.push(format!("{}: Omega does not decay", log.name));
                    }
                }
                "cbf" => {
                    let floor = -1e-9;
                    let r_min = log.records.iter().flat_map(|r| r.r.iter().copied()).fold(f64::INFINITY, f64::min);
                    let z_min = log
                        .records
                        .iter()
                        .filter(|r| r.t >= log.d_true - 1e-12)
                        .flat_map(|r| r.z.iter().copied())
                        .fold(f64::INFINITY, f64::min);
                    let ok = r_min >= floor && z_min >= floor;
                    let _ = writeln!(text, "check.cbf = min r {r_min:e}, min z (t >= D) {z_min:e}, {}", pass(ok));
                    if !ok {
                        failed.push(format!("{}: CBF negative", log.name));
                    }
                }
                other => failed.push(format!("unknown check '{other}'")),
            }
        }
    }
    Verdict { text, failed }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let c = &args.common;
    let sc = Scenario::load(c)?;
    std::fs::create_dir_all(&c.out)?;
    let stem = sc.stem(c);
    let logs = sc.run(args.controller, c.force, &c.out, &stem)?;
    for log in &logs {
        let file = c.out.join(format!("{stem}_{}_{}.csv", args.controller.name(), log.name));
        sim::save_csv(log, &file)?;
    }
    let v = evaluate(&logs, args.controller, &c.checks);
    print!("{}", v.text);
    std::fs::write(c.out.join(format!("{stem}_{}_summary.txt", args.controller.name())), &v.text)?;
    for f in &v.failed {
        eprintln!("error: {f}");
    }
    Ok(v.failed.is_empty())
}

fn cmd_compare(c: &Common) -> Result<bool> {
    let sc = Scenario::load(c)?;
    std::fs::create_dir_all(&c.out)?;
    let stem = sc.stem(c);
    let mut runs = Vec::new();
    let mut errors = Vec::new();
    for ctl in Controller::ALL {
        match sc.run(ctl, c.force, &c.out, &stem) {
            Ok(logs) => runs.push((ctl, logs)),
            Err(e) => errors.push(format!("{}: {e}", ctl.name())),
        }
    }
    // merged telemetry keyed by time
    let mut columns = vec!["t".to_string()];
    let mut rows: BTreeMap<u64, Vec<(usize, f64)>> = BTreeMap::new();
    for (ctl, logs) in &runs {
        for log in logs {
            for field in ["margin", "U_a"] {
                let col = columns.len();
                columns.push(format!("{}_{}_{field}", ctl.name(), log.name));
                for r in &log.records {
                    let v = if field == "margin" { r.margin } else { r.u_a };
                    rows.entry((r.t / log.dt).round() as u64).or_default().push((col, v));
                }
            }
        }
    }
    let dt = runs.first().and_then(|r| r.1.first()).map_or(1.0, |l| l.dt);
    let mut w = csv::Writer::from_path(c.out.join(format!("{stem}_compare.csv")))?;
    w.write_record(&columns)?;
    for (k, vals) in rows {
        let mut line = vec![String::new(); columns.len()];
        line[0] = format!("{}", k as f64 * dt);
        for (col, v) in vals {
            line[col] = format!("{v}");
        }
        w.write_record(&line)?;
    }
    w.flush()?;

    let mut table = format!("{:<16}{:<6}{:>14}{:>14}{:>8}{:>10}{:>10}\n", "controller", "run", "min_margin", "terminal_err", "t_f", "d_hat_err", "diverged");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    let mut failed = errors.clone();
    for (ctl, logs) in &runs {
        for log in logs {
            let s = metrics(log);
            let _ = writeln!(
                table,
                "{:<16}{:<6}{:>14.6}{:>14.6}{:>8}{:>10}{:>10}",
                ctl.name(),
                log.name,
                s.min_margin,
                s.terminal_error,
                opt(s.t_f),
                opt(s.d_hat_rel_error),
                s.divergence.is_some()
            );
            if s.divergence.is_some() && *ctl != Controller::Uncompensated {
                failed.push(format!("{} {} diverged", ctl.name(), log.name));
            }
        }
    }
    print!("{table}");
    std::fs::write(c.out.join(format!("{stem}_compare_summary.txt")), &table)?;
    for f in &failed {
        eprintln!("error: {f}");
    }
    Ok(failed.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(c) => cmd_compare(c),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if e.downcast_ref::<delaysafe::Error>().is_some() {
                eprintln!("error: {e:#}");
            } else {
                eprintln!("error: {e:?}");
            }
            ExitCode::from(2)
        }
    }
}
