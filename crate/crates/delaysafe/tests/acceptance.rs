//! Acceptance run. Prints one line per criterion and exits non-zero if any
//! criterion fails.
//!
//! The platoon is simulated once per controller variant and shared by the
//! criteria that read it; random plants come from a fixed seed.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use delaysafe::backstepping::{evaluate_law, forward_z, GainSet};
use delaysafe::identifier::Identifier;
use delaysafe::model::{DelayConfig, IdentifierConfig};
use delaysafe::oracles::{
    inverse_x, inverse_y, observed_orders, omega_decay, predictor_convergence, psi_decay, ramp_field,
    target_residuals,
};
use delaysafe::platoon::{run_platoon, table1, vehicle_plant, PlatoonRun};
use delaysafe::sim::{self, ExprTarget};
use delaysafe::{assumptions, Controller, Jet, Numerics, PlantDefinition, ScenarioConfig, SimLog};
use rand::Rng;

const FLOOR: f64 = -1e-9;
const RANDOM_PLANTS: usize = 20;
const SEED: u64 = 0x5afe_de1a;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Platoon {
    run: PlatoonRun,
    elapsed: Duration,
}

fn platoon(controller: Controller) -> Platoon {
    let start = Instant::now();
    let run = run_platoon(&table1(), controller, false).expect("platoon run");
    Platoon { run, elapsed: start.elapsed() }
}

fn min_spacing(run: &PlatoonRun, t0: f64) -> (f64, f64) {
    run.spacings().iter().filter(|s| s.0 >= t0 - 1e-12).fold((f64::INFINITY, f64::INFINITY), |acc, s| {
        (acc.0.min(s.1), acc.1.min(s.2))
    })
}

/// (min r over all t, min z over t ≥ D).
fn cbf_minima(log: &SimLog) -> (f64, f64) {
    let r = log.records.iter().flat_map(|r| r.r.iter().copied()).fold(f64::INFINITY, f64::min);
    let z = log
        .records
        .iter()
        .filter(|r| r.t >= log.d_true - 1e-12)
        .flat_map(|r| r.z.iter().copied())
        .fold(f64::INFINITY, f64::min);
    (r, z)
}

fn safety(nominal: &Platoon, adaptive: &Platoon) -> Line {
    let mut pass = true;
    let mut detail = String::new();
    for (name, p) in [("nominal", nominal), ("adaptive", adaptive)] {
        let (d1, d2) = min_spacing(&p.run, 0.0);
        let t_end = p.run.logs[0].records.last().map_or(0.0, |r| r.t);
        let secs = p.elapsed.as_secs_f64();
        pass &= d1 - 0.5 >= FLOOR && d2 - 0.5 >= FLOOR && (t_end - 40.0).abs() < 1e-9 && secs < 60.0;
        detail += &format!("{name}: min d1 {d1:.12}, min d2 {d2:.12}, t_end {t_end}, {secs:.1} s; ");
    }
    Line { id: 1, name: "platoon safety", pass, detail }
}

fn tracking(nominal: &Platoon, adaptive: &Platoon) -> Line {
    let mut pass = true;
    let mut detail = String::new();
    for (name, p) in [("nominal", nominal), ("adaptive", adaptive)] {
        let worst = p
            .run
            .spacings()
            .iter()
            .filter(|s| s.0 >= 30.0)
            .map(|s| (s.1 - 0.5).abs().max((s.2 - 0.5).abs()))
            .fold(0.0, f64::max);
        pass &= worst < 0.05;
        detail += &format!("{name}: max |d - 0.5| on t >= 30 is {worst:.3e}; ");
    }
    Line { id: 2, name: "tracking convergence", pass, detail }
}

fn identification(adaptive: &Platoon) -> Line {
    let mut pass = true;
    let mut detail = String::new();
    for log in &adaptive.run.logs {
        let s = sim::metrics(log);
        let rel = s.d_hat_rel_error.unwrap_or(f64::INFINITY);
        pass &= s.t_f == Some(3.0) && rel <= 0.02;
        detail += &format!("{}: t_f {:?}, D_hat {:?} (D = {}), rel err {rel:.2e}; ", log.name, s.t_f, s.d_hat_tf, log.d_true);
    }
    Line { id: 3, name: "delay identification", pass, detail }
}

fn baseline(unc: &Platoon) -> Line {
    let (d1, d2) = min_spacing(&unc.run, 0.0);
    let div: Vec<Option<f64>> = unc.run.logs.iter().map(|l| l.divergence).collect();
    let guard = div.iter().flatten().any(|&t| t < 40.0);
    Line {
        id: 4,
        name: "uncompensated baseline fails",
        pass: d1.min(d2) < 0.5 && guard,
        detail: format!("min d1 {d1:.3}, min d2 {d2:.3}, divergence {div:?}"),
    }
}

fn cbf_suite(nominal: &Platoon, adaptive: &Platoon, random: &[(ScenarioConfig, [SimLog; 2])]) -> Line {
    let mut worst = (f64::INFINITY, f64::INFINITY);
    let mut failures = Vec::new();
    let platoon_logs = nominal.run.logs.iter().chain(&adaptive.run.logs).map(|l| ("platoon", l));
    let random_logs = random.iter().flat_map(|(_, logs)| logs.iter().map(|l| ("random", l)));
    for (i, (kind, log)) in platoon_logs.chain(random_logs).enumerate() {
        let (r, z) = cbf_minima(log);
        worst = (worst.0.min(r), worst.1.min(z));
        if r < FLOOR || z < FLOOR || log.divergence.is_some() {
            failures.push(format!("{kind} #{i} {} {:?}: r {r:.2e}, z {z:.2e}", log.name, log.controller));
        }
    }
    Line {
        id: 5,
        name: "CBF invariance",
        pass: failures.is_empty(),
        detail: format!(
            "{} runs, min r {:.3e}, min z (t >= D) {:.3e}{}",
            4 + 2 * random.len(),
            worst.0,
            worst.1,
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale.max(f64::MIN_POSITIVE)
}

fn inverse_round_trip(plants: &[(PlantDefinition, GainSet, f64)]) -> Line {
    let mut rng = common::rng(SEED ^ 0x1);
    let mut worst = 0.0f64;
    let mut samples = 0;
    let mut errors = Vec::new();
    for (plant, gains, step) in plants {
        let (gains, step) = (gains, *step);
        for _ in 0..100 {
            let y: Vec<f64> = (0..plant.n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..plant.m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let entries: Vec<f64> = (0..=plant.n + plant.m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = Jet::from_entries(&entries, step);
            let res = forward_z(plant, &y, &s, &gains.k)
                .and_then(|(z, _)| inverse_y(plant, &z, &s, &gains.k))
                .and_then(|y_back| {
                    let r = evaluate_law(plant, gains, &y, &x, &s)?.r;
                    let x_back = inverse_x(plant, gains, &r, &y, &s)?;
                    Ok(rel_err(&y_back, &y).max(rel_err(&x_back, &x)))
                });
            match res {
                Ok(e) => worst = worst.max(e),
                Err(e) => errors.push(e.to_string()),
            }
            samples += 1;
        }
    }
    Line {
        id: 6,
        name: "inverse transformation round trip",
        pass: errors.is_empty() && worst <= 1e-8,
        detail: format!("{} plants, {samples} samples, worst relative error {worst:.2e}, {} errors", plants.len(), errors.len()),
    }
}

fn predictor_order() -> Line {
    let plant = vehicle_plant(&table1().params[0]).expect("vehicle");
    let x1 = |t: f64| 2.0 + t.sin();
    match predictor_convergence(&plant, &[-5.0, -1.0], x1, 2.5, 5.0, &[0.01, 0.005, 0.0025]) {
        Ok(errs) => {
            let orders = observed_orders(&errs);
            Line {
                id: 7,
                name: "predictor first-order convergence",
                pass: orders.iter().all(|o| (0.7..=1.3).contains(o)),
                detail: format!(
                    "max errors {}, observed orders {}",
                    errs.iter().map(|(h, e)| format!("{e:.3e} @ {h}")).collect::<Vec<_>>().join(", "),
                    orders.iter().map(|o| format!("{o:.3}")).collect::<Vec<_>>().join(", ")
                ),
            }
        }
        Err(e) => Line { id: 7, name: "predictor first-order convergence", pass: false, detail: e.to_string() },
    }
}

fn identifier_ramp() -> Line {
    let b = -0.25;
    let dt = 0.001;
    let x_grid = Numerics::default().x_grid();
    let bounds = DelayConfig { d_lo: 0.2, d_hi: 4.0, d_d: 0.01 };
    let mut pass = true;
    let mut detail = String::new();
    for d in [0.5, 1.5, 2.5, 3.5] {
        let mut id = Identifier::new(IdentifierConfig::default(), bounds, &x_grid);
        let mut k = 0usize;
        let t_f = loop {
            let t = k as f64 * dt;
            if id.is_due(t) {
                id.trigger_update(t).expect("scheduled trigger");
                if let Some(tf) = id.t_f() {
                    break tf;
                }
            }
            id.accumulate(&ramp_field(b, d, &x_grid, t), dt);
            k += 1;
        };
        // f_n is integrated up to t_f; g_n from the field at t_f itself
        let mut probe = id.clone();
        let f = id.f_acc().to_vec();
        probe.accumulate(&ramp_field(b, d, &x_grid, t_f), dt);
        let g = probe.g_now();
        let scale = g.iter().map(|v| (d * v).abs()).fold(0.0, f64::max);
        let identity = f.iter().zip(g).map(|(fv, gv)| (fv - d * gv).abs()).fold(0.0, f64::max) / scale;
        let rel = (id.d_hat() - d).abs() / d;
        // left-rectangle time integration and trapezoid in x: O(dt + dx²)
        let tol = 10.0 * (dt + (x_grid[1] - x_grid[0]).powi(2));
        pass &= identity <= tol && rel <= 0.02;
        detail += &format!("D {d}: t_f {t_f}, D_hat {:.5}, |F - D G| rel {identity:.1e} (tol {tol:.0e}); ", id.d_hat());
    }
    Line { id: 8, name: "identifier on ramp transport field", pass, detail }
}

fn residuals(nominal: &Platoon, adaptive: &Platoon, stab: &[SimLog; 2]) -> Line {
    let mut pass = true;
    let mut detail = String::new();
    for log in nominal.run.logs.iter().chain(std::iter::once(&stab[0])) {
        let r = target_residuals(log, 0.0);
        let bound = 10.0 * log.dt;
        pass &= r.z_max <= bound && r.r_max <= bound;
        detail += &format!("nominal {}: z {:.1e}, r {:.1e}; ", log.name, r.z_max, r.r_max);
    }
    let d_d = table1().vehicles[0].delay.d_d;
    let bound = 10.0 * d_d;
    for log in adaptive.run.logs.iter().chain(std::iter::once(&stab[1])) {
        let t_f = log.t_f.unwrap_or(f64::INFINITY);
        let gamma = log.records.iter().filter(|r| r.t >= t_f).map(|r| r.gamma.abs()).fold(0.0, f64::max);
        pass &= log.t_f.is_some() && gamma <= bound;
        detail += &format!("adaptive {}: post-t_f |gamma| {gamma:.1e} (bound {bound}); ", log.name);
    }
    Line { id: 9, name: "target-system residuals", pass, detail }
}

fn decay(nominal: &Platoon, adaptive: &Platoon, stab: &[SimLog; 2]) -> Line {
    let mut pass = true;
    let mut detail = String::new();
    for log in nominal.run.logs.iter().chain(&adaptive.run.logs) {
        let o = omega_decay(log);
        pass &= o.slope.is_some_and(|s| s < 0.0);
        detail += &format!("{:?} {}: log Omega slope {:.3} from {}; ", log.controller, log.name, o.slope.unwrap_or(f64::NAN), o.start);
    }
    for log in stab {
        let p = psi_decay(log);
        pass &= p.slope.is_some_and(|s| s < 0.0);
        detail += &format!("regulation {:?}: log Psi slope {:.3}; ", log.controller, p.slope.unwrap_or(f64::NAN));
    }
    Line { id: 10, name: "decay fits", pass, detail }
}

fn run_both(cfg: &ScenarioConfig) -> [SimLog; 2] {
    [Controller::Nominal, Controller::Adaptive].map(|c| sim::run(cfg, c, false).expect("scenario run"))
}

fn main() -> ExitCode {
    let nominal = platoon(Controller::Nominal);
    let adaptive = platoon(Controller::Adaptive);
    let unc = platoon(Controller::Uncompensated);

    let plants = common::random_plants(SEED, RANDOM_PLANTS, 8.0);
    let random: Vec<(ScenarioConfig, [SimLog; 2])> = plants.iter().map(|c| (c.clone(), run_both(c))).collect();

    let stab_cfg = common::stabilize();
    let stab = run_both(&stab_cfg);

    let mut inverse_plants: Vec<(PlantDefinition, GainSet, f64)> = plants
        .iter()
        .map(|cfg| {
            let (gains, _) = assumptions::prepare(cfg, Controller::Nominal, &ExprTarget(&cfg.trajectory)).expect("gains");
            (cfg.plant.clone(), gains, cfg.numerics.jet_step())
        })
        .collect();
    for (cfg, log) in table1().vehicles.iter().zip(&nominal.run.logs) {
        inverse_plants.push((cfg.plant.clone(), log.gains.clone(), cfg.numerics.jet_step()));
    }

    let lines = [
        safety(&nominal, &adaptive),
        tracking(&nominal, &adaptive),
        identification(&adaptive),
        baseline(&unc),
        cbf_suite(&nominal, &adaptive, &random),
        inverse_round_trip(&inverse_plants),
        predictor_order(),
        identifier_ramp(),
        residuals(&nominal, &adaptive, &stab),
        decay(&nominal, &adaptive, &stab),
    ];
    let mut failed = 0;
    for l in &lines {
        println!("criterion {:>2} {:<36} {}  {}", l.id, l.name, if l.pass { "PASS" } else { "FAIL" }, l.detail);
        failed += usize::from(!l.pass);
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
