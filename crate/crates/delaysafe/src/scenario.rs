//! TOML scenario files.
//!
//! ```toml
//! name = "example"
//!
//! [plant]
//! b = -0.25                                   # input gain
//! psi = ["0", "(-5*y2 + 0.25*y2^2)/4"]        # psi_i(y1..yi)
//! phi = ["-100*x1 - 0.125*x1^2"]              # phi_j(x1..xj)
//!
//! [initial]
//! y0 = [-5.0, -1.0]
//! x0 = [2.0]
//! x1_history = "0"                            # x1(t) for t < 0
//!
//! [trajectory]
//! s = "-4*t + cos(t) - 11 + 0.5"
//!
//! [delay]                                     # seconds
//! d_lo = 0.2
//! d_hi = 4.0
//! d_d = 0.01
//!
//! [oracle]                                    # simulator only
//! d_true = 2.5
//! ```
//!
//! Optional tables: `[numerics]` (dt, dx, d_pred, t_final in seconds,
//! calculus = "discrete" | "taylor"), `[identifier]` (t_dwell s, n_tilde,
//! n_max, plateau_frac, eps_exc, d_hat0 s) and `[gains]` (k, c, c_bar in 1/s,
//! slack).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::*;

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRoot {
    name: Option<String>,
    plant: Option<FilePlant>,
    initial: Option<FileInitial>,
    trajectory: Option<FileTrajectory>,
    delay: Option<FileDelay>,
    oracle: Option<FileOracle>,
    numerics: Option<FileNumerics>,
    identifier: Option<FileIdentifier>,
    gains: Option<FileGains>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilePlant {
    b: Option<f64>,
    psi: Option<Vec<String>>,
    phi: Option<Vec<String>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileInitial {
    y0: Option<Vec<f64>>,
    x0: Option<Vec<f64>>,
    x1_history: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileTrajectory {
    s: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDelay {
    d_lo: Option<f64>,
    d_hi: Option<f64>,
    d_d: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOracle {
    d_true: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileNumerics {
    dt: Option<f64>,
    dx: Option<f64>,
    d_pred: Option<f64>,
    t_final: Option<f64>,
    calculus: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileIdentifier {
    t_dwell: Option<f64>,
    n_tilde: Option<usize>,
    n_max: Option<usize>,
    plateau_frac: Option<f64>,
    eps_exc: Option<f64>,
    d_hat0: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileGains {
    k: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
    c_bar: Option<f64>,
    slack: Option<f64>,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::MissingField(name.to_string()))
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, col)
}

fn field_expr(src: &str, vars: &[&str], field: &str) -> Result<Expr> {
    Expr::parse(src, vars).map_err(|e| match e {
        Error::Parse { col, msg, .. } => Error::Config(format!("{field}: column {col}: {msg}")),
        other => other,
    })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let root: FileRoot = toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map(|s| line_col(text, s.start)).unwrap_or((0, 0));
        Error::Parse { line, col, msg: e.message().to_string() }
    })?;

    let plant = need(root.plant, "plant")?;
    let psi = need(plant.psi, "plant.psi")?;
    let phi = need(plant.phi, "plant.phi")?;
    let plant = PlantDefinition::new(need(plant.b, "plant.b")?, &psi, &phi)?;

    let init = need(root.initial, "initial")?;
    let traj = need(root.trajectory, "trajectory")?;
    let delay = need(root.delay, "delay")?;
    let oracle = need(root.oracle, "oracle")?;

    let defaults = Numerics::default();
    let num = root.numerics.unwrap_or_default();
    let dt = num.dt.unwrap_or(defaults.dt);
    let calculus = match num.calculus.as_deref() {
        None => Calculus::default(),
        Some(s) => Calculus::from_name(s)
            .ok_or_else(|| Error::Config(format!("numerics.calculus: unknown calculus `{s}`")))?,
    };
    let numerics = Numerics {
        dt,
        dx: num.dx.unwrap_or(defaults.dx),
        d_pred: num.d_pred.unwrap_or(dt),
        t_final: num.t_final.unwrap_or(defaults.t_final),
        calculus,
    };

    let delay = DelayConfig {
        d_lo: need(delay.d_lo, "delay.d_lo")?,
        d_hi: need(delay.d_hi, "delay.d_hi")?,
        d_d: delay.d_d.unwrap_or(0.01),
    };

    let idd = IdentifierConfig { d_hat0: delay.d_lo, ..IdentifierConfig::default() };
    let id = root.identifier.unwrap_or_default();
    let identifier = IdentifierConfig {
        t_dwell: id.t_dwell.unwrap_or(idd.t_dwell),
        n_tilde: id.n_tilde.unwrap_or(idd.n_tilde),
        n_max: id.n_max.unwrap_or(idd.n_max),
        plateau_frac: id.plateau_frac.unwrap_or(idd.plateau_frac),
        eps_exc: id.eps_exc.unwrap_or(idd.eps_exc),
        d_hat0: id.d_hat0.unwrap_or(idd.d_hat0),
    };

    let g = root.gains.unwrap_or_default();
    let gains = GainSpec { k: g.k, c: g.c, c_bar: g.c_bar, slack: g.slack.unwrap_or(0.1) };

    let cfg = ScenarioConfig {
        name: root.name.unwrap_or_else(|| "scenario".into()),
        plant,
        delay,
        oracle: OracleConfig { d_true: need(oracle.d_true, "oracle.d_true")? },
        y0: need(init.y0, "initial.y0")?,
        x0: need(init.x0, "initial.x0")?,
        x1_history: field_expr(init.x1_history.as_deref().unwrap_or("0"), &["t"], "initial.x1_history")?,
        trajectory: field_expr(&need(traj.s, "trajectory.s")?, &["t"], "trajectory.s")?,
        numerics,
        identifier,
        gains,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)
}

/// Serialize with every field explicit.
pub fn to_toml(cfg: &ScenarioConfig) -> String {
    let root = FileRoot {
        name: Some(cfg.name.clone()),
        plant: Some(FilePlant {
            b: Some(cfg.plant.b),
            psi: Some(cfg.plant.psi.iter().map(|e| e.source().to_string()).collect()),
            phi: Some(cfg.plant.phi.iter().map(|e| e.source().to_string()).collect()),
        }),
        initial: Some(FileInitial {
            y0: Some(cfg.y0.clone()),
            x0: Some(cfg.x0.clone()),
            x1_history: Some(cfg.x1_history.source().to_string()),
        }),
        trajectory: Some(FileTrajectory { s: Some(cfg.trajectory.source().to_string()) }),
        delay: Some(FileDelay { d_lo: Some(cfg.delay.d_lo), d_hi: Some(cfg.delay.d_hi), d_d: Some(cfg.delay.d_d) }),
        oracle: Some(FileOracle { d_true: Some(cfg.oracle.d_true) }),
        numerics: Some(FileNumerics {
            dt: Some(cfg.numerics.dt),
            dx: Some(cfg.numerics.dx),
            d_pred: Some(cfg.numerics.d_pred),
            t_final: Some(cfg.numerics.t_final),
            calculus: Some(cfg.numerics.calculus.name().into()),
        }),
        identifier: Some(FileIdentifier {
            t_dwell: Some(cfg.identifier.t_dwell),
            n_tilde: Some(cfg.identifier.n_tilde),
            n_max: Some(cfg.identifier.n_max),
            plateau_frac: Some(cfg.identifier.plateau_frac),
            eps_exc: Some(cfg.identifier.eps_exc),
            d_hat0: Some(cfg.identifier.d_hat0),
        }),
        gains: Some(FileGains {
            k: cfg.gains.k.clone(),
            c: cfg.gains.c.clone(),
            c_bar: cfg.gains.c_bar,
            slack: Some(cfg.gains.slack),
        }),
    };
    toml::to_string(&root).expect("scenario serializes")
}

pub fn save_scenario(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml(cfg))?;
    Ok(())
}
