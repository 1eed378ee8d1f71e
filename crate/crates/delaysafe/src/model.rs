//! Plant, delay, numerics and scenario configuration.

use crate::algebra::Algebra;
use crate::error::{Error, Result};
use crate::expr::Expr;

/// ẏ_i = y_{i+1} + ψ_i(y_1..y_i), ẏ_n = ψ_n(Y) + b x_1(t-D),
/// ẋ_j = x_{j+1} + φ_j(x_1..x_j), ẋ_m = φ_m(X) + U.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantDefinition {
    pub n: usize,
    pub m: usize,
    pub b: f64,
    pub psi: Vec<Expr>,
    pub phi: Vec<Expr>,
}

fn names(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

impl PlantDefinition {
    /// ψ_i may only read y_1..y_i and φ_j only x_1..x_j; the parser enforces it.
    pub fn new<S: AsRef<str>>(b: f64, psi: &[S], phi: &[S]) -> Result<PlantDefinition> {
        let parse_chain = |srcs: &[S], prefix: &str| -> Result<Vec<Expr>> {
            let all = names(prefix, srcs.len());
            srcs.iter()
                .enumerate()
                .map(|(i, s)| {
                    let vars: Vec<&str> = all[..=i].iter().map(String::as_str).collect();
                    Expr::parse(s.as_ref(), &vars)
                })
                .collect()
        };
        let plant = PlantDefinition {
            n: psi.len(),
            m: phi.len(),
            b,
            psi: parse_chain(psi, "y")?,
            phi: parse_chain(phi, "x")?,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config("plant needs n >= 1 and m >= 1".into()));
        }
        if self.b == 0.0 || !self.b.is_finite() {
            return Err(Error::Config(format!("input gain b must be finite and nonzero, got {}", self.b)));
        }
        for (i, e) in self.psi.iter().enumerate() {
            let v = e.eval_f64(&vec![0.0; i + 1]);
            if v != 0.0 {
                return Err(Error::Config(format!("psi{} must vanish at the origin, got {v}", i + 1)));
            }
        }
        for (j, e) in self.phi.iter().enumerate() {
            let v = e.eval_f64(&vec![0.0; j + 1]);
            if v != 0.0 {
                return Err(Error::Config(format!("phi{} must vanish at the origin, got {v}", j + 1)));
            }
        }
        Ok(())
    }

    /// ψ_i (zero-based i) evaluated on y_1..y_{i+1}.
    pub fn psi<A: Algebra>(&self, i: usize, ys: &[A]) -> A {
        self.psi[i].eval(&ys[..=i])
    }

    pub fn phi<A: Algebra>(&self, j: usize, xs: &[A]) -> A {
        self.phi[j].eval(&xs[..=j])
    }

    /// Smoothness budget for ψ_i (one-based) is n+m-i, for φ_j it is m-j.
    pub fn psi_budget(&self, i: usize) -> usize {
        self.n + self.m - i
    }

    pub fn phi_budget(&self, j: usize) -> usize {
        self.m - j
    }
}

/// Known delay bounds and the candidate grid over them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayConfig {
    pub d_lo: f64,
    pub d_hi: f64,
    pub d_d: f64,
}

impl DelayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_lo > 0.0 && self.d_lo <= self.d_hi) {
            return Err(Error::DelayBounds { lo: self.d_lo, hi: self.d_hi });
        }
        if !(self.d_d > 0.0) {
            return Err(Error::Config(format!("candidate spacing d_D must be positive, got {}", self.d_d)));
        }
        Ok(())
    }

    pub fn n_d(&self) -> usize {
        ((self.d_hi - self.d_lo) / self.d_d + 1e-9).floor() as usize
    }

    pub fn candidate(&self, i: usize) -> f64 {
        self.d_lo + i as f64 * self.d_d
    }

    pub fn candidates(&self) -> Vec<f64> {
        (0..=self.n_d()).map(|i| self.candidate(i)).collect()
    }

    /// Grid index closest to `d`.
    pub fn nearest(&self, d: f64) -> usize {
        let i = ((d - self.d_lo) / self.d_d).round();
        (i.max(0.0) as usize).min(self.n_d())
    }

    pub fn clamp(&self, d: f64) -> f64 {
        d.clamp(self.d_lo, self.d_hi)
    }
}

/// Ground truth the plant uses. Controllers never receive this.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub d_true: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Calculus {
    /// Forward differences along the Euler flow; exact for the simulated loop.
    #[default]
    Discrete,
    /// Exact derivatives along the continuous flow.
    Taylor,
}

impl Calculus {
    pub fn name(self) -> &'static str {
        match self {
            Calculus::Discrete => "discrete",
            Calculus::Taylor => "taylor",
        }
    }

    pub fn from_name(s: &str) -> Option<Calculus> {
        match s {
            "discrete" => Some(Calculus::Discrete),
            "taylor" => Some(Calculus::Taylor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerics {
    pub dt: f64,
    pub dx: f64,
    pub d_pred: f64,
    pub t_final: f64,
    pub calculus: Calculus,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { dt: 0.001, dx: 0.02, d_pred: 0.001, t_final: 40.0, calculus: Calculus::Discrete }
    }
}

impl Numerics {
    /// Lattice step handed to jets: dt in the discrete calculus, 0 otherwise.
    pub fn jet_step(&self) -> f64 {
        match self.calculus {
            Calculus::Discrete => self.dt,
            Calculus::Taylor => 0.0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt + 1e-6).floor() as usize
    }

    pub fn x_grid(&self) -> Vec<f64> {
        let nx = (1.0 / self.dx).round().max(1.0) as usize;
        (0..=nx).map(|i| i as f64 / nx as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.dx > 0.0 && self.dx <= 1.0) {
            return Err(Error::Config(format!("dx must lie in (0, 1], got {}", self.dx)));
        }
        if (self.d_pred - self.dt).abs() > 1e-12 * self.dt.max(1.0) {
            return Err(Error::Config(format!(
                "the simulator integrates predictors at the simulation step; d_pred = {} differs from dt = {}",
                self.d_pred, self.dt
            )));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        Ok(())
    }
}

/// Number of dt-steps spanning `d` seconds (ceiling, tolerant to rounding).
pub fn steps_for(d: f64, dt: f64) -> usize {
    (d / dt - 1e-6).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifierConfig {
    pub t_dwell: f64,
    pub n_tilde: usize,
    pub n_max: usize,
    pub plateau_frac: f64,
    pub eps_exc: f64,
    pub d_hat0: f64,
}

impl Default for IdentifierConfig {
    fn default() -> Self {
        IdentifierConfig { t_dwell: 3.0, n_tilde: 5, n_max: 3, plateau_frac: 0.02, eps_exc: 1e-8, d_hat0: 0.2 }
    }
}

impl IdentifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_dwell > 0.0) {
            return Err(Error::Config(format!("dwell time T must be positive, got {}", self.t_dwell)));
        }
        if self.n_tilde < 1 || self.n_max < 1 {
            return Err(Error::Config("N_tilde and n_max must be at least 1".into()));
        }
        Ok(())
    }
}

/// User-fixed gains, or automatic selection when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSpec {
    pub k: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub c_bar: Option<f64>,
    pub slack: f64,
}

impl Default for GainSpec {
    fn default() -> Self {
        GainSpec { k: None, c: None, c_bar: None, slack: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub plant: PlantDefinition,
    pub delay: DelayConfig,
    pub oracle: OracleConfig,
    pub y0: Vec<f64>,
    pub x0: Vec<f64>,
    /// x_1(t) for t < 0.
    pub x1_history: Expr,
    /// Target trajectory s(t).
    pub trajectory: Expr,
    pub numerics: Numerics,
    pub identifier: IdentifierConfig,
    pub gains: GainSpec,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.delay.validate()?;
        self.numerics.validate()?;
        self.identifier.validate()?;
        let d = self.oracle.d_true;
        if !(self.delay.d_lo <= d && d <= self.delay.d_hi) {
            return Err(Error::Config(format!(
                "true delay {d} outside the known bounds [{}, {}]",
                self.delay.d_lo, self.delay.d_hi
            )));
        }
        if self.y0.len() != self.plant.n || self.x0.len() != self.plant.m {
            return Err(Error::Config(format!(
                "initial state sizes ({}, {}) do not match plant orders ({}, {})",
                self.y0.len(),
                self.x0.len(),
                self.plant.n,
                self.plant.m
            )));
        }
        if let Some(k) = &self.gains.k {
            if k.len() != self.plant.n {
                return Err(Error::Config(format!("expected {} k-gains, got {}", self.plant.n, k.len())));
            }
        }
        if let Some(c) = &self.gains.c {
            if c.len() != self.plant.m {
                return Err(Error::Config(format!("expected {} c-gains, got {}", self.plant.m, c.len())));
            }
        }
        Ok(())
    }

    pub fn history_is_zero(&self) -> bool {
        self.x1_history.arity() == 0 && self.x1_history.eval_f64(&[0.0]) == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_feedback_enforced() {
        assert!(PlantDefinition::new(1.0, &["y2", "0"], &["0"]).is_err());
        assert!(PlantDefinition::new(1.0, &["0", "y1*y2"], &["x1^2"]).is_ok());
    }

    #[test]
    fn nonvanishing_nonlinearity_rejected() {
        assert!(PlantDefinition::new(1.0, &["1 + y1"], &["0"]).is_err());
        assert!(PlantDefinition::new(0.0, &["0"], &["0"]).is_err());
    }

    #[test]
    fn paper_grid_has_381_candidates() {
        let d = DelayConfig { d_lo: 0.2, d_hi: 4.0, d_d: 0.01 };
        assert_eq!(d.n_d(), 380);
        assert_eq!(d.candidates().len(), 381);
        assert_eq!(d.nearest(2.5015), 230);
        assert!((d.candidate(230) - 2.5).abs() < 1e-12);
        assert_eq!(steps_for(d.candidate(230), 0.001), 2500);
    }
}
