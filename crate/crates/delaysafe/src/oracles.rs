//! Independent checks of the closed loop: inverse transformations, the
//! transport-domain target field, target-system residuals, decay fits and
//! predictor convergence.

use nalgebra::DMatrix;

use crate::backstepping::{forward_z, z_chain, GainSet};
use crate::error::{Error, Result};
use crate::identifier::trapezoid_weights;
use crate::jet::{Jet, JMAX};
use crate::model::PlantDefinition;
use crate::plant::{eval_y_rhs, y_flow};
use crate::predictor::PredictorRow;
use crate::sim::{log_slope, Controller, SimLog};

/// w(x,t) = u(x,t) - h_n(p(x,t), s about t+Dx) - s^(n)(t+Dx) on a grid.
pub fn compute_w(plant: &PlantDefinition, k: &[f64], u_grid: &[f64], p_grid: &[Vec<f64>], s_grid: &[Jet]) -> Result<Vec<f64>> {
    let n = plant.n;
    u_grid
        .iter()
        .zip(p_grid)
        .zip(s_grid)
        .map(|((u, p), s)| {
            let (_, h) = forward_z(plant, p, s, k)?;
            Ok(u - h[n - 1] - s.get(n)?)
        })
        .collect()
}

/// Bidiagonal target matrix: diagonal -k, superdiagonal 1.
pub fn target_matrix(k: &[f64]) -> DMatrix<f64> {
    let n = k.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            -k[i]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// δ(x,t) = e^{DAx} Z + D ∫_0^x e^{DA(x-y)} B w(y) dy with B = e_n, by
/// trapezoid quadrature in y. Rows of the result follow `x_grid`.
pub fn delta_field(z: &[f64], w_grid: &[f64], x_grid: &[f64], k: &[f64], d: f64) -> Vec<Vec<f64>> {
    let n = z.len();
    let a = target_matrix(k);
    let zv = nalgebra::DVector::from_column_slice(z);
    let prop = |s: f64| (&a * (d * s)).exp();
    x_grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut out = prop(x) * &zv;
            if i > 0 {
                let w = trapezoid_weights(&x_grid[..=i]);
                for j in 0..=i {
                    let col = prop(x - x_grid[j]).column(n - 1).into_owned();
                    out += col * (d * w[j] * w_grid[j]);
                }
            }
            out.iter().copied().collect()
        })
        .collect()
}

/// Jets of the distal target chain ż_i = -k_i z_i + z_{i+1} from `z`, with
/// the input of the last equation unknown.
fn target_flow(z: &[f64], k: &[f64], step: f64) -> Vec<Jet> {
    let n = z.len();
    let mut zs: Vec<Jet> = z.iter().map(|&v| Jet::constant(v, step).truncate(1)).collect();
    for _ in 0..JMAX {
        zs = (0..n)
            .map(|i| {
                let next = if i + 1 < n { zs[i + 1] } else { Jet::unknown(step) };
                Jet::integrate(z[i], &(next - k[i] * zs[i]))
            })
            .collect();
    }
    zs
}

/// Rebuild Y from z and the target jet about t by running the target system
/// and reading the plant chain backwards: y_1 = z_1 + s, y_{i+1} = ẏ_i - ψ_i.
pub fn inverse_y(plant: &PlantDefinition, z: &[f64], s: &Jet, k: &[f64]) -> Result<Vec<f64>> {
    let n = plant.n;
    let zs = target_flow(z, k, s.step());
    let mut ys: Vec<Jet> = Vec::with_capacity(n);
    ys.push(zs[0] + *s);
    for i in 0..n - 1 {
        let next = ys[i].derive() - plant.psi(i, &ys);
        ys.push(next);
    }
    ys.iter().map(|j| j.get(0)).collect()
}

/// Rebuild X from r, the predictor state `p` and the target jet about t+D.
/// Δ depends on x_1 through the predictor flow, so x_1 and Δ are iterated
/// to a common fixed point of their jets.
pub fn inverse_x(plant: &PlantDefinition, gains: &GainSet, r: &[f64], p: &[f64], s: &Jet) -> Result<Vec<f64>> {
    let (n, m, b) = (plant.n, plant.m, plant.b);
    let step = s.step();
    let rs = target_flow(r, &gains.c, step);
    let mut x1 = Jet::unknown(step);
    let mut xs: Vec<Jet> = Vec::new();
    for _ in 0..=JMAX {
        let ps = y_flow(plant, p, b * x1);
        let zc = z_chain(plant, &gains.k, &ps, s);
        let delta = zc.h[n - 1] + s.derive_n(n);
        xs.clear();
        xs.push((1.0 / b) * (rs[0] + delta));
        for j in 0..m - 1 {
            let next = xs[j].derive() - plant.phi(j, &xs);
            xs.push(next);
        }
        x1 = xs[0];
    }
    xs.iter().map(|j| j.get(0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub z_max: f64,
    pub r_max: f64,
    pub samples: usize,
}

/// Forward-difference derivatives of logged z and r against the target
/// right-hand sides; the last actuator equation carries γ. Steps before
/// `t0` are skipped.
pub fn target_residuals(log: &SimLog, t0: f64) -> Residuals {
    let (n, m, dt) = (log.n, log.m, log.dt);
    let k = &log.gains.k;
    let c = &log.gains.c;
    let mut out = Residuals { z_max: 0.0, r_max: 0.0, samples: 0 };
    for w in log.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.t < t0 - 1e-12 {
            continue;
        }
        for i in 0..n {
            let drive = if i + 1 < n { a.z[i + 1] } else { a.w0 };
            let res = (b.z[i] - a.z[i]) / dt - (-k[i] * a.z[i] + drive);
            out.z_max = out.z_max.max(res.abs());
        }
        for j in 0..m {
            let drive = if j + 1 < m { a.r[j + 1] } else { a.gamma };
            let res = (b.r[j] - a.r[j]) / dt - (-c[j] * a.r[j] + drive);
            out.r_max = out.r_max.max(res.abs());
        }
        out.samples += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub start: f64,
    /// None when the series vanishes on the window.
    pub slope: Option<f64>,
}

impl DecayFit {
    /// Decay holds when the fitted slope is negative or the series is zero.
    pub fn decays(&self) -> bool {
        self.slope.is_none_or(|s| s < 0.0)
    }
}

/// Fit window start: D for the nominal law, t_f for the adaptive one.
pub fn tail_start(log: &SimLog) -> f64 {
    match log.controller {
        Controller::Adaptive => log.t_f.unwrap_or(log.d_true),
        _ => log.d_true,
    }
}

pub fn omega_decay(log: &SimLog) -> DecayFit {
    let start = tail_start(log);
    let ts: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let vs: Vec<f64> = log.records.iter().map(|r| r.omega).collect();
    DecayFit { start, slope: log_slope(&ts, &vs, start) }
}

pub fn psi_decay(log: &SimLog) -> DecayFit {
    let start = tail_start(log);
    let ts: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let vs: Vec<f64> = log.records.iter().map(|r| r.psi).collect();
    DecayFit { start, slope: log_slope(&ts, &vs, start) }
}

fn rk4(plant: &PlantDefinition, y: &[f64], t: f64, h: f64, u0: &impl Fn(f64) -> f64) -> Vec<f64> {
    let f = |t: f64, y: &[f64]| eval_y_rhs(y, u0(t), plant);
    let add = |y: &[f64], k: &[f64], s: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + s * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + h / 2.0, &add(y, &k1, h / 2.0));
    let k3 = f(t + h / 2.0, &add(y, &k2, h / 2.0));
    let k4 = f(t + h, &add(y, &k3, h));
    (0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// max_t |P(t) - Y(t+D)| for each predictor step, against an RK4 reference
/// of the distal chain driven by the prescribed actuator output `x1` (also
/// used as history for t < 0).
pub fn predictor_convergence(
    plant: &PlantDefinition,
    y0: &[f64],
    x1: impl Fn(f64) -> f64 + Copy,
    d: f64,
    horizon: f64,
    steps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let h_min = steps.iter().copied().fold(f64::INFINITY, f64::min);
    let sub = 8usize;
    let h_ref = h_min / sub as f64;
    let total = horizon + d;
    let n_ref = (total / h_ref).round() as usize;
    let u0 = |t: f64| plant.b * x1(t - d);
    let mut reference = Vec::with_capacity(n_ref + 1);
    let mut y = y0.to_vec();
    reference.push(y.clone());
    for i in 0..n_ref {
        y = rk4(plant, &y, i as f64 * h_ref, h_ref, &u0);
        reference.push(y.clone());
    }
    let at = |t: f64| -> Result<&Vec<f64>> {
        let i = (t / h_ref).round() as usize;
        if ((t / h_ref) - i as f64).abs() > 1e-6 {
            return Err(Error::Contract(format!("time {t} is off the reference grid")));
        }
        reference.get(i).ok_or(Error::Contract(format!("time {t} beyond reference")))
    };
    steps
        .iter()
        .map(|&dp| {
            let mut row = PredictorRow::init_history(plant, y0, x1, d, dp)?;
            let k_end = (horizon / dp).round() as usize;
            let lead = row.nodes() as f64 * dp;
            let mut err = 0.0f64;
            for k in 0..=k_end {
                let t = k as f64 * dp;
                let truth = at(t + lead)?;
                let e = row.current().iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                err = err.max(e);
                if k < k_end {
                    row.advance(plant, x1(t), at(t + dp)?)?;
                }
            }
            Ok((dp, err))
        })
        .collect()
}

/// Observed order from consecutive refinements.
pub fn observed_orders(errors: &[(f64, f64)]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln()).collect()
}

/// Transport field for x_1(t) = max(0, t) with zero history:
/// u(x,t) = b max(0, t - D + Dx).
pub fn ramp_field(b: f64, d: f64, x_grid: &[f64], t: f64) -> Vec<f64> {
    x_grid.iter().map(|&x| b * (t - d + d * x).max(0.0)).collect()
}
