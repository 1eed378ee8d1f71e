//! Nonovershooting backstepping for the distal chain, nonundershooting
//! backstepping for the actuator chain, and the resulting control laws.
//!
//! z_i = y_i - h_{i-1} - s^(i-1),   h_i = -k_i z_i - ψ_i + d/dt h_{i-1}
//! Δ   = h_n(P, s(t+D)) + s^(n)(t+D)
//! r_j = b x_j - τ_{j-1} - Δ^(j-1), τ_j = -c_j r_j - b φ_j + d/dt τ_{j-1}
//! U   = (τ_m + Δ^(m)) / b
//!
//! Time derivatives are taken along the chain flow with jets, which equals
//! the partial-derivative sums of the closed-form recursion.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::PlantDefinition;
use crate::plant::{px_flow, x_flow, y_flow};

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub k: Vec<f64>,
    pub c: Vec<f64>,
    pub c_bar: f64,
}

#[derive(Debug, Clone)]
pub struct ZChain {
    pub z: Vec<Jet>,
    pub h: Vec<Jet>,
}

pub fn z_chain(plant: &PlantDefinition, k: &[f64], ys: &[Jet], s: &Jet) -> ZChain {
    let h0 = Jet::constant(0.0, s.step());
    let mut z = Vec::with_capacity(plant.n);
    let mut h: Vec<Jet> = Vec::with_capacity(plant.n);
    for i in 0..plant.n {
        let prev = if i == 0 { h0 } else { h[i - 1] };
        let zi = ys[i] - prev - s.derive_n(i);
        let hi = -(k[i] * zi) - plant.psi(i, ys) + prev.derive();
        z.push(zi);
        h.push(hi);
    }
    ZChain { z, h }
}

#[derive(Debug, Clone)]
pub struct RChain {
    pub r: Vec<Jet>,
    pub tau: Vec<Jet>,
}

pub fn r_chain(plant: &PlantDefinition, c: &[f64], xs: &[Jet], delta: &Jet) -> RChain {
    let t0 = Jet::constant(0.0, delta.step());
    let mut r = Vec::with_capacity(plant.m);
    let mut tau: Vec<Jet> = Vec::with_capacity(plant.m);
    for j in 0..plant.m {
        let prev = if j == 0 { t0 } else { tau[j - 1] };
        let rj = plant.b * xs[j] - prev - delta.derive_n(j);
        let tj = -(c[j] * rj) - plant.b * plant.phi(j, xs) + prev.derive();
        r.push(rj);
        tau.push(tj);
    }
    RChain { r, tau }
}

fn values(js: &[Jet]) -> Result<Vec<f64>> {
    js.iter().map(|j| j.get(0)).collect()
}

/// Everything the controller derives from one (P, X, s) snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct LawEval {
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub tau_m: f64,
    /// Δ, Δ', ..., Δ^(m)
    pub delta: Vec<f64>,
    pub u: f64,
}

impl LawEval {
    /// Boundary of the safe control half-line for filter margin c̄.
    pub fn u_star(&self, plant: &PlantDefinition, gains: &GainSet) -> f64 {
        let m = plant.m;
        self.u + (gains.c[m - 1] - gains.c_bar) * self.r[m - 1] / plant.b
    }
}

/// U* as an affine function of the target jet, for sweeping many targets
/// against one predictor state. The target only passes through linear,
/// constant-coefficient operations, so the weights do not depend on the
/// state and can be computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLaw<'w> {
    base: f64,
    weights: &'w [f64],
}

impl<'w> AffineLaw<'w> {
    /// Weight of each target-jet entry (n + m + 1 of them) in U*.
    pub fn weights(plant: &PlantDefinition, gains: &GainSet, p: &[f64], x: &[f64], step: f64) -> Result<Vec<f64>> {
        let len = plant.n + plant.m + 1;
        let mut e = vec![0.0; len];
        let base = evaluate_law(plant, gains, p, x, &Jet::from_entries(&e, step))?.u_star(plant, gains);
        let mut out = Vec::with_capacity(len);
        for l in 0..len {
            e[l] = 1.0;
            out.push(evaluate_law(plant, gains, p, x, &Jet::from_entries(&e, step))?.u_star(plant, gains) - base);
            e[l] = 0.0;
        }
        Ok(out)
    }

    pub fn new(
        plant: &PlantDefinition,
        gains: &GainSet,
        p: &[f64],
        x: &[f64],
        step: f64,
        weights: &'w [f64],
    ) -> Result<AffineLaw<'w>> {
        let zero = Jet::from_entries(&vec![0.0; weights.len()], step);
        let base = evaluate_law(plant, gains, p, x, &zero)?.u_star(plant, gains);
        Ok(AffineLaw { base, weights })
    }

    /// U* for a zero target jet.
    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn eval(&self, s: &Jet) -> Result<f64> {
        let len = self.weights.len();
        if s.len() < len {
            return Err(Error::JetOrder { requested: len - 1, available: s.len().saturating_sub(1) });
        }
        Ok(self.base + self.weights.iter().zip(s.entries()).map(|(c, v)| c * v).sum::<f64>())
    }
}

/// `s` is the target jet about t + D (length at least n + m + 1).
pub fn evaluate_law(plant: &PlantDefinition, gains: &GainSet, p: &[f64], x: &[f64], s: &Jet) -> Result<LawEval> {
    let (ps, xs) = px_flow(plant, p, x, Jet::unknown(s.step()));
    let zc = z_chain(plant, &gains.k, &ps, s);
    let delta = zc.h[plant.n - 1] + s.derive_n(plant.n);
    let rc = r_chain(plant, &gains.c, &xs, &delta);
    let m = plant.m;
    let tau_m = rc.tau[m - 1].get(0)?;
    let u = (tau_m + delta.get(m)?) / plant.b;
    Ok(LawEval {
        z: values(&zc.z)?,
        r: values(&rc.r)?,
        tau_m,
        delta: (0..=m).map(|k| delta.get(k)).collect::<Result<_>>()?,
        u,
    })
}

/// z and h at the current distal state (target jet about t).
pub fn forward_z(plant: &PlantDefinition, y: &[f64], s: &Jet, k: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ys = y_flow(plant, y, Jet::unknown(s.step()));
    let zc = z_chain(plant, k, &ys, s);
    Ok((values(&zc.z)?, values(&zc.h)?))
}

/// Δ and its first m derivatives for predictor state `p`.
pub fn delta_jet(plant: &PlantDefinition, p: &[f64], x: &[f64], s: &Jet, k: &[f64]) -> Result<Jet> {
    let (ps, _) = px_flow(plant, p, x, Jet::unknown(s.step()));
    let zc = z_chain(plant, k, &ps, s);
    let delta = zc.h[plant.n - 1] + s.derive_n(plant.n);
    delta.get(plant.m)?;
    Ok(delta.truncate(plant.m + 1))
}

/// Δ alone; needs only n + 1 target entries and no control information.
pub fn delta_value(plant: &PlantDefinition, p: &[f64], x: &[f64], s: &Jet, k: &[f64]) -> Result<f64> {
    let (ps, _) = px_flow(plant, p, x, Jet::unknown(s.step()));
    let zc = z_chain(plant, k, &ps, s);
    (zc.h[plant.n - 1] + s.derive_n(plant.n)).get(0)
}

pub fn forward_r(plant: &PlantDefinition, x: &[f64], delta: &Jet, c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let xs = x_flow(plant, x, Jet::unknown(delta.step()));
    let rc = r_chain(plant, c, &xs, delta);
    Ok((values(&rc.r)?, values(&rc.tau)?))
}

pub fn nominal_control(plant: &PlantDefinition, gains: &GainSet, p: &[f64], x: &[f64], s: &Jet) -> Result<f64> {
    Ok(evaluate_law(plant, gains, p, x, s)?.u)
}

/// Same law with the predictor replaced by the current state and the target
/// jet taken about t instead of t + D.
pub fn uncompensated_control(
    plant: &PlantDefinition,
    gains: &GainSet,
    y: &[f64],
    x: &[f64],
    s_now: &Jet,
) -> Result<f64> {
    Ok(evaluate_law(plant, gains, y, x, s_now)?.u)
}

/// Initial data for one candidate delay: predictor at t = 0, actuator state
/// and target jet about the candidate delay.
#[derive(Debug, Clone)]
pub struct GainSample {
    pub p0: Vec<f64>,
    pub x0: Vec<f64>,
    pub s: Jet,
}

/// Lower bounds ǩ_i (i < n) and č_j (j < m), each computed with the gains
/// preceding it, maximized over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GainRequirement {
    pub k_check: Vec<f64>,
    pub c_check: Vec<f64>,
}

const DENOM_FLOOR: f64 = 1e-12;

fn chain_values(plant: &PlantDefinition, k: &[f64], c: &[f64], g: &GainSample) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ps, xs) = px_flow(plant, &g.p0, &g.x0, Jet::unknown(g.s.step()));
    let zc = z_chain(plant, k, &ps, &g.s);
    let delta = zc.h[plant.n - 1] + g.s.derive_n(plant.n);
    let rc = r_chain(plant, c, &xs, &delta);
    Ok((values(&zc.z)?, values(&rc.r)?))
}

/// Gains satisfying k_i > max{2, ǩ_i}, k_n > 1, c_j > max{2, č_j}, c_m > 1,
/// each exceeding its bound by `slack`.
pub fn select_gains(plant: &PlantDefinition, samples: &[GainSample], c_bar: f64, slack: f64) -> Result<GainSet> {
    let (n, m) = (plant.n, plant.m);
    let mut k = vec![0.0; n];
    let mut c = vec![0.0; m];
    for i in 0..n - 1 {
        let need = requirement_at(plant, samples, &k, &c, Chain::Z, i)?;
        k[i] = need.max(2.0) + slack;
    }
    k[n - 1] = 1.0 + slack;
    for j in 0..m - 1 {
        let need = requirement_at(plant, samples, &k, &c, Chain::R, j)?;
        c[j] = need.max(2.0) + slack;
    }
    c[m - 1] = 1.0 + slack;
    Ok(GainSet { k, c, c_bar })
}

#[derive(Clone, Copy)]
enum Chain {
    Z,
    R,
}

fn requirement_at(
    plant: &PlantDefinition,
    samples: &[GainSample],
    k: &[f64],
    c: &[f64],
    chain: Chain,
    i: usize,
) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for g in samples {
        let (z, r) = chain_values(plant, k, c, g)?;
        let (v, gain, label) = match chain {
            Chain::Z => (&z, k[i], "z"),
            Chain::R => (&r, c[i], "r"),
        };
        if !(v[i] > DENOM_FLOOR) {
            return Err(Error::Assumption(format!(
                "{label}{}(0) = {:e} must be positive for the gain bound",
                i + 1,
                v[i]
            )));
        }
        worst = worst.max(gain - v[i + 1] / v[i]);
    }
    Ok(worst)
}

pub fn gain_requirements(
    plant: &PlantDefinition,
    samples: &[GainSample],
    gains: &GainSet,
) -> Result<GainRequirement> {
    let k_check = (0..plant.n - 1)
        .map(|i| requirement_at(plant, samples, &gains.k, &gains.c, Chain::Z, i))
        .collect::<Result<_>>()?;
    let c_check = (0..plant.m - 1)
        .map(|j| requirement_at(plant, samples, &gains.k, &gains.c, Chain::R, j))
        .collect::<Result<_>>()?;
    Ok(GainRequirement { k_check, c_check })
}

pub fn validate_gains(plant: &PlantDefinition, samples: &[GainSample], gains: &GainSet) -> Result<GainRequirement> {
    let req = gain_requirements(plant, samples, gains)?;
    let check = |which: String, given: f64, required: f64| {
        if given > required {
            Ok(())
        } else {
            Err(Error::Gain { which, required, given })
        }
    };
    for i in 0..plant.n {
        let bound = if i + 1 < plant.n { req.k_check[i].max(2.0) } else { 1.0 };
        check(format!("k{}", i + 1), gains.k[i], bound)?;
    }
    for j in 0..plant.m {
        let bound = if j + 1 < plant.m { req.c_check[j].max(2.0) } else { 1.0 };
        check(format!("c{}", j + 1), gains.c[j], bound)?;
    }
    if !(gains.c_bar > 0.0) {
        return Err(Error::Gain { which: "c_bar".into(), required: 0.0, given: gains.c_bar });
    }
    Ok(req)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain2() -> PlantDefinition {
        PlantDefinition::new(1.0, &["0", "0"], &["0"]).unwrap()
    }

    #[test]
    fn linear_chain_forward_z() {
        let (z, h) = forward_z(&chain2(), &[2.0, 1.0], &Jet::constant(0.0, 0.0), &[3.0, 2.0]).unwrap();
        assert_eq!(z, vec![2.0, 7.0]);
        assert_eq!(h[0], -6.0);
    }

    #[test]
    fn origin_gives_zero_everything() {
        let p = PlantDefinition::new(-0.25, &["0", "(-5*y2 + 0.25*y2^2)/4"], &["-100*x1 - 0.125*x1^2"]).unwrap();
        let g = GainSet { k: vec![3.0, 2.0], c: vec![2.0], c_bar: 2.0 };
        for h in [0.0, 1e-3] {
            let e = evaluate_law(&p, &g, &[0.0, 0.0], &[0.0], &Jet::constant(0.0, h)).unwrap();
            assert_eq!(e.u, 0.0);
            assert!(e.z.iter().chain(&e.r).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn affine_law_matches_direct_evaluation() {
        let p = PlantDefinition::new(-0.25, &["0", "(-5*y2 + 0.25*y2^2)/4"], &["-100*x1 - 0.125*x1^2"]).unwrap();
        let g = GainSet { k: vec![3.0, 2.0], c: vec![2.0], c_bar: 1.5 };
        for h in [0.0, 1e-3] {
            let w = AffineLaw::weights(&p, &g, &[0.3, -1.0], &[2.0], h).unwrap();
            // same weights elsewhere in state space
            let w2 = AffineLaw::weights(&p, &g, &[-4.0, 2.5], &[-7.0], h).unwrap();
            for (a, b) in w.iter().zip(&w2) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            }
            let (pp, xx) = ([1.5, -0.5], [3.0]);
            let lin = AffineLaw::new(&p, &g, &pp, &xx, h, &w).unwrap();
            let s = Jet::from_entries(&[-2.0, 0.7, -0.3, 0.9], h);
            let direct = evaluate_law(&p, &g, &pp, &xx, &s).unwrap().u_star(&p, &g);
            assert!((lin.eval(&s).unwrap() - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
            assert!(lin.eval(&s.truncate(3)).is_err());
        }
    }

    #[test]
    fn linear_chain_gain_bound() {
        let s = GainSample { p0: vec![1.0, 0.0], x0: vec![0.0], s: Jet::constant(0.0, 0.0) };
        let req = gain_requirements(&chain2(), &[s.clone()], &GainSet { k: vec![3.0, 2.0], c: vec![2.0], c_bar: 1.0 })
            .unwrap();
        assert_eq!(req.k_check, vec![0.0]);
        let g = select_gains(&chain2(), &[s], 1.0, 0.1).unwrap();
        assert_eq!(g.k, vec![2.1, 1.1]);
    }
}
