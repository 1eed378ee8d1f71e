//! Closed-form QP safety filter.
//!
//! The safe set for the control is the half-line b·U ≥ b·U*(t, D) for every
//! candidate D, so the minimal deviation from U_d is a clip against the
//! extremal candidate.

use crate::backstepping::{evaluate_law, GainSet};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::model::PlantDefinition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    PreTf,
    PostTf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDecision {
    pub u_d: f64,
    /// max over candidates of b·U*; None after identification.
    pub bound: Option<f64>,
    pub u_a: f64,
    pub active: bool,
    pub regime: Regime,
}

/// U_d = 𝒰(t, D̂): the nominal law evaluated on the estimate's predictor row
/// with the target jet about t + D̂.
pub fn adaptive_control(plant: &PlantDefinition, gains: &GainSet, p_hat: &[f64], x: &[f64], s_hat: &Jet) -> Result<f64> {
    Ok(evaluate_law(plant, gains, p_hat, x, s_hat)?.u)
}

/// U*(t, D) = [(c_m - c̄) r_m + τ_m + Δ^(m)] / b for one candidate.
pub fn u_star(plant: &PlantDefinition, gains: &GainSet, p: &[f64], x: &[f64], s: &Jet) -> Result<f64> {
    Ok(evaluate_law(plant, gains, p, x, s)?.u_star(plant, gains))
}

pub fn apply_filter(u_d: f64, sweep: &[f64], b: f64, regime: Regime) -> Result<FilterDecision> {
    if regime == Regime::PostTf {
        return Ok(FilterDecision { u_d, bound: None, u_a: u_d, active: false, regime });
    }
    if sweep.is_empty() {
        return Err(Error::Contract("safety filter needs at least one candidate before identification".into()));
    }
    let bound = sweep.iter().map(|u| b * u).fold(f64::NEG_INFINITY, f64::max);
    let (u_a, active) = if b * u_d >= bound { (u_d, false) } else { (bound / b, true) };
    Ok(FilterDecision { u_d, bound: Some(bound), u_a, active, regime })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_gain_takes_minimum() {
        let d = apply_filter(-1.0, &[-2.0, 0.5], -0.25, Regime::PreTf).unwrap();
        assert_eq!(d.u_a, -2.0);
        assert!(d.active);
    }

    #[test]
    fn feasible_desired_control_passes() {
        let d = apply_filter(3.0, &[1.0, 2.0], 1.0, Regime::PreTf).unwrap();
        assert_eq!(d.u_a, 3.0);
        assert!(!d.active);
    }

    #[test]
    fn after_identification_no_clipping() {
        let d = apply_filter(3.0, &[10.0], 1.0, Regime::PostTf).unwrap();
        assert_eq!(d.u_a, 3.0);
        assert!(apply_filter(0.0, &[], 1.0, Regime::PreTf).is_err());
    }
}
