//! Standing assumptions on initial data, checked per candidate delay.

use crate::backstepping::{delta_value, select_gains, validate_gains, GainSample, GainSet};
use crate::error::{Error, Result};
use crate::model::ScenarioConfig;
use crate::predictor::PredictorRow;
use crate::sim::{Controller, Slot, Target, TargetQuery};

/// Outcome for one delay candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCheck {
    pub d: f64,
    /// (a) the predictor history stays finite.
    pub finite: bool,
    /// (b) P_1(θ) > s(θ + D) on every node of [-D, 0].
    pub above_target: bool,
    /// (c) b x_1(0) > Δ(0).
    pub actuator_ok: bool,
    pub detail: String,
}

impl CandidateCheck {
    pub fn passed(&self) -> bool {
        self.finite && self.above_target && self.actuator_ok
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    pub candidates: Vec<CandidateCheck>,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        !self.candidates.is_empty() && self.candidates.iter().all(CandidateCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CandidateCheck> {
        self.candidates.iter().filter(|c| !c.passed())
    }

    pub fn first_failure(&self) -> Option<String> {
        self.failures().next().map(|c| format!("D = {}: {}", c.d, c.detail))
    }
}

/// Delays the controller variant must be safe for, with the target slots
/// that serve each one. Slots of one delay are adjacent.
pub fn candidate_slots(cfg: &ScenarioConfig, controller: Controller, target: &dyn Target) -> Vec<(Slot, f64)> {
    match controller {
        Controller::Nominal => vec![(Slot::Selected, cfg.oracle.d_true)],
        Controller::Uncompensated => vec![(Slot::Now, 0.0)],
        Controller::Adaptive => cfg
            .delay
            .candidates()
            .into_iter()
            .enumerate()
            .flat_map(|(i, d)| target.sweep_slots(i, d).into_iter().map(move |s| (s, d)))
            .collect(),
    }
}

fn history_fn(cfg: &ScenarioConfig) -> impl Fn(f64) -> f64 + '_ {
    move |t| cfg.x1_history.eval_f64(&[t])
}

fn init_row(cfg: &ScenarioConfig, d: f64) -> Result<PredictorRow> {
    PredictorRow::init_history(&cfg.plant, &cfg.y0, history_fn(cfg), d, cfg.numerics.dt)
}

/// Runs of equal delay in `slots`, with the predictor row built once per run.
fn by_delay<'a>(
    cfg: &'a ScenarioConfig,
    slots: &'a [(Slot, f64)],
) -> impl Iterator<Item = (Result<PredictorRow>, &'a [(Slot, f64)])> + 'a {
    slots.chunk_by(|a, b| a.1 == b.1).map(move |run| (init_row(cfg, run[0].1), run))
}

/// Check one slot against an initialised predictor row, with distal gains `k`.
fn check_slot(cfg: &ScenarioConfig, target: &dyn Target, row: &PredictorRow, slot: Slot, d: f64, k: &[f64]) -> CandidateCheck {
    let dt = cfg.numerics.dt;
    let mut out = CandidateCheck { d, finite: true, above_target: true, actuator_ok: false, detail: String::new() };
    let nodes = row.nodes();
    for (i, p) in row.history().enumerate() {
        let theta = (i as f64 - nodes as f64) * dt;
        let q = TargetQuery { t: theta, d, slot };
        match target.value(&q) {
            Ok(s) if p[0] > s => {}
            Ok(s) => {
                out.above_target = false;
                out.detail = format!("P1({theta:.6}) = {} does not exceed s = {s}", p[0]);
                break;
            }
            Err(e) => {
                out.above_target = false;
                out.detail = e.to_string();
                break;
            }
        }
    }
    let step = cfg.numerics.jet_step();
    let delta = target
        .jet(&TargetQuery { t: 0.0, d, slot }, step)
        .and_then(|s| delta_value(&cfg.plant, row.current(), &cfg.x0, &s, k));
    match delta {
        Ok(dl) if cfg.plant.b * cfg.x0[0] > dl => out.actuator_ok = true,
        Ok(dl) => {
            if out.detail.is_empty() {
                out.detail = format!("b x1(0) = {} does not exceed Delta(0) = {dl}", cfg.plant.b * cfg.x0[0]);
            }
        }
        Err(e) => {
            if out.detail.is_empty() {
                out.detail = e.to_string();
            }
        }
    }
    out
}

/// Check one candidate with distal gains `k`.
pub fn check_candidate(cfg: &ScenarioConfig, target: &dyn Target, slot: Slot, d: f64, k: &[f64]) -> CandidateCheck {
    check_assumptions(cfg, target, &[(slot, d)], k).candidates.remove(0)
}

pub fn check_assumptions(
    cfg: &ScenarioConfig,
    target: &dyn Target,
    slots: &[(Slot, f64)],
    k: &[f64],
) -> AssumptionReport {
    let mut candidates = Vec::with_capacity(slots.len());
    for (row, run) in by_delay(cfg, slots) {
        for &(slot, d) in run {
            candidates.push(match &row {
                Ok(row) => check_slot(cfg, target, row, slot, d, k),
                Err(e) => CandidateCheck {
                    d,
                    finite: false,
                    above_target: false,
                    actuator_ok: false,
                    detail: e.to_string(),
                },
            });
        }
    }
    AssumptionReport { candidates }
}

/// Gain samples (P(0), X(0), s about D) for every slot.
pub fn gain_samples(cfg: &ScenarioConfig, target: &dyn Target, slots: &[(Slot, f64)]) -> Result<Vec<GainSample>> {
    let step = cfg.numerics.jet_step();
    let mut out = Vec::with_capacity(slots.len());
    for (row, run) in by_delay(cfg, slots) {
        let row = row?;
        for &(slot, d) in run {
            out.push(GainSample {
                p0: row.current().to_vec(),
                x0: cfg.x0.clone(),
                s: target.jet(&TargetQuery { t: 0.0, d, slot }, step)?,
            });
        }
    }
    Ok(out)
}

/// Gains for a run: configured gains are validated, missing ones selected,
/// then the assumptions are checked with the final gains.
pub fn prepare(cfg: &ScenarioConfig, controller: Controller, target: &dyn Target) -> Result<(GainSet, AssumptionReport)> {
    let slots = candidate_slots(cfg, controller, target);
    let samples = gain_samples(cfg, target, &slots)?;
    let spec = &cfg.gains;
    let gains = match (&spec.k, &spec.c) {
        (Some(k), Some(c)) => {
            let c_bar = spec.c_bar.unwrap_or(c[cfg.plant.m - 1]);
            GainSet { k: k.clone(), c: c.clone(), c_bar }
        }
        _ => {
            let mut g = select_gains(&cfg.plant, &samples, spec.c_bar.unwrap_or(1.0 + spec.slack), spec.slack)?;
            if let Some(k) = &spec.k {
                g.k = k.clone();
            }
            if let Some(c) = &spec.c {
                g.c = c.clone();
            }
            if spec.c_bar.is_none() {
                g.c_bar = g.c[cfg.plant.m - 1];
            }
            g
        }
    };
    validate_gains(&cfg.plant, &samples, &gains)?;
    let report = check_assumptions(cfg, target, &slots, &gains.k);
    Ok((gains, report))
}

/// `prepare`, refusing to continue on a failed check unless forced.
pub fn prepare_checked(
    cfg: &ScenarioConfig,
    controller: Controller,
    target: &dyn Target,
    force: bool,
) -> Result<(GainSet, AssumptionReport)> {
    let (gains, report) = prepare(cfg, controller, target)?;
    if !report.passed() && !force {
        return Err(Error::Assumption(format!(
            "{}: {}",
            cfg.name,
            report.first_failure().unwrap_or_else(|| "no candidates".into())
        )));
    }
    Ok((gains, report))
}
