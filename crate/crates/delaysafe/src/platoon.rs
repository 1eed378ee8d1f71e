//! Two followers behind an analytic leader.
//!
//! Follower i has position l_i, speed v_i and drive force F_i, written as
//! y_i1 = -l_i, y_i2 = -v_i, x_i1 = F_i. The first follower tracks
//! s_1 = -l_0 + d_o, so its first CBF is the spacing margin d_1 - d_o. The
//! second tracks s_2 = y_11 + d_o, whose future values come from the first
//! follower's predictors.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::assumptions::prepare_checked;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::jet::{Jet, JMAX};
use crate::model::{
    steps_for, DelayConfig, GainSpec, IdentifierConfig, Numerics, OracleConfig, PlantDefinition, ScenarioConfig,
};
use crate::plant::{px_flow, y_flow};
use crate::predictor::PredictorRow;
use crate::sim::{Agent, Controller, ExprTarget, SimLog, Slot, Target, TargetQuery};

pub const PRESET: &str = "platoon-table1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Linear damping (N s/m).
    pub f1: f64,
    /// Aerodynamic drag (N s²/m²).
    pub f2: f64,
    /// Mass (kg).
    pub mass: f64,
    /// Safe distance (m).
    pub d_o: f64,
    /// Transmission delay (s).
    pub delay: f64,
    /// Torque constant (N m/A).
    pub k_t: f64,
    /// Moment arm (m).
    pub r_arm: f64,
    /// Resistance (Ω).
    pub resistance: f64,
    /// Inductance (H).
    pub inductance: f64,
    /// Drive-circuit nonlinearity coefficient.
    pub a_nl: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            f1: 5.0,
            f2: 0.25,
            mass: 4.0,
            d_o: 0.5,
            delay: 2.5,
            k_t: 0.8,
            r_arm: 0.1,
            resistance: 5.0,
            inductance: 0.05,
            a_nl: 1.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.f1,
            self.f2,
            self.mass,
            self.d_o,
            self.delay,
            self.k_t,
            self.r_arm,
            self.resistance,
            self.inductance,
            self.a_nl,
        ];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("vehicle parameters must be positive: {self:?}")))
        }
    }

    /// U = voltage_gain · 𝒱.
    pub fn voltage_gain(&self) -> f64 {
        self.k_t / (self.r_arm * self.inductance)
    }
}

pub fn vehicle_plant(p: &VehicleParams) -> Result<PlantDefinition> {
    p.validate()?;
    let psi2 = format!("(-{}*y2 + {}*y2^2)/{}", p.f1, p.f2, p.mass);
    let phi1 = format!("-{}*x1 - {}*x1^2", p.resistance / p.inductance, p.a_nl * p.r_arm / p.k_t);
    PlantDefinition::new(-1.0 / p.mass, &["0", psi2.as_str()], &[phi1.as_str()])
}

/// Leader position l_0(t) = 4t - cos t + 11.
pub fn leader_position(t: f64) -> f64 {
    4.0 * t - t.cos() + 11.0
}

pub fn leader_speed(t: f64) -> f64 {
    4.0 + t.sin()
}

fn leader_source(d_o: f64) -> String {
    format!("-4*t + cos(t) - 11 + {d_o}")
}

/// k-th derivative of the first follower's target -l_0(t) + d_o, k ≤ 3.
pub fn leader_jet(t: f64, k: usize, d_o: f64) -> Result<f64> {
    match k {
        0 => Ok(-leader_position(t) + d_o),
        1 => Ok(-4.0 - t.sin()),
        2 => Ok(-t.cos()),
        3 => Ok(t.sin()),
        _ => Err(Error::JetOrder { requested: k, available: 3 }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonConfig {
    pub params: [VehicleParams; 2],
    /// Follower 1 tracks its trajectory expression; follower 2's expression
    /// is unused because its target comes from follower 1.
    pub vehicles: [ScenarioConfig; 2],
}

pub fn build_platoon(p1: &VehicleParams, p2: &VehicleParams) -> Result<PlatoonConfig> {
    if p1.delay < p2.delay {
        return Err(Error::Config(format!(
            "the platoon needs the leading follower's delay to be at least the trailing one's (got {} < {})",
            p1.delay, p2.delay
        )));
    }
    let delay = DelayConfig { d_lo: 0.2, d_hi: 4.0, d_d: 0.01 };
    let gains = GainSpec { k: Some(vec![3.0, 2.0]), c: Some(vec![2.0]), c_bar: Some(2.0), slack: 0.1 };
    let make = |p: &VehicleParams, name: &str, y0: [f64; 2], x0: f64, traj: Expr| -> Result<ScenarioConfig> {
        let cfg = ScenarioConfig {
            name: name.to_string(),
            plant: vehicle_plant(p)?,
            delay,
            oracle: OracleConfig { d_true: p.delay },
            y0: y0.to_vec(),
            x0: vec![x0],
            x1_history: Expr::constant(0.0),
            trajectory: traj,
            numerics: Numerics::default(),
            identifier: IdentifierConfig { d_hat0: delay.d_lo, ..IdentifierConfig::default() },
            gains: gains.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    };
    let e1 = make(p1, "E1", [-5.0, -1.0], 2.0, Expr::parse(&leader_source(p1.d_o), &["t"])?)?;
    let e2 = make(p2, "E2", [0.0, -2.0], 1.0, Expr::constant(0.0))?;
    Ok(PlatoonConfig { params: [*p1, *p2], vehicles: [e1, e2] })
}

pub fn table1() -> PlatoonConfig {
    let p1 = VehicleParams::default();
    let p2 = VehicleParams { delay: 1.5, ..p1 };
    build_platoon(&p1, &p2).expect("table parameters are valid")
}

impl PlatoonConfig {
    /// Apply the same numerics change to both followers.
    pub fn map_numerics(&mut self, f: impl Fn(&mut Numerics)) {
        for v in &mut self.vehicles {
            f(&mut v.numerics);
        }
    }

    pub fn map_delay(&mut self, f: impl Fn(&mut DelayConfig)) {
        for v in &mut self.vehicles {
            f(&mut v.delay);
        }
    }
}

/// Target of the second follower: y_11 + d_o read from the first follower.
pub struct FollowerTarget<'a> {
    pub lead: &'a Agent,
    pub offset: f64,
    /// Cached row jets serving the pre-identification sweep, if any.
    pub jets: Option<&'a LeaderJets>,
}

/// Jets of y_11 along each live leader row, one per stored node, so the
/// follower's sweep reads them instead of re-running the flow. Only the
/// entries a control law consumes are kept.
#[derive(Debug, Clone)]
pub struct LeaderJets {
    len: usize,
    step: f64,
    rows: Vec<RowJets>,
}

#[derive(Debug, Clone)]
struct RowJets {
    /// Leader step of the oldest stored node.
    first: i64,
    /// Nodes kept: the cascade never looks further back than the row span.
    span: usize,
    data: VecDeque<f64>,
}

impl LeaderJets {
    /// Cache for a leader that has chosen its control at the current step.
    pub fn new(lead: &Agent) -> Result<LeaderJets> {
        let plant = &lead.plant;
        let len = plant.n + plant.m + 1;
        let step = lead.jet_step();
        let k_now = lead.step_index() as i64;
        let rows = &lead.bank().rows;
        let deepest = rows.iter().map(PredictorRow::nodes).max().unwrap_or(0) as i64;
        let x1_jets: Vec<Jet> = (k_now - deepest..k_now.min(0)).map(|k| lead.x1_jet(k)).collect::<Result<_>>()?;
        let mut out = LeaderJets { len, step, rows: Vec::with_capacity(rows.len()) };
        for row in rows {
            let span = row.nodes() + 1;
            let first = k_now - row.nodes() as i64;
            let mut rj = RowJets { first, span, data: VecDeque::with_capacity(span * len) };
            for kq in first..k_now {
                let p = row.node_back((k_now - kq) as usize).ok_or(Error::OutOfHistory { t: kq as f64, start: 0.0 })?;
                let jet = if kq < 0 {
                    y_flow(plant, p, plant.b * x1_jets[(kq - (k_now - deepest)) as usize])[0]
                } else {
                    node_jet(lead, p, kq)?
                };
                out.push_entries(&mut rj, &jet);
            }
            out.rows.push(rj);
        }
        out.record(lead)?;
        Ok(out)
    }

    fn push_entries(&self, rj: &mut RowJets, jet: &Jet) {
        for l in 0..self.len {
            rj.data.push_back(jet.get(l).unwrap_or(f64::NAN));
        }
        while rj.data.len() > rj.span * self.len {
            rj.data.drain(..self.len);
            rj.first += 1;
        }
    }

    /// Append the current node of every live row. Call once per leader step,
    /// after the leader's control.
    pub fn record(&mut self, lead: &Agent) -> Result<()> {
        let k_now = lead.step_index() as i64;
        let rows = &lead.bank().rows;
        for j in 0..self.rows.len() {
            if !lead.row_is_live(j) {
                continue;
            }
            let jet = node_jet(lead, rows[j].current(), k_now)?;
            let mut rj = std::mem::replace(&mut self.rows[j], RowJets { first: 0, span: 0, data: VecDeque::new() });
            self.push_entries(&mut rj, &jet);
            self.rows[j] = rj;
        }
        Ok(())
    }

    /// `weights · (y_11 jet)` of row j at leader step kq.
    fn dot(&self, j: usize, kq: i64, weights: &[f64]) -> Result<f64> {
        let rj = &self.rows[j];
        let idx = kq - rj.first;
        if idx < 0 || (idx as usize + 1) * self.len > rj.data.len() {
            return Err(Error::OutOfHistory { t: kq as f64, start: rj.first as f64 });
        }
        let at = idx as usize * self.len;
        let v: f64 = weights.iter().enumerate().map(|(l, w)| w * rj.data[at + l]).sum();
        if v.is_nan() {
            return Err(Error::JetOrder { requested: self.len - 1, available: 0 });
        }
        Ok(v)
    }

    /// y_11 jet of row j at leader step kq.
    pub fn get(&self, j: usize, kq: i64) -> Result<Jet> {
        let rj = self.rows.get(j).ok_or_else(|| Error::Contract(format!("no cached leader row {j}")))?;
        let idx = kq - rj.first;
        if idx < 0 || (idx as usize + 1) * self.len > rj.data.len() {
            return Err(Error::OutOfHistory { t: kq as f64, start: rj.first as f64 });
        }
        let at = idx as usize * self.len;
        let mut e = [0.0; JMAX];
        for (l, v) in e.iter_mut().enumerate().take(self.len) {
            *v = rj.data[at + l];
        }
        if e[..self.len].iter().any(|v| v.is_nan()) {
            return Err(Error::JetOrder { requested: self.len - 1, available: 0 });
        }
        Ok(Jet::from_entries(&e[..self.len], self.step))
    }
}

/// y_11 jet at a leader node formed at step `kq ≥ 0`, once its control is
/// known; the control value alone fixes the entries a law consumes.
fn node_jet(lead: &Agent, p: &[f64], kq: i64) -> Result<Jet> {
    let (_, x) = lead.state_at(kq)?;
    let (ps, _) = px_flow(&lead.plant, p, &x, lead.control_jet(kq));
    Ok(ps[0])
}

impl FollowerTarget<'_> {
    fn live_row(&self, i: usize) -> Result<&PredictorRow> {
        let lead = self.lead;
        if i >= lead.bank().rows.len() {
            return Err(Error::Contract(format!("leader has no predictor row {i}")));
        }
        if !lead.row_is_live(i) {
            return Err(Error::Contract(format!("leader row {i} is frozen; the follower is still sweeping candidates")));
        }
        Ok(lead.row(i))
    }

    fn lead_row(&self, slot: Slot) -> Result<(&PredictorRow, f64)> {
        let lead = self.lead;
        match slot {
            Slot::Candidate(i) | Slot::Cascade(_, i) => {
                let row = self.live_row(i)?;
                Ok((row, row.d_cand))
            }
            Slot::Selected => {
                let (i, d) = lead.selected();
                Ok((lead.row(i), d))
            }
            Slot::Oracle => Ok((lead.oracle_row(), lead.d_true())),
            Slot::Now => Err(Error::Contract("current target has no predictor row".into())),
        }
    }

    /// Leader row, predictor node for target time t + d, and the leader step
    /// the node was formed at.
    fn locate(&self, q: &TargetQuery) -> Result<(&PredictorRow, &[f64], i64)> {
        let (row, d1) = self.lead_row(q.slot)?;
        let dt = self.lead.dt();
        let theta = q.t - d1 + q.d;
        let k_now = self.lead.step_index() as i64;
        // a later leader time than now is not available; use the newest node
        let kq = ((theta / dt).round() as i64).min(k_now);
        let p = row
            .node_back((k_now - kq) as usize)
            .ok_or(Error::OutOfHistory { t: theta + d1, start: self.lead.t() - row.nodes() as f64 * dt + d1 })?;
        Ok((row, p, kq))
    }

    fn batch(&self, cache: &LeaderJets, t: f64, ds: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
        let lead = self.lead;
        let dt = lead.dt();
        let k_now = lead.step_index() as i64;
        let shift = weights[0] * self.offset;
        let mut best = vec![f64::NEG_INFINITY; ds.len()];
        // leader rows outermost: each row's cache is read front to back
        for (j, row) in lead.bank().rows.iter().enumerate() {
            let dj = row.d_cand;
            if !ds.iter().any(|&d| dj >= d - 1e-9) {
                continue;
            }
            self.live_row(j)?;
            for (b, &d) in best.iter_mut().zip(ds) {
                if dj < d - 1e-9 {
                    continue;
                }
                let kq = (((t - dj + d) / dt).round() as i64).min(k_now);
                *b = b.max(cache.dot(j, kq, weights)? + shift);
            }
        }
        if best.iter().any(|b| *b == f64::NEG_INFINITY) {
            return Err(Error::Contract("a follower candidate has no leader hypothesis".into()));
        }
        Ok(best)
    }

    fn now_k(&self, q: &TargetQuery) -> Result<i64> {
        let k = ((q.t + q.d) / self.lead.dt()).round() as i64;
        if k < 0 || k > self.lead.step_index() as i64 {
            return Err(Error::OutOfHistory { t: q.t + q.d, start: 0.0 });
        }
        Ok(k)
    }
}

impl Target for FollowerTarget<'_> {
    fn jet(&self, q: &TargetQuery, step: f64) -> Result<Jet> {
        let lead = self.lead;
        let plant = &lead.plant;
        let y11 = if q.slot == Slot::Now {
            let k = self.now_k(q)?;
            let (y, _) = lead.state_at(k)?;
            let n1 = steps_for(lead.d_true(), lead.dt()) as i64;
            let u0 = plant.b * lead.x1_jet(k - n1)?;
            y_flow(plant, &y, u0)[0]
        } else {
            let (_, p, kq) = self.locate(q)?;
            if let (Slot::Cascade(_, j), Some(cache)) = (q.slot, self.jets) {
                cache.get(j, kq)?
            } else {
                let (_, x) = lead.state_at(kq)?;
                let (ps, _) = px_flow(plant, p, &x, lead.control_jet(kq));
                // before the leader's first control, sampled x_1 carries more
                // derivative information than the (unknown) control
                let sampled = y_flow(plant, p, plant.b * lead.x1_jet(kq)?)[0];
                if sampled.len() > ps[0].len() {
                    sampled
                } else {
                    ps[0]
                }
            }
        };
        Ok(y11 + Jet::constant(self.offset, step))
    }

    fn value(&self, q: &TargetQuery) -> Result<f64> {
        if q.slot == Slot::Now {
            let (y, _) = self.lead.state_at(self.now_k(q)?)?;
            return Ok(y[0] + self.offset);
        }
        Ok(self.locate(q)?.1[0] + self.offset)
    }

    fn sweep_batch(&self, t: f64, ds: &[f64], _step: f64, weights: &[f64]) -> Option<Result<Vec<f64>>> {
        let cache = self.jets?;
        if weights.len() != cache.len {
            return None;
        }
        Some(self.batch(cache, t, ds, weights))
    }

    /// Every leader hypothesis at least as long as the follower's own
    /// candidate joins the sweep, so the true pair is always covered.
    fn sweep_slots(&self, i: usize, d: f64) -> Vec<Slot> {
        let rows = &self.lead.bank().rows;
        (0..rows.len()).filter(|&j| rows[j].d_cand >= d - 1e-9).map(|j| Slot::Cascade(i, j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonRun {
    pub params: [VehicleParams; 2],
    pub logs: [SimLog; 2],
}

pub fn run_platoon(pc: &PlatoonConfig, controller: Controller, force: bool) -> Result<PlatoonRun> {
    let [c1, c2] = &pc.vehicles;
    let t1 = ExprTarget(&c1.trajectory);
    let (g1, _) = prepare_checked(c1, controller, &t1, force)?;
    let mut a1 = Agent::new(c1, controller, g1, &t1)?;
    // the follower's target at t = 0 already depends on the leader's control
    a1.control(&t1)?;
    let offset = pc.params[1].d_o;
    let mut jets = match controller {
        Controller::Adaptive => Some(LeaderJets::new(&a1)?),
        _ => None,
    };
    let mut a2 = {
        let t2 = FollowerTarget { lead: &a1, offset, jets: jets.as_ref() };
        let (g2, _) = prepare_checked(c2, controller, &t2, force)?;
        Agent::new(c2, controller, g2, &t2)?
    };
    let steps = c1.numerics.steps();
    for k in 0..=steps {
        if k > 0 {
            a1.control(&t1)?;
            // the cache is only read while the follower still sweeps
            if let Some(c) = jets.as_mut() {
                if a2.t_f().is_none() {
                    c.record(&a1)?;
                } else {
                    jets = None;
                }
            }
        }
        a2.control(&FollowerTarget { lead: &a1, offset, jets: jets.as_ref() })?;
        if a1.diverged() || a2.diverged() || k == steps {
            break;
        }
        a1.advance()?;
        a2.advance()?;
        if a1.diverged() || a2.diverged() {
            break;
        }
    }
    Ok(PlatoonRun { params: pc.params, logs: [a1.into_log(), a2.into_log()] })
}

impl PlatoonRun {
    /// Spacings d_1 = l_0 + y_11 and d_2 = y_21 - y_11 at each logged step.
    pub fn spacings(&self) -> Vec<(f64, f64, f64)> {
        let [l1, l2] = &self.logs;
        l1.records
            .iter()
            .zip(&l2.records)
            .map(|(a, b)| (a.t, leader_position(a.t) + a.y[0], b.y[0] - a.y[0]))
            .collect()
    }

    /// Column text: t d1 d2 v1 v2 F1 F2 V1 V2 Dhat1 Dhat2.
    pub fn figure_columns(&self) -> String {
        let [l1, l2] = &self.logs;
        let g = [self.params[0].voltage_gain(), self.params[1].voltage_gain()];
        let mut s = String::from("# t d1 d2 v1 v2 F1 F2 V1 V2 Dhat1 Dhat2\n");
        for ((a, b), (t, d1, d2)) in l1.records.iter().zip(&l2.records).zip(self.spacings()) {
            let _ = writeln!(
                s,
                "{t} {d1} {d2} {} {} {} {} {} {} {} {}",
                -a.y[1],
                -b.y[1],
                a.x[0],
                b.x[0],
                a.u_a / g[0],
                b.u_a / g[1],
                a.d_hat,
                b.d_hat
            );
        }
        s
    }

    pub fn write_figures(&self, dir: &Path, stem: &str) -> Result<()> {
        let data = format!("{stem}_figures.dat");
        std::fs::write(dir.join(&data), self.figure_columns())?;
        let script = format!(
            "set xlabel 't (s)'\n\
             set terminal pngcairo size 900,600\n\
             set output '{stem}_spacing.png'\n\
             plot '{data}' u 1:2 w l t 'd1', '' u 1:3 w l t 'd2', 0.5 t 'safe distance'\n\
             set output '{stem}_speed.png'\n\
             plot '{data}' u 1:4 w l t 'v1', '' u 1:5 w l t 'v2', 4+sin(x) t 'leader'\n\
             set output '{stem}_force.png'\n\
             plot '{data}' u 1:6 w l t 'F1', '' u 1:7 w l t 'F2'\n\
             set output '{stem}_voltage.png'\n\
             plot '{data}' u 1:8 w l t 'V1', '' u 1:9 w l t 'V2'\n\
             set output '{stem}_delay.png'\n\
             plot '{data}' u 1:10 w l t 'Dhat1', '' u 1:11 w l t 'Dhat2'\n"
        );
        std::fs::write(dir.join(format!("{stem}_figures.gp")), script)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_gains() {
        let p = VehicleParams::default();
        assert_eq!(vehicle_plant(&p).unwrap().b, -0.25);
        assert!((p.voltage_gain() - 160.0).abs() < 1e-9);
    }

    #[test]
    fn leader_derivatives_at_zero() {
        assert_eq!(leader_jet(0.0, 0, 0.5).unwrap(), -9.5);
        assert_eq!(leader_jet(0.0, 1, 0.5).unwrap(), -4.0);
        assert_eq!(leader_jet(0.0, 2, 0.5).unwrap(), -1.0);
        assert!(leader_jet(0.0, 4, 0.5).is_err());
        assert_eq!(leader_position(0.0), 10.0);
    }

    #[test]
    fn delay_order_enforced() {
        let p1 = VehicleParams { delay: 1.0, ..Default::default() };
        let p2 = VehicleParams { delay: 2.0, ..Default::default() };
        assert!(matches!(build_platoon(&p1, &p2), Err(Error::Config(_))));
    }

    #[test]
    fn expression_target_matches_leader_jet() {
        let pc = table1();
        let e = &pc.vehicles[0].trajectory;
        let j = e.eval(&[Jet::time(0.7, 0.0)]);
        for k in 0..4 {
            assert!((j.get(k).unwrap() - leader_jet(0.7, k, 0.5).unwrap()).abs() < 1e-12);
        }
    }
}
