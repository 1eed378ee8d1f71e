//! Fixed-step closed-loop simulation, telemetry and run metrics.
//!
//! An [`Agent`] owns one plant instance and its controller state. A step is
//! split in two: [`Agent::control`] (identifier trigger, control law, safety
//! filter, diagnostics, log record) and [`Agent::advance`] (explicit Euler on
//! both chains, delay line, predictor rows). Splitting lets a follower read
//! its leader's control at the same step boundary.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::assumptions::prepare_checked;
use crate::backstepping::{delta_value, evaluate_law, forward_z, AffineLaw, GainSet};
use crate::delay_line::DelayLine;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::filter::{apply_filter, Regime};
use crate::identifier::{trapezoid_weights, Identifier};
use crate::jet::{Jet, JMAX};
use crate::model::{DelayConfig, Numerics, PlantDefinition, ScenarioConfig};
use crate::plant::{euler_step, eval_x_rhs, eval_y_rhs, x_flow};
use crate::predictor::{PredictorBank, PredictorRow};

pub const DIVERGENCE_GUARD: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Controller {
    Nominal,
    Adaptive,
    Uncompensated,
}

impl Controller {
    pub const ALL: [Controller; 3] = [Controller::Nominal, Controller::Adaptive, Controller::Uncompensated];

    pub fn name(self) -> &'static str {
        match self {
            Controller::Nominal => "nominal",
            Controller::Adaptive => "adaptive",
            Controller::Uncompensated => "uncompensated",
        }
    }

    pub fn from_name(s: &str) -> Option<Controller> {
        Controller::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Which delay hypothesis a target query serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Candidate i of the delay grid.
    Candidate(usize),
    /// The controller's working delay (estimate, or the known delay).
    Selected,
    /// Ground truth, diagnostics only.
    Oracle,
    /// The target at the query time itself.
    Now,
    /// Own candidate i combined with hypothesis j of an upstream agent.
    Cascade(usize, usize),
}

/// Target jet about `t + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetQuery {
    pub t: f64,
    pub d: f64,
    pub slot: Slot,
}

pub trait Target: Sync {
    fn jet(&self, q: &TargetQuery, step: f64) -> Result<Jet>;

    fn value(&self, q: &TargetQuery) -> Result<f64> {
        self.jet(q, 0.0)?.get(0)
    }

    /// Slots a pre-identification sweep must cover for own candidate `i`
    /// with delay `d`.
    fn sweep_slots(&self, i: usize, _d: f64) -> Vec<Slot> {
        vec![Slot::Candidate(i)]
    }

    /// For each own candidate delay in `ds`, the largest `weights · s` over
    /// its sweep targets s about t + d. Targets that cannot batch return
    /// None and are queried slot by slot.
    fn sweep_batch(&self, _t: f64, _ds: &[f64], _step: f64, _weights: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

/// Trajectory given in closed form.
pub struct ExprTarget<'a>(pub &'a Expr);

impl Target for ExprTarget<'_> {
    fn jet(&self, q: &TargetQuery, step: f64) -> Result<Jet> {
        Ok(self.0.eval(&[Jet::time(q.t + q.d, step)]))
    }

    fn value(&self, q: &TargetQuery) -> Result<f64> {
        Ok(self.0.eval_f64(&[q.t + q.d]))
    }
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub u_a: f64,
    pub u_d: f64,
    pub d_hat: f64,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub omega: f64,
    pub psi: f64,
    pub margin: f64,
    /// ż_n target input w(0,t) = u(0,t) - h_n(Y, s(t)) - s^(n)(t).
    pub w0: f64,
    pub filter_active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub name: String,
    pub controller: Controller,
    pub n: usize,
    pub m: usize,
    pub b: f64,
    pub dt: f64,
    pub d_true: f64,
    pub d_grid: f64,
    pub gains: GainSet,
    pub records: Vec<Record>,
    pub triggers: Vec<(f64, f64)>,
    pub t_f: Option<f64>,
    pub filter_activations: usize,
    pub divergence: Option<f64>,
}

struct Snapshot {
    y: Vec<f64>,
    x: Vec<f64>,
}

pub struct Agent {
    pub name: String,
    pub plant: PlantDefinition,
    pub gains: GainSet,
    pub controller: Controller,
    grid: DelayConfig,
    d_true: f64,
    numerics: Numerics,
    history: Expr,
    k: usize,
    y: Vec<f64>,
    x: Vec<f64>,
    line: DelayLine,
    bank: PredictorBank,
    /// True-delay row; the nominal controller's own row doubles as it.
    oracle: Option<PredictorRow>,
    ident: Option<Identifier>,
    states: Vec<Snapshot>,
    u_hist: Vec<f64>,
    /// Δ under the true delay at steps -n_true..=k.
    delta_hist: Vec<f64>,
    n_true: usize,
    x_grid: Vec<f64>,
    weights: Vec<f64>,
    /// Target-jet weights of U*, for multi-target sweeps.
    sweep_weights: Vec<f64>,
    pending_u: Option<f64>,
    log: SimLog,
}

fn guard_ok(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite() && a.abs() <= DIVERGENCE_GUARD)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Derivative on a uniform-or-not grid: central inside, one-sided at ends.
pub fn grid_derivative(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / (x[1] - x[0])
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / (x[n - 1] - x[n - 2])
            } else {
                (v[i + 1] - v[i - 1]) / (x[i + 1] - x[i - 1])
            }
        })
        .collect()
}

impl Agent {
    pub fn new(cfg: &ScenarioConfig, controller: Controller, gains: GainSet, target: &dyn Target) -> Result<Agent> {
        cfg.validate()?;
        let plant = cfg.plant.clone();
        let numerics = cfg.numerics;
        let dt = numerics.dt;
        let d_true = cfg.oracle.d_true;
        let hist = |t: f64| cfg.x1_history.eval_f64(&[t]);
        let retention = cfg.delay.d_hi.max(d_true);
        let line = DelayLine::new(dt, plant.b, retention, hist, cfg.x0[0]);
        let oracle = PredictorRow::init_history(&plant, &cfg.y0, hist, d_true, dt)?;
        let n_true = oracle.nodes();
        let bank = match controller {
            Controller::Nominal => PredictorBank::single(oracle.clone()),
            Controller::Uncompensated => PredictorBank::single(PredictorRow::init_history(&plant, &cfg.y0, hist, 0.0, dt)?),
            Controller::Adaptive => PredictorBank::new(&plant, &cfg.y0, hist, &cfg.delay, dt)?,
        };
        let x_grid = numerics.x_grid();
        let ident = (controller == Controller::Adaptive).then(|| Identifier::new(cfg.identifier, cfg.delay, &x_grid));
        let step = numerics.jet_step();
        let mut delta_hist = Vec::with_capacity(n_true + numerics.steps() + 2);
        for back in (0..=n_true).rev() {
            let theta = -(back as f64) * dt;
            let s = target.jet(&TargetQuery { t: theta, d: d_true, slot: Slot::Oracle }, step)?;
            let p = oracle.node_back(back).expect("history node");
            let x0: Vec<f64> = if back == 0 {
                cfg.x0.clone()
            } else {
                let mut v = vec![0.0; plant.m];
                v[0] = hist(theta);
                v
            };
            let law = evaluate_law(&plant, &gains, p, &x0, &s);
            // before t = 0 only Δ itself is needed, which does not read X
            let dl = match law {
                Ok(l) => l.delta[0],
                Err(_) => delta_value(&plant, p, &x0, &s, &gains.k)?,
            };
            delta_hist.push(dl);
        }
        let log = SimLog {
            name: cfg.name.clone(),
            controller,
            n: plant.n,
            m: plant.m,
            b: plant.b,
            dt,
            d_true,
            d_grid: cfg.delay.d_d,
            gains: gains.clone(),
            records: Vec::with_capacity(numerics.steps() + 1),
            triggers: Vec::new(),
            t_f: None,
            filter_activations: 0,
            divergence: None,
        };
        let weights = trapezoid_weights(&x_grid);
        let sweep_weights = if controller == Controller::Adaptive {
            AffineLaw::weights(&plant, &gains, bank.rows[0].current(), &cfg.x0, numerics.jet_step())?
        } else {
            Vec::new()
        };
        Ok(Agent {
            name: cfg.name.clone(),
            plant,
            gains,
            controller,
            grid: cfg.delay,
            d_true,
            numerics,
            history: cfg.x1_history.clone(),
            k: 0,
            y: cfg.y0.clone(),
            x: cfg.x0.clone(),
            line,
            bank,
            oracle: (controller != Controller::Nominal).then_some(oracle),
            ident,
            states: vec![Snapshot { y: cfg.y0.clone(), x: cfg.x0.clone() }],
            u_hist: Vec::new(),
            delta_hist,
            n_true,
            x_grid,
            weights,
            sweep_weights,
            pending_u: None,
            log,
        })
    }

    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.k as f64 * self.numerics.dt
    }

    pub fn dt(&self) -> f64 {
        self.numerics.dt
    }

    pub fn jet_step(&self) -> f64 {
        self.numerics.jet_step()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn d_true(&self) -> f64 {
        self.d_true
    }

    pub fn log(&self) -> &SimLog {
        &self.log
    }

    pub fn into_log(self) -> SimLog {
        self.log
    }

    pub fn diverged(&self) -> bool {
        self.log.divergence.is_some()
    }

    /// Identification time, once detected.
    pub fn t_f(&self) -> Option<f64> {
        self.log.t_f
    }

    pub fn identifier(&self) -> Option<&Identifier> {
        self.ident.as_ref()
    }

    pub fn bank(&self) -> &PredictorBank {
        &self.bank
    }

    pub fn oracle_row(&self) -> &PredictorRow {
        self.oracle.as_ref().unwrap_or(&self.bank.rows[0])
    }

    pub fn grid(&self) -> &DelayConfig {
        &self.grid
    }

    pub fn d_hat(&self) -> f64 {
        match (&self.ident, self.controller) {
            (Some(id), _) => id.d_hat(),
            (None, Controller::Nominal) => self.d_true,
            (None, _) => 0.0,
        }
    }

    /// Row index and delay value the controller currently works with.
    pub fn selected(&self) -> (usize, f64) {
        match self.controller {
            Controller::Adaptive => {
                let i = self.bank.active().unwrap_or_else(|| self.grid.nearest(self.d_hat()));
                (i, self.grid.candidate(i))
            }
            Controller::Nominal => (0, self.d_true),
            Controller::Uncompensated => (0, 0.0),
        }
    }

    pub fn row(&self, i: usize) -> &PredictorRow {
        &self.bank.rows[i]
    }

    /// Whether row i still follows the clock.
    pub fn row_is_live(&self, i: usize) -> bool {
        self.bank.active().map_or(true, |a| a == i)
    }

    /// Full state at step `k` (k ≤ current). Before t = 0 only x_1 is known
    /// and the rest of X is reported as zero.
    pub fn state_at(&self, k: i64) -> Result<(Vec<f64>, Vec<f64>)> {
        if k > self.k as i64 {
            return Err(Error::Contract(format!("state at step {k} requested at step {}", self.k)));
        }
        if k >= 0 {
            let s = &self.states[k as usize];
            return Ok((s.y.clone(), s.x.clone()));
        }
        let mut x = vec![0.0; self.plant.m];
        x[0] = self.history.eval_f64(&[k as f64 * self.numerics.dt]);
        Ok((vec![f64::NAN; self.plant.n], x))
    }

    /// Applied control at step `k`, if already chosen.
    pub fn control_at(&self, k: i64) -> Option<f64> {
        if k < 0 {
            return None;
        }
        self.u_hist.get(k as usize).copied()
    }

    /// Jet of the control at step k: lattice samples in the discrete
    /// calculus, the value alone otherwise.
    pub fn control_jet(&self, k: i64) -> Jet {
        let step = self.jet_step();
        let Some(u0) = self.control_at(k) else { return Jet::unknown(step) };
        if step == 0.0 {
            return Jet::from_entries(&[u0], step);
        }
        let samples: Vec<f64> = (0..JMAX as i64).map_while(|l| self.control_at(k + l)).collect();
        Jet::from_samples(&samples, step)
    }

    /// Jet of x_1 at step k.
    pub fn x1_jet(&self, k: i64) -> Result<Jet> {
        let step = self.jet_step();
        if step > 0.0 {
            let samples: Vec<f64> = (0..JMAX as i64)
                .map_while(|l| {
                    let kk = k + l;
                    (kk <= self.k as i64).then(|| self.state_at(kk).map(|s| s.1[0]).unwrap_or(f64::NAN))
                })
                .collect();
            return Ok(Jet::from_samples(&samples, step));
        }
        if k < 0 {
            return Ok(self.history.eval(&[Jet::time(k as f64 * self.numerics.dt, step)]));
        }
        let (_, x) = self.state_at(k)?;
        Ok(x_flow(&self.plant, &x, self.control_jet(k))[0])
    }

    fn delta_true_at(&self, theta: f64) -> f64 {
        let pos = theta / self.numerics.dt + self.n_true as f64;
        let last = (self.delta_hist.len() - 1) as f64;
        let pos = pos.clamp(0.0, last);
        let lo = pos.floor();
        let frac = pos - lo;
        let i = lo as usize;
        if frac < 1e-9 || i + 1 >= self.delta_hist.len() {
            self.delta_hist[i]
        } else {
            self.delta_hist[i] + frac * (self.delta_hist[i + 1] - self.delta_hist[i])
        }
    }

    /// Trigger the identifier if due and pin the predictor row once the delay
    /// is identified.
    fn identifier_phase(&mut self, t: f64) -> Result<()> {
        let Some(id) = self.ident.as_mut() else { return Ok(()) };
        if id.is_due(t) {
            id.trigger_update(t)?;
            self.log.triggers.push((t, id.d_hat()));
            if let Some(tf) = id.t_f() {
                if self.log.t_f.is_none() {
                    self.log.t_f = Some(tf);
                    self.bank.select(self.grid.nearest(id.d_hat()));
                }
            }
        }
        Ok(())
    }

    fn regime(&self) -> Regime {
        match &self.ident {
            Some(id) if id.t_f().is_none() => Regime::PreTf,
            _ => Regime::PostTf,
        }
    }

    /// Choose the control for the current step and log the step.
    pub fn control(&mut self, target: &dyn Target) -> Result<f64> {
        let t = self.t();
        let step = self.jet_step();
        self.identifier_phase(t)?;
        let q = |d: f64, slot: Slot| TargetQuery { t, d, slot };
        let plant = &self.plant;
        let gains = &self.gains;
        let (u_d, u_a, active) = match self.controller {
            Controller::Nominal => {
                let s = target.jet(&q(self.d_true, Slot::Selected), step)?;
                let u = evaluate_law(plant, gains, self.bank.rows[0].current(), &self.x, &s)?.u;
                (u, u, false)
            }
            Controller::Uncompensated => {
                let s = target.jet(&q(0.0, Slot::Now), step)?;
                let u = evaluate_law(plant, gains, &self.y, &self.x, &s)?.u;
                (u, u, false)
            }
            Controller::Adaptive => {
                let (sel, d_sel) = self.selected();
                let s = target.jet(&q(d_sel, Slot::Selected), step)?;
                let u_d = evaluate_law(plant, gains, self.bank.rows[sel].current(), &self.x, &s)?.u;
                let regime = self.regime();
                let sweep: Vec<f64> = if regime == Regime::PreTf {
                    self.sweep(target, t, step)?
                } else {
                    Vec::new()
                };
                let dec = apply_filter(u_d, &sweep, plant.b, regime)?;
                (u_d, dec.u_a, dec.active)
            }
        };
        if active {
            self.log.filter_activations += 1;
        }

        // diagnostics under the true delay
        let s_true = target.jet(&q(self.d_true, Slot::Oracle), step)?;
        let law = evaluate_law(plant, gains, self.oracle_row().current(), &self.x, &s_true)?;
        let u_star_true = law.u_star(plant, gains);
        let b = plant.b;
        let gamma = b * (u_a - law.u);
        let gamma_bar = b * (u_a - u_star_true);
        let s_now = target.jet(&q(0.0, Slot::Now), step)?;
        let (z, h) = forward_z(plant, &self.y, &s_now, &gains.k)?;
        let n = plant.n;
        let u0 = self.line.delayed_input(self.d_true)?;
        let w0 = u0 - h[n - 1] - s_now.get(n)?;
        match self.delta_hist.get_mut(self.n_true + self.k) {
            Some(v) => *v = law.delta[0],
            None => self.delta_hist.push(law.delta[0]),
        }
        let (omega, psi) = self.omega_psi(&z, &law.r)?;

        self.u_hist.push(u_a);
        self.pending_u = Some(u_a);
        self.log.records.push(Record {
            t,
            y: self.y.clone(),
            x: self.x.clone(),
            u_a,
            u_d,
            d_hat: self.d_hat(),
            margin: z[0],
            z,
            r: law.r,
            gamma,
            gamma_bar,
            omega,
            psi,
            w0,
            filter_active: active,
        });
        if !u_a.is_finite() {
            self.log.divergence = Some(t);
        }
        Ok(u_a)
    }

    /// U* for every candidate row, each maximised (in b U*) over the
    /// row's sweep targets.
    fn sweep(&self, target: &dyn Target, t: f64, step: f64) -> Result<Vec<f64>> {
        let (plant, gains, x) = (&self.plant, &self.gains, &self.x);
        let b = plant.b;
        let rows = &self.bank.rows;
        let q = |d: f64, slot: Slot| TargetQuery { t, d, slot };
        let bw: Vec<f64> = self.sweep_weights.iter().map(|w| b * w).collect();
        let ds: Vec<f64> = rows.iter().map(|r| r.d_cand).collect();
        if let Some(best) = target.sweep_batch(t, &ds, step, &bw) {
            let best = best?;
            return rows
                .par_iter()
                .zip(best)
                .map(|(row, m)| Ok(AffineLaw::new(plant, gains, row.current(), x, step, &self.sweep_weights)?.base() + m / b))
                .collect();
        }
        rows.par_iter()
            .enumerate()
            .map(|(i, row)| {
                let slots = target.sweep_slots(i, row.d_cand);
                if let [slot] = slots[..] {
                    let s = target.jet(&q(row.d_cand, slot), step)?;
                    return Ok(evaluate_law(plant, gains, row.current(), x, &s)?.u_star(plant, gains));
                }
                let lin = AffineLaw::new(plant, gains, row.current(), x, step, &self.sweep_weights)?;
                slots
                    .iter()
                    .try_fold(f64::NEG_INFINITY, |acc: f64, &slot| {
                        let s = target.jet(&q(row.d_cand, slot), step)?;
                        Ok(acc.max(b * lin.eval(&s)?))
                    })
                    .map(|best| best / b)
            })
            .collect()
    }

    fn omega_psi(&self, z: &[f64], r: &[f64]) -> Result<(f64, f64)> {
        let t = self.t();
        let d = self.d_true;
        let b = self.plant.b;
        let mut w = Vec::with_capacity(self.x_grid.len());
        let mut x1_sq = Vec::with_capacity(self.x_grid.len());
        for &xg in &self.x_grid {
            let theta = t - d + d * xg;
            let x1 = if xg == 1.0 { self.x[0] } else { self.line.x1_at(theta)? };
            w.push(b * x1 - self.delta_true_at(theta));
            x1_sq.push(x1 * x1);
        }
        let integral = |v: &[f64]| -> f64 { v.iter().zip(&self.weights).map(|(a, w)| a * a * w).sum() };
        let mut omega: f64 = z.iter().chain(r).map(|v| v * v).sum();
        let mut dw = w;
        for i in 0..=self.plant.m {
            if i > 0 {
                dw = grid_derivative(&self.x_grid, &dw);
            }
            omega += integral(&dw);
        }
        let p_max = self.oracle_row().auxiliary_p(&self.x_grid).iter().map(|p| norm(p)).fold(0.0, f64::max);
        let hist: f64 = x1_sq.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>() * d;
        let psi = norm(&self.x) + norm(&self.y) + p_max + hist.sqrt();
        Ok((omega, psi))
    }

    /// Advance one Euler step with the control chosen by [`Agent::control`].
    pub fn advance(&mut self) -> Result<()> {
        let u = self.pending_u.take().ok_or_else(|| Error::Contract("advance before control".into()))?;
        let dt = self.numerics.dt;
        let t = self.t();
        if let Some(id) = self.ident.as_mut() {
            let field = self.line.sample_u(self.d_true, &self.x_grid)?;
            id.accumulate(&field, dt);
        }
        let u0 = self.line.delayed_input(self.d_true)?;
        let ry = eval_y_rhs(&self.y, u0, &self.plant);
        let rx = eval_x_rhs(&self.x, u, &self.plant);
        let x1_now = self.x[0];
        euler_step(&mut self.y, &ry, dt);
        euler_step(&mut self.x, &rx, dt);
        self.k += 1;
        if !guard_ok(&self.y) || !guard_ok(&self.x) {
            self.log.divergence = Some(t + dt);
            return Ok(());
        }
        self.line.push_sample(self.t(), self.x[0])?;
        self.states.push(Snapshot { y: self.y.clone(), x: self.x.clone() });
        let oracle_res = match self.oracle.as_mut() {
            Some(row) => row.advance(&self.plant, x1_now, &self.y),
            None => Ok(()),
        };
        for res in [self.bank.advance(&self.plant, x1_now, &self.y), oracle_res] {
            match res {
                Ok(()) => {}
                Err(Error::Assumption(_)) => {
                    self.log.divergence = Some(self.t());
                    return Ok(());
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Closed-loop run of a single plant against its configured trajectory.
pub fn run(cfg: &ScenarioConfig, controller: Controller, force: bool) -> Result<SimLog> {
    let target = ExprTarget(&cfg.trajectory);
    let (gains, _) = prepare_checked(cfg, controller, &target, force)?;
    let mut agent = Agent::new(cfg, controller, gains, &target)?;
    let steps = cfg.numerics.steps();
    for k in 0..=steps {
        agent.control(&target)?;
        if agent.diverged() || k == steps {
            break;
        }
        agent.advance()?;
        if agent.diverged() {
            break;
        }
    }
    Ok(agent.into_log())
}

/// Least-squares slope of ln v against t over records with t ≥ t0 and v > 0.
pub fn log_slope(ts: &[f64], vs: &[f64], t0: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        ts.iter().zip(vs).filter(|(t, v)| **t >= t0 && **v > 1e-300 && v.is_finite()).map(|(t, v)| (*t, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub controller: Controller,
    pub steps: usize,
    pub t_end: f64,
    pub min_margin: f64,
    pub terminal_error: f64,
    pub t_f: Option<f64>,
    pub d_hat_tf: Option<f64>,
    pub d_hat_rel_error: Option<f64>,
    pub filter_activations: usize,
    /// Start of the window the decay fits use.
    pub fit_start: f64,
    pub omega_slope: Option<f64>,
    pub psi_slope: Option<f64>,
    pub divergence: Option<f64>,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v}"));
        let lines = [
            ("run", self.name.clone()),
            ("controller", self.controller.name().to_string()),
            ("steps", self.steps.to_string()),
            ("t_end", format!("{}", self.t_end)),
            ("min_margin", format!("{}", self.min_margin)),
            ("terminal_error", format!("{}", self.terminal_error)),
            ("t_f", opt(self.t_f)),
            ("d_hat_at_tf", opt(self.d_hat_tf)),
            ("d_hat_rel_error", opt(self.d_hat_rel_error)),
            ("filter_activations", self.filter_activations.to_string()),
            ("fit_start", format!("{}", self.fit_start)),
            ("omega_log_slope", opt(self.omega_slope)),
            ("psi_log_slope", opt(self.psi_slope)),
            ("diverged", self.divergence.is_some().to_string()),
            ("divergence_time", opt(self.divergence)),
        ];
        let mut s = String::new();
        for (k, v) in lines {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

pub fn metrics(log: &SimLog) -> Summary {
    let ts: Vec<f64> = log.records.iter().map(|r| r.t).collect();
    let min_margin = log.records.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    let last = log.records.last();
    let d_hat_tf =
        log.t_f.and_then(|tf| log.records.iter().find(|r| r.t >= tf - 1e-9).map(|r| r.d_hat));
    let fit_start = match log.controller {
        Controller::Adaptive => log.t_f.unwrap_or(log.d_true),
        _ => log.d_true,
    };
    let om: Vec<f64> = log.records.iter().map(|r| r.omega).collect();
    let ps: Vec<f64> = log.records.iter().map(|r| r.psi).collect();
    Summary {
        name: log.name.clone(),
        controller: log.controller,
        steps: log.records.len(),
        t_end: last.map_or(0.0, |r| r.t),
        min_margin,
        terminal_error: last.map_or(f64::NAN, |r| r.margin.abs()),
        t_f: log.t_f,
        d_hat_tf,
        d_hat_rel_error: d_hat_tf.map(|d| (d - log.d_true).abs() / log.d_true),
        filter_activations: log.filter_activations,
        fit_start,
        omega_slope: log_slope(&ts, &om, fit_start),
        psi_slope: log_slope(&ts, &ps, fit_start),
        divergence: log.divergence,
    }
}

pub fn csv_header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("y{i}")));
    h.extend((1..=m).map(|j| format!("x{j}")));
    h.extend(["U_a", "U_d", "D_hat"].map(String::from));
    h.extend((1..=n).map(|i| format!("z{i}")));
    h.extend((1..=m).map(|j| format!("r{j}")));
    h.extend(["gamma", "gamma_bar", "Omega", "margin"].map(String::from));
    h
}

pub fn write_csv<W: Write>(log: &SimLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(log.n, log.m))?;
    for r in &log.records {
        let mut row = vec![r.t];
        row.extend(&r.y);
        row.extend(&r.x);
        row.extend([r.u_a, r.u_d, r.d_hat]);
        row.extend(&r.z);
        row.extend(&r.r);
        row.extend([r.gamma, r.gamma_bar, r.omega, r.margin]);
        w.write_record(row.iter().map(|v| format!("{v}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(log: &SimLog, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(log, std::io::BufWriter::new(f))
}
