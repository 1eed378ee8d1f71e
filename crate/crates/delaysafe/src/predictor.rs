//! Finite-difference predictors P(t) ≈ Y(t+D).
//!
//! A row keeps the running sum of f(P, b x_1)·d over its trailing window, so
//! P(t_k) = Y(t_k) + Σ_{i=k-N}^{k-1} f(P(t_i), b x_1(t_i))·d. For the Euler
//! plant with d = dt this reproduces Y(t_k + N d) up to rounding.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{steps_for, DelayConfig, PlantDefinition};
use crate::plant::eval_y_rhs;

pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct PredictorRow {
    pub d_cand: f64,
    d: f64,
    nodes: usize,
    p_hist: VecDeque<Vec<f64>>,
    f_hist: VecDeque<Vec<f64>>,
    sum: Vec<f64>,
    since_refresh: usize,
}

fn guard(p: &[f64], what: &str) -> Result<()> {
    let mag = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(mag <= OVERFLOW_GUARD) {
        return Err(Error::Assumption(format!("{what}: predictor diverged (|P| = {mag:e})")));
    }
    Ok(())
}

impl PredictorRow {
    /// Forward accumulation of P over θ ∈ [-D, 0] from P(-D) = Y(0).
    pub fn init_history(
        plant: &PlantDefinition,
        y0: &[f64],
        x1_history: impl Fn(f64) -> f64,
        d_cand: f64,
        d: f64,
    ) -> Result<PredictorRow> {
        let nodes = steps_for(d_cand, d);
        let mut p = y0.to_vec();
        let mut p_hist = VecDeque::with_capacity(nodes + 1);
        let mut f_hist = VecDeque::with_capacity(nodes);
        let mut sum = vec![0.0; plant.n];
        p_hist.push_back(p.clone());
        for i in 0..nodes {
            let theta = (i as f64 - nodes as f64) * d;
            let f: Vec<f64> = eval_y_rhs(&p, plant.b * x1_history(theta), plant).iter().map(|v| v * d).collect();
            for ((pk, fk), sk) in p.iter_mut().zip(&f).zip(sum.iter_mut()) {
                *pk += fk;
                *sk += fk;
            }
            guard(&p, "initial history")?;
            f_hist.push_back(f);
            p_hist.push_back(p.clone());
        }
        Ok(PredictorRow { d_cand, d, nodes, p_hist, f_hist, sum, since_refresh: 0 })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn step(&self) -> f64 {
        self.d
    }

    /// P at the current node.
    pub fn current(&self) -> &[f64] {
        self.p_hist.back().expect("row never empty")
    }

    /// P `back` nodes behind the current one (0 ≤ back ≤ nodes).
    pub fn node_back(&self, back: usize) -> Option<&[f64]> {
        let len = self.p_hist.len();
        (back < len).then(|| self.p_hist[len - 1 - back].as_slice())
    }

    /// Stored predictor trajectory, oldest first.
    pub fn history(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.p_hist.iter()
    }

    /// Move one node forward. `x1_now` is x_1 at the current node and
    /// `y_next` the plant state at the next one.
    pub fn advance(&mut self, plant: &PlantDefinition, x1_now: f64, y_next: &[f64]) -> Result<()> {
        if self.nodes == 0 {
            self.p_hist[0] = y_next.to_vec();
            return Ok(());
        }
        let f: Vec<f64> =
            eval_y_rhs(self.current(), plant.b * x1_now, plant).iter().map(|v| v * self.d).collect();
        let old = self.f_hist.pop_front().expect("window non-empty");
        for ((s, a), o) in self.sum.iter_mut().zip(&f).zip(&old) {
            *s += a - o;
        }
        self.f_hist.push_back(f);
        self.since_refresh += 1;
        if self.since_refresh >= self.nodes {
            // drop accumulated rounding of the running sum
            for (i, s) in self.sum.iter_mut().enumerate() {
                *s = self.f_hist.iter().map(|f| f[i]).sum();
            }
            self.since_refresh = 0;
        }
        let p: Vec<f64> = y_next.iter().zip(&self.sum).map(|(y, s)| y + s).collect();
        guard(&p, "advance")?;
        self.p_hist.pop_front();
        self.p_hist.push_back(p);
        Ok(())
    }

    /// p(x,t) = P(t - D + D x) on `x_grid`, linear between nodes; rows of the
    /// result are grid points.
    pub fn auxiliary_p(&self, x_grid: &[f64]) -> Vec<Vec<f64>> {
        x_grid
            .iter()
            .map(|&x| {
                if x == 1.0 || self.nodes == 0 {
                    return self.current().to_vec();
                }
                let back = ((1.0 - x) * self.d_cand / self.d).min(self.nodes as f64);
                let lo = back.floor() as usize;
                let frac = back - lo as f64;
                let a = self.node_back(lo).expect("within window");
                match self.node_back(lo + 1) {
                    Some(b) if frac > 1e-12 => a.iter().zip(b).map(|(a, b)| a + frac * (b - a)).collect(),
                    _ => a.to_vec(),
                }
            })
            .collect()
    }
}

/// One predictor per candidate delay. Before identification every row
/// advances; afterwards only the selected one does and the rest stay frozen.
#[derive(Debug, Clone)]
pub struct PredictorBank {
    pub rows: Vec<PredictorRow>,
    active: Option<usize>,
}

impl PredictorBank {
    pub fn new(
        plant: &PlantDefinition,
        y0: &[f64],
        x1_history: impl Fn(f64) -> f64 + Sync,
        grid: &DelayConfig,
        d: f64,
    ) -> Result<PredictorBank> {
        let rows = grid
            .candidates()
            .par_iter()
            .map(|&dc| PredictorRow::init_history(plant, y0, &x1_history, dc, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(PredictorBank { rows, active: None })
    }

    pub fn single(row: PredictorRow) -> PredictorBank {
        PredictorBank { rows: vec![row], active: Some(0) }
    }

    pub fn active(&self) -> Option<usize> {
        self.active
    }

    pub fn select(&mut self, index: usize) {
        self.active = Some(index);
    }

    pub fn advance(&mut self, plant: &PlantDefinition, x1_now: f64, y_next: &[f64]) -> Result<()> {
        match self.active {
            Some(i) => self.rows[i].advance(plant, x1_now, y_next),
            None => self.rows.par_iter_mut().try_for_each(|r| r.advance(plant, x1_now, y_next)),
        }
    }
}
