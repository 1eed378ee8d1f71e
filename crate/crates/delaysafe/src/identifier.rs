//! Batch least-squares delay identification from the transport field.
//!
//! With g_n(t) = -∫ sin(nπx) u dx and f_n(t) = nπ ∫_0^t ∫ cos(nπx) u dx dτ,
//! transport with zero initial field gives f_n = D g_n. At each trigger the
//! window integrals G_n = ∫ g_n², F_n = ∫ g_n f_n are reconciled across
//! modes in the least-squares sense.

use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{DelayConfig, IdentifierConfig};

#[derive(Debug, Clone)]
struct Segment {
    start: f64,
    g2: Vec<f64>,
    gf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Identifier {
    cfg: IdentifierConfig,
    bounds: DelayConfig,
    weights: Vec<f64>,
    sin_tab: Vec<Vec<f64>>,
    cos_tab: Vec<Vec<f64>>,
    f_acc: Vec<f64>,
    g_now: Vec<f64>,
    open: Segment,
    closed: VecDeque<Segment>,
    d_hat: f64,
    t_next: f64,
    t_f: Option<f64>,
    excited: bool,
    updates: Vec<(f64, f64)>,
}

/// Composite trapezoid weights on a sorted grid.
pub fn trapezoid_weights(x_grid: &[f64]) -> Vec<f64> {
    let n = x_grid.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = x_grid[i + 1] - x_grid[i];
        w[i] += h / 2.0;
        w[i + 1] += h / 2.0;
    }
    w
}

impl Identifier {
    pub fn new(cfg: IdentifierConfig, bounds: DelayConfig, x_grid: &[f64]) -> Identifier {
        let modes = cfg.n_max;
        let tab = |f: fn(f64) -> f64| -> Vec<Vec<f64>> {
            (1..=modes).map(|n| x_grid.iter().map(|&x| f(n as f64 * PI * x)).collect()).collect()
        };
        Identifier {
            cfg,
            bounds,
            weights: trapezoid_weights(x_grid),
            sin_tab: tab(f64::sin),
            cos_tab: tab(f64::cos),
            f_acc: vec![0.0; modes],
            g_now: vec![0.0; modes],
            open: Segment { start: 0.0, g2: vec![0.0; modes], gf: vec![0.0; modes] },
            closed: VecDeque::new(),
            d_hat: bounds.clamp(cfg.d_hat0),
            t_next: cfg.t_dwell,
            t_f: None,
            excited: false,
            updates: Vec::new(),
        }
    }

    pub fn d_hat(&self) -> f64 {
        self.d_hat
    }

    pub fn t_f(&self) -> Option<f64> {
        self.t_f
    }

    pub fn t_next(&self) -> f64 {
        self.t_next
    }

    pub fn excited(&self) -> bool {
        self.excited
    }

    pub fn g_now(&self) -> &[f64] {
        &self.g_now
    }

    pub fn f_acc(&self) -> &[f64] {
        &self.f_acc
    }

    /// (trigger time, estimate after the trigger).
    pub fn updates(&self) -> &[(f64, f64)] {
        &self.updates
    }

    pub fn is_due(&self, t: f64) -> bool {
        t >= self.t_next - 1e-9
    }

    /// Fold in the field sampled at the current time: trapezoid in x,
    /// left rectangle in t.
    pub fn accumulate(&mut self, u_grid: &[f64], dt: f64) {
        let dot = |tab: &[f64]| -> f64 { tab.iter().zip(u_grid).zip(&self.weights).map(|((s, u), w)| s * u * w).sum() };
        let energy: f64 = u_grid.iter().zip(&self.weights).map(|(u, w)| u * u * w).sum();
        if energy > self.cfg.eps_exc {
            self.excited = true;
        }
        for n in 0..self.cfg.n_max {
            let g = -dot(&self.sin_tab[n]);
            let c = (n + 1) as f64 * PI * dot(&self.cos_tab[n]);
            self.g_now[n] = g;
            self.open.g2[n] += dt * g * g;
            self.open.gf[n] += dt * g * self.f_acc[n];
            self.f_acc[n] += dt * c;
        }
    }

    /// Least-squares solution over the current window, clamped to the
    /// bounds; None when the window carries no excitation.
    pub fn window_solution(&self, t: f64) -> Option<f64> {
        let mu = t - self.cfg.n_tilde as f64 * self.cfg.t_dwell - 1e-9;
        let modes = self.cfg.n_max;
        let mut g = vec![0.0; modes];
        let mut f = vec![0.0; modes];
        for seg in self.closed.iter().filter(|s| s.start >= mu) {
            for n in 0..modes {
                g[n] += seg.g2[n];
                f[n] += seg.gf[n];
            }
        }
        let eps2 = self.cfg.eps_exc * self.cfg.eps_exc;
        if g.iter().all(|&v| v < eps2) {
            return None;
        }
        let num: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
        let den: f64 = g.iter().map(|a| a * a).sum();
        Some(self.bounds.clamp(num / den))
    }

    pub fn trigger_update(&mut self, t: f64) -> Result<()> {
        if (t - self.t_next).abs() > 1e-6 * self.cfg.t_dwell.max(1.0) {
            return Err(Error::Contract(format!("trigger at {t}, expected {}", self.t_next)));
        }
        let modes = self.cfg.n_max;
        let done = std::mem::replace(&mut self.open, Segment { start: t, g2: vec![0.0; modes], gf: vec![0.0; modes] });
        self.closed.push_back(done);
        while self.closed.len() > self.cfg.n_tilde {
            self.closed.pop_front();
        }
        if let Some(l) = self.window_solution(t) {
            if (l - self.d_hat).abs() >= self.cfg.plateau_frac * self.d_hat {
                self.d_hat = l;
            }
        }
        self.detect_tf(t);
        self.updates.push((t, self.d_hat));
        self.t_next += self.cfg.t_dwell;
        Ok(())
    }

    /// First trigger after a nonzero field has been witnessed.
    pub fn detect_tf(&mut self, t: f64) -> Option<f64> {
        if self.t_f.is_none() && self.excited {
            self.t_f = Some(t);
        }
        self.t_f
    }
}
