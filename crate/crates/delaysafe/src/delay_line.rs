//! History of the actuator output x_1, read as the transport field
//! u(x,t) = b x_1(t - D + D x).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::steps_for;

#[derive(Debug, Clone)]
pub struct DelayLine {
    dt: f64,
    b: f64,
    k_now: i64,
    samples: VecDeque<f64>,
    capacity: usize,
}

impl DelayLine {
    /// Buffer covering `retention` seconds plus one step, pre-filled from
    /// `history` (t < 0) and holding `x1_0` at t = 0.
    pub fn new(dt: f64, b: f64, retention: f64, history: impl Fn(f64) -> f64, x1_0: f64) -> DelayLine {
        let capacity = steps_for(retention, dt) + 2;
        let mut samples = VecDeque::with_capacity(capacity);
        for k in (1..capacity as i64).rev() {
            samples.push_back(history(-(k as f64) * dt));
        }
        samples.push_back(x1_0);
        DelayLine { dt, b, k_now: 0, samples, capacity }
    }

    pub fn t_now(&self) -> f64 {
        self.k_now as f64 * self.dt
    }

    pub fn step_index(&self) -> i64 {
        self.k_now
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Seconds of history available behind t_now.
    pub fn span(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.dt
    }

    pub fn latest(&self) -> f64 {
        *self.samples.back().expect("delay line never empty")
    }

    pub fn push_sample(&mut self, t: f64, x1: f64) -> Result<()> {
        let expect = self.t_now() + self.dt;
        if (t - expect).abs() > 1e-6 * self.dt {
            return Err(Error::Contract(format!("delay line expects t = {expect}, got {t}")));
        }
        self.k_now += 1;
        self.samples.push_back(x1);
        if self.samples.len() > self.capacity {
            self.samples.pop_front();
        }
        Ok(())
    }

    /// Sample at step index `k` (must be retained).
    pub fn at_step(&self, k: i64) -> Result<f64> {
        let back = self.k_now - k;
        if back < 0 || back as usize >= self.samples.len() {
            return Err(Error::OutOfHistory { t: k as f64 * self.dt, start: self.t_now() - self.span() });
        }
        Ok(self.samples[self.samples.len() - 1 - back as usize])
    }

    /// x_1 at time `tau`, linear between stored samples.
    pub fn x1_at(&self, tau: f64) -> Result<f64> {
        let back = (self.t_now() - tau) / self.dt;
        let nearest = back.round();
        if (back - nearest).abs() < 1e-7 {
            return self.at_step(self.k_now - nearest as i64);
        }
        let lo = back.floor();
        let frac = back - lo;
        let a = self.at_step(self.k_now - lo as i64)?;
        let b = self.at_step(self.k_now - lo as i64 - 1)?;
        Ok(a + frac * (b - a))
    }

    pub fn sample_u(&self, d: f64, x_grid: &[f64]) -> Result<Vec<f64>> {
        let t = self.t_now();
        x_grid
            .iter()
            .map(|&x| {
                if x == 1.0 {
                    Ok(self.b * self.latest())
                } else {
                    self.x1_at(t - d + d * x).map(|v| self.b * v)
                }
            })
            .collect()
    }

    /// u(0,t): what the distal subsystem receives now.
    pub fn delayed_input(&self, d: f64) -> Result<f64> {
        Ok(self.b * self.x1_at(self.t_now() - d)?)
    }
}
