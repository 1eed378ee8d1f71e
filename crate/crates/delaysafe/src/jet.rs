//! Truncated time jets.
//!
//! A [`Jet`] carries a scalar signal and its first few time "derivatives" at
//! one instant. Two calculi share the representation:
//!
//! * `step == 0`: entry k is the exact k-th derivative (Taylor mode).
//! * `step == h > 0`: entry k is the k-th forward difference divided by h^k
//!   on the lattice t, t+h, t+2h, ... (Newton form). Along an explicit-Euler
//!   flow this calculus is exact, so control laws built from it make the
//!   discrete closed loop land exactly on the discrete target system.
//!
//! Both calculi differentiate by shifting and integrate by prepending, so the
//! backstepping recursions are written once. They differ only in the product
//! rule. Working with differences directly, rather than with raw lattice
//! samples, avoids the cancellation that h^-k amplification would otherwise
//! cause for large-magnitude signals.
//!
//! `len` counts how many leading entries are known. Unknown inputs (a control
//! that has not been chosen yet) are jets of length zero, and lengths propagate
//! through arithmetic so that asking for an entry that depends on an unknown
//! is an error rather than a silently wrong number.

use crate::algebra::{Algebra, Func};
use crate::error::{Error, Result};

pub const JMAX: usize = 8;

const BINOM: [[f64; JMAX]; JMAX] = {
    let mut t = [[0.0; JMAX]; JMAX];
    let mut n = 0;
    while n < JMAX {
        t[n][0] = 1.0;
        let mut k = 1;
        while k <= n {
            t[n][k] = t[n - 1][k - 1] + if k < n { t[n - 1][k] } else { 0.0 };
            k += 1;
        }
        n += 1;
    }
    t
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    c: [f64; JMAX],
    len: usize,
    step: f64,
}

impl Jet {
    /// Constant signal; every entry is known.
    pub fn constant(v: f64, step: f64) -> Jet {
        let mut c = [0.0; JMAX];
        c[0] = v;
        Jet { c, len: JMAX, step }
    }

    /// Nothing known.
    pub fn unknown(step: f64) -> Jet {
        Jet { c: [0.0; JMAX], len: 0, step }
    }

    /// The clock itself: t0, 1, 0, 0, ... in either calculus.
    pub fn time(t0: f64, step: f64) -> Jet {
        let mut j = Jet::constant(t0, step);
        j.c[1] = 1.0;
        j
    }

    pub fn from_entries(entries: &[f64], step: f64) -> Jet {
        assert!(entries.len() <= JMAX, "jet longer than JMAX");
        let mut c = [0.0; JMAX];
        c[..entries.len()].copy_from_slice(entries);
        Jet { c, len: entries.len(), step }
    }

    /// Lattice samples F(t + l h), l = 0..n, converted to Newton form.
    pub fn from_samples(samples: &[f64], step: f64) -> Jet {
        assert!(step > 0.0, "samples need a lattice step");
        let n = samples.len().min(JMAX);
        let mut c = [0.0; JMAX];
        let mut hk = 1.0;
        for k in 0..n {
            let mut acc = 0.0;
            for l in 0..=k {
                let sign = if (k - l) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * BINOM[k][l] * samples[l];
            }
            c[k] = acc / hk;
            hk *= step;
        }
        Jet { c, len: n, step }
    }

    /// Lattice samples F(t + l h) for l < len (discrete calculus only).
    pub fn samples(&self) -> Vec<f64> {
        (0..self.len)
            .map(|l| {
                let mut acc = 0.0;
                let mut hp = 1.0;
                for i in 0..=l {
                    acc += BINOM[l][i] * hp * self.c[i];
                    hp *= self.step;
                }
                acc
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn is_discrete(&self) -> bool {
        self.step > 0.0
    }

    pub fn entries(&self) -> &[f64] {
        &self.c[..self.len]
    }

    pub fn get(&self, k: usize) -> Result<f64> {
        if k < self.len {
            Ok(self.c[k])
        } else {
            Err(Error::JetOrder { requested: k, available: self.len.saturating_sub(1) })
        }
    }

    pub fn truncate(mut self, len: usize) -> Jet {
        if len < self.len {
            for v in &mut self.c[len..] {
                *v = 0.0;
            }
            self.len = len;
        }
        self
    }

    /// Time derivative (or forward difference quotient).
    pub fn derive(&self) -> Jet {
        let mut c = [0.0; JMAX];
        c[..JMAX - 1].copy_from_slice(&self.c[1..]);
        Jet { c, len: self.len.saturating_sub(1), step: self.step }
    }

    pub fn derive_n(&self, n: usize) -> Jet {
        (0..n).fold(*self, |j, _| j.derive())
    }

    /// The signal starting at `x0` whose derivative is `rate`.
    pub fn integrate(x0: f64, rate: &Jet) -> Jet {
        let mut c = [0.0; JMAX];
        c[0] = x0;
        c[1..].copy_from_slice(&rate.c[..JMAX - 1]);
        Jet { c, len: (rate.len + 1).min(JMAX), step: rate.step }
    }

    fn check_step(&self, o: &Jet) {
        debug_assert!(self.step == o.step, "mixing jets of different calculi");
    }

    fn zip(&self, o: &Jet, f: impl Fn(f64, f64) -> f64) -> Jet {
        self.check_step(o);
        let len = self.len.min(o.len);
        let mut c = [0.0; JMAX];
        for k in 0..len {
            c[k] = f(self.c[k], o.c[k]);
        }
        Jet { c, len, step: self.step }
    }

    fn product(&self, o: &Jet) -> Jet {
        self.check_step(o);
        let len = self.len.min(o.len);
        let h = self.step;
        let mut c = [0.0; JMAX];
        for k in 0..len {
            let mut acc = 0.0;
            for j in 0..=k {
                let fj = self.c[j];
                if fj == 0.0 {
                    continue;
                }
                // discrete Leibniz: g evaluated j steps ahead, expanded in differences
                let mut inner = o.c[k - j];
                if h > 0.0 {
                    let mut hp = 1.0;
                    for i in 1..=j {
                        hp *= h;
                        inner += BINOM[j][i] * hp * o.c[k - j + i];
                    }
                }
                acc += BINOM[k][j] * fj * inner;
            }
            c[k] = acc;
        }
        Jet { c, len, step: h }
    }

    fn compose_series(&self, f: Func) -> Option<Jet> {
        let x0 = self.c[0];
        let mut eps = *self;
        eps.c[0] = 0.0;
        if self.step == 0.0 {
            // nilpotent: eps^len vanishes, Horner is exact
            let a = f.taylor_coeffs(x0, self.len);
            let mut acc = Jet::constant(a[self.len - 1], 0.0).truncate(self.len);
            for j in (0..self.len - 1).rev() {
                acc = acc.product(&eps);
                acc.c[0] += a[j];
            }
            return Some(acc);
        }
        let spread = eps.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let radius = match f {
            Func::Ln | Func::Powf(_) => 0.5 * x0.abs(),
            Func::Tanh => 0.5,
            _ => 1.0,
        };
        if !(spread <= radius) {
            return None;
        }
        const TERMS: usize = 64;
        let a = f.taylor_coeffs(x0, TERMS);
        let mut out = Jet::constant(a[0], self.step).truncate(self.len);
        let mut pw = eps;
        let mut quiet = 0;
        for aj in a.iter().skip(1) {
            let mut biggest = 0.0f64;
            for k in 0..self.len {
                let t = aj * pw.c[k];
                out.c[k] += t;
                biggest = biggest.max(t.abs());
            }
            let scale = out.c[..self.len].iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if !biggest.is_finite() {
                return None;
            }
            if biggest <= 1e-18 * scale {
                quiet += 1;
                if quiet >= 2 {
                    return Some(out);
                }
            } else {
                quiet = 0;
            }
            pw = pw.product(&eps);
        }
        None
    }

    fn compose_samples(&self, f: Func) -> Jet {
        let g: Vec<f64> = self.samples().into_iter().map(|v| f.eval(v)).collect();
        Jet::from_samples(&g, self.step)
    }
}

impl Algebra for Jet {
    fn lift(&self, c: f64) -> Self {
        Jet::constant(c, self.step)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
    fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
    fn mul(&self, o: &Self) -> Self {
        self.product(o)
    }
    fn scale(&self, s: f64) -> Self {
        let mut j = *self;
        for v in &mut j.c[..j.len] {
            *v *= s;
        }
        j
    }
    fn compose(&self, f: Func) -> Self {
        if self.len == 0 {
            return *self;
        }
        match self.compose_series(f) {
            Some(j) => j,
            None => self.compose_samples(f),
        }
    }
}

impl std::ops::Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Algebra::add(&self, &o)
    }
}

impl std::ops::Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Algebra::sub(&self, &o)
    }
}

impl std::ops::Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        self.product(&o)
    }
}

impl std::ops::Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j.scale(self)
    }
}

impl std::ops::Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(BINOM[4], [1.0, 4.0, 6.0, 4.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn taylor_product_is_leibniz() {
        let t = Jet::time(2.0, 0.0);
        let sq = t * t;
        assert_eq!(&sq.entries()[..4], &[4.0, 4.0, 2.0, 0.0]);
    }

    #[test]
    fn discrete_product_matches_samples() {
        let h = 0.1;
        let f = Jet::from_samples(&[1.0, 2.0, 4.0, 7.0], h);
        let g = Jet::from_samples(&[3.0, -1.0, 0.5, 2.0], h);
        let p = (f * g).samples();
        let expect = [3.0, -2.0, 2.0, 14.0];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn discrete_time_squared() {
        let h = 0.5;
        let t = Jet::time(1.0, h);
        let s = (t * t).samples();
        for (l, v) in s.iter().take(4).enumerate() {
            let tl = 1.0 + l as f64 * h;
            assert!((v - tl * tl).abs() < 1e-12);
        }
    }

    #[test]
    fn compose_cos_on_lattice() {
        let h = 1e-3;
        let t0 = 40.123;
        let c = Jet::time(t0, h).compose(Func::Cos);
        let s = c.samples();
        for (l, v) in s.iter().take(5).enumerate() {
            assert!((v - (t0 + l as f64 * h).cos()).abs() < 1e-14);
        }
        // third difference agrees with sin to O(h)
        assert!((c.get(3).unwrap() - t0.sin()).abs() < 1e-2);
    }

    #[test]
    fn compose_falls_back_outside_radius() {
        let h = 1.0;
        let x = Jet::from_samples(&[1.0, 3.0, 9.0], h);
        let r = x.compose(Func::Powf(-1.0)).samples();
        assert!((r[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((r[2] - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_and_derive_are_inverse() {
        let r = Jet::from_entries(&[1.0, 2.0, 3.0], 0.0);
        let x = Jet::integrate(5.0, &r);
        assert_eq!(x.len(), 4);
        assert_eq!(x.derive().entries(), r.entries());
    }

    #[test]
    fn unknown_propagates() {
        let a = Jet::constant(1.0, 0.0);
        let u = Jet::unknown(0.0);
        assert_eq!((a + u).len(), 0);
        assert!(matches!((a * u).get(0), Err(Error::JetOrder { .. })));
    }
}
