//! Number systems that closed-form nonlinearities can be evaluated in.
//!
//! Everything an expression needs is ring arithmetic plus composition with
//! a handful of analytic functions. Composition is expressed through the
//! Taylor coefficients of the outer function about the current value, which
//! lets truncated-series types implement it without knowing which function
//! they are composing.

/// Smooth scalar functions available to expressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Tanh,
    /// x^p for real p. Covers sqrt and reciprocal.
    Powf(f64),
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Powf(0.5),
            _ => return None,
        })
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Ln => x.ln(),
            Func::Tanh => x.tanh(),
            Func::Powf(p) if p == 0.5 => x.sqrt(),
            Func::Powf(p) if p == -1.0 => 1.0 / x,
            Func::Powf(p) => x.powf(p),
        }
    }

    /// Coefficients a_j = f^(j)(x0) / j! for j = 0..count.
    pub fn taylor_coeffs(self, x0: f64, count: usize) -> Vec<f64> {
        let mut a = Vec::with_capacity(count);
        if count == 0 {
            return a;
        }
        match self {
            Func::Sin | Func::Cos => {
                let (s, c) = x0.sin_cos();
                let cycle = if self == Func::Sin { [s, c, -s, -c] } else { [c, -s, -c, s] };
                let mut fact = 1.0;
                for j in 0..count {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    a.push(cycle[j % 4] / fact);
                }
            }
            Func::Exp => {
                let e = x0.exp();
                let mut term = e;
                for j in 0..count {
                    if j > 0 {
                        term /= j as f64;
                    }
                    a.push(term);
                }
            }
            Func::Ln => {
                a.push(x0.ln());
                let mut pw = 1.0;
                for j in 1..count {
                    pw *= x0;
                    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                    a.push(sign / (j as f64 * pw));
                }
            }
            Func::Powf(p) => {
                let mut term = self.eval(x0);
                a.push(term);
                for j in 1..count {
                    term *= (p - (j as f64 - 1.0)) / (j as f64 * x0);
                    a.push(term);
                }
            }
            Func::Tanh => {
                // y' = 1 - y^2 gives (j+1) a_{j+1} = [j == 0] - sum_i a_i a_{j-i}
                a.push(x0.tanh());
                for j in 0..count - 1 {
                    let mut conv = 0.0;
                    for i in 0..=j {
                        conv += a[i] * a[j - i];
                    }
                    let lead = if j == 0 { 1.0 } else { 0.0 };
                    a.push((lead - conv) / (j as f64 + 1.0));
                }
            }
        }
        a
    }
}

/// Arithmetic needed to evaluate an expression tree.
pub trait Algebra: Clone {
    fn lift(&self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn compose(&self, f: Func) -> Self;

    fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    fn powi(&self, k: i32) -> Self {
        if k < 0 {
            return self.powi(-k).compose(Func::Powf(-1.0));
        }
        let mut base = self.clone();
        let mut acc = self.lift(1.0);
        let mut e = k as u32;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }
}

impl Algebra for f64 {
    fn lift(&self, c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn compose(&self, f: Func) -> Self {
        f.eval(*self)
    }
    fn powi(&self, k: i32) -> Self {
        f64::powi(*self, k)
    }
}
