//! Multivariate truncated Taylor polynomials, used to report partial
//! derivatives of the plant nonlinearities.

use std::collections::HashMap;
use std::sync::Arc;

use crate::algebra::{Algebra, Func};

#[derive(Debug)]
struct Basis {
    order: usize,
    monomials: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl Basis {
    fn new(vars: usize, order: usize) -> Basis {
        let mut monomials = vec![vec![0u32; vars]];
        for _deg in 1..=order {
            let prev: Vec<Vec<u32>> = monomials.clone();
            for m in prev {
                for v in 0..vars {
                    let mut e = m.clone();
                    e[v] += 1;
                    let total: u32 = e.iter().sum();
                    if total as usize <= order && !monomials.contains(&e) {
                        monomials.push(e);
                    }
                }
            }
        }
        monomials.sort_by_key(|e| (e.iter().sum::<u32>(), std::cmp::Reverse(e.clone())));
        let index = monomials.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        Basis { order, monomials, index }
    }
}

/// Polynomial in the displacement from an expansion point, truncated at a
/// total degree. Coefficient of x^a is the partial derivative over a!.
#[derive(Debug, Clone)]
pub struct MPoly {
    basis: Arc<Basis>,
    coef: Vec<f64>,
}

impl MPoly {
    /// Independent variables expanded about `point`.
    pub fn variables(point: &[f64], order: usize) -> Vec<MPoly> {
        let basis = Arc::new(Basis::new(point.len(), order));
        (0..point.len())
            .map(|v| {
                let mut coef = vec![0.0; basis.monomials.len()];
                coef[0] = point[v];
                if order > 0 {
                    let mut e = vec![0u32; point.len()];
                    e[v] = 1;
                    coef[basis.index[&e]] = 1.0;
                }
                MPoly { basis: basis.clone(), coef }
            })
            .collect()
    }

    /// Partial derivative for the multi-index `alpha`, or None beyond the order.
    pub fn partial(&self, alpha: &[u32]) -> Option<f64> {
        let i = *self.basis.index.get(alpha)?;
        let fact: f64 = alpha.iter().map(|&a| (1..=a).map(f64::from).product::<f64>()).product();
        Some(self.coef[i] * fact)
    }

    /// All (multi-index, partial derivative) pairs in graded order.
    pub fn partials(&self) -> Vec<(Vec<u32>, f64)> {
        self.basis
            .monomials
            .iter()
            .map(|a| (a.clone(), self.partial(a).unwrap_or(0.0)))
            .collect()
    }

    pub fn order(&self) -> usize {
        self.basis.order
    }
}

impl Algebra for MPoly {
    fn lift(&self, c: f64) -> Self {
        let mut coef = vec![0.0; self.coef.len()];
        coef[0] = c;
        MPoly { basis: self.basis.clone(), coef }
    }
    fn value(&self) -> f64 {
        self.coef[0]
    }
    fn add(&self, o: &Self) -> Self {
        let coef = self.coef.iter().zip(&o.coef).map(|(a, b)| a + b).collect();
        MPoly { basis: self.basis.clone(), coef }
    }
    fn sub(&self, o: &Self) -> Self {
        let coef = self.coef.iter().zip(&o.coef).map(|(a, b)| a - b).collect();
        MPoly { basis: self.basis.clone(), coef }
    }
    fn mul(&self, o: &Self) -> Self {
        let b = &self.basis;
        let mut coef = vec![0.0; self.coef.len()];
        for (i, ea) in b.monomials.iter().enumerate() {
            if self.coef[i] == 0.0 {
                continue;
            }
            for (j, eb) in b.monomials.iter().enumerate() {
                if o.coef[j] == 0.0 {
                    continue;
                }
                let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                if let Some(&k) = b.index.get(&e) {
                    coef[k] += self.coef[i] * o.coef[j];
                }
            }
        }
        MPoly { basis: self.basis.clone(), coef }
    }
    fn scale(&self, c: f64) -> Self {
        MPoly { basis: self.basis.clone(), coef: self.coef.iter().map(|a| a * c).collect() }
    }
    fn compose(&self, f: Func) -> Self {
        let k = self.basis.order;
        let a = f.taylor_coeffs(self.coef[0], k + 1);
        let mut eps = self.clone();
        eps.coef[0] = 0.0;
        let mut acc = self.lift(a[k]);
        for j in (0..k).rev() {
            acc = acc.mul(&eps);
            acc.coef[0] += a[j];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_partials() {
        let v = MPoly::variables(&[2.0, 3.0], 2);
        let p = v[0].mul(&v[1]).mul(&v[0]); // x^2 y
        assert_eq!(p.value(), 12.0);
        assert_eq!(p.partial(&[1, 0]), Some(12.0));
        assert_eq!(p.partial(&[0, 1]), Some(4.0));
        assert_eq!(p.partial(&[2, 0]), Some(6.0));
        assert_eq!(p.partial(&[1, 1]), Some(4.0));
        assert_eq!(p.partial(&[3, 0]), None);
    }

    #[test]
    fn composed_exp() {
        let v = MPoly::variables(&[0.5], 3);
        let e = v[0].compose(Func::Exp);
        for k in 0..=3 {
            assert!((e.partial(&[k]).unwrap() - 0.5f64.exp()).abs() < 1e-14);
        }
    }
}
