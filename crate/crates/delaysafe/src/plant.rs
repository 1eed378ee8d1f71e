use crate::error::{Error, Result};
use crate::jet::{Jet, JMAX};
use crate::model::PlantDefinition;
use crate::mpoly::MPoly;

/// Distal right-hand side. `u0` is the delayed input u(0,t) and already
/// carries the factor b.
pub fn eval_y_rhs(y: &[f64], u0: f64, plant: &PlantDefinition) -> Vec<f64> {
    let n = plant.n;
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { y[i + 1] } else { u0 };
            next + plant.psi(i, y)
        })
        .collect()
}

pub fn eval_x_rhs(x: &[f64], u: f64, plant: &PlantDefinition) -> Vec<f64> {
    let m = plant.m;
    (0..m)
        .map(|j| {
            let next = if j + 1 < m { x[j + 1] } else { u };
            next + plant.phi(j, x)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Psi,
    Phi,
}

/// Value and all partial derivatives up to `order` of ψ_i or φ_j (one-based
/// index) at `point`, which holds the chain states the map reads.
pub fn nonlinearity_jet(
    plant: &PlantDefinition,
    which: Nonlinearity,
    index: usize,
    point: &[f64],
    order: usize,
) -> Result<MPoly> {
    let (count, limit, label) = match which {
        Nonlinearity::Psi => (plant.n, plant.psi_budget(index), "psi"),
        Nonlinearity::Phi => (plant.m, plant.phi_budget(index), "phi"),
    };
    if index == 0 || index > count {
        return Err(Error::Contract(format!("{label}{index} does not exist")));
    }
    if order > limit {
        return Err(Error::SmoothnessBudget { what: format!("{label}{index}"), requested: order, limit });
    }
    if point.len() < index {
        return Err(Error::Contract(format!("{label}{index} needs {index} coordinates")));
    }
    let vars = MPoly::variables(&point[..index], order);
    Ok(match which {
        Nonlinearity::Psi => plant.psi(index - 1, &vars),
        Nonlinearity::Phi => plant.phi(index - 1, &vars),
    })
}

/// Jets of the distal chain started at `y0` and driven by `u0` (the delayed
/// input, possibly only partly known).
pub fn y_flow(plant: &PlantDefinition, y0: &[f64], u0: Jet) -> Vec<Jet> {
    let h = u0.step();
    let n = plant.n;
    let mut ys: Vec<Jet> = y0.iter().map(|&v| Jet::constant(v, h).truncate(1)).collect();
    for _ in 0..JMAX {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let drive = if i + 1 < n { ys[i + 1] } else { u0 };
            next.push(Jet::integrate(y0[i], &(drive + plant.psi(i, &ys))));
        }
        ys = next;
    }
    ys
}

/// Joint jets of a predictor state `p0` (distal chain fed by b x_1) and the
/// actuator chain from `x0` under control jet `u`.
pub fn px_flow(plant: &PlantDefinition, p0: &[f64], x0: &[f64], u: Jet) -> (Vec<Jet>, Vec<Jet>) {
    let h = u.step();
    let (n, m, b) = (plant.n, plant.m, plant.b);
    let mut ps: Vec<Jet> = p0.iter().map(|&v| Jet::constant(v, h).truncate(1)).collect();
    let mut xs: Vec<Jet> = x0.iter().map(|&v| Jet::constant(v, h).truncate(1)).collect();
    for _ in 0..JMAX {
        let mut nx = Vec::with_capacity(m);
        for j in 0..m {
            let drive = if j + 1 < m { xs[j + 1] } else { u };
            nx.push(Jet::integrate(x0[j], &(drive + plant.phi(j, &xs))));
        }
        let mut np = Vec::with_capacity(n);
        for i in 0..n {
            let drive = if i + 1 < n { ps[i + 1] } else { b * xs[0] };
            np.push(Jet::integrate(p0[i], &(drive + plant.psi(i, &ps))));
        }
        ps = np;
        xs = nx;
    }
    (ps, xs)
}

/// Jets of the actuator chain alone.
pub fn x_flow(plant: &PlantDefinition, x0: &[f64], u: Jet) -> Vec<Jet> {
    let h = u.step();
    let m = plant.m;
    let mut xs: Vec<Jet> = x0.iter().map(|&v| Jet::constant(v, h).truncate(1)).collect();
    for _ in 0..JMAX {
        let mut nx = Vec::with_capacity(m);
        for j in 0..m {
            let drive = if j + 1 < m { xs[j + 1] } else { u };
            nx.push(Jet::integrate(x0[j], &(drive + plant.phi(j, &xs))));
        }
        xs = nx;
    }
    xs
}

pub fn euler_step(state: &mut [f64], rhs: &[f64], dt: f64) {
    for (s, r) in state.iter_mut().zip(rhs) {
        *s += dt * r;
    }
}
