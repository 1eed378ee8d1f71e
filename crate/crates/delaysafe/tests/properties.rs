mod common;

use std::f64::consts::PI;

use delaysafe::assumptions::{candidate_slots, check_assumptions};
use delaysafe::backstepping::{evaluate_law, forward_z, AffineLaw, GainSet};
use delaysafe::delay_line::DelayLine;
use delaysafe::expr::Expr;
use delaysafe::filter::{apply_filter, Regime};
use delaysafe::identifier::Identifier;
use delaysafe::model::IdentifierConfig;
use delaysafe::oracles::{delta_field, inverse_x, inverse_y};
use delaysafe::plant::{eval_x_rhs, eval_y_rhs, nonlinearity_jet, Nonlinearity};
use delaysafe::scenario::{parse_scenario, to_toml};
use delaysafe::sim::{Controller, ExprTarget};
use delaysafe::{DelayConfig, Jet, PlantDefinition};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Draft {
    b: f64,
    psi: Vec<(f64, f64)>,
    phi: Vec<(f64, f64)>,
}

impl Draft {
    fn plant(&self) -> PlantDefinition {
        let psi: Vec<String> =
            self.psi.iter().enumerate().map(|(i, (a, q))| format!("({a})*y{} + ({q})*y1*y{}", i + 1, i + 1)).collect();
        let phi: Vec<String> =
            self.phi.iter().enumerate().map(|(j, (a, q))| format!("({a})*x{} + ({q})*x{}^2", j + 1, j + 1)).collect();
        PlantDefinition::new(self.b, &psi, &phi).unwrap()
    }

    fn gains(&self) -> GainSet {
        let m = self.phi.len();
        GainSet { k: vec![1.5; self.psi.len()], c: vec![2.0; m], c_bar: 2.0 }
    }
}

fn draft() -> impl Strategy<Value = Draft> {
    let pair = (-1.0..0.5f64, -0.2..0.2f64);
    (1usize..=3, 1usize..=2, 0.5..2.0f64, any::<bool>()).prop_flat_map(move |(n, m, mag, neg)| {
        (prop::collection::vec(pair.clone(), n), prop::collection::vec(pair.clone(), m)).prop_map(move |(psi, phi)| {
            Draft { b: if neg { -mag } else { mag }, psi, phi }
        })
    })
}

fn state(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

/// A smooth target c0 + a sin(w t) + q t^2 as jet and expression.
fn target() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-1.0..1.0f64, 0.0..1.0f64, 0.3..2.0f64, -0.2..0.2f64)
}

fn target_jet((c0, a, w, q): (f64, f64, f64, f64), t: f64, step: f64) -> Jet {
    let e = Expr::parse(&format!("{c0} + {a}*sin({w}*t) + {q}*t^2"), &["t"]).unwrap();
    e.eval(&[Jet::time(t, step)])
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn taylor_jets_match_central_differences(a in -2.0..2.0f64, w in 0.2..2.0f64, t0 in -2.0..2.0f64) {
        let e = Expr::parse(&format!("{a}*sin({w}*t) + exp(0.3*t) + t^3"), &["t"]).unwrap();
        let jet = e.eval(&[Jet::time(t0, 0.0)]);
        let h = 1e-4;
        let f = |t: f64| e.eval_f64(&[t]);
        let d1 = (f(t0 + h) - f(t0 - h)) / (2.0 * h);
        let d2 = (f(t0 + h) - 2.0 * f(t0) + f(t0 - h)) / (h * h);
        let scale = 1.0 + jet.get(0).unwrap().abs();
        prop_assert!((jet.get(1).unwrap() - d1).abs() <= 1e-6 * scale);
        prop_assert!((jet.get(2).unwrap() - d2).abs() <= 1e-5 * scale);
    }

    #[test]
    fn nonlinearity_partials_match_central_differences(d in draft(), y in state(3)) {
        let plant = d.plant();
        let h = 1e-4;
        for i in 1..=plant.n {
            let poly = nonlinearity_jet(&plant, Nonlinearity::Psi, i, &y, 1).unwrap();
            for v in 0..i {
                let mut alpha = vec![0u32; i];
                alpha[v] = 1;
                let (mut up, mut dn) = (y[..i].to_vec(), y[..i].to_vec());
                up[v] += h;
                dn[v] -= h;
                let f = |p: &[f64]| plant.psi[i - 1].eval_f64(p);
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                let exact = poly.partial(&alpha).unwrap();
                prop_assert!((exact - fd).abs() <= 1e-6 * (1.0 + exact.abs()));
            }
        }
    }

    #[test]
    fn vector_fields_vanish_at_origin(d in draft()) {
        let plant = d.plant();
        prop_assert!(eval_y_rhs(&vec![0.0; plant.n], 0.0, &plant).iter().all(|v| *v == 0.0));
        prop_assert!(eval_x_rhs(&vec![0.0; plant.m], 0.0, &plant).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn distal_round_trip(d in draft(), y in state(3), s in target(), t in 0.0..5.0f64, discrete in any::<bool>()) {
        let plant = d.plant();
        let k = d.gains().k;
        let sj = target_jet(s, t, if discrete { 1e-3 } else { 0.0 });
        let y = &y[..plant.n];
        let (z, _) = forward_z(&plant, y, &sj, &k).unwrap();
        let back = inverse_y(&plant, &z, &sj, &k).unwrap();
        prop_assert!(rel(&back, y) <= 1e-8, "{back:?} vs {y:?}");
    }

    #[test]
    fn actuator_round_trip(d in draft(), p in state(3), x in state(2), s in target(), t in 0.0..5.0f64, discrete in any::<bool>()) {
        let plant = d.plant();
        let gains = d.gains();
        let sj = target_jet(s, t, if discrete { 1e-3 } else { 0.0 });
        let (p, x) = (&p[..plant.n], &x[..plant.m]);
        let law = evaluate_law(&plant, &gains, p, x, &sj).unwrap();
        let back = inverse_x(&plant, &gains, &law.r, p, &sj).unwrap();
        prop_assert!(rel(&back, x) <= 1e-8, "{back:?} vs {x:?}");
    }

    #[test]
    fn affine_law_agrees_with_direct_evaluation(
        d in draft(), p in state(3), x in state(2), p2 in state(3), x2 in state(2), s in target(), t in 0.0..5.0f64,
    ) {
        let plant = d.plant();
        let gains = d.gains();
        let step = 1e-3;
        let (n, m) = (plant.n, plant.m);
        // weights taken at one state serve another
        let w = AffineLaw::weights(&plant, &gains, &p2[..n], &x2[..m], step).unwrap();
        let sj = target_jet(s, t, step);
        let affine = AffineLaw::new(&plant, &gains, &p[..n], &x[..m], step, &w).unwrap().eval(&sj).unwrap();
        let direct = evaluate_law(&plant, &gains, &p[..n], &x[..m], &sj).unwrap().u_star(&plant, &gains);
        prop_assert!((affine - direct).abs() <= 1e-9 * (1.0 + direct.abs()));
    }

    #[test]
    fn filter_is_idempotent_and_respects_the_bound(
        u_d in -10.0..10.0f64, sweep in prop::collection::vec(-10.0..10.0f64, 1..20), mag in 0.1..3.0f64, neg in any::<bool>(),
    ) {
        let b = if neg { -mag } else { mag };
        let once = apply_filter(u_d, &sweep, b, Regime::PreTf).unwrap();
        let bound = once.bound.unwrap();
        prop_assert!(b * once.u_a >= bound - 1e-12 * (1.0 + bound.abs()));
        prop_assert_eq!(once.active, b * u_d < bound);
        if !once.active {
            prop_assert_eq!(once.u_a, u_d);
        }
        let twice = apply_filter(once.u_a, &sweep, b, Regime::PreTf).unwrap();
        prop_assert!((twice.u_a - once.u_a).abs() <= 1e-12 * (1.0 + once.u_a.abs()));
        prop_assert!(!twice.active);
        let post = apply_filter(u_d, &sweep, b, Regime::PostTf).unwrap();
        prop_assert_eq!(post.u_a, u_d);
    }

    #[test]
    fn transport_field_commutes_with_time(amp in 0.1..2.0f64, w in 0.3..3.0f64, b in 0.5..2.0f64, steps_d in 20usize..200) {
        let dt = 0.01;
        let d = steps_d as f64 * dt;
        let f = |t: f64| amp * (w * t).sin() + 0.1 * t;
        let mut line = DelayLine::new(dt, b, d, f, f(0.0));
        let grid: Vec<f64> = (0..=steps_d).map(|j| j as f64 / steps_d as f64).collect();
        let before = line.sample_u(d, &grid).unwrap();
        for (j, x) in grid.iter().enumerate() {
            prop_assert!((before[j] - b * f(-d + d * x)).abs() <= 1e-12);
        }
        line.push_sample(dt, f(dt)).unwrap();
        let after = line.sample_u(d, &grid).unwrap();
        // one step later the field has moved one node towards x = 0
        for j in 0..steps_d {
            prop_assert!((after[j] - before[j + 1]).abs() <= 1e-12);
        }
        prop_assert!((line.delayed_input(d).unwrap() - after[0]).abs() <= 1e-12);
    }

    #[test]
    fn identifier_sees_transport_relation(d in 0.5..3.0f64, a in -1.0..1.0f64, w in 0.5..2.0f64, q in 0.1..1.0f64) {
        // field u(x,t) = b x_1(t - D + D x) with x_1 = 0 before t = 0
        let x1 = |t: f64| if t <= 0.0 { 0.0 } else { q * t * t + a * (w * t).sin() * t };
        let (dt, dx, b) = (1e-3, 0.01, 1.3);
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * dx).collect();
        let bounds = DelayConfig { d_lo: 0.2, d_hi: 4.0, d_d: 0.01 };
        let mut id = Identifier::new(IdentifierConfig::default(), bounds, &grid);
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..2500 {
            let t = k as f64 * dt;
            let u: Vec<f64> = grid.iter().map(|x| b * x1(t - d + d * x)).collect();
            id.accumulate(&u, dt);
            for (f, g) in id.f_acc().iter().zip(id.g_now()) {
                worst = worst.max((f - d * g).abs());
                scale = scale.max(d * g.abs());
            }
        }
        prop_assert!(worst <= 10.0 * (dt + dx * dx) * scale.max(1.0), "worst {worst}, scale {scale}");
    }

    #[test]
    fn identifier_estimate_is_bounded_and_piecewise_constant(
        vals in prop::collection::vec(-5.0..5.0f64, 8), plateau in prop::sample::select(vec![0.0, 0.02]),
    ) {
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        let bounds = DelayConfig { d_lo: 0.2, d_hi: 4.0, d_d: 0.01 };
        let cfg = IdentifierConfig { plateau_frac: plateau, ..IdentifierConfig::default() };
        let mut id = Identifier::new(cfg, bounds, &grid);
        let dt = 0.01;
        let mut last = id.d_hat();
        for k in 1..=1200 {
            let t = k as f64 * dt;
            let u: Vec<f64> =
                grid.iter().enumerate().map(|(j, x)| vals[j % 8] * (PI * x * (1 + k % 3) as f64).sin() * t.cos()).collect();
            id.accumulate(&u, dt);
            if id.is_due(t) {
                let expect = id.window_solution(t);
                id.trigger_update(t).unwrap();
                if let (Some(l), true) = (expect, plateau == 0.0) {
                    prop_assert_eq!(id.d_hat(), l);
                }
                last = id.d_hat();
                prop_assert!((0.2..=4.0).contains(&last));
            } else {
                prop_assert_eq!(id.d_hat(), last);
            }
        }
        prop_assert_eq!(id.updates().len(), 4);
    }

    #[test]
    fn scalar_delta_field_matches_closed_form(z in -3.0..3.0f64, k in 0.2..3.0f64, d in 0.2..4.0f64, a in -2.0..2.0f64, om in 0.5..4.0f64) {
        // w(y) = a cos(om y) integrates against e^{-kD(x-y)} in closed form
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let w: Vec<f64> = grid.iter().map(|y| a * (om * y).cos()).collect();
        let field = delta_field(&[z], &w, &grid, &[k], d);
        let l = k * d;
        for (i, &x) in grid.iter().enumerate().step_by(40) {
            let conv = a * (l * (om * x).cos() + om * (om * x).sin() - l * (-l * x).exp()) / (l * l + om * om);
            let exact = (-l * x).exp() * z + d * conv;
            prop_assert!((field[i][0] - exact).abs() <= 1e-4 * (1.0 + exact.abs()), "x {x}: {} vs {exact}", field[i][0]);
        }
    }

    #[test]
    fn delta_field_without_input_is_the_free_response(z in state(3), k in prop::collection::vec(0.2..3.0f64, 3), d in 0.2..4.0f64) {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let field = delta_field(&z, &vec![0.0; grid.len()], &grid, &k, d);
        prop_assert_eq!(&field[0], &z);
        // the last component decays on its own
        for (i, &x) in grid.iter().enumerate() {
            let free = z[2] * (-k[2] * d * x).exp();
            prop_assert!((field[i][2] - free).abs() <= 1e-10 * (1.0 + free.abs()));
        }
    }
}

#[test]
fn scenario_text_round_trips() {
    let mut cfgs = common::random_plants(7, 4, 5.0);
    cfgs.push(common::stabilize());
    for cfg in cfgs {
        let text = to_toml(&cfg);
        let again = parse_scenario(&text).unwrap();
        assert_eq!(to_toml(&again), text);
        assert_eq!(again.y0, cfg.y0);
        assert_eq!(again.plant.b, cfg.plant.b);
    }
}

#[test]
fn raising_the_target_only_removes_safety() {
    // z_1(0) = P_1 - s shrinks as s grows, so a check can only flip from pass to fail
    for cfg in common::random_plants(11, 6, 5.0) {
        let src = cfg.trajectory.source().to_string();
        let k = vec![1.0; cfg.plant.n];
        let mut failed = false;
        for lift in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let mut shifted = cfg.clone();
            shifted.trajectory = Expr::parse(&format!("({src}) + {lift}"), &["t"]).unwrap();
            let target = ExprTarget(&shifted.trajectory);
            let slots = candidate_slots(&shifted, Controller::Adaptive, &target);
            let report = check_assumptions(&shifted, &target, &slots, &k);
            let above = report.candidates.iter().all(|c| c.above_target);
            assert!(!(failed && above), "{}: passes again at lift {lift}", cfg.name);
            failed |= !above;
        }
        assert!(failed, "a lift of 16 should violate the initial ordering");
    }
}
