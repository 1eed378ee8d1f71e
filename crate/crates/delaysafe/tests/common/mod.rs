//! Shared fixtures: seeded random plants that satisfy the initial-data
//! assumptions, and the stabilization scenario.

#![allow(dead_code)]

use std::path::PathBuf;

use delaysafe::assumptions::prepare;
use delaysafe::scenario::{load_scenario, parse_scenario};
use delaysafe::sim::{Controller, ExprTarget};
use delaysafe::ScenarioConfig;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

pub fn stabilize() -> ScenarioConfig {
    load_scenario(&scenario_path("stabilize.toml")).expect("stabilization scenario")
}

fn coef(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> String {
    format!("({:.4})", rng.gen_range(lo..hi))
}

/// Draft of a small polynomial plant: linear diagonal terms plus weak
/// quadratic couplings, all vanishing at the origin. Diagonal terms are at
/// most mildly destabilising so that predictions over the longest candidate
/// delay stay finite for moderate states.
fn draft(rng: &mut ChaCha8Rng, t_final: f64) -> (String, usize, f64, f64) {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let b = rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let psi: Vec<String> = (1..=n)
        .map(|i| {
            let j = rng.gen_range(1..=i);
            format!("\"{}*y{i} + {}*y{j}*y{i}\"", coef(rng, -1.0, 0.2), coef(rng, -0.05, 0.05))
        })
        .collect();
    let phi: Vec<String> = (1..=m)
        .map(|j| format!("\"{}*x{j} + {}*x{j}^2\"", coef(rng, -2.0, -0.5), coef(rng, -0.05, 0.05)))
        .collect();
    let c0 = rng.gen_range(-1.0..1.0);
    let amp = rng.gen_range(0.0..0.5);
    let w = rng.gen_range(0.5..1.5);
    let mut y0 = vec![c0 + amp + rng.gen_range(0.5..1.5)];
    y0.extend((1..n).map(|_| rng.gen_range(-0.5..0.5)));
    // true delays sit on the candidate grid
    let d_true = 0.2 + 0.05 * rng.gen_range(2..=26) as f64;
    let text = format!(
        "name = \"random\"\n\
         [plant]\nb = {b}\npsi = [{}]\nphi = [{}]\n\
         [initial]\ny0 = {y0:?}\nx0 = X0\nx1_history = \"0\"\n\
         [trajectory]\ns = \"{c0} + {amp}*sin({w}*t)\"\n\
         [delay]\nd_lo = 0.2\nd_hi = 2.0\nd_d = 0.05\n\
         [oracle]\nd_true = {d_true}\n\
         [numerics]\nt_final = {t_final}\n",
        psi.join(", "),
        phi.join(", "),
    );
    (text, m, b, d_true)
}

/// A random plant whose initial data pass the assumption checks for both
/// the nominal and the adaptive controller. X(0) is searched along the
/// direction that makes b x_1(0) large.
pub fn random_plant(rng: &mut ChaCha8Rng, t_final: f64) -> ScenarioConfig {
    loop {
        let (text, m, b, _) = draft(rng, t_final);
        let tail: Vec<f64> = (1..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
        for mag in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            let mut x0 = vec![mag * b.signum()];
            x0.extend(&tail);
            let Ok(cfg) = parse_scenario(&text.replace("X0", &format!("{x0:?}"))) else { break };
            let target = ExprTarget(&cfg.trajectory);
            let ok = [Controller::Nominal, Controller::Adaptive]
                .iter()
                .all(|&c| prepare(&cfg, c, &target).is_ok_and(|(_, rep)| rep.passed()));
            if ok {
                return cfg;
            }
        }
    }
}

pub fn random_plants(seed: u64, count: usize, t_final: f64) -> Vec<ScenarioConfig> {
    let mut r = rng(seed);
    (0..count).map(|_| random_plant(&mut r, t_final)).collect()
}
