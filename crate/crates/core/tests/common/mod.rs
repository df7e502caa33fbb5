#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqrisk::MarkovModel;

/// Random chain with 2 to 5 states and 1 to 6 steps. Rows mix zeros, tiny
/// and ordinary masses; occasionally a state moves to the outcome with
/// certainty.
pub fn random_small_model(seed: u64) -> MarkovModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let outcome = rng.random_range(0..n);
    let initial = (outcome + rng.random_range(1..n)) % n;
    let steps = rng.random_range(1..=6);
    let mut t = vec![vec![0.0; n]; n];
    for (s, row) in t.iter_mut().enumerate() {
        if s != outcome && rng.random::<f64>() < 0.05 {
            row[outcome] = 1.0;
            continue;
        }
        let mut w: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random::<f64>() * 1e-3,
                _ => rng.random::<f64>(),
            })
            .collect();
        if w.iter().sum::<f64>() == 0.0 {
            w[rng.random_range(0..n)] = 1.0;
        }
        let total: f64 = w.iter().sum();
        for (slot, x) in row.iter_mut().zip(w) {
            *slot = x / total;
        }
    }
    MarkovModel::with_steps(t, initial, outcome, steps).expect("generated rows are stochastic")
}

/// One complete standard-space path: probability, hit flag and the sum of
/// the hazards evaluated along it.
pub struct StandardPath {
    pub prob: f64,
    pub hit: bool,
    pub hazard_sum: f64,
}

/// One complete outcome-excluded path: probability under the renormalized
/// chain and the product of `1 - h` along it (0 after a certain outcome).
pub struct ExcludedPath {
    pub prob: f64,
    pub survival: f64,
}

/// Every path of the chain in the standard space, written directly against
/// the transition matrix.
pub fn standard_paths(m: &MarkovModel) -> Vec<StandardPath> {
    fn go(m: &MarkovModel, state: usize, left: usize, prob: f64, sum: f64, out: &mut Vec<StandardPath>) {
        if left == 0 {
            out.push(StandardPath { prob, hit: false, hazard_sum: sum });
            return;
        }
        let o = m.outcome_state();
        let h = m.prob(state, o);
        for next in 0..m.n_states() {
            let p = m.prob(state, next);
            if p == 0.0 {
                continue;
            }
            if next == o {
                out.push(StandardPath { prob: prob * p, hit: true, hazard_sum: sum + h });
            } else {
                go(m, next, left - 1, prob * p, sum + h, out);
            }
        }
    }
    let mut out = Vec::new();
    go(m, m.initial_state(), m.steps(), 1.0, 0.0, &mut out);
    out
}

pub fn excluded_paths(m: &MarkovModel) -> Vec<ExcludedPath> {
    fn go(m: &MarkovModel, state: usize, left: usize, prob: f64, surv: f64, out: &mut Vec<ExcludedPath>) {
        if left == 0 {
            out.push(ExcludedPath { prob, survival: surv });
            return;
        }
        let o = m.outcome_state();
        let h = m.prob(state, o);
        if h >= 1.0 - 1e-15 {
            out.push(ExcludedPath { prob, survival: 0.0 });
            return;
        }
        for next in (0..m.n_states()).filter(|&j| j != o) {
            let p = m.prob(state, next);
            if p == 0.0 {
                continue;
            }
            go(m, next, left - 1, prob * p / (1.0 - h), surv * (1.0 - h), out);
        }
    }
    let mut out = Vec::new();
    go(m, m.initial_state(), m.steps(), 1.0, 1.0, &mut out);
    out
}

/// Outcome probability as one minus the mass of outcome-free paths.
pub fn brute_force_probability(m: &MarkovModel) -> f64 {
    standard_paths(m).iter().filter(|p| p.hit).map(|p| p.prob).sum()
}

pub fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}
