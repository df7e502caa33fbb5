//! Random Markov chains with a controlled spontaneity and outcome probability.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::oracle::exact_outcome_probability;
use crate::seqmodel::MarkovModel;

/// States with outcome-transition mass above this count as hazardous.
pub const HAZARD_EPS: f64 = 1e-12;

const CALIBRATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainConstruction {
    /// Random transition weights and random per-state hazards.
    #[default]
    Random,
    /// Every non-outcome state moves uniformly to every other non-outcome
    /// state, and the hazardous states (the highest-numbered ones) share
    /// one hazard.
    EqualTransition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_states: usize,
    /// Fraction of non-outcome states with a nonzero hazard.
    pub spontaneity: f64,
    #[serde(default)]
    pub target_probability: Option<f64>,
    pub horizon_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub construction: ChainConstruction,
}

impl ChainSpec {
    /// Number of hazardous non-outcome states.
    pub fn hazardous_count(&self) -> usize {
        (self.spontaneity * (self.n_states - 1) as f64).round() as usize
    }

    fn check(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(invalid_arg("a chain needs at least 2 states"));
        }
        if !(self.spontaneity > 0.0 && self.spontaneity <= 1.0) {
            return Err(invalid_arg(format!(
                "spontaneity {} is outside (0, 1]",
                self.spontaneity
            )));
        }
        if self.hazardous_count() == 0 {
            return Err(invalid_arg(format!(
                "spontaneity {} rounds to zero hazardous states out of {}",
                self.spontaneity,
                self.n_states - 1
            )));
        }
        if self.horizon_steps == 0 {
            return Err(invalid_arg("horizon_steps must be positive"));
        }
        if let Some(t) = self.target_probability {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid_arg(format!("target probability {t} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Skeleton of a chain: non-outcome transition weights (each row sums to 1)
/// and a base hazard per state, zero for non-hazardous states.
struct Skeleton {
    weights: Vec<Vec<f64>>,
    base_hazard: Vec<f64>,
}

impl Skeleton {
    fn build(spec: &ChainSpec) -> Self {
        let m = spec.n_states - 1;
        let k = spec.hazardous_count();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        match spec.construction {
            ChainConstruction::Random => {
                let weights = (0..m)
                    .map(|_| {
                        let w: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
                        let total: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / total).collect()
                    })
                    .collect();
                let mut states: Vec<usize> = (0..m).collect();
                states.shuffle(&mut rng);
                let mut base_hazard = vec![0.0; m];
                for &s in &states[..k] {
                    base_hazard[s] = rng.random_range(0.05..0.5);
                }
                Self { weights, base_hazard }
            }
            ChainConstruction::EqualTransition => {
                let weights = (0..m)
                    .map(|s| {
                        if m == 1 {
                            vec![1.0]
                        } else {
                            (0..m)
                                .map(|j| if j == s { 0.0 } else { 1.0 / (m - 1) as f64 })
                                .collect()
                        }
                    })
                    .collect();
                // the initial state is the last to become hazardous
                let base_hazard = (0..m).map(|s| if s >= m - k { 0.1 } else { 0.0 }).collect();
                Self { weights, base_hazard }
            }
        }
    }

    /// Largest hazard multiplier that keeps every hazard at most 1.
    fn max_scale(&self) -> f64 {
        1.0 / self.base_hazard.iter().cloned().fold(0.0, f64::max)
    }

    fn model(&self, scale: f64, steps: usize) -> Result<MarkovModel> {
        let m = self.weights.len();
        let n = m + 1;
        let mut t = vec![vec![0.0; n]; n];
        for ((row, weights), &base) in t.iter_mut().zip(&self.weights).zip(&self.base_hazard) {
            let h = (base * scale).min(1.0);
            for (cell, &w) in row.iter_mut().zip(weights) {
                *cell = (1.0 - h) * w;
            }
            row[m] = h;
        }
        t[m][m] = 1.0;
        MarkovModel::with_steps(t, 0, m, steps)
    }
}

/// Builds a chain with state `n_states - 1` as the absorbing outcome and
/// state 0 as the initial state. With a target probability the hazards are
/// scaled by bisection until the exact outcome probability matches.
pub fn random_chain(spec: &ChainSpec) -> Result<MarkovModel> {
    spec.check()?;
    let skeleton = Skeleton::build(spec);
    let Some(target) = spec.target_probability else {
        return skeleton.model(1.0, spec.horizon_steps);
    };
    let max_scale = skeleton.max_scale();
    let high = exact_outcome_probability(&skeleton.model(max_scale, spec.horizon_steps)?);
    if !(target > 0.0 && target <= high + CALIBRATION_TOLERANCE) {
        return Err(Error::CalibrationFailure {
            target,
            low: 0.0,
            high,
        });
    }
    // outcome probability is nondecreasing in the scale
    let (mut lo, mut hi) = (0.0, max_scale);
    let mut best = skeleton.model(max_scale, spec.horizon_steps)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let model = skeleton.model(mid, spec.horizon_steps)?;
        let p = exact_outcome_probability(&model);
        if (p - target).abs() <= CALIBRATION_TOLERANCE {
            return Ok(model);
        }
        if p < target {
            lo = mid;
        } else {
            hi = mid;
            best = model;
        }
    }
    Ok(best)
}

/// Fraction of non-outcome states with outcome-transition mass above 1e-12.
pub fn spontaneity(model: &MarkovModel) -> f64 {
    let o = model.outcome_state();
    let others: Vec<usize> = (0..model.n_states()).filter(|&s| s != o).collect();
    if others.is_empty() {
        return 0.0;
    }
    let hazardous = others.iter().filter(|&&s| model.prob(s, o) > HAZARD_EPS).count();
    hazardous as f64 / others.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, spontaneity: f64, target: Option<f64>) -> ChainSpec {
        ChainSpec {
            n_states: n,
            spontaneity,
            target_probability: target,
            horizon_steps: 20,
            seed: 5,
            construction: ChainConstruction::Random,
        }
    }

    #[test]
    fn full_spontaneity_marks_every_state() {
        let m = random_chain(&spec(4, 1.0, None)).unwrap();
        assert_eq!(spontaneity(&m), 1.0);
        assert!((0..3).all(|s| m.prob(s, 3) > 0.0));
    }

    #[test]
    fn spontaneity_round_trip() {
        for construction in [ChainConstruction::Random, ChainConstruction::EqualTransition] {
            let mut s = spec(11, 0.4, Some(0.5));
            s.construction = construction;
            let m = random_chain(&s).unwrap();
            assert!((spontaneity(&m) - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn no_hazard_chain_has_zero_spontaneity() {
        let m = MarkovModel::with_steps(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0, 1, 3).unwrap();
        assert_eq!(spontaneity(&m), 0.0);
    }

    #[test]
    fn calibrates_to_target() {
        for target in [0.05, 0.5, 0.9] {
            let m = random_chain(&spec(6, 0.6, Some(target))).unwrap();
            assert!((exact_outcome_probability(&m) - target).abs() < 1e-6);
        }
    }

    #[test]
    fn equal_transition_rows_are_uniform() {
        let mut s = spec(5, 0.5, Some(0.5));
        s.construction = ChainConstruction::EqualTransition;
        let m = random_chain(&s).unwrap();
        for st in 0..4 {
            let h = m.prob(st, 4);
            for j in (0..4).filter(|&j| j != st) {
                assert!((m.prob(st, j) - (1.0 - h) / 3.0).abs() < 1e-15);
            }
            assert_eq!(m.prob(st, st), 0.0);
        }
        assert!(m.prob(0, 4) == 0.0 && m.prob(1, 4) == 0.0 && m.prob(2, 4) > 0.0 && m.prob(3, 4) > 0.0);
    }

    #[test]
    fn infeasible_target_names_interval() {
        // the only hazardous state cannot be reached in one step
        let mut s = spec(11, 0.1, Some(0.5));
        s.construction = ChainConstruction::EqualTransition;
        s.horizon_steps = 1;
        match random_chain(&s) {
            Err(Error::CalibrationFailure { low, high, .. }) => {
                assert_eq!(low, 0.0);
                assert_eq!(high, 0.0);
            }
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(random_chain(&spec(1, 1.0, None)).is_err());
        assert!(random_chain(&spec(5, 0.0, None)).is_err());
        assert!(random_chain(&spec(5, 0.1, None)).is_err());
    }
}
