//! Exact references: dynamic programming over Markov chains, full
//! enumeration of small sequence spaces, the SCOPE counterexample model and
//! the Monte Carlo dispersion computation.
//!
//! Nothing here samples. Enumeration walks every sequence with positive
//! probability and computes sub-estimator values along each path itself,
//! without calling the functions in [`crate::estimators`], so the two can be
//! checked against each other.

use std::borrow::Cow;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::estimators::EstimatorKind;
use crate::seqmodel::{
    check_prefix, HorizonPolicy, MarkovModel, SamplingMode, Scenario, SequenceModel, TokenId,
    Vocabulary, DEGENERATE_HAZARD,
};
use crate::stats::{binomial_pmf, NeumaierSum};

/// Default cap on enumeration leaves.
pub const MAX_LEAVES: usize = 10_000_000;

/// Atoms closer than this are merged.
const ATOM_MERGE_TOLERANCE: f64 = 1e-12;

/// P(outcome within the model's step budget), by backward recursion
/// `p_h(s) = T[s,O] + sum_{s' != O} T[s,s'] p_{h-1}(s')` with `p_0 = 0`.
pub fn exact_outcome_probability(model: &MarkovModel) -> f64 {
    outcome_probability_within(model, model.steps())
}

/// Same recursion for an explicit number of steps.
pub fn outcome_probability_within(model: &MarkovModel, steps: usize) -> f64 {
    let n = model.n_states();
    let o = model.outcome_state();
    let mut p = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..steps {
        for (s, slot) in next.iter_mut().enumerate() {
            let row = model.row(s);
            let mut acc = NeumaierSum::new();
            acc.add(row[o]);
            for (j, (&t, &pj)) in row.iter().zip(&p).enumerate() {
                if j != o {
                    acc.add(t * pj);
                }
            }
            *slot = acc.total();
        }
        std::mem::swap(&mut p, &mut next);
    }
    p[model.initial_state()]
}

/// Exact first and second moments of the three sub-estimators on a Markov
/// chain, by recursion over (state, steps remaining).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub probability: f64,
    pub mc_variance: f64,
    pub scope_mean: f64,
    pub scope_second_moment: f64,
    pub scope_variance: f64,
    pub reach_mean: f64,
    pub reach_variance: f64,
}

impl ExactMoments {
    pub fn variance(&self, kind: EstimatorKind) -> f64 {
        match kind {
            EstimatorKind::Mc => self.mc_variance,
            EstimatorKind::Scope => self.scope_variance,
            EstimatorKind::Reach => self.reach_variance,
        }
    }
}

pub fn exact_moments(model: &MarkovModel) -> ExactMoments {
    let n = model.n_states();
    let o = model.outcome_state();
    let hazard: Vec<f64> = (0..n).map(|s| model.prob(s, o)).collect();

    // SCOPE: S = h_s + 1{next != O} S'.
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    // REACH: survival Q = (1 - h_s) Q' along the restricted chain.
    let mut q1 = vec![1.0; n];
    let mut q2 = vec![1.0; n];
    for _ in 0..model.steps() {
        let mut n1 = vec![0.0; n];
        let mut n2 = vec![0.0; n];
        let mut m1 = vec![0.0; n];
        let mut m2 = vec![0.0; n];
        for s in 0..n {
            let row = model.row(s);
            let h = hazard[s];
            let (mut cont1, mut cont2, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0);
            for j in (0..n).filter(|&j| j != o) {
                cont1 += row[j] * s1[j];
                cont2 += row[j] * s2[j];
                r1 += row[j] * q1[j];
                r2 += row[j] * q2[j];
            }
            n1[s] = h + cont1;
            n2[s] = h * h + 2.0 * h * cont1 + cont2;
            if h < DEGENERATE_HAZARD {
                // (1-h) * sum_j T[s,j]/(1-h) * q(j)
                m1[s] = r1;
                m2[s] = (1.0 - h) * r2;
            }
        }
        s1 = n1;
        s2 = n2;
        q1 = m1;
        q2 = m2;
    }
    let i = model.initial_state();
    let p = exact_outcome_probability(model);
    ExactMoments {
        probability: p,
        mc_variance: p * (1.0 - p),
        scope_mean: s1[i],
        scope_second_moment: s2[i],
        scope_variance: s2[i] - s1[i] * s1[i],
        reach_mean: 1.0 - q1[i],
        reach_variance: (q2[i] - q1[i] * q1[i]).max(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub value: f64,
    pub probability: f64,
}

/// Finite distribution of a sub-estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueDistribution {
    pub atoms: Vec<Atom>,
}

impl ValueDistribution {
    /// Sorts `(value, probability)` pairs and merges values within 1e-12.
    pub fn from_weighted(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<Atom> = Vec::new();
        let mut anchor = f64::NEG_INFINITY;
        for (value, probability) in pairs {
            match atoms.last_mut() {
                Some(last) if value - anchor <= ATOM_MERGE_TOLERANCE => {
                    let total = last.probability + probability;
                    if total > 0.0 {
                        last.value = (last.value * last.probability + value * probability) / total;
                    }
                    last.probability = total;
                }
                _ => {
                    anchor = value;
                    atoms.push(Atom { value, probability });
                }
            }
        }
        Self { atoms }
    }

    pub fn total_probability(&self) -> f64 {
        self.expect(|_| 1.0)
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut acc = NeumaierSum::new();
        for a in &self.atoms {
            acc.add(a.probability * f(a.value));
        }
        acc.total()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|v| v)
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|v| v * v)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|v| (v - m) * (v - m))
    }

    pub fn probability_of(&self, value: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| (a.value - value).abs() <= ATOM_MERGE_TOLERANCE)
            .map(|a| a.probability)
            .sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "probability"])?;
        for a in &self.atoms {
            w.write_record([a.value.to_string(), a.probability.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Enumerator<'a, M: ?Sized> {
    scenario: Scenario<'a, M>,
    kind: EstimatorKind,
    limit: usize,
    leaves: usize,
    pairs: Vec<(f64, f64)>,
    prefix: Vec<TokenId>,
}

impl<M: SequenceModel + ?Sized> Enumerator<'_, M> {
    fn leaf(&mut self, probability: f64, value: f64) -> Result<()> {
        self.leaves += 1;
        if self.leaves > self.limit {
            return Err(Error::InstanceTooLarge { limit: self.limit });
        }
        if probability > 0.0 {
            self.pairs.push((value, probability));
        }
        Ok(())
    }

    /// `acc` is the running hazard sum (SCOPE) or survival product (REACH).
    fn visit(&mut self, elapsed: f64, probability: f64, acc: f64) -> Result<()> {
        let Scenario { model, vocab, horizon } = self.scenario;
        let outcome = vocab.outcome();
        if !horizon.is_open(self.prefix.len(), elapsed) {
            let value = match self.kind {
                EstimatorKind::Mc => 0.0,
                EstimatorKind::Scope => acc,
                EstimatorKind::Reach => 1.0 - acc,
            };
            return self.leaf(probability, value);
        }
        let dist = model.next_distribution(&self.prefix)?;
        let h = dist[outcome].clamp(0.0, 1.0);

        match self.kind.mode() {
            SamplingMode::Standard => {
                let sum = acc + h;
                for (token, &p) in dist.iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    let branch = probability * p;
                    if token == outcome {
                        let value = if self.kind == EstimatorKind::Mc { 1.0 } else { sum };
                        self.leaf(branch, value)?;
                    } else if vocab.is_terminal(token) {
                        let value = if self.kind == EstimatorKind::Mc { 0.0 } else { sum };
                        self.leaf(branch, value)?;
                    } else {
                        self.descend(token, elapsed, branch, sum)?;
                    }
                }
            }
            SamplingMode::OutcomeExcluded => {
                if h >= DEGENERATE_HAZARD {
                    return self.leaf(probability, 1.0);
                }
                let keep = 1.0 - h;
                let survival = acc * keep;
                for (token, &p) in dist.iter().enumerate() {
                    if token == outcome || p <= 0.0 {
                        continue;
                    }
                    let branch = probability * (p / keep);
                    if vocab.is_terminal(token) {
                        self.leaf(branch, 1.0 - survival)?;
                    } else {
                        self.descend(token, elapsed, branch, survival)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn descend(&mut self, token: TokenId, elapsed: f64, probability: f64, acc: f64) -> Result<()> {
        let time = self.scenario.vocab.time(token);
        self.prefix.push(token);
        let r = self.visit(elapsed + time, probability, acc);
        self.prefix.pop();
        r
    }
}

/// Exact distribution of one sub-estimator over every sequence in the support
/// of the sampling distribution `kind` uses.
pub fn enumerate_sub_distribution<M: SequenceModel + ?Sized>(
    scenario: Scenario<'_, M>,
    kind: EstimatorKind,
) -> Result<ValueDistribution> {
    enumerate_sub_distribution_with_limit(scenario, kind, MAX_LEAVES)
}

pub fn enumerate_sub_distribution_with_limit<M: SequenceModel + ?Sized>(
    scenario: Scenario<'_, M>,
    kind: EstimatorKind,
    limit: usize,
) -> Result<ValueDistribution> {
    let mut e = Enumerator {
        scenario,
        kind,
        limit,
        leaves: 0,
        pairs: Vec::new(),
        prefix: Vec::new(),
    };
    let start = if kind == EstimatorKind::Reach { 1.0 } else { 0.0 };
    e.visit(0.0, 1.0, start)?;
    Ok(ValueDistribution::from_weighted(e.pairs))
}

/// Result of checking P(A) = P(B) between the standard space and the
/// outcome-excluded space with Bernoulli trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BijectionReport {
    /// Probability that a standard timeline contains the outcome.
    pub p_a: f64,
    /// Probability that some Bernoulli trial along an outcome-free backbone succeeds.
    pub p_b: f64,
    /// Largest |P(x) - P_hat(x) * prod(1 - h)| over outcome-free timelines x.
    pub max_path_discrepancy: f64,
    pub outcome_free_paths: usize,
}

/// Computes P(A) and P(B) by separate sums over one walk of the outcome-free
/// tree, and checks that each outcome-free timeline has the same probability
/// as its image (same timeline, all trials failed) in the second space.
pub fn exact_bijection_check<M: SequenceModel + ?Sized>(
    scenario: Scenario<'_, M>,
) -> Result<BijectionReport> {
    struct Walk<'a, M: ?Sized> {
        scenario: Scenario<'a, M>,
        prefix: Vec<TokenId>,
        p_a: NeumaierSum,
        p_b: NeumaierSum,
        max_disc: f64,
        paths: usize,
    }

    impl<M: SequenceModel + ?Sized> Walk<'_, M> {
        fn backbone_end(&mut self, p_std: f64, p_hat: f64, survival: f64) -> Result<()> {
            self.paths += 1;
            if self.paths > MAX_LEAVES {
                return Err(Error::InstanceTooLarge { limit: MAX_LEAVES });
            }
            self.p_b.add(p_hat * (1.0 - survival));
            self.max_disc = self.max_disc.max((p_std - p_hat * survival).abs());
            Ok(())
        }

        fn visit(&mut self, elapsed: f64, p_std: f64, p_hat: f64, survival: f64) -> Result<()> {
            let Scenario { model, vocab, horizon } = self.scenario;
            if !horizon.is_open(self.prefix.len(), elapsed) {
                return self.backbone_end(p_std, p_hat, survival);
            }
            let dist = model.next_distribution(&self.prefix)?;
            let o = vocab.outcome();
            let h = dist[o].clamp(0.0, 1.0);
            self.p_a.add(p_std * h);
            if h >= DEGENERATE_HAZARD {
                // a trial succeeds with certainty; no outcome-free continuation
                self.p_b.add(p_hat);
                return Ok(());
            }
            let keep = 1.0 - h;
            for (token, &p) in dist.iter().enumerate() {
                if token == o || p <= 0.0 {
                    continue;
                }
                let (s, hat, surv) = (p_std * p, p_hat * p / keep, survival * keep);
                if vocab.is_terminal(token) {
                    self.backbone_end(s, hat, surv)?;
                } else {
                    self.prefix.push(token);
                    let r = self.visit(elapsed + vocab.time(token), s, hat, surv);
                    self.prefix.pop();
                    r?;
                }
            }
            Ok(())
        }
    }

    let mut w = Walk {
        scenario,
        prefix: Vec::new(),
        p_a: NeumaierSum::new(),
        p_b: NeumaierSum::new(),
        max_disc: 0.0,
        paths: 0,
    };
    w.visit(0.0, 1.0, 1.0, 1.0)?;
    Ok(BijectionReport {
        p_a: w.p_a.total(),
        p_b: w.p_b.total(),
        max_path_discrepancy: w.max_disc,
        outcome_free_paths: w.paths,
    })
}

/// Model on which SCOPE has larger variance than MC for any outcome
/// probability, however small.
///
/// The first token is `A` with probability `p` (terminal) or `B`. After `B`,
/// fair coin tokens `H`/`T` follow until the first `H` or the third coin.
/// `H` is the outcome. Coins take unit time under a time limit of 3, which
/// implements the three-coin cut-off.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleModel {
    p: f64,
    vocab: Vocabulary,
}

impl CounterexampleModel {
    pub const A: TokenId = 0;
    pub const B: TokenId = 1;
    pub const H: TokenId = 2;
    pub const T: TokenId = 3;

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn horizon(&self) -> HorizonPolicy {
        HorizonPolicy {
            time_limit: Some(3.0),
            max_steps: 4,
        }
    }

    pub fn scenario(&self) -> Scenario<'_, Self> {
        Scenario {
            model: self,
            vocab: &self.vocab,
            horizon: self.horizon(),
        }
    }
}

impl SequenceModel for CounterexampleModel {
    fn vocab_size(&self) -> usize {
        4
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Cow<'_, [f64]>> {
        check_prefix(prefix, 4)?;
        Ok(if prefix.is_empty() {
            Cow::Owned(vec![self.p, 1.0 - self.p, 0.0, 0.0])
        } else {
            Cow::Borrowed(&[0.0, 0.0, 0.5, 0.5])
        })
    }
}

pub fn counterexample_model(p: f64) -> Result<CounterexampleModel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_arg(format!("p = {p} is outside [0, 1]")));
    }
    let vocab = Vocabulary::new(4, CounterexampleModel::H)?
        .with_terminal(&[CounterexampleModel::A])?
        .with_times(vec![0.0, 0.0, 1.0, 1.0])?;
    Ok(CounterexampleModel { p, vocab })
}

/// The same process as a 7-state Markov chain over 4 steps:
/// start, A, B, T1, T2, T3 and the outcome H.
pub fn counterexample_chain(p: f64) -> Result<MarkovModel> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_arg(format!("p = {p} is outside [0, 1]")));
    }
    const START: usize = 0;
    const A: usize = 1;
    const B: usize = 2;
    const T1: usize = 3;
    const T2: usize = 4;
    const T3: usize = 5;
    const H: usize = 6;
    let mut t = vec![vec![0.0; 7]; 7];
    t[START][A] = p;
    t[START][B] = 1.0 - p;
    t[A][A] = 1.0;
    for (from, to) in [(B, T1), (T1, T2), (T2, T3)] {
        t[from][H] = 0.5;
        t[from][to] = 0.5;
    }
    t[T3][T3] = 1.0;
    t[H][H] = 1.0;
    MarkovModel::with_steps(t, START, H, 4)
}

/// Probability that a patient with risk `p_elevated` gets a strictly higher
/// `n_samples`-timeline Monte Carlo score than a patient with risk `p_base`.
pub fn dispersion_probability(n_samples: usize, p_base: f64, p_elevated: f64) -> Result<f64> {
    if n_samples == 0 {
        return Err(invalid_arg("n_samples must be at least 1"));
    }
    for (name, p) in [("p_base", p_base), ("p_elevated", p_elevated)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid_arg(format!("{name} = {p} is outside [0, 1]")));
        }
    }
    let base = binomial_pmf(n_samples, p_base);
    let elevated = binomial_pmf(n_samples, p_elevated);
    // above[k] = P(elevated count > k)
    let mut above = vec![0.0; n_samples + 1];
    for k in (0..n_samples).rev() {
        above[k] = above[k + 1] + elevated[k + 1];
    }
    let mut acc = NeumaierSum::new();
    for (b, a) in base.iter().zip(&above) {
        acc.add(b * a);
    }
    Ok(acc.total().clamp(0.0, 1.0))
}
