//! Token models, horizon semantics and trajectory sampling.
//!
//! Positions in a timeline are zero-based here. Position `t` is *open* (a
//! token may be generated there) when `t < max_steps`, the time elapsed
//! before it is below the time limit, and no terminal or outcome token has
//! been generated earlier. The end index is the first position that is not
//! open, the index of a terminal token, or one past the outcome token.

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result, Violation};

pub type TokenId = usize;

/// Hazards at or above this value leave no mass to renormalize.
pub const DEGENERATE_HAZARD: f64 = 1.0 - 1e-15;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Token set with a designated outcome, terminal tokens and per-token time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    outcome: TokenId,
    terminal_set: Vec<TokenId>,
    time_map: Vec<f64>,
}

impl Vocabulary {
    /// A vocabulary in which no token is terminal and no token consumes time.
    pub fn new(size: usize, outcome: TokenId) -> Result<Self> {
        if size == 0 {
            return Err(invalid_arg("vocabulary size must be positive"));
        }
        if outcome >= size {
            return Err(Error::InvalidToken { token: outcome, size });
        }
        Ok(Self {
            size,
            outcome,
            terminal_set: Vec::new(),
            time_map: vec![0.0; size],
        })
    }

    /// Every token advances time by one unit; a time limit of `H` then allows
    /// exactly `H` generated tokens.
    pub fn unit_time(size: usize, outcome: TokenId) -> Result<Self> {
        let mut v = Self::new(size, outcome)?;
        v.time_map = vec![1.0; size];
        Ok(v)
    }

    pub fn with_terminal(mut self, tokens: &[TokenId]) -> Result<Self> {
        for &t in tokens {
            self.check_token(t)?;
        }
        let mut set = tokens.to_vec();
        set.sort_unstable();
        set.dedup();
        self.terminal_set = set;
        Ok(self)
    }

    pub fn with_times(mut self, times: Vec<f64>) -> Result<Self> {
        if times.len() != self.size {
            return Err(invalid_arg(format!(
                "time map has {} entries for a vocabulary of {}",
                times.len(),
                self.size
            )));
        }
        if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(invalid_arg(format!("token time {bad} is not a nonnegative real")));
        }
        self.time_map = times;
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn outcome(&self) -> TokenId {
        self.outcome
    }

    pub fn terminal_set(&self) -> &[TokenId] {
        &self.terminal_set
    }

    pub fn is_terminal(&self, token: TokenId) -> bool {
        self.terminal_set.binary_search(&token).is_ok()
    }

    pub fn time(&self, token: TokenId) -> f64 {
        self.time_map[token]
    }

    pub fn check_token(&self, token: TokenId) -> Result<()> {
        if token < self.size {
            Ok(())
        } else {
            Err(Error::InvalidToken { token, size: self.size })
        }
    }
}

/// When generation stops regardless of what the model produces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit: Option<f64>,
    pub max_steps: usize,
}

impl HorizonPolicy {
    pub fn new(time_limit: Option<f64>, max_steps: usize) -> Result<Self> {
        let h = Self { time_limit, max_steps };
        h.check()?;
        Ok(h)
    }

    /// Step-count mode: unit-time tokens and a time limit equal to the step budget.
    pub fn steps(steps: usize) -> Self {
        Self {
            time_limit: Some(steps as f64),
            max_steps: steps,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(invalid_arg("max_steps must be positive"));
        }
        if let Some(t) = self.time_limit {
            if t.is_nan() || t < 0.0 {
                return Err(invalid_arg(format!("time limit {t} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// Whether a token may be generated at `position` after `elapsed` time.
    #[inline]
    pub fn is_open(&self, position: usize, elapsed: f64) -> bool {
        position < self.max_steps && self.time_limit.is_none_or(|tau| elapsed < tau)
    }
}

/// Anything that maps a token prefix to a next-token distribution.
pub trait SequenceModel: Sync {
    fn vocab_size(&self) -> usize;

    /// Distribution of the next token after `prefix`. Implementations reject
    /// prefixes that contain tokens outside the vocabulary.
    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Cow<'_, [f64]>>;
}

impl<M: SequenceModel + ?Sized> SequenceModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Cow<'_, [f64]>> {
        (**self).next_distribution(prefix)
    }
}

/// Free-function form of [`SequenceModel::next_distribution`].
pub fn next_distribution<'m, M: SequenceModel + ?Sized>(
    model: &'m M,
    prefix: &[TokenId],
) -> Result<Cow<'m, [f64]>> {
    model.next_distribution(prefix)
}

pub(crate) fn check_prefix(prefix: &[TokenId], size: usize) -> Result<()> {
    match prefix.iter().find(|&&t| t >= size) {
        Some(&token) => Err(Error::InvalidToken { token, size }),
        None => Ok(()),
    }
}

/// A model together with the vocabulary and horizon it is simulated under.
#[derive(Debug)]
pub struct Scenario<'a, M: ?Sized> {
    pub model: &'a M,
    pub vocab: &'a Vocabulary,
    pub horizon: HorizonPolicy,
}

impl<M: ?Sized> Clone for Scenario<'_, M> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M: ?Sized> Copy for Scenario<'_, M> {}

impl<'a, M: SequenceModel + ?Sized> Scenario<'a, M> {
    pub fn new(model: &'a M, vocab: &'a Vocabulary, horizon: HorizonPolicy) -> Result<Self> {
        horizon.check()?;
        if model.vocab_size() != vocab.size() {
            return Err(invalid_arg(format!(
                "model has {} tokens but vocabulary has {}",
                model.vocab_size(),
                vocab.size()
            )));
        }
        Ok(Self { model, vocab, horizon })
    }
}

/// On-disk form of a Markov model, checked by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModelFile {
    pub n_states: usize,
    /// Row-major `n_states x n_states` transition matrix.
    pub transition: Vec<Vec<f64>>,
    pub initial_state: usize,
    pub outcome_state: usize,
    pub horizon: HorizonPolicy,
}

/// Collects every row-sum, range and index problem in a model description.
pub fn validate(file: &MarkovModelFile) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let n = file.n_states;
    if n == 0 {
        v.push(Violation::EmptyModel);
    }
    if file.transition.len() != n {
        v.push(Violation::Shape {
            expected: n,
            found: file.transition.len(),
        });
    }
    for (r, row) in file.transition.iter().enumerate() {
        if row.len() != n {
            v.push(Violation::RowLength {
                row: r,
                expected: n,
                found: row.len(),
            });
        }
        for (c, &x) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                v.push(Violation::OutOfRange { row: r, col: c, value: x });
            }
        }
        let sum: f64 = row.iter().sum();
        if sum.is_nan() || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            v.push(Violation::RowSum { row: r, sum });
        }
    }
    for (field, index) in [
        ("initial_state", file.initial_state),
        ("outcome_state", file.outcome_state),
    ] {
        if index >= n {
            v.push(Violation::StateIndex { field, index, n_states: n });
        }
    }
    if let Err(e) = file.horizon.check() {
        v.push(Violation::Horizon(e.to_string()));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// First-order Markov chain over states, each state being a token.
///
/// The next-token distribution is the row of the most recent token, or of the
/// initial state for an empty prefix. Every token takes unit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkovModelFile", into = "MarkovModelFile")]
pub struct MarkovModel {
    n_states: usize,
    transition: Vec<f64>,
    initial_state: usize,
    outcome_state: usize,
    horizon: HorizonPolicy,
    vocab: Vocabulary,
}

impl TryFrom<MarkovModelFile> for MarkovModel {
    type Error = Error;

    fn try_from(file: MarkovModelFile) -> Result<Self> {
        validate(&file).map_err(Error::InvalidModel)?;
        let n = file.n_states;
        Ok(Self {
            n_states: n,
            transition: file.transition.into_iter().flatten().collect(),
            initial_state: file.initial_state,
            outcome_state: file.outcome_state,
            horizon: file.horizon,
            vocab: Vocabulary::unit_time(n, file.outcome_state)?,
        })
    }
}

impl From<MarkovModel> for MarkovModelFile {
    fn from(m: MarkovModel) -> Self {
        Self {
            n_states: m.n_states,
            transition: m.transition.chunks(m.n_states).map(<[f64]>::to_vec).collect(),
            initial_state: m.initial_state,
            outcome_state: m.outcome_state,
            horizon: m.horizon,
        }
    }
}

impl MarkovModel {
    pub fn new(
        transition: Vec<Vec<f64>>,
        initial_state: usize,
        outcome_state: usize,
        horizon: HorizonPolicy,
    ) -> Result<Self> {
        MarkovModelFile {
            n_states: transition.len(),
            transition,
            initial_state,
            outcome_state,
            horizon,
        }
        .try_into()
    }

    /// Chain simulated for exactly `steps` transitions.
    pub fn with_steps(
        transition: Vec<Vec<f64>>,
        initial_state: usize,
        outcome_state: usize,
        steps: usize,
    ) -> Result<Self> {
        Self::new(transition, initial_state, outcome_state, HorizonPolicy::steps(steps))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MarkovModelFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MarkovModelFile::from(self.clone()))
            .expect("markov model serializes")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn outcome_state(&self) -> usize {
        self.outcome_state
    }

    pub fn horizon(&self) -> HorizonPolicy {
        self.horizon
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.transition[state * self.n_states..(state + 1) * self.n_states]
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.n_states + to]
    }

    /// Number of transitions the horizon allows, given unit-time tokens.
    pub fn steps(&self) -> usize {
        let by_time = match self.horizon.time_limit {
            Some(t) => t.ceil().max(0.0) as usize,
            None => usize::MAX,
        };
        by_time.min(self.horizon.max_steps)
    }

    pub fn scenario(&self) -> Scenario<'_, Self> {
        Scenario {
            model: self,
            vocab: &self.vocab,
            horizon: self.horizon,
        }
    }

    /// Same chain with a different step budget.
    pub fn with_horizon(&self, horizon: HorizonPolicy) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }
}

impl SequenceModel for MarkovModel {
    fn vocab_size(&self) -> usize {
        self.n_states
    }

    fn next_distribution(&self, prefix: &[TokenId]) -> Result<Cow<'_, [f64]>> {
        check_prefix(prefix, self.n_states)?;
        let state = prefix.last().copied().unwrap_or(self.initial_state);
        Ok(Cow::Borrowed(self.row(state)))
    }
}

/// Renormalizes `dist` with the outcome token removed.
pub fn restricted_distribution(dist: &[f64], outcome: TokenId) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(dist.len());
    restricted_distribution_into(dist, outcome, &mut out)?;
    Ok(out)
}

/// Buffer-reusing form of [`restricted_distribution`].
pub fn restricted_distribution_into(
    dist: &[f64],
    outcome: TokenId,
    out: &mut Vec<f64>,
) -> Result<()> {
    let size = dist.len();
    let hazard = *dist.get(outcome).ok_or(Error::InvalidToken { token: outcome, size })?;
    if hazard >= DEGENERATE_HAZARD {
        return Err(Error::DegenerateHazard { hazard });
    }
    let keep = 1.0 - hazard;
    out.clear();
    out.extend(dist.iter().map(|&p| p / keep));
    out[outcome] = 0.0;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Standard,
    OutcomeExcluded,
}

/// A sampled timeline with the outcome hazard recorded at every generated
/// position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub tokens: Vec<TokenId>,
    /// Unrestricted probability of the outcome token at each evaluated
    /// position, in both sampling modes.
    pub hazards: Vec<f64>,
    pub hit_index: Option<usize>,
    pub end_index: usize,
    pub mode: SamplingMode,
    pub elapsed_time: f64,
    /// Set when an outcome-excluded trajectory met a hazard of 1 and could
    /// not continue.
    #[serde(default)]
    pub degenerate: bool,
}

/// Inverse-CDF draw. Falls back to the last token with positive mass when
/// rounding leaves `u` above the cumulative total.
#[inline]
pub(crate) fn draw_token(dist: &[f64], u: f64) -> TokenId {
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Generates one timeline. Consumes exactly one uniform draw per generated
/// token.
pub fn sample_trajectory<M, R>(
    scenario: Scenario<'_, M>,
    mode: SamplingMode,
    rng: &mut R,
) -> Result<Trajectory>
where
    M: SequenceModel + ?Sized,
    R: Rng + ?Sized,
{
    let Scenario { model, vocab, horizon } = scenario;
    let outcome = vocab.outcome();
    let size = vocab.size();

    let mut tokens = Vec::new();
    let mut hazards = Vec::new();
    let mut restricted = Vec::with_capacity(size);
    let mut elapsed = 0.0;
    let mut hit_index = None;
    let mut degenerate = false;

    let end_index = loop {
        let position = tokens.len();
        if !horizon.is_open(position, elapsed) {
            break position;
        }
        let dist = model.next_distribution(&tokens)?;
        if dist.len() != size {
            return Err(invalid_arg(format!(
                "model returned {} probabilities for a vocabulary of {size}",
                dist.len()
            )));
        }
        let hazard = dist[outcome].clamp(0.0, 1.0);
        hazards.push(hazard);

        let token = match mode {
            SamplingMode::Standard => draw_token(&dist, rng.random::<f64>()),
            SamplingMode::OutcomeExcluded => {
                match restricted_distribution_into(&dist, outcome, &mut restricted) {
                    Ok(()) => draw_token(&restricted, rng.random::<f64>()),
                    Err(Error::DegenerateHazard { .. }) => {
                        degenerate = true;
                        break position;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        tokens.push(token);
        elapsed += vocab.time(token);

        if token == outcome {
            hit_index = Some(position);
            break position + 1;
        }
        if vocab.is_terminal(token) {
            break position;
        }
    };

    Ok(Trajectory {
        tokens,
        hazards,
        hit_index,
        end_index,
        mode,
        elapsed_time: elapsed,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trajectory_rng;

    fn two_state(h: f64, steps: usize) -> MarkovModel {
        MarkovModel::with_steps(vec![vec![1.0 - h, h], vec![0.0, 1.0]], 0, 1, steps).unwrap()
    }

    #[test]
    fn markov_distribution_is_current_row() {
        let m = MarkovModel::with_steps(vec![vec![0.3, 0.7], vec![0.6, 0.4]], 1, 1, 3).unwrap();
        assert_eq!(&*m.next_distribution(&[0]).unwrap(), &[0.3, 0.7]);
        assert_eq!(&*m.next_distribution(&[]).unwrap(), &[0.6, 0.4]);
        assert!(matches!(
            m.next_distribution(&[0, 5]),
            Err(Error::InvalidToken { token: 5, size: 2 })
        ));
    }

    #[test]
    fn restricted_renormalizes() {
        let r = restricted_distribution(&[0.2, 0.3, 0.5], 0).unwrap();
        assert_eq!(r[0], 0.0);
        assert!((r[1] - 0.375).abs() < 1e-15);
        assert!((r[2] - 0.625).abs() < 1e-15);
        assert_eq!(restricted_distribution(&[0.0, 0.4, 0.6], 0).unwrap(), vec![0.0, 0.4, 0.6]);
        assert!(matches!(
            restricted_distribution(&[1.0, 0.0, 0.0], 0),
            Err(Error::DegenerateHazard { .. })
        ));
    }

    #[test]
    fn validate_reports_rows() {
        let ok = MarkovModelFile {
            n_states: 2,
            transition: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            initial_state: 0,
            outcome_state: 1,
            horizon: HorizonPolicy::steps(3),
        };
        assert!(validate(&ok).is_ok());

        let mut short = ok.clone();
        short.transition[1] = vec![0.5, 0.49];
        let v = validate(&short).unwrap_err();
        assert!(matches!(v.as_slice(), [Violation::RowSum { row: 1, .. }]));

        let mut negative = ok.clone();
        negative.transition[0] = vec![1.1, -0.1];
        let v = validate(&negative).unwrap_err();
        assert!(v.contains(&Violation::OutOfRange { row: 0, col: 1, value: -0.1 }));

        let mut index = ok;
        index.outcome_state = 4;
        assert!(matches!(
            validate(&index).unwrap_err()[0],
            Violation::StateIndex { field: "outcome_state", .. }
        ));
    }

    #[test]
    fn json_round_trip() {
        let m = two_state(0.25, 4);
        let back = MarkovModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
        let bad = r#"{"n_states":2,"transition":[[0.5,0.4],[0,1]],"initial_state":0,
                      "outcome_state":1,"horizon":{"max_steps":3}}"#;
        assert!(matches!(MarkovModel::from_json(bad), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn impossible_outcome_never_hits() {
        let m = MarkovModel::with_steps(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0, 1, 5).unwrap();
        let t = sample_trajectory(m.scenario(), SamplingMode::Standard, &mut trajectory_rng(1, 0))
            .unwrap();
        assert_eq!(t.hit_index, None);
        assert_eq!(t.hazards, vec![0.0; 5]);
        assert_eq!(t.end_index, 5);
    }

    #[test]
    fn certain_outcome_hits_at_first_position() {
        let m = MarkovModel::with_steps(vec![vec![0.0, 1.0], vec![0.0, 1.0]], 0, 1, 5).unwrap();
        let t = sample_trajectory(m.scenario(), SamplingMode::Standard, &mut trajectory_rng(1, 0))
            .unwrap();
        assert_eq!(t.tokens, vec![1]);
        assert_eq!(t.hit_index, Some(0));
        assert_eq!(t.hazards, vec![1.0]);
        assert_eq!(t.end_index, 1);
    }

    #[test]
    fn excluded_mode_flags_degenerate_hazard() {
        let m = MarkovModel::with_steps(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]], 0, 2, 4)
            .unwrap();
        let t = sample_trajectory(m.scenario(), SamplingMode::OutcomeExcluded, &mut trajectory_rng(3, 0))
            .unwrap();
        assert!(t.tokens.iter().all(|&x| x != 2));
        // The chain reaches state 1 (hazard 1) at some point unless it stays in 0.
        if t.tokens.contains(&1) {
            assert!(t.degenerate);
            assert_eq!(*t.hazards.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn terminal_token_ends_timeline_at_its_index() {
        let vocab = Vocabulary::new(3, 2).unwrap().with_terminal(&[1]).unwrap();
        let m = MarkovModel::with_steps(vec![vec![0.0, 1.0, 0.0]; 3], 0, 2, 10).unwrap();
        let horizon = HorizonPolicy::new(None, 10).unwrap();
        let t = sample_trajectory(
            Scenario::new(&m, &vocab, horizon).unwrap(),
            SamplingMode::Standard,
            &mut trajectory_rng(0, 0),
        )
        .unwrap();
        assert_eq!(t.tokens, vec![1]);
        assert_eq!(t.end_index, 0);
        assert_eq!(t.hazards.len(), 1);
    }

    #[test]
    fn draw_token_skips_zero_mass() {
        assert_eq!(draw_token(&[0.0, 0.5, 0.5], 0.0), 1);
        assert_eq!(draw_token(&[0.3, 0.7, 0.0], 0.999_999_999), 1);
        assert_eq!(draw_token(&[0.3, 0.7, 0.0], 1.0), 1);
    }
}
