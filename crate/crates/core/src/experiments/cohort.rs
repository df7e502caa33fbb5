//! Synthetic patient cohort: discrimination and calibration of the three
//! estimators as a function of the number of sampled timelines.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chains::{random_chain, ChainConstruction, ChainSpec};
use super::metrics::{auroc, brier, calibration_curve, CalibrationBin};
use super::table::{ExperimentTable, MetricRow};
use crate::error::{invalid_arg, Error, Result};
use crate::estimators::{mc_sub, reach_sub, scope_sub, ClipPolicy, EstimatorKind};
use crate::oracle::exact_outcome_probability;
use crate::rng::{derive_seed, trajectory_rng};
use crate::seqmodel::{sample_trajectory, SamplingMode};
use crate::stats::quantile_sorted;

/// One component of the per-patient risk mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaComponent {
    pub weight: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n_patients: usize,
    pub n_states: usize,
    pub horizon_steps: usize,
    pub spontaneity: f64,
    #[serde(default)]
    pub construction: ChainConstruction,
    /// Each patient's target outcome probability is drawn from this mixture.
    pub risk_mixture: Vec<BetaComponent>,
    pub n_timelines: usize,
    pub bootstrap_rounds: usize,
    /// Resamples used for each equivalence-ratio interval.
    pub equivalence_rounds: usize,
    /// Reference sample counts of the equivalence ratios.
    pub reference_ns: Vec<usize>,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            n_states: 11,
            horizon_steps: 20,
            spontaneity: 0.9,
            construction: ChainConstruction::Random,
            risk_mixture: vec![
                BetaComponent { weight: 0.7, alpha: 1.5, beta: 15.0 },
                BetaComponent { weight: 0.3, alpha: 4.0, beta: 3.0 },
            ],
            n_timelines: 100,
            bootstrap_rounds: 40,
            equivalence_rounds: 1000,
            reference_ns: vec![10, 20, 50, 100],
            n_bins: 10,
            seed: 0,
        }
    }
}

/// Risk targets are kept inside this range so every chain calibrates.
const TARGET_RANGE: (f64, f64) = (0.002, 0.98);

impl CohortSpec {
    pub fn check(&self) -> Result<()> {
        if self.n_patients < 2 {
            return Err(invalid_arg("a cohort needs at least 2 patients"));
        }
        if self.n_timelines == 0 || self.bootstrap_rounds == 0 || self.equivalence_rounds == 0 {
            return Err(invalid_arg("n_timelines, bootstrap_rounds and equivalence_rounds must be at least 1"));
        }
        if self.n_bins == 0 {
            return Err(invalid_arg("n_bins must be positive"));
        }
        if self.risk_mixture.is_empty()
            || self
                .risk_mixture
                .iter()
                .any(|c| !(c.weight > 0.0 && c.alpha > 0.0 && c.beta > 0.0))
        {
            return Err(invalid_arg("risk mixture components need positive weight, alpha and beta"));
        }
        if let Some(&n) = self.reference_ns.iter().find(|&&n| n == 0 || n > self.n_timelines) {
            return Err(invalid_arg(format!(
                "reference sample count {n} is outside 1..={}",
                self.n_timelines
            )));
        }
        Ok(())
    }

    fn draw_target<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        let total: f64 = self.risk_mixture.iter().map(|c| c.weight).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = self.risk_mixture[self.risk_mixture.len() - 1];
        for c in &self.risk_mixture {
            if u < c.weight {
                chosen = *c;
                break;
            }
            u -= c.weight;
        }
        let beta = Beta::new(chosen.alpha, chosen.beta).map_err(|e| invalid_arg(e.to_string()))?;
        Ok(beta.sample(rng).clamp(TARGET_RANGE.0, TARGET_RANGE.1))
    }
}

/// Per-patient ground truth and sampled sub-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub probability: f64,
    pub label: bool,
    pub mc: Vec<f64>,
    pub scope: Vec<f64>,
    pub reach: Vec<f64>,
}

impl Patient {
    pub fn pool(&self, kind: EstimatorKind) -> &[f64] {
        match kind {
            EstimatorKind::Mc => &self.mc,
            EstimatorKind::Scope => &self.scope,
            EstimatorKind::Reach => &self.reach,
        }
    }
}

/// Draws a patient's chain, label and timeline pools. MC and SCOPE share
/// the standard-mode pool; REACH has its own outcome-excluded pool.
pub fn simulate_patient(spec: &CohortSpec, index: usize) -> Result<Patient> {
    let mut rng = trajectory_rng(derive_seed(spec.seed, &[0]), index as u64);
    let target = spec.draw_target(&mut rng)?;
    let chain = random_chain(&ChainSpec {
        n_states: spec.n_states,
        spontaneity: spec.spontaneity,
        target_probability: Some(target),
        horizon_steps: spec.horizon_steps,
        seed: rng.random(),
        construction: spec.construction,
    })?;
    let probability = exact_outcome_probability(&chain);
    let label = rng.random::<f64>() < probability;
    let scenario = chain.scenario();
    let (mut mc, mut scope, mut reach) = (
        Vec::with_capacity(spec.n_timelines),
        Vec::with_capacity(spec.n_timelines),
        Vec::with_capacity(spec.n_timelines),
    );
    let standard_seed = derive_seed(spec.seed, &[1, index as u64]);
    let excluded_seed = derive_seed(spec.seed, &[2, index as u64]);
    for t in 0..spec.n_timelines as u64 {
        let traj = sample_trajectory(scenario, SamplingMode::Standard, &mut trajectory_rng(standard_seed, t))?;
        mc.push(mc_sub(&traj)?);
        scope.push(scope_sub(&traj)?);
        let traj = sample_trajectory(scenario, SamplingMode::OutcomeExcluded, &mut trajectory_rng(excluded_seed, t))?;
        reach.push(reach_sub(&traj)?);
    }
    Ok(Patient {
        probability,
        label,
        mc,
        scope,
        reach,
    })
}

/// Replicate AUROCs keyed by estimator kind and sample count, one entry per
/// bootstrap round that had both classes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AucTable {
    pub cells: BTreeMap<(EstimatorKind, usize), Vec<f64>>,
}

impl AucTable {
    pub fn get(&self, kind: EstimatorKind, n: usize) -> Result<&[f64]> {
        match self.cells.get(&(kind, n)) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(invalid_arg(format!("AUROC table has no replicates for {kind} at n={n}"))),
        }
    }

    /// Sample counts present for `kind`, ascending.
    pub fn sample_counts(&self, kind: EstimatorKind) -> Vec<usize> {
        self.cells.keys().filter(|(k, _)| *k == kind).map(|&(_, n)| n).collect()
    }

    pub fn mean(&self, kind: EstimatorKind, n: usize) -> Result<f64> {
        let v = self.get(kind, n)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceResult {
    pub alternative: EstimatorKind,
    pub reference: EstimatorKind,
    pub reference_n: usize,
    /// Ratio `n / m` (median over resamples) with its percentile interval.
    pub row: MetricRow,
    /// Smallest qualifying `m` per resample; `None` when not reached.
    pub m_values: Vec<Option<usize>>,
    pub not_reached: usize,
}

impl EquivalenceResult {
    /// Percentile interval of `m`, derived from the ratio interval.
    /// Unreached resamples make the upper end infinite.
    pub fn m_interval(&self) -> (f64, f64) {
        let n = self.reference_n as f64;
        let lo = self.row.ci_high.unwrap_or(f64::NAN);
        let hi = self.row.ci_low.unwrap_or(f64::NAN);
        (n / lo, if hi > 0.0 { n / hi } else { f64::INFINITY })
    }
}

fn resampled_mean<R: Rng>(values: &[f64], rng: &mut R) -> f64 {
    let total: f64 = (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).sum();
    total / values.len() as f64
}

/// Bootstrap equivalence ratio between an alternative estimator and a
/// reference estimator at `reference_n`.
///
/// Each resample redraws the replicate AUROCs of every cell with
/// replacement, then finds the smallest alternative sample count `m` whose
/// mean AUROC strictly exceeds the reference mean. Unreached resamples have
/// ratio 0 in the percentile interval and are tallied in `not_reached`.
pub fn equivalence_ratio(
    table: &AucTable,
    alternative: EstimatorKind,
    reference: EstimatorKind,
    reference_n: usize,
    rounds: usize,
    seed: u64,
) -> Result<EquivalenceResult> {
    if rounds == 0 {
        return Err(invalid_arg("equivalence ratio needs at least one resample"));
    }
    let ref_values = table.get(reference, reference_n)?;
    let counts = table.sample_counts(alternative);
    if counts.is_empty() {
        return Err(invalid_arg(format!("AUROC table has no cells for {alternative}")));
    }
    let alt_values: Vec<&[f64]> = counts.iter().map(|&m| table.get(alternative, m)).collect::<Result<_>>()?;
    let stream_seed = derive_seed(seed, &[alternative as u64, reference as u64, reference_n as u64]);
    let m_values: Vec<Option<usize>> = (0..rounds as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = trajectory_rng(stream_seed, b);
            let ref_mean = resampled_mean(ref_values, &mut rng);
            counts
                .iter()
                .zip(&alt_values)
                .find(|(_, values)| resampled_mean(values, &mut rng) > ref_mean)
                .map(|(&m, _)| m)
        })
        .collect();
    let mut ratios: Vec<f64> = m_values
        .iter()
        .map(|m| m.map_or(0.0, |m| reference_n as f64 / m as f64))
        .collect();
    ratios.sort_by(f64::total_cmp);
    let row = MetricRow::new(
        format!("{alternative}_vs_{reference}{reference_n}"),
        alternative.name(),
        reference_n,
        "equivalence_ratio",
        quantile_sorted(&ratios, 0.5),
        seed,
    )
    .with_ci(quantile_sorted(&ratios, 0.025), quantile_sorted(&ratios, 0.975));
    Ok(EquivalenceResult {
        alternative,
        reference,
        reference_n,
        row,
        not_reached: m_values.iter().filter(|m| m.is_none()).count(),
        m_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub kind: EstimatorKind,
    pub n: usize,
    pub bins: Vec<CalibrationBin>,
    /// Simultaneous 95% binomial bounds on each bin's event count.
    pub bounds: Vec<(usize, usize)>,
    pub n_clipped: usize,
}

impl CalibrationReport {
    pub fn within_bounds(&self) -> bool {
        self.bins
            .iter()
            .zip(&self.bounds)
            .all(|(b, &(lo, hi))| (lo..=hi).contains(&b.events))
    }
}

/// Calibration of the first `n` timelines per patient. Bin bounds are exact
/// binomial quantiles at the bin's mean score, Bonferroni-adjusted over the
/// non-empty bins so the whole curve has 95% coverage.
pub fn calibration_at(patients: &[Patient], kind: EstimatorKind, n: usize, n_bins: usize) -> Result<CalibrationReport> {
    let mut n_clipped = 0;
    let scores: Vec<f64> = patients
        .iter()
        .map(|p| {
            let s = p.pool(kind)[..n].iter().sum::<f64>() / n as f64;
            n_clipped += (s > 1.0) as usize;
            ClipPolicy::ClipToUnit.apply(s)
        })
        .collect();
    let labels: Vec<bool> = patients.iter().map(|p| p.label).collect();
    let bins = calibration_curve(&scores, &labels, n_bins)?;
    let alpha = 0.05 / bins.len() as f64;
    let bounds = bins
        .iter()
        .map(|b| crate::stats::binomial_interval(b.count, b.mean_score, alpha))
        .collect();
    Ok(CalibrationReport {
        kind,
        n,
        bins,
        bounds,
        n_clipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    pub table: ExperimentTable,
    pub auc: AucTable,
    pub equivalence: Vec<EquivalenceResult>,
    /// Calibration of MC at the largest reference count, and of SCOPE and
    /// REACH at their median equivalence counts for it.
    pub calibration: Vec<CalibrationReport>,
    pub prevalence: f64,
    pub dropped_rounds: usize,
}

/// Simulates the cohort and evaluates every estimator at sample counts
/// `1..=n_timelines`.
///
/// Bootstrap round `r` redraws `n_timelines` pool indices per patient with
/// replacement; the estimate at `m` averages the first `m` redrawn
/// sub-values. Rounds whose labels are all equal are dropped and counted.
pub fn synthetic_cohort_eval(spec: &CohortSpec) -> Result<CohortReport> {
    spec.check()?;
    let patients: Vec<Patient> = (0..spec.n_patients)
        .into_par_iter()
        .map(|i| simulate_patient(spec, i))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = patients.iter().map(|p| p.label).collect();
    let positives = labels.iter().filter(|&&l| l).count();
    let prevalence = positives as f64 / labels.len() as f64;

    let rounds: Vec<Option<RoundCells>> = (0..spec.bootstrap_rounds as u64)
        .into_par_iter()
        .map(|r| bootstrap_round(spec, &patients, &labels, r))
        .collect::<Result<_>>()?;
    let dropped_rounds = rounds.iter().filter(|r| r.is_none()).count();

    let mut auc = AucTable::default();
    let mut briers: BTreeMap<(EstimatorKind, usize), Vec<f64>> = BTreeMap::new();
    for (kind, m, a, b) in rounds.into_iter().flatten().flatten() {
        auc.cells.entry((kind, m)).or_default().push(a);
        briers.entry((kind, m)).or_default().push(b);
    }

    let mut table = ExperimentTable::default();
    table.push(MetricRow::new("cohort", "oracle", spec.n_patients, "prevalence", prevalence, spec.seed));
    table.push(MetricRow::new("cohort", "all", spec.bootstrap_rounds, "dropped_rounds", dropped_rounds as f64, spec.seed));
    let oracle_scores: Vec<f64> = patients.iter().map(|p| p.probability).collect();
    if let Ok(a) = auroc(&oracle_scores, &labels) {
        table.push(MetricRow::new("cohort", "oracle", 0, "auroc", a, spec.seed));
    }
    for (statistic, cells) in [("auroc", &auc.cells), ("brier", &briers)] {
        for (&(kind, m), values) in cells {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let lo = quantile_sorted(&sorted, 0.025).min(mean);
            let hi = quantile_sorted(&sorted, 0.975).max(mean);
            table.push(MetricRow::new("cohort", kind.name(), m, statistic, mean, spec.seed).with_ci(lo, hi).at(m as f64));
        }
    }

    let mut equivalence = Vec::new();
    if !auc.cells.is_empty() {
        for &n in &spec.reference_ns {
            for alt in [EstimatorKind::Scope, EstimatorKind::Reach] {
                let result = equivalence_ratio(&auc, alt, EstimatorKind::Mc, n, spec.equivalence_rounds, spec.seed)?;
                let (m_lo, m_hi) = result.m_interval();
                let median_m = n as f64 / result.row.value;
                table.push(result.row.clone());
                table.push(
                    MetricRow::new(result.row.task.clone(), alt.name(), n, "equivalence_m", median_m, spec.seed)
                        .with_ci(m_lo.min(median_m), m_hi.max(median_m)),
                );
                table.push(MetricRow::new(
                    result.row.task.clone(),
                    alt.name(),
                    n,
                    "equivalence_not_reached",
                    result.not_reached as f64,
                    spec.seed,
                ));
                equivalence.push(result);
            }
        }
    }

    let mut calibration = Vec::new();
    if let Some(&n_ref) = spec.reference_ns.iter().max() {
        calibration.push(calibration_at(&patients, EstimatorKind::Mc, n_ref, spec.n_bins)?);
        for alt in [EstimatorKind::Scope, EstimatorKind::Reach] {
            let m = equivalence
                .iter()
                .find(|e| e.alternative == alt && e.reference_n == n_ref)
                .filter(|e| e.row.value > 0.0)
                .map(|e| ((n_ref as f64 / e.row.value).ceil() as usize).clamp(1, spec.n_timelines))
                .unwrap_or(spec.n_timelines);
            calibration.push(calibration_at(&patients, alt, m, spec.n_bins)?);
        }
    }
    for c in &calibration {
        let task = format!("calibration_{}", c.kind);
        table.push(MetricRow::new(&task, c.kind.name(), c.n, "calibration_within_bounds", c.within_bounds() as u8 as f64, spec.seed));
        table.push(MetricRow::new(&task, c.kind.name(), c.n, "n_clipped", c.n_clipped as f64, spec.seed));
        for b in &c.bins {
            table.push(MetricRow::new(&task, c.kind.name(), c.n, "calibration_event_rate", b.event_rate, spec.seed).at(b.mean_score));
        }
    }

    Ok(CohortReport {
        table,
        auc,
        equivalence,
        calibration,
        prevalence,
        dropped_rounds,
    })
}

type RoundCells = Vec<(EstimatorKind, usize, f64, f64)>;

/// AUROC and Brier of every (kind, m) in one bootstrap round, or `None` if
/// the round is degenerate.
fn bootstrap_round(spec: &CohortSpec, patients: &[Patient], labels: &[bool], round: u64) -> Result<Option<RoundCells>> {
    let n_t = spec.n_timelines;
    let round_seed = derive_seed(spec.seed, &[3, round]);
    // prefix sums of the redrawn pools: [kind][patient][m]
    let mut prefix = vec![vec![vec![0.0; n_t + 1]; patients.len()]; 3];
    for (i, p) in patients.iter().enumerate() {
        let mut rng = trajectory_rng(round_seed, i as u64);
        for j in 0..n_t {
            let idx = rng.random_range(0..n_t);
            for (k, kind) in EstimatorKind::ALL.iter().enumerate() {
                prefix[k][i][j + 1] = prefix[k][i][j] + p.pool(*kind)[idx];
            }
        }
    }
    let mut cells = Vec::with_capacity(3 * n_t);
    for (k, kind) in EstimatorKind::ALL.iter().enumerate() {
        for m in 1..=n_t {
            let scores: Vec<f64> = prefix[k].iter().map(|row| row[m] / m as f64).collect();
            let a = match auroc(&scores, labels) {
                Ok(a) => a,
                Err(Error::UndefinedMetric(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let clipped: Vec<f64> = scores.iter().map(|&s| ClipPolicy::ClipToUnit.apply(s)).collect();
            cells.push((*kind, m, a, brier(&clipped, labels)?));
        }
    }
    Ok(Some(cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(cells: &[(EstimatorKind, usize, &[f64])]) -> AucTable {
        AucTable {
            cells: cells.iter().map(|&(k, n, v)| ((k, n), v.to_vec())).collect(),
        }
    }

    #[test]
    fn identical_single_replicate_curves_need_one_more_sample() {
        let mut cells = Vec::new();
        let values: Vec<[f64; 1]> = (1..=10).map(|n| [0.5 + n as f64 / 100.0]).collect();
        for (i, v) in values.iter().enumerate() {
            cells.push((EstimatorKind::Mc, i + 1, &v[..]));
            cells.push((EstimatorKind::Reach, i + 1, &v[..]));
        }
        let t = table_from(&cells);
        let r = equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, 4, 20, 1).unwrap();
        assert!(r.m_values.iter().all(|&m| m == Some(5)));
        assert_eq!(r.row.value, 4.0 / 5.0);
        let r = equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, 10, 20, 1).unwrap();
        assert_eq!(r.not_reached, 20);
        assert_eq!(r.row.value, 0.0);
    }

    #[test]
    fn dominating_alternative_reaches_at_one() {
        let t = table_from(&[
            (EstimatorKind::Mc, 1, &[0.6, 0.61]),
            (EstimatorKind::Mc, 2, &[0.62, 0.63]),
            (EstimatorKind::Reach, 1, &[0.9, 0.91]),
            (EstimatorKind::Reach, 2, &[0.92, 0.93]),
        ]);
        let r = equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, 2, 50, 3).unwrap();
        assert!(r.m_values.iter().all(|&m| m == Some(1)));
        assert_eq!(r.row.value, 2.0);
        assert!(r.row.ci_low.unwrap() <= r.row.value && r.row.value <= r.row.ci_high.unwrap());
    }

    #[test]
    fn missing_cells_are_errors() {
        let t = table_from(&[(EstimatorKind::Mc, 1, &[0.6])]);
        assert!(equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, 1, 5, 0).is_err());
        assert!(equivalence_ratio(&t, EstimatorKind::Mc, EstimatorKind::Mc, 3, 5, 0).is_err());
    }

    #[test]
    fn small_cohort_runs_and_is_reproducible() {
        let spec = CohortSpec {
            n_patients: 60,
            n_timelines: 8,
            bootstrap_rounds: 4,
            equivalence_rounds: 50,
            reference_ns: vec![8],
            seed: 3,
            ..CohortSpec::default()
        };
        let a = synthetic_cohort_eval(&spec).unwrap();
        let b = synthetic_cohort_eval(&spec).unwrap();
        assert_eq!(a.table.to_json(), b.table.to_json());
        assert_eq!(a.auc.sample_counts(EstimatorKind::Reach), (1..=8).collect::<Vec<_>>());
        for r in &a.table.rows {
            if let (Some(lo), Some(hi)) = (r.ci_low, r.ci_high) {
                assert!(lo <= r.value && r.value <= hi, "{r:?}");
            }
        }
        assert_eq!(a.calibration.len(), 3);
    }

    #[test]
    fn invalid_specs_rejected() {
        let bad = CohortSpec {
            n_timelines: 0,
            ..CohortSpec::default()
        };
        assert!(bad.check().is_err());
        let bad = CohortSpec {
            reference_ns: vec![200],
            ..CohortSpec::default()
        };
        assert!(bad.check().is_err());
    }
}
