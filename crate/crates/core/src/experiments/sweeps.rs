//! Estimator variance sweeps over random chains and the per-estimator
//! distribution experiment.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::chains::{random_chain, spontaneity, ChainConstruction, ChainSpec};
use super::table::{ExperimentTable, MetricRow, PointFailure};
use crate::error::{invalid_arg, Result};
use crate::estimators::{mc_sub, reach_sub, sample_pool, scope_sub, EstimatorKind};
use crate::oracle::{exact_moments, exact_outcome_probability};
use crate::rng::derive_seed;
use crate::seqmodel::{MarkovModel, SamplingMode};
use crate::stats::{compensated_sum, mean_and_variance, variance_with_se};

pub const DEFAULT_N_STATES: usize = 11;
pub const DEFAULT_HORIZON: usize = 20;
pub const DEFAULT_REPLICATIONS: usize = 10_000;

const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Probability,
    Spontaneity,
    SampleCount,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Probability => "probability",
            SweepAxis::Spontaneity => "spontaneity",
            SweepAxis::SampleCount => "sample_count",
        }
    }

    /// 0.05..0.95 by 0.05, 0.1..1.0 by 0.1, and powers of two up to 128.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepAxis::Probability => (1..=19).map(|i| i as f64 / 20.0).collect(),
            SweepAxis::Spontaneity => (1..=10).map(|i| i as f64 / 10.0).collect(),
            SweepAxis::SampleCount => (0..=7).map(|i| (1u32 << i) as f64).collect(),
        }
    }

    /// Base chain for this axis: 11 states, 20 steps, equal-transition
    /// construction; fully hazardous for the probability axis and P = 0.5
    /// otherwise.
    pub fn default_base(self, seed: u64) -> ChainSpec {
        let (spontaneity, target) = match self {
            SweepAxis::Probability => (1.0, 0.5),
            SweepAxis::Spontaneity => (1.0, 0.5),
            SweepAxis::SampleCount => (0.5, 0.5),
        };
        ChainSpec {
            n_states: DEFAULT_N_STATES,
            spontaneity,
            target_probability: Some(target),
            horizon_steps: DEFAULT_HORIZON,
            seed,
            construction: ChainConstruction::EqualTransition,
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(SweepAxis::Probability),
            "spontaneity" => Ok(SweepAxis::Spontaneity),
            "sample_count" | "samples" | "n" => Ok(SweepAxis::SampleCount),
            other => Err(invalid_arg(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// Per-replication estimates of all three estimators, each the mean of `n`
/// sub-values. MC and SCOPE share one pool of standard-mode trajectories.
pub(crate) fn replicate_estimates(
    model: &MarkovModel,
    n: usize,
    replications: usize,
    seed: u64,
) -> Result<BTreeMap<EstimatorKind, Vec<f64>>> {
    let scenario = model.scenario();
    let standard = sample_pool(
        scenario,
        SamplingMode::Standard,
        n * replications,
        derive_seed(seed, &[0]),
        |t| Ok((mc_sub(&t)?, scope_sub(&t)?)),
    )?;
    let excluded = sample_pool(
        scenario,
        SamplingMode::OutcomeExcluded,
        n * replications,
        derive_seed(seed, &[1]),
        |t| reach_sub(&t),
    )?;
    let chunk_means = |values: Vec<f64>| -> Vec<f64> {
        values
            .chunks_exact(n)
            .map(|c| compensated_sum(c.iter().copied()) / n as f64)
            .collect()
    };
    let (mc, scope): (Vec<f64>, Vec<f64>) = standard.into_iter().unzip();
    Ok(BTreeMap::from([
        (EstimatorKind::Mc, chunk_means(mc)),
        (EstimatorKind::Scope, chunk_means(scope)),
        (EstimatorKind::Reach, chunk_means(excluded)),
    ]))
}

fn point_spec(axis: SweepAxis, base: &ChainSpec, x: f64) -> ChainSpec {
    let mut spec = *base;
    match axis {
        SweepAxis::Probability => spec.target_probability = Some(x),
        SweepAxis::Spontaneity => spec.spontaneity = x,
        SweepAxis::SampleCount => {}
    }
    spec
}

/// Empirical and exact estimator variances at each grid point.
///
/// Every point emits, per kind, `variance` (with a normal-approximation
/// 95% interval), `exact_variance` from the DP moments, and `mean`; the
/// sample-count axis also emits `variance_x_n`. Rows of kind `oracle` carry
/// the exact outcome probability and the chain's spontaneity. A point whose
/// chain cannot be built is recorded in `failures` and the sweep continues.
pub fn variance_sweep(
    axis: SweepAxis,
    grid: &[f64],
    base: &ChainSpec,
    replications: usize,
    seed: u64,
) -> Result<ExperimentTable> {
    if grid.is_empty() {
        return Err(invalid_arg("sweep grid is empty"));
    }
    if replications < 2 {
        return Err(invalid_arg("a variance needs at least 2 replications"));
    }
    if axis == SweepAxis::SampleCount && grid.iter().any(|&x| x < 1.0 || x.fract() != 0.0) {
        return Err(invalid_arg("sample counts must be positive integers"));
    }
    let mut table = ExperimentTable::default();
    for (i, &x) in grid.iter().enumerate() {
        let task = format!("{}={x}", axis.name());
        let point_seed = derive_seed(seed, &[i as u64]);
        let spec = point_spec(axis, base, x);
        let model = match random_chain(&spec) {
            Ok(m) => m,
            Err(e) => {
                table.failures.push(PointFailure {
                    task: task.clone(),
                    error: e.to_string(),
                });
                table.push(MetricRow::new(task, "all", 0, "failed", f64::NAN, point_seed).at(x));
                continue;
            }
        };
        let n = if axis == SweepAxis::SampleCount { x as usize } else { 1 };
        let estimates = replicate_estimates(&model, n, replications, point_seed)?;
        // exact moments come from the DP, which has no size guard
        let exact = exact_moments(&model);
        table.push(MetricRow::new(&task, "oracle", n, "probability", exact.probability, point_seed).at(x));
        table.push(MetricRow::new(&task, "oracle", n, "spontaneity", spontaneity(&model), point_seed).at(x));
        for (kind, values) in &estimates {
            let (var, se) = variance_with_se(values);
            let (mean, _) = mean_and_variance(values);
            let mean_se = (var / values.len() as f64).sqrt();
            let k = kind.name();
            table.push(
                MetricRow::new(&task, k, n, "variance", var, point_seed)
                    .with_ci((var - Z95 * se).max(0.0), var + Z95 * se)
                    .at(x),
            );
            table.push(MetricRow::new(&task, k, n, "exact_variance", exact.variance(*kind) / n as f64, point_seed).at(x));
            table.push(
                MetricRow::new(&task, k, n, "mean", mean, point_seed)
                    .with_ci(mean - Z95 * mean_se, mean + Z95 * mean_se)
                    .at(x),
            );
            if axis == SweepAxis::SampleCount {
                let nf = n as f64;
                table.push(
                    MetricRow::new(&task, k, n, "variance_x_n", var * nf, point_seed)
                        .with_ci((var - Z95 * se).max(0.0) * nf, (var + Z95 * se) * nf)
                        .at(x),
                );
            }
        }
    }
    Ok(table)
}

/// Standard error of each `variance` row, recovered from its interval.
pub fn variance_std_error(row: &MetricRow) -> Option<f64> {
    row.ci_high.map(|hi| (hi - row.value) / Z95)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionExperiment {
    pub oracle_probability: f64,
    pub samples_per_estimate: usize,
    pub seed: u64,
    pub estimates: BTreeMap<EstimatorKind, Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub kind: EstimatorKind,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub seed: u64,
}

impl DistributionExperiment {
    /// Equal-width histogram over `[0, max(1, largest estimate)]`; the last
    /// bin is closed on the right.
    pub fn histogram(&self, kind: EstimatorKind, n_bins: usize) -> Vec<HistogramBin> {
        let values = &self.estimates[&kind];
        let top = values.iter().cloned().fold(1.0, f64::max);
        let width = top / n_bins as f64;
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            counts[((v / width) as usize).min(n_bins - 1)] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(b, count)| HistogramBin {
                kind,
                lower: b as f64 * width,
                upper: (b + 1) as f64 * width,
                count,
                seed: self.seed,
            })
            .collect()
    }

    pub fn write_histogram_csv<W: Write>(&self, out: W, n_bins: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for kind in self.estimates.keys() {
            for bin in self.histogram(*kind, n_bins) {
                w.serialize(bin)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Mean, variance and the fraction of estimates above 1, per kind.
    pub fn table(&self) -> ExperimentTable {
        let task = format!("distribution_n={}", self.samples_per_estimate);
        let n = self.samples_per_estimate;
        let mut table = ExperimentTable::default();
        table.push(MetricRow::new(&task, "oracle", n, "probability", self.oracle_probability, self.seed));
        for (kind, values) in &self.estimates {
            let (mean, var) = mean_and_variance(values);
            let half = Z95 * (var / values.len() as f64).sqrt();
            let above = values.iter().filter(|&&v| v > 1.0).count() as f64 / values.len() as f64;
            table.push(MetricRow::new(&task, kind.name(), n, "mean", mean, self.seed).with_ci(mean - half, mean + half));
            table.push(MetricRow::new(&task, kind.name(), n, "variance", var, self.seed));
            table.push(MetricRow::new(&task, kind.name(), n, "fraction_above_one", above, self.seed));
        }
        table
    }
}

/// Repeats each estimator `n_estimates` times, each estimate the mean of
/// `samples_per_estimate` sub-values.
pub fn estimate_distribution_experiment(
    spec: &ChainSpec,
    n_estimates: usize,
    samples_per_estimate: usize,
    seed: u64,
) -> Result<DistributionExperiment> {
    if n_estimates == 0 || samples_per_estimate == 0 {
        return Err(invalid_arg("n_estimates and samples_per_estimate must be positive"));
    }
    let model = random_chain(spec)?;
    Ok(DistributionExperiment {
        oracle_probability: exact_outcome_probability(&model),
        samples_per_estimate,
        seed,
        estimates: replicate_estimates(&model, samples_per_estimate, n_estimates, seed)?,
    })
}
