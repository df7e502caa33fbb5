//! Per-trajectory sub-estimators and their aggregation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::rng::trajectory_rng;
use crate::seqmodel::{sample_trajectory, SamplingMode, Scenario, SequenceModel, Trajectory};
use crate::stats::mean_and_variance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mc,
    Scope,
    Reach,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Mc, EstimatorKind::Scope, EstimatorKind::Reach];

    /// MC and SCOPE run on ordinary timelines; REACH needs outcome-free ones.
    pub fn mode(self) -> SamplingMode {
        match self {
            EstimatorKind::Mc | EstimatorKind::Scope => SamplingMode::Standard,
            EstimatorKind::Reach => SamplingMode::OutcomeExcluded,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Mc => "mc",
            EstimatorKind::Scope => "scope",
            EstimatorKind::Reach => "reach",
        }
    }

    /// Value of this kind's sub-estimator on `traj`.
    pub fn sub_value(self, traj: &Trajectory) -> Result<f64> {
        match self {
            EstimatorKind::Mc => mc_sub(traj),
            EstimatorKind::Scope => scope_sub(traj),
            EstimatorKind::Reach => reach_sub(traj),
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mc" => Ok(EstimatorKind::Mc),
            "scope" => Ok(EstimatorKind::Scope),
            "reach" => Ok(EstimatorKind::Reach),
            other => Err(invalid_arg(format!("unknown estimator kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicy {
    /// Raw sub-values; SCOPE stays unbiased but may exceed 1.
    #[default]
    None,
    ClipToUnit,
}

impl ClipPolicy {
    pub fn apply(self, value: f64) -> f64 {
        match self {
            ClipPolicy::None => value,
            ClipPolicy::ClipToUnit => value.min(1.0),
        }
    }
}

fn require_mode(kind: EstimatorKind, traj: &Trajectory) -> Result<()> {
    let expected = kind.mode();
    if traj.mode == expected {
        Ok(())
    } else {
        Err(Error::ModeMismatch {
            kind,
            expected,
            found: traj.mode,
        })
    }
}

/// Indicator that the outcome occurred before the end of the timeline.
pub fn mc_sub(traj: &Trajectory) -> Result<f64> {
    require_mode(EstimatorKind::Mc, traj)?;
    Ok(match traj.hit_index {
        Some(hit) if hit < traj.end_index => 1.0,
        _ => 0.0,
    })
}

/// Sum of outcome hazards up to and including the step where the outcome was
/// drawn, or over the whole timeline if it never was.
pub fn scope_sub(traj: &Trajectory) -> Result<f64> {
    require_mode(EstimatorKind::Scope, traj)?;
    let upto = match traj.hit_index {
        Some(hit) => hit + 1,
        None => traj.hazards.len(),
    };
    Ok(traj.hazards[..upto.min(traj.hazards.len())].iter().sum())
}

/// Probability that at least one Bernoulli(h_t) trial along an outcome-free
/// backbone succeeds: `1 - prod(1 - h_t)`.
pub fn reach_sub(traj: &Trajectory) -> Result<f64> {
    require_mode(EstimatorKind::Reach, traj)?;
    if traj.degenerate {
        return Ok(1.0);
    }
    // log-space survival keeps precision when every hazard is tiny
    let log_survival: f64 = traj.hazards.iter().map(|&h| (-h).ln_1p()).sum();
    Ok((-log_survival.exp_m1()).clamp(0.0, 1.0))
}

/// Aggregated estimate over `n` sub-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: EstimatorKind,
    pub n: usize,
    pub seed: u64,
    pub mean: f64,
    /// Unbiased sample variance of the sub-values (divisor `n - 1`; 0 when `n = 1`).
    pub sample_variance: f64,
    pub std_error: f64,
    pub clip_policy: ClipPolicy,
    pub n_clipped: usize,
    /// Sub-values above 1 before any clipping.
    pub n_above_one: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_values: Vec<f64>,
}

impl EstimateReport {
    /// Builds a report from raw sub-values, applying `clip` to SCOPE values.
    pub fn from_sub_values(
        kind: EstimatorKind,
        seed: u64,
        raw: Vec<f64>,
        clip: ClipPolicy,
    ) -> Result<Self> {
        if raw.is_empty() {
            return Err(invalid_arg("an estimate needs at least one sub-value"));
        }
        let n_above_one = raw.iter().filter(|&&v| v > 1.0).count();
        let (sub_values, n_clipped) = if kind == EstimatorKind::Scope && clip == ClipPolicy::ClipToUnit {
            (raw.iter().map(|&v| clip.apply(v)).collect(), n_above_one)
        } else {
            (raw, 0)
        };
        let n = sub_values.len();
        let (mean, sample_variance) = mean_and_variance(&sub_values);
        Ok(Self {
            kind,
            n,
            seed,
            mean,
            sample_variance,
            std_error: (sample_variance / n as f64).sqrt(),
            clip_policy: if kind == EstimatorKind::Scope { clip } else { ClipPolicy::None },
            n_clipped,
            n_above_one,
            sub_values,
        })
    }

    /// Writes the sub-values as consecutive little-endian `f64`s.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for v in &self.sub_values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_sidecar(path: &Path) -> Result<Vec<f64>> {
        let bytes = std::fs::read(path)?;
        if bytes.len() % 8 != 0 {
            return Err(invalid_arg(format!(
                "sidecar {} has {} bytes, not a multiple of 8",
                path.display(),
                bytes.len()
            )));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }
}

/// Samples `n` trajectories in `mode` (trajectory `i` on stream `i` of
/// `seed`) and maps each through `f`, in index order.
pub fn sample_pool<M, T, F>(
    scenario: Scenario<'_, M>,
    mode: SamplingMode,
    n: usize,
    seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    M: SequenceModel + ?Sized,
    T: Send,
    F: Fn(Trajectory) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(seed, i);
            f(sample_trajectory(scenario, mode, &mut rng)?)
        })
        .collect()
}

/// Draws `n` trajectories in the mode `kind` requires and aggregates its
/// sub-estimator.
pub fn estimate<M: SequenceModel + ?Sized>(
    scenario: Scenario<'_, M>,
    kind: EstimatorKind,
    n: usize,
    seed: u64,
    clip: ClipPolicy,
) -> Result<EstimateReport> {
    if n == 0 {
        return Err(invalid_arg("n must be at least 1"));
    }
    let values = sample_pool(scenario, kind.mode(), n, seed, |t| kind.sub_value(&t))?;
    EstimateReport::from_sub_values(kind, seed, values, clip)
}

/// MC and SCOPE computed on one shared pool of standard-mode trajectories.
pub fn paired_estimates<M: SequenceModel + ?Sized>(
    scenario: Scenario<'_, M>,
    n: usize,
    seed: u64,
    clip: ClipPolicy,
) -> Result<(EstimateReport, EstimateReport)> {
    if n == 0 {
        return Err(invalid_arg("n must be at least 1"));
    }
    let pairs = sample_pool(scenario, SamplingMode::Standard, n, seed, |t| {
        Ok((mc_sub(&t)?, scope_sub(&t)?))
    })?;
    let (mc, scope): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((
        EstimateReport::from_sub_values(EstimatorKind::Mc, seed, mc, ClipPolicy::None)?,
        EstimateReport::from_sub_values(EstimatorKind::Scope, seed, scope, clip)?,
    ))
}
