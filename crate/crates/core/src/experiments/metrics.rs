//! Discrimination and calibration metrics for binary outcomes.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.is_empty() {
        return Err(invalid_arg("metric of empty input"));
    }
    if scores.len() != labels.len() {
        return Err(invalid_arg(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(invalid_arg(format!("score {s} is not a number")));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann-Whitney statistic; tied scores
/// between a positive and a negative count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUROC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // average ranks over tie groups, ranks starting at 1
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k]).count();
        positive_rank_sum += avg_rank * positives as f64;
        i = j;
    }
    let u = positive_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

fn check_unit_scores(scores: &[f64]) -> Result<()> {
    match scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        Some(s) => Err(invalid_arg(format!("score {s} is outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Mean squared difference between score and label.
pub fn brier(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    check_unit_scores(scores)?;
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| {
            let d = s - if l { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(total / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_score: f64,
    pub event_rate: f64,
    pub count: usize,
    pub events: usize,
}

/// Equal-width bins on [0, 1]; empty bins are omitted. A score of exactly 1
/// falls in the last bin.
pub fn calibration_curve(scores: &[f64], labels: &[bool], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    check_lengths(scores, labels)?;
    check_unit_scores(scores)?;
    if n_bins == 0 {
        return Err(invalid_arg("n_bins must be positive"));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    let mut events = vec![0usize; n_bins];
    for (&s, &l) in scores.iter().zip(labels) {
        let b = ((s * n_bins as f64) as usize).min(n_bins - 1);
        sums[b] += s;
        counts[b] += 1;
        events[b] += l as usize;
    }
    Ok((0..n_bins)
        .filter(|&b| counts[b] > 0)
        .map(|b| CalibrationBin {
            lower: b as f64 / n_bins as f64,
            upper: (b + 1) as f64 / n_bins as f64,
            mean_score: sums[b] / counts[b] as f64,
            event_rate: events[b] as f64 / counts[b] as f64,
            count: counts[b],
            events: events[b],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_basics() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        let labels = [true, false, true, true, false];
        let as_scores: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        assert_eq!(auroc(&as_scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn auroc_single_class_is_undefined() {
        assert!(matches!(auroc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(auroc(&[], &[]).is_err());
    }

    #[test]
    fn brier_values() {
        assert_eq!(brier(&[1.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.25);
        assert!(brier(&[1.2], &[true]).is_err());
    }

    #[test]
    fn calibration_bins() {
        let bins = calibration_curve(&[0.05, 0.15, 0.12, 1.0], &[false, true, false, true], 10).unwrap();
        assert_eq!(bins.len(), 3);
        assert_eq!(bins[1].count, 2);
        assert_eq!(bins[1].event_rate, 0.5);
        assert_eq!(bins[2].lower, 0.9);
        assert!(calibration_curve(&[], &[], 10).is_err());
    }
}
