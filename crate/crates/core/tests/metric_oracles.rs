use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqrisk::experiments::{auroc, brier, calibration_curve, equivalence_ratio, AucTable};
use seqrisk::rng::{derive_seed, trajectory_rng};
use seqrisk::stats::{binomial_interval, quantile_sorted};
use seqrisk::EstimatorKind;

fn pairwise_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn auroc_matches_pairwise_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..100 {
        let n = rng.random_range(2..120);
        // coarse grids force many ties
        let levels = rng.random_range(2..12);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let a = auroc(&scores, &labels).unwrap();
        assert!((a - pairwise_auroc(&scores, &labels)).abs() < 1e-12, "case {case}");
    }
}

#[test]
fn auroc_of_labels_and_of_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels: Vec<bool> = (0..4000).map(|_| rng.random::<bool>()).collect();
    let as_scores: Vec<f64> = labels.iter().map(|&l| l as u8 as f64).collect();
    assert_eq!(auroc(&as_scores, &labels).unwrap(), 1.0);
    let noise: Vec<f64> = (0..4000).map(|_| rng.random()).collect();
    let a = auroc(&noise, &labels).unwrap();
    let n1 = labels.iter().filter(|&&l| l).count() as f64;
    let n0 = 4000.0 - n1;
    let se = ((n1 + n0 + 1.0) / (12.0 * n1 * n0)).sqrt();
    assert!((a - 0.5).abs() < 4.0 * se, "{a}");
}

#[test]
fn oracle_scores_are_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scores: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = scores.iter().map(|&p| rng.random::<f64>() < p).collect();
    let bins = calibration_curve(&scores, &labels, 10).unwrap();
    let alpha = 0.05 / bins.len() as f64;
    for b in &bins {
        let (lo, hi) = binomial_interval(b.count, b.mean_score, alpha);
        assert!((lo..=hi).contains(&b.events), "{b:?} outside [{lo}, {hi}]");
    }
    let br = brier(&scores, &labels).unwrap();
    // expected Brier of calibrated uniform scores is E[p(1-p)] = 1/6
    assert!((br - 1.0 / 6.0).abs() < 0.02, "{br}");
}

fn fixed_table() -> AucTable {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut t = AucTable::default();
    for n in 1..=30usize {
        let centre_mc = 0.80 - 0.1 / n as f64;
        let centre_reach = 0.80 - 0.02 / n as f64;
        for (kind, centre) in [(EstimatorKind::Mc, centre_mc), (EstimatorKind::Reach, centre_reach)] {
            let reps = (0..40).map(|_| centre + rng.random_range(-0.01..0.01)).collect();
            t.cells.insert((kind, n), reps);
        }
    }
    t
}

/// Percentile bootstrap written from scratch against the documented draw
/// order: per resample, the reference cell first, then alternative cells in
/// ascending sample count until one qualifies.
fn reference_bootstrap(t: &AucTable, n: usize, rounds: usize, seed: u64) -> (f64, f64, f64, usize) {
    let stream_seed = derive_seed(seed, &[EstimatorKind::Reach as u64, EstimatorKind::Mc as u64, n as u64]);
    let mean_of_resample = |v: &[f64], rng: &mut seqrisk::rng::StreamRng| {
        let mut s = 0.0;
        for _ in 0..v.len() {
            s += v[rng.random_range(0..v.len())];
        }
        s / v.len() as f64
    };
    let mut ratios = Vec::new();
    let mut missing = 0;
    for b in 0..rounds as u64 {
        let mut rng = trajectory_rng(stream_seed, b);
        let reference = mean_of_resample(&t.cells[&(EstimatorKind::Mc, n)], &mut rng);
        let mut found = None;
        for m in 1..=30usize {
            if mean_of_resample(&t.cells[&(EstimatorKind::Reach, m)], &mut rng) > reference {
                found = Some(m);
                break;
            }
        }
        match found {
            Some(m) => ratios.push(n as f64 / m as f64),
            None => {
                missing += 1;
                ratios.push(0.0);
            }
        }
    }
    ratios.sort_by(f64::total_cmp);
    (
        quantile_sorted(&ratios, 0.5),
        quantile_sorted(&ratios, 0.025),
        quantile_sorted(&ratios, 0.975),
        missing,
    )
}

#[test]
fn equivalence_ratio_matches_reference_bootstrap() {
    let t = fixed_table();
    for n in [5, 10, 30] {
        let r = equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, n, 500, 4).unwrap();
        let (median, lo, hi, missing) = reference_bootstrap(&t, n, 500, 4);
        assert_eq!(r.row.value, median, "n {n}");
        assert_eq!(r.row.ci_low, Some(lo));
        assert_eq!(r.row.ci_high, Some(hi));
        assert_eq!(r.not_reached, missing);
        assert!(lo <= median && median <= hi);
    }
}

#[test]
fn equivalence_ratio_dominated_alternative_exceeds_one() {
    let t = fixed_table();
    let r = equivalence_ratio(&t, EstimatorKind::Reach, EstimatorKind::Mc, 10, 300, 1).unwrap();
    assert!(r.row.ci_low.unwrap() > 1.0, "{:?}", r.row);
}
