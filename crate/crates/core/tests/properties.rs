mod common;

use proptest::prelude::*;
use seqrisk::oracle::{dispersion_probability, outcome_probability_within};
use seqrisk::{
    estimate, restricted_distribution, sample_trajectory, ClipPolicy, EstimateReport, EstimatorKind, MarkovModel,
    SamplingMode,
};

fn distribution() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (2usize..8)
        .prop_flat_map(|n| (prop::collection::vec(0.0f64..1.0, n), 0..n))
        .prop_filter("some mass", |(w, _)| w.iter().sum::<f64>() > 1e-6)
        .prop_map(|(w, o)| {
            let total: f64 = w.iter().sum();
            (w.into_iter().map(|x| x / total).collect(), o)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn restricted_distribution_closes((dist, o) in distribution()) {
        prop_assume!(dist[o] < 1.0 - 1e-9);
        let r = restricted_distribution(&dist, o).unwrap();
        prop_assert_eq!(r[o], 0.0);
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (j, (&p, &q)) in dist.iter().zip(&r).enumerate() {
            if j != o {
                prop_assert!((q * (1.0 - dist[o]) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn same_seed_same_estimate(model_seed in 0u64..1000, seed in any::<u64>(), kind_ix in 0usize..3) {
        let m = common::random_small_model(model_seed);
        let kind = EstimatorKind::ALL[kind_ix];
        let a = estimate(m.scenario(), kind, 64, seed, ClipPolicy::None).unwrap();
        let b = estimate(m.scenario(), kind, 64, seed, ClipPolicy::None).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn trajectories_respect_horizon(model_seed in 0u64..1000, stream in 0u64..1000, excluded in any::<bool>()) {
        let m = common::random_small_model(model_seed);
        let mode = if excluded { SamplingMode::OutcomeExcluded } else { SamplingMode::Standard };
        let mut rng = seqrisk::rng::trajectory_rng(3, stream);
        let t = sample_trajectory(m.scenario(), mode, &mut rng).unwrap();
        prop_assert!(t.end_index <= m.steps());
        prop_assert!(t.tokens.len() <= m.steps());
        if let Some(k) = t.hit_index {
            prop_assert!(!excluded);
            prop_assert_eq!(t.tokens[k], m.outcome_state());
            prop_assert_eq!(t.end_index, k + 1);
        }
        if excluded {
            prop_assert!(!t.tokens.contains(&m.outcome_state()));
        }
        for kind in EstimatorKind::ALL.into_iter().filter(|k| k.mode() == mode) {
            let v = kind.sub_value(&t).unwrap();
            prop_assert!(v >= 0.0);
            if kind != EstimatorKind::Scope {
                prop_assert!(v <= 1.0);
            }
        }
    }

    #[test]
    fn dispersion_is_monotone_in_elevated_risk(n in 1usize..60, base in 0.0f64..0.5, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = dispersion_probability(n, base, lo).unwrap();
        let p_hi = dispersion_probability(n, base, hi).unwrap();
        prop_assert!(p_hi >= p_lo - 1e-12);
    }

    #[test]
    fn outcome_probability_monotone_in_horizon(model_seed in 0u64..1000, h in 0usize..15) {
        let m = common::random_small_model(model_seed);
        prop_assert!(outcome_probability_within(&m, h + 1) >= outcome_probability_within(&m, h) - 1e-15);
    }

    #[test]
    fn clipping_never_raises_values(raw in prop::collection::vec(0.0f64..3.0, 1..40)) {
        let clipped = EstimateReport::from_sub_values(EstimatorKind::Scope, 0, raw.clone(), ClipPolicy::ClipToUnit).unwrap();
        let plain = EstimateReport::from_sub_values(EstimatorKind::Scope, 0, raw.clone(), ClipPolicy::None).unwrap();
        prop_assert!(clipped.mean <= plain.mean + 1e-15);
        prop_assert!(clipped.sub_values.iter().all(|&v| v <= 1.0));
        prop_assert_eq!(clipped.n_clipped, raw.iter().filter(|&&v| v > 1.0).count());
        prop_assert_eq!(plain.n_above_one, clipped.n_clipped);
    }

    #[test]
    fn model_json_round_trips(model_seed in 0u64..1000) {
        let m = common::random_small_model(model_seed);
        let back = MarkovModel::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let m = common::random_small_model(17);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                EstimatorKind::ALL.map(|k| estimate(m.scenario(), k, 5000, 99, ClipPolicy::None).unwrap())
            })
    };
    assert_eq!(run(1), run(4));
}
