use amp2_core::stats::{
    closed_form_at_depth, closed_form_limits, iterate_recursion, monte_carlo_x, unrolled_recursion_oracle,
    InitStrategy, RunningMoments,
};
use amp2_core::{NeuronConfig, RandomSource};
use proptest::prelude::*;

// Moments of x_i computed by iterating the first two moments layer by layer,
// independently of the closed-form sums.
fn moment_iteration(cfg: &NeuronConfig, depth: usize) -> (f64, f64) {
    let (b, a, c) = (cfg.beta, cfg.alpha, cfg.c);
    let (r_mean, r_var) = (c / 2.0, c * c / 12.0);
    let mut m = b * r_mean;
    let mut v = b * b * r_var + 1.0;
    for _ in 0..depth {
        let m0 = a * m + (1.0 - a) * r_mean;
        let v0 = a * a * v + (1.0 - a).powi(2) * r_var;
        m = b * m0;
        v = b * b * v0 + 1.0;
    }
    (m / cfg.v_th, v / (cfg.v_th * cfg.v_th))
}

#[test]
fn closed_form_agrees_with_moment_iteration() {
    let cfg = NeuronConfig::default();
    for depth in 1..=32 {
        let cf = closed_form_at_depth(InitStrategy::Amp2Fusion, &cfg, depth);
        let (m, v) = moment_iteration(&cfg, depth);
        assert!((cf.mean_x - m).abs() < 1e-12, "depth {depth}: {} vs {m}", cf.mean_x);
        assert!((cf.var_x - v).abs() < 1e-12, "depth {depth}: {} vs {v}", cf.var_x);
    }
}

#[test]
fn limits_for_default_hyperparameters() {
    let cfg = NeuronConfig::default();
    let amp2 = closed_form_limits(InitStrategy::Amp2Fusion, &cfg);
    let random = closed_form_limits(InitStrategy::Random, &cfg);
    let zero = closed_form_limits(InitStrategy::Zero, &cfg);
    assert!((amp2.mean_x - 0.015625).abs() < 1e-12);
    assert!((random.mean_x - 0.0625).abs() < 1e-12);
    assert_eq!(zero.mean_x, 0.0);
    assert!((random.var_x - 1.001302).abs() < 1e-6);
    assert_eq!(zero.var_x, 1.0);
    let (_, v) = moment_iteration(&cfg, 400);
    assert!((amp2.var_x - v).abs() < 1e-12);
}

#[test]
fn monte_carlo_rejects_bad_arguments() {
    let cfg = NeuronConfig::default();
    let mut rng = RandomSource::seeded(1);
    assert!(monte_carlo_x(InitStrategy::Zero, &cfg, 0, 20_000, &mut rng).is_err());
    assert!(monte_carlo_x(InitStrategy::Zero, &cfg, 3, 100, &mut rng).is_err());
}

#[test]
fn monte_carlo_is_reproducible() {
    let cfg = NeuronConfig::default();
    let a = monte_carlo_x(InitStrategy::Amp2Fusion, &cfg, 5, 20_000, &mut RandomSource::seeded(9)).unwrap();
    let b = monte_carlo_x(InitStrategy::Amp2Fusion, &cfg, 5, 20_000, &mut RandomSource::seeded(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn monte_carlo_tracks_closed_form_at_shallow_depth() {
    let cfg = NeuronConfig::default();
    for depth in [1, 2, 4] {
        let est = monte_carlo_x(InitStrategy::Amp2Fusion, &cfg, depth, 50_000, &mut RandomSource::seeded(depth as u64))
            .unwrap();
        let cf = closed_form_at_depth(InitStrategy::Amp2Fusion, &cfg, depth);
        assert!((est.mean_hat - cf.mean_x).abs() < 4.0 * est.stderr, "{est:?}");
        assert!((est.var_hat - cf.var_x).abs() < 4.0 * est.var_stderr, "{est:?}");
    }
}

proptest! {
    #[test]
    fn merged_moments_equal_sequential(xs in prop::collection::vec(-10.0f64..10.0, 2..80), split in 0usize..80) {
        let split = split.min(xs.len());
        let mut all = RunningMoments::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (RunningMoments::default(), RunningMoments::default());
        xs[..split].iter().for_each(|&x| a.push(x));
        xs[split..].iter().for_each(|&x| b.push(x));
        let m = a.merge(&b);
        prop_assert_eq!(m.n, all.n);
        prop_assert!((m.mean - all.mean).abs() < 1e-10);
        prop_assert!((m.variance() - all.variance()).abs() < 1e-9 * (1.0 + all.variance()));
    }

    #[test]
    fn recursion_oracle_matches_iteration(
        pairs in prop::collection::vec((0.0f64..0.5, -3.0f64..3.0), 1..33),
        mp1_0 in -2.0f64..2.0,
        alpha in 0.0f64..=1.0,
        beta in 0.0f64..0.99,
    ) {
        let cfg = NeuronConfig { alpha, beta, ..Default::default() };
        let (rs, xs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let closed = unrolled_recursion_oracle(&cfg, &rs, &xs, mp1_0).unwrap();
        let iter = iterate_recursion(&cfg, &rs, &xs, mp1_0).unwrap();
        prop_assert!((closed - iter).abs() < 1e-10, "{} vs {}", closed, iter);
    }
}

#[test]
fn recursion_inputs_must_align() {
    let cfg = NeuronConfig::default();
    assert!(unrolled_recursion_oracle(&cfg, &[0.1], &[0.1, 0.2], 0.0).is_err());
    assert!(iterate_recursion(&cfg, &[], &[], 0.0).is_err());
}
