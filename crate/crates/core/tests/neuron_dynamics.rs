use amp2_core::neuron::{amp2_forward, amp2_forward_with_noise, reset_potential, run_twu_sequence};
use amp2_core::{NeuronConfig, RandomSource, Tensor, ThresholdMode};
use proptest::prelude::*;

// Reference surrogate written from the definition with plain tanh/cosh.
fn g_ref(k: f64, c: f64, x: f64) -> f64 {
    ((k * (x - c)).tanh() + (k * c).tanh()) / (2.0 * (k * c).tanh())
}

fn g_prime_ref(k: f64, c: f64, x: f64) -> f64 {
    let ch = (k * (x - c)).cosh();
    k / (ch * ch) / (2.0 * (k * c).tanh())
}

#[test]
fn surrogate_anchor_points() {
    let cfg = NeuronConfig::default();
    assert!(cfg.g(0.0).abs() <= 1e-12);
    assert!((cfg.g(cfg.c) - 0.5).abs() <= 1e-12);
    assert!((cfg.g(2.0 * cfg.c) - 1.0).abs() <= 1e-12);
}

#[test]
fn precomputed_surrogate_agrees_with_config() {
    let cfg = NeuronConfig::default();
    let sg = cfg.surrogate();
    for i in 0..=100 {
        let x = -2.0 + 0.05 * i as f64;
        assert_eq!(sg.g(x), cfg.g(x));
        assert_eq!(sg.g_prime(x), cfg.g_prime(x));
    }
}

proptest! {
    #[test]
    fn surrogate_matches_reference(k in 0.5f64..10.0, c in 0.1f64..1.0, x in -3.0f64..3.0) {
        let cfg = NeuronConfig { k, c, ..Default::default() };
        prop_assert!((cfg.g(x) - g_ref(k, c, x)).abs() < 1e-12);
        let want = g_prime_ref(k, c, x);
        prop_assert!((cfg.g_prime(x) - want).abs() <= 1e-10 * want.abs().max(1e-300));
    }

    #[test]
    fn surrogate_is_monotone(x in -3.0f64..3.0, dx in 1e-6f64..1.0) {
        let cfg = NeuronConfig::default();
        prop_assert!(cfg.g(x + dx) >= cfg.g(x));
        prop_assert!(cfg.g_prime(x) >= 0.0);
    }

    #[test]
    fn surrogate_is_antisymmetric_about_c(d in 0.0f64..3.0) {
        let cfg = NeuronConfig::default();
        let s = cfg.g(cfg.c + d) + cfg.g(cfg.c - d);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amp2_membrane_identities(xs in prop::collection::vec(-3.0f64..3.0, 1..16), seed in any::<u64>()) {
        let cfg = NeuronConfig::default();
        let x = Tensor::vector(xs.clone());
        let mut rng = RandomSource::seeded(seed);
        let (spikes, st) = amp2_forward(&cfg, &x, None, &mut rng).unwrap();
        for i in 0..xs.len() {
            let mp0 = st.mp0.data()[i];
            prop_assert!((0.0..cfg.c).contains(&mp0));
            prop_assert!((st.mp1.data()[i] - (cfg.beta * mp0 + xs[i])).abs() < 1e-12);
            let fire = st.mp1.data()[i] / cfg.v_th - cfg.c >= 0.0;
            prop_assert_eq!(spikes.data()[i], if fire { 1.0 } else { 0.0 });
        }
        prop_assert_eq!(&st.mp2, &reset_potential(&st.mp1, &spikes).unwrap());
    }

    #[test]
    fn amp2_handoff_blends_previous_membrane(prev in -2.0f64..2.0, r in 0.0f64..0.5, x in -2.0f64..2.0) {
        let cfg = NeuronConfig::default();
        let (_, st) = amp2_forward_with_noise(
            &cfg,
            &Tensor::vector(vec![x]),
            Some(&Tensor::vector(vec![prev])),
            &Tensor::vector(vec![r]),
        ).unwrap();
        let mp0 = cfg.alpha * prev + (1.0 - cfg.alpha) * r;
        prop_assert!((st.mp0.data()[0] - mp0).abs() < 1e-12);
        prop_assert!((st.mp1.data()[0] - (cfg.beta * mp0 + x)).abs() < 1e-12);
    }

    #[test]
    fn twu_matches_scalar_loop(xs in prop::collection::vec(-1.0f64..2.5, 1..12)) {
        let cfg = NeuronConfig::twu();
        let inputs: Vec<Tensor> = xs.iter().map(|&x| Tensor::vector(vec![x])).collect();
        let (train, state) = run_twu_sequence(&cfg, &inputs).unwrap();
        let mut h = 0.0;
        let mut u = 0.0;
        for (t, &x) in xs.iter().enumerate() {
            u = h + x;
            let s = if u >= cfg.v_th { 1.0 } else { 0.0 };
            prop_assert_eq!(train[t].data()[0], s);
            h = cfg.beta * u * (1.0 - s) + cfg.v_th * s;
        }
        prop_assert!((state.u.data()[0] - u).abs() < 1e-12);
        prop_assert!((state.h.data()[0] - h).abs() < 1e-12);
        prop_assert_eq!(state.t, xs.len());
    }
}

#[test]
fn threshold_modes_differ_by_c() {
    let x = Tensor::vector(vec![-0.1, 0.0, 0.49, 0.5]);
    let zero = Tensor::zeros(&[4]);
    let plain = NeuronConfig {
        spike_threshold_mode: ThresholdMode::Plain,
        ..Default::default()
    };
    let (s, _) = amp2_forward_with_noise(&plain, &x, None, &zero).unwrap();
    assert_eq!(s.data(), &[0.0, 1.0, 1.0, 1.0]);
    let (s, _) = amp2_forward_with_noise(&NeuronConfig::default(), &x, None, &zero).unwrap();
    assert_eq!(s.data(), &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn invalid_configs_are_rejected() {
    for bad in [
        NeuronConfig { k: 0.0, ..Default::default() },
        NeuronConfig { c: -0.1, ..Default::default() },
        NeuronConfig { beta: 1.5, ..Default::default() },
        NeuronConfig { alpha: -0.2, ..Default::default() },
        NeuronConfig { v_th: 0.0, ..Default::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn policy_mismatch_is_an_error() {
    let x = Tensor::vector(vec![1.0]);
    assert!(amp2_forward(&NeuronConfig::twu(), &x, None, &mut RandomSource::seeded(0)).is_err());
    assert!(run_twu_sequence(&NeuronConfig::default(), &[x]).is_err());
}
