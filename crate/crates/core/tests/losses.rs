use proptest::prelude::*;
use vocoder::autodiff::Graph;
use vocoder::config::{StftConfig, StftLossConfig, TimeLossConfig, TrainConfig};
use vocoder::discriminators::{FreqDiscriminator, TimeDiscriminator};
use vocoder::losses::{self, GeneratorLossConfig};

type LossFn = fn(&mut Graph<f64>, vocoder::autodiff::Var, vocoder::autodiff::Var) -> f64;

fn small_stft() -> StftLossConfig {
    StftLossConfig {
        resolutions: vec![(64, 16, 48), (128, 32, 96), (32, 8, 24)],
    }
}

fn small_time() -> TimeLossConfig {
    TimeLossConfig {
        scales: vec![(1, 1), (24, 12), (48, 24), (96, 48)],
    }
}

fn value(g: &Graph<f64>, v: vocoder::autodiff::Var) -> f64 {
    g.value(v)[0]
}

/// Every reconstruction loss, by name.
fn all_losses() -> Vec<(&'static str, LossFn)> {
    vec![
        ("spectral_convergence", |g, x, y| {
            let v = losses::spectral_convergence(g, x, y, &StftConfig::new(64, 16, 48)).unwrap();
            value(g, v)
        }),
        ("log_magnitude", |g, x, y| {
            let v = losses::log_magnitude_loss(g, x, y, &StftConfig::new(64, 16, 48)).unwrap();
            value(g, v)
        }),
        ("multi_res_stft", |g, x, y| {
            let v = losses::multi_res_stft_loss(g, x, y, &small_stft()).unwrap();
            value(g, v)
        }),
        ("energy", |g, x, y| {
            let v = losses::time_domain_losses(g, x, y, (24, 12)).unwrap().0;
            value(g, v)
        }),
        ("mean", |g, x, y| {
            let v = losses::time_domain_losses(g, x, y, (24, 12)).unwrap().1;
            value(g, v)
        }),
        ("phase", |g, x, y| {
            let v = losses::time_domain_losses(g, x, y, (24, 12)).unwrap().2;
            value(g, v)
        }),
        ("total_time", |g, x, y| {
            let v = losses::total_time_loss(g, x, y, &small_time()).unwrap();
            value(g, v)
        }),
    ]
}

fn eval(f: LossFn, x: &[f64], y: &[f64]) -> f64 {
    let mut g = Graph::new();
    let xv = g.constant([x.len()], x.to_vec()).unwrap();
    let yv = g.constant([y.len()], y.to_vec()).unwrap();
    f(&mut g, xv, yv)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identity_is_exactly_zero_and_pairs_are_nonnegative(
        x in prop::collection::vec(-1.0f64..1.0, 256),
        y in prop::collection::vec(-1.0f64..1.0, 256),
    ) {
        for (name, f) in all_losses() {
            prop_assert_eq!(eval(f, &x, &x), 0.0, "{} on (x, x)", name);
            let v = eval(f, &x, &y);
            prop_assert!(v >= 0.0 && v.is_finite(), "{} gave {}", name, v);
        }
    }

    #[test]
    fn time_losses_are_symmetric(
        x in prop::collection::vec(-1.0f64..1.0, 200),
        y in prop::collection::vec(-1.0f64..1.0, 200),
    ) {
        for (name, f) in all_losses().into_iter().skip(3) {
            let a = eval(f, &x, &y);
            let b = eval(f, &y, &x);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}", name);
        }
    }
}

#[test]
fn silent_estimate_has_unit_spectral_convergence() {
    let x: Vec<f64> = (0..256).map(|n| (n as f64 * 0.3).sin()).collect();
    let y = vec![0.0; 256];
    let v = eval(all_losses()[0].1, &x, &y);
    assert!((v - 1.0).abs() < 1e-12);
}

#[test]
fn mismatched_lengths_are_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.constant([256], vec![0.0; 256]).unwrap();
    let y = g.constant([255], vec![0.0; 255]).unwrap();
    assert!(losses::multi_res_stft_loss(&mut g, x, y, &small_stft()).is_err());
    assert!(losses::total_time_loss(&mut g, x, y, &small_time()).is_err());
}

#[test]
fn hinge_at_zero_logits_is_two_per_discriminator_output() {
    let mut g = Graph::<f64>::new();
    let z: Vec<_> = (0..4).map(|_| g.constant([2, 1, 5], vec![0.0; 10]).unwrap()).collect();
    let d = losses::hinge_d_loss(&mut g, &z, &z).unwrap();
    assert_eq!(value(&g, d), 8.0);
    let gl = losses::hinge_g_loss(&mut g, &z).unwrap();
    assert_eq!(value(&g, gl), 0.0);
}

#[test]
fn objective_total_is_weighted_sum_and_absent_terms_are_omitted() {
    let cfg = TrainConfig::default();
    let td = TimeDiscriminator::<f64>::new(&cfg.time_disc, 1).unwrap();
    let fd = FreqDiscriminator::<f64>::new(&cfg.freq_disc, 2).unwrap();
    let x_data = vocoder::autodiff::gradcheck::random_tensor(1, &[1, 1, 2400], 0.5);
    let y_data = vocoder::autodiff::gradcheck::random_tensor(2, &[1, 1, 2400], 0.5);
    let loss_cfg = GeneratorLossConfig {
        weights: cfg.weights.clone(),
        stft: Some(cfg.stft_loss.clone()),
        time: Some(cfg.time_loss.clone()),
    };
    for with_freq in [true, false] {
        let mut g = Graph::new();
        let x = g.leaf(&x_data);
        let y = g.leaf(&y_data);
        let tp = td.params().bind(&mut g, false);
        let fp = fd.params().bind(&mut g, false);
        let freq = with_freq.then_some((&fd, &fp));
        let obj = losses::generator_total_loss(&mut g, x, y, Some((&td, &tp)), freq, &loss_cfg).unwrap();
        let names: Vec<_> = obj.terms.iter().map(|t| t.name).collect();
        assert_eq!(names.contains(&"adv_freq"), with_freq);
        let sum: f64 = obj.terms.iter().map(|t| t.weight * value(&g, t.value)).sum();
        assert!((sum - obj.total_value(&g)).abs() <= 1e-9);
    }
    assert_eq!(
        (cfg.weights.lambda1, cfg.weights.lambda2, cfg.weights.lambda3, cfg.weights.lambda4),
        (1.0, 1.0, 1.0, 20.0)
    );
}

#[test]
fn discriminator_loss_ignores_generator_path() {
    let cfg = TrainConfig::default();
    let td = TimeDiscriminator::<f64>::new(&cfg.time_disc, 1).unwrap();
    let mut g = Graph::new();
    let x = g.leaf(&vocoder::autodiff::gradcheck::random_tensor(1, &[1, 1, 1200], 0.5));
    let y = g.leaf(&vocoder::autodiff::gradcheck::random_tensor(2, &[1, 1, 1200], 0.5).with_requires_grad(true));
    let p = td.params().bind(&mut g, true);
    let obj = losses::discriminator_total_loss(&mut g, x, y, (&td, &p), None).unwrap();
    g.backward(obj.total).unwrap();
    assert!(g.grad(y).is_none());
    assert!(p.vars().all(|(_, v)| g.grad(v).is_some()));
}
