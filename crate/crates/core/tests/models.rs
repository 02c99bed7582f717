use vocoder::autodiff::{Graph, Tensor};
use vocoder::config::TrainConfig;
use vocoder::discriminators::{FreqDiscriminator, TimeDiscriminator};
use vocoder::dsp::MelSpectrogram;
use vocoder::generator::{resstack, upsample_block, Generator};

fn mel_tensor(b: usize, frames: usize, seed: u64) -> Tensor<f64> {
    vocoder::autodiff::gradcheck::random_tensor(seed, &[b, frames, 80], 2.0)
}

#[test]
fn output_length_is_240_per_frame() {
    let cfg = TrainConfig::default();
    for residual in [true, false] {
        let gen = Generator::<f32>::new(&cfg.generator, residual, 1).unwrap();
        for frames in [1, 7, 20, 101] {
            let mel = MelSpectrogram::new(mel_tensor(1, frames, 2).reshape([frames, 80]).unwrap(), 240).unwrap();
            let y = gen.infer(&mel).unwrap();
            assert_eq!(y.len(), 240 * frames);
            assert!(y.iter().all(|v| v.abs() <= 1.0));
        }
    }
}

#[test]
fn each_stage_upsamples_by_its_factor_and_resstacks_keep_length() {
    let cfg = TrainConfig::default();
    let gen = Generator::<f64>::new(&cfg.generator, true, 1).unwrap();
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let t = 5;
    let x = g
        .leaf(&vocoder::autodiff::gradcheck::random_tensor(1, &[1, cfg.generator.pre_channels(), t], 1.0));
    let mut x = x;
    let mut len = t;
    for (i, &f) in cfg.generator.up_factors.iter().enumerate() {
        x = upsample_block(&mut g, &p, &format!("up{i}"), x, f, true).unwrap();
        len *= f;
        assert_eq!(g.shape(x)[2], len, "stage {i}");
        x = resstack(&mut g, &p, &format!("res{i}"), x, &cfg.generator.resstack_dilations).unwrap();
        assert_eq!(g.shape(x)[2], len, "resstack {i}");
    }
    assert_eq!(cfg.generator.up_factors, vec![8, 6, 5]);
    assert_eq!(len, 240 * t);
}

#[test]
fn gradient_reaches_every_generator_parameter() {
    let cfg = TrainConfig::default();
    let gen = Generator::<f64>::new(&cfg.generator, true, 3).unwrap();
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, true);
    let m = g.leaf(&mel_tensor(2, 3, 4));
    let y = gen.forward(&mut g, &p, m).unwrap();
    let s = g.square(y).unwrap();
    let l = g.mean(s).unwrap();
    g.backward(l).unwrap();
    for (name, v) in p.vars() {
        let grad = g.grad(v).unwrap_or_else(|| panic!("{name} has no gradient"));
        assert!(grad.iter().any(|&x| x != 0.0), "{name} gradient is all zero");
    }
}

#[test]
fn wrong_mel_width_names_the_layer() {
    let cfg = TrainConfig::default();
    let gen = Generator::<f32>::new(&cfg.generator, true, 3).unwrap();
    let mut g = Graph::new();
    let p = gen.params().bind(&mut g, false);
    let m = g.leaf(&Tensor::<f32>::zeros([1, 4, 40]));
    let err = gen.forward(&mut g, &p, m).unwrap_err().to_string();
    assert!(err.starts_with("pre:"), "{err}");
}

#[test]
fn inference_is_deterministic_and_batch_independent() {
    let cfg = TrainConfig::default();
    let gen = Generator::<f32>::new(&cfg.generator, true, 9).unwrap();
    let a = mel_tensor(1, 6, 1).cast::<f32>();
    let b = mel_tensor(1, 6, 2).cast::<f32>();
    let run = |items: &[&Tensor<f32>]| {
        let mut data = Vec::new();
        for t in items {
            data.extend_from_slice(t.data());
        }
        let mut g = Graph::new();
        let p = gen.params().bind(&mut g, false);
        let m = g.constant([items.len(), 6, 80], data).unwrap();
        let y = gen.forward(&mut g, &p, m).unwrap();
        g.value(y).to_vec()
    };
    let ab = run(&[&a, &b]);
    let ba = run(&[&b, &a]);
    assert_eq!(ab, run(&[&a, &b]));
    let n = 6 * 240;
    assert_eq!(&ab[..n], &ba[n..]);
    assert_eq!(&ab[n..], &ba[..n]);
}

#[test]
fn same_seed_same_weights() {
    let cfg = TrainConfig::default();
    let a = Generator::<f32>::new(&cfg.generator, true, 5).unwrap();
    let b = Generator::<f32>::new(&cfg.generator, true, 5).unwrap();
    let c = Generator::<f32>::new(&cfg.generator, true, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn time_discriminator_scales_and_features() {
    let cfg = TrainConfig::default();
    let d = TimeDiscriminator::<f64>::new(&cfg.time_disc, 1).unwrap();
    let mut g = Graph::new();
    let p = d.params().bind(&mut g, false);
    let x = g.leaf(&vocoder::autodiff::gradcheck::random_tensor(2, &[2, 1, 4800], 0.5));
    let outs = d.forward(&mut g, &p, x).unwrap();
    assert_eq!(outs.len(), 3);
    for o in &outs {
        assert_eq!(g.shape(o.logits)[0], 2);
        assert_eq!(g.shape(o.logits)[1], 1);
        assert_eq!(o.features.len(), cfg.time_disc.n_strided + 2);
    }
    let short = g.leaf(&Tensor::<f64>::zeros([1, 1, 100]));
    assert!(d.forward(&mut g, &p, short).is_err());
}

#[test]
fn frequency_discriminator_gives_nonzero_input_gradient() {
    let cfg = TrainConfig::default();
    let d = FreqDiscriminator::<f64>::new(&cfg.freq_disc, 1).unwrap();
    let mut g = Graph::new();
    let p = d.params().bind(&mut g, false);
    let x = g.leaf(&vocoder::autodiff::gradcheck::random_tensor(3, &[2, 1, 4800], 0.5).with_requires_grad(true));
    let out = d.forward(&mut g, &p, x).unwrap();
    assert_eq!(g.shape(out.logits), &[2, 1]);
    let l = g.mean(out.logits).unwrap();
    g.backward(l).unwrap();
    let grad = g.grad(x).unwrap();
    assert!(grad.iter().any(|&v| v != 0.0));
    assert!(grad.iter().all(|v| v.is_finite()));
}
