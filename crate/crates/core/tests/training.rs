use vocoder::checkpoint;
use vocoder::config::{Ablation, TrainConfig};
use vocoder::data::Dataset;
use vocoder::manifest::RunManifest;
use vocoder::session;
use vocoder::smoke::speech_like_clip;
use vocoder::train::{StepReport, Trainer};

fn data(cfg: &TrainConfig) -> Dataset {
    let clips = (0..3).map(|i| (format!("c{i}"), speech_like_clip(10 + i, 9600))).collect();
    Dataset::from_clips(clips, cfg).unwrap()
}

fn small() -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.seed = 77;
    cfg.steps = 8;
    cfg
}

/// Everything but wall-clock time.
fn key(r: &StepReport) -> (u64, u64, Vec<(&'static str, u64)>) {
    (
        r.step,
        r.total.to_bits(),
        r.components.iter().map(|(k, v)| (*k, v.to_bits())).collect(),
    )
}

fn run(cfg: &TrainConfig, steps: usize) -> (Trainer<f32>, Vec<StepReport>) {
    let ds = data(cfg);
    let mut tr = Trainer::<f32>::new(cfg).unwrap();
    let reports = (0..steps).map(|_| tr.step_on(&ds).unwrap()).collect();
    (tr, reports)
}

#[test]
fn same_seed_same_trajectory() {
    let cfg = small();
    let (_, a) = run(&cfg, 4);
    let (_, b) = run(&cfg, 4);
    assert_eq!(a.iter().map(key).collect::<Vec<_>>(), b.iter().map(key).collect::<Vec<_>>());
    let mut other = cfg.clone();
    other.seed = 78;
    let (_, c) = run(&other, 1);
    assert_ne!(key(&a[0]), key(&c[0]));
}

#[test]
fn reported_total_is_weighted_component_sum() {
    let mut cfg = small();
    cfg.precision = vocoder::Precision::F64;
    let ds = data(&cfg);
    let mut tr = Trainer::<f64>::new(&cfg).unwrap();
    for _ in 0..3 {
        let r = tr.step_on(&ds).unwrap();
        assert!((r.weighted_generator_sum(&cfg) - r.total).abs() <= 1e-9);
        assert!(r.all_finite());
        assert_eq!(r.components.len(), 6);
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = small();
    let ds = data(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let mut tr = Trainer::<f32>::new(&cfg).unwrap();
    for _ in 0..3 {
        tr.step_on(&ds).unwrap();
    }
    let path = dir.path().join("c.tfv");
    checkpoint::save(&path, &tr).unwrap();
    let straight: Vec<_> = (0..3).map(|_| key(&tr.step_on(&ds).unwrap())).collect();
    let mut back = checkpoint::load::<f32>(&path).unwrap();
    assert_eq!(back.step, 3);
    let resumed: Vec<_> = (0..3).map(|_| key(&back.step_on(&ds).unwrap())).collect();
    assert_eq!(straight, resumed);
    assert_eq!(tr.generator, back.generator);
}

#[test]
fn checkpoint_load_then_save_is_byte_identical() {
    let cfg = small();
    let (tr, _) = run(&cfg, 2);
    let bytes = checkpoint::to_container(&tr).unwrap().to_bytes();
    let back = checkpoint::from_container::<f32>(&vocoder::container::Container::from_bytes(&bytes).unwrap()).unwrap();
    assert_eq!(checkpoint::to_container(&back).unwrap().to_bytes(), bytes);
}

#[test]
fn corrupted_checkpoint_is_a_checksum_error() {
    let cfg = small();
    let tr = Trainer::<f32>::new(&cfg).unwrap();
    let mut bytes = checkpoint::to_container(&tr).unwrap().to_bytes();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    let err = vocoder::container::Container::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, vocoder::VocoderError::Checksum { .. }), "{err}");
}

#[test]
fn disabled_freq_discriminator_is_absent_and_excluded() {
    let cfg = small().with_ablation(Ablation::P3);
    let (tr, reports) = run(&cfg, 2);
    assert!(tr.freq_disc.is_none());
    for r in &reports {
        assert!(!r.components.contains_key("adv_freq"));
        assert!(!r.components.contains_key("d_freq"));
        assert!((r.weighted_generator_sum(&cfg) - r.total).abs() <= 1e-4 * r.total.abs().max(1.0));
    }
}

#[test]
fn frozen_paths_do_not_move() {
    // During warm-up the discriminators receive no update.
    let mut cfg = small();
    cfg.g_warmup_steps = 100;
    let fresh = Trainer::<f32>::new(&cfg).unwrap();
    let (tr, reports) = run(&cfg, 2);
    assert_eq!(tr.time_disc, fresh.time_disc);
    assert_eq!(tr.freq_disc, fresh.freq_disc);
    assert_ne!(tr.generator, fresh.generator);
    assert!(reports.iter().all(|r| !r.components.contains_key("d_time")));
}

#[test]
fn zero_adversarial_weights_match_reconstruction_only_training() {
    let mut zero = small();
    zero.weights.lambda1 = 0.0;
    zero.weights.lambda3 = 0.0;
    let mut recon = zero.clone();
    recon.g_warmup_steps = 1000;
    let (a, _) = run(&zero, 3);
    let (b, _) = run(&recon, 3);
    assert_eq!(a.generator, b.generator);
    assert_ne!(a.time_disc, b.time_disc);
}

#[test]
fn every_ablation_trains_finitely() {
    for ab in Ablation::ALL {
        let cfg = small().with_ablation(ab);
        let (tr, reports) = run(&cfg, 3);
        assert!(reports.iter().all(StepReport::all_finite), "{ab:?}");
        assert!(tr.generator.params().all_finite());
        assert_eq!(tr.generator.residual_upsample(), cfg.ablation.use_residual_upsample);
    }
}

#[test]
fn session_writes_log_checkpoints_and_resumes() {
    let mut cfg = small();
    cfg.steps = 4;
    cfg.checkpoint_every = 2;
    let ds = data(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let manifest = RunManifest::new(&cfg, &ds);

    let mut tr = Trainer::<f32>::new(&cfg).unwrap();
    let mut seen = Vec::new();
    let summary = session::run(&mut tr, &ds, dir.path(), &manifest, |r| seen.push(key(r))).unwrap();
    assert_eq!(summary.last_step, 4);
    assert_eq!(summary.checkpoints.len(), 2);
    let log = std::fs::read_to_string(dir.path().join(session::LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.starts_with("step,wall_ms,total,adv_time,stft,adv_freq,time,d_time,d_freq"));

    let mut back = checkpoint::load::<f32>(session::checkpoint_path(dir.path(), 2)).unwrap();
    let mut again = Vec::new();
    session::run(&mut back, &ds, dir.path(), &manifest, |r| again.push(key(r))).unwrap();
    assert_eq!(again, seen[2..]);
    let log = std::fs::read_to_string(dir.path().join(session::LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 5);
    let saved = RunManifest::load(dir.path().join(session::MANIFEST_FILE)).unwrap();
    assert_eq!(saved.config, cfg);
}
