use mmn_core::data::{synth_generate, AugmentationParams, Dataset, SynthSpec};
use mmn_core::model::checkpoint::Checkpoint;
use mmn_core::model::{ModelConfig, MmnModel};
use mmn_core::train::{
    adamw_step, adamw_update, assemble_batch, clip_grad_norm, lr_at, AdamHyper, AdamState, EpochRecord, TrainConfig,
    Trainer,
};
use mmn_core::MmnError;

fn toy_data(seed: u64) -> Dataset {
    synth_generate(&SynthSpec { classes: 3, per_class: 4, joints: 5, raw_len: 12, seed, ..SynthSpec::default() }).unwrap()
}

fn toy_trainer(seed: u64) -> Trainer {
    let model = MmnModel::new(ModelConfig { init_seed: seed, ..ModelConfig::toy() }).unwrap();
    let cfg = TrainConfig { batch_size: 4, epochs: 3, warmup_epochs: 1, base_lr: 1e-3, seed, ..TrainConfig::default() };
    Trainer::new(model, cfg, AugmentationParams::default()).unwrap()
}

#[test]
fn schedule_reference_points() {
    let cfg = TrainConfig::default();
    assert_eq!(lr_at(0.0, &cfg), 1e-7);
    assert_eq!(lr_at(20.0, &cfg), 1e-4);
    assert!((lr_at(10.0, &cfg) - (1e-7 + 1e-4) / 2.0).abs() < 1e-18);
    let cycle = 100.0 / 3.0;
    for c in 0..3 {
        let start = 20.0 + c as f64 * cycle;
        assert!((lr_at(start, &cfg) - 1e-4).abs() < 1e-15, "cycle {c} restarts at base_lr");
        assert!((lr_at(start + cycle / 2.0, &cfg) - 5.05e-5).abs() < 1e-15);
        let lowest = (1..=1000)
            .map(|i| lr_at(start + cycle * (1.0 - 1e-9 * i as f64), &cfg))
            .fold(f64::INFINITY, f64::min);
        assert!((lowest - 1e-6).abs() < 1e-12, "cycle {c} minimum {lowest}");
    }
    assert_eq!(lr_at(120.0, &cfg), 1e-6);
    assert_eq!(lr_at(500.0, &cfg), 1e-6);
}

#[test]
fn schedule_is_continuous_through_warmup_and_monotone_within_cycles() {
    let cfg = TrainConfig::default();
    let mut prev = lr_at(0.0, &cfg);
    for i in 1..=2000 {
        let lr = lr_at(i as f64 * 0.01, &cfg);
        assert!(lr > prev && lr - prev < 1e-6);
        prev = lr;
    }
    let mut prev = lr_at(20.0, &cfg);
    for i in 1..300 {
        let lr = lr_at(20.0 + i as f64 * 0.1, &cfg);
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn config_invariants_enforced() {
    let base = TrainConfig::default();
    assert!(base.validate().is_ok());
    for bad in [
        TrainConfig { warmup_start_lr: 1e-3, ..base.clone() },
        TrainConfig { min_lr: 1.0, ..base.clone() },
        TrainConfig { cosine_cycles: 0, ..base.clone() },
        TrainConfig { batch_size: 0, ..base.clone() },
        TrainConfig { grad_clip: Some(0.0), ..base.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(MmnError::Config(_))));
    }
}

fn hyper(lr: f64, wd: f64) -> AdamHyper {
    AdamHyper { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: wd }
}

#[test]
fn adamw_hand_executed_oracle() {
    let (mut m, mut v) = ([0.0], [0.0]);
    let mut theta = [1.0];
    adamw_update(&mut theta, &[1.0], &mut m, &mut v, 1, &hyper(0.1, 0.0));
    assert!((theta[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);

    let mut theta = [1.0];
    adamw_update(&mut theta, &[0.0], &mut [0.0], &mut [0.0], 1, &hyper(0.1, 0.0));
    assert_eq!(theta[0], 1.0);

    let mut theta = [3.0];
    adamw_update(&mut theta, &[0.0], &mut [0.0], &mut [0.0], 1, &hyper(0.1, 0.1));
    assert!((theta[0] - 3.0 * 0.99).abs() < 1e-15);
}

#[test]
fn adamw_without_decay_is_adam() {
    let grads = [[0.3, -1.2, 4.0], [-0.5, 0.0, 2.5], [1e-3, 7.0, -0.1]];
    let mut theta = [0.5, -0.25, 2.0];
    let (mut m, mut v) = ([0.0; 3], [0.0; 3]);
    let mut reference = theta;
    let (mut rm, mut rv) = ([0.0f64; 3], [0.0f64; 3]);
    for (t, g) in grads.iter().enumerate() {
        let step = t as u64 + 1;
        adamw_update(&mut theta, g, &mut m, &mut v, step, &hyper(0.01, 0.0));
        // textbook Adam
        for i in 0..3 {
            rm[i] = 0.9 * rm[i] + 0.1 * g[i];
            rv[i] = 0.999 * rv[i] + 0.001 * g[i] * g[i];
            let mh = rm[i] / (1.0 - 0.9f64.powi(step as i32));
            let vh = rv[i] / (1.0 - 0.999f64.powi(step as i32));
            reference[i] -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
    }
    assert_eq!(theta, reference);
}

#[test]
fn non_finite_gradient_aborts_and_names_parameter() {
    let mut model = MmnModel::new(ModelConfig::toy()).unwrap();
    let before: Vec<Vec<f64>> = model.store.iter().map(|p| p.value.clone()).collect();
    let mut grads: Vec<Vec<f64>> = model.store.iter().map(|p| vec![0.1; p.numel()]).collect();
    let victim = model.store.iter().nth(5).unwrap().name.clone();
    grads[5][0] = f64::NAN;
    let mut state = AdamState::new(&model.store);
    match adamw_step(&mut model.store, &grads, &mut state, &hyper(0.1, 0.1)) {
        Err(MmnError::NonFiniteGradient { param }) => assert_eq!(param, victim),
        other => panic!("expected non-finite gradient error, got {other:?}"),
    }
    let after: Vec<Vec<f64>> = model.store.iter().map(|p| p.value.clone()).collect();
    assert_eq!(before, after);
    assert_eq!(state.step, 0);
}

#[test]
fn clipping_bounds_global_norm() {
    let mut g = vec![vec![3.0], vec![4.0]];
    assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
    assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    let mut small = vec![vec![0.1]];
    clip_grad_norm(&mut small, 1.0);
    assert_eq!(small[0][0], 0.1);
}

#[test]
fn small_step_decreases_loss_on_repeated_batch() {
    for seed in 0..10 {
        let data = toy_data(100 + seed);
        let model = MmnModel::new(ModelConfig { init_seed: seed, ..ModelConfig::toy() }).unwrap();
        let cfg = TrainConfig { weight_decay: 0.0, seed, ..TrainConfig::default() };
        let mut t = Trainer::new(model, cfg, AugmentationParams::disabled()).unwrap();
        let idx: Vec<usize> = (0..data.len()).collect();
        let batch = assemble_batch(&data, &idx, 8, None).unwrap();
        let (first, _) = t.train_step(&batch, 1e-5).unwrap();
        let (second, _) = t.train_step(&batch, 1e-5).unwrap();
        assert!(second < first, "seed {seed}: {first} -> {second}");
    }
}

#[test]
fn class_count_mismatch_is_rejected_before_training() {
    let data = synth_generate(&SynthSpec { classes: 4, per_class: 2, joints: 5, raw_len: 8, ..SynthSpec::default() }).unwrap();
    let mut t = toy_trainer(0);
    let before = t.model.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>();
    assert!(matches!(t.run(&data, None, None, |_| {}), Err(MmnError::Config(_))));
    assert_eq!(t.state.adam.step, 0);
    assert_eq!(before, t.model.store.iter().map(|p| p.value.clone()).collect::<Vec<_>>());
}

#[test]
fn fixed_seed_runs_are_bit_identical() {
    let data = toy_data(3);
    let trace = |seed| {
        let mut t = toy_trainer(seed);
        t.run(&data, Some(&data), None, |_| {}).unwrap()
    };
    let a = trace(11);
    let b = trace(11);
    let bits = |log: &[EpochRecord]| log.iter().map(|r| r.train_loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a, b);
    assert_ne!(bits(&a), bits(&trace(12)));
}

#[test]
fn run_logs_schedule_and_writes_checkpoints() {
    let data = toy_data(4);
    let dir = tempfile::tempdir().unwrap();
    let mut t = toy_trainer(1);
    t.cfg.keep_epoch_checkpoints = true;
    let mut seen = 0;
    let log = t.run(&data, Some(&data), Some(dir.path()), |_| seen += 1).unwrap();
    assert_eq!(seen, 3);
    for r in &log {
        assert_eq!(r.lr, lr_at(r.epoch as f64, &t.cfg));
        assert!(r.train_loss.is_finite() && (0.0..=1.0).contains(&r.train_top1));
        assert!(r.val_f1_mean.is_some());
    }
    let text = std::fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
    let parsed: Vec<EpochRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed, log);
    for name in ["last.ckpt", "best.ckpt", "epoch_000.ckpt", "epoch_002.ckpt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let last = Checkpoint::load(dir.path().join("last.ckpt")).unwrap();
    assert_eq!(last.meta("epoch"), Some("3"));
}

#[test]
fn resume_reproduces_next_step() {
    let data = toy_data(5);
    let mut t = toy_trainer(2);
    t.cfg.epochs = 1;
    t.run(&data, Some(&data), None, |_| {}).unwrap();

    let bytes = t.checkpoint().to_bytes();
    let mut resumed =
        Trainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), None, None).unwrap();
    assert_eq!(resumed.cfg, t.cfg);
    assert_eq!(resumed.aug, t.aug);
    assert_eq!(resumed.state, t.state);

    let idx: Vec<usize> = (0..4).collect();
    let batch = assemble_batch(&data, &idx, 8, Some((&t.aug, 2, 1))).unwrap();
    let probe = assemble_batch(&data, &idx, 8, None).unwrap();
    assert_eq!(
        t.model.predict(&probe.frames).unwrap().data(),
        resumed.model.predict(&probe.frames).unwrap().data()
    );
    for _ in 0..2 {
        let a = t.train_step(&batch, 1e-4).unwrap();
        let b = resumed.train_step(&batch, 1e-4).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    // continuing a run from the checkpoint matches an uninterrupted run
    let mut straight = toy_trainer(2);
    straight.cfg.epochs = 2;
    let full = straight.run(&data, None, None, |_| {}).unwrap();
    let mut first = toy_trainer(2);
    first.cfg.epochs = 1;
    first.run(&data, None, None, |_| {}).unwrap();
    let mut second = Trainer::from_checkpoint(&first.checkpoint(), None, None).unwrap();
    second.cfg.epochs = 2;
    let tail = second.run(&data, None, None, |_| {}).unwrap();
    assert_eq!(tail.len(), 1);
    assert_eq!(tail[0], full[1]);
}

#[test]
fn batch_assembly_ignores_batch_composition() {
    let data = toy_data(6);
    let aug = AugmentationParams::default();
    let whole = assemble_batch(&data, &[0, 1, 2, 3], 8, Some((&aug, 9, 4))).unwrap();
    let single = assemble_batch(&data, &[2], 8, Some((&aug, 9, 4))).unwrap();
    let per = whole.frames.data().len() / 4;
    assert_eq!(&whole.frames.data()[2 * per..3 * per], single.frames.data());
    let other_epoch = assemble_batch(&data, &[2], 8, Some((&aug, 9, 5))).unwrap();
    assert_ne!(single.frames.data(), other_epoch.frames.data());
    let clean = assemble_batch(&data, &[2], 8, None).unwrap();
    assert_eq!(clean.frames.data(), assemble_batch(&data, &[2], 8, None).unwrap().frames.data());
}
