use mmn_autograd::{gradcheck, BatchNormState, Tensor};
use mmn_core::model::block::{gated_parts, GConv};
use mmn_core::model::checkpoint::Checkpoint;
use mmn_core::model::{
    aggregate_gated, count_params_flops, gconv, modulate, modulate_ablation, skate_embedding, standardize,
    temporal_features, ForwardCtx, MmnModel, ModelConfig, ModulationFactors, ModulationStrategy,
};
use mmn_core::MmnError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(-scale..scale)).collect(), shape).unwrap()
}

fn toy_frames(cfg: &ModelConfig, batch: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand_tensor(&mut rng, &[batch, cfg.seq_len, cfg.joints, cfg.in_channels], 1.0)
}

/// Per-channel mean and standard deviation over the time and joint axes.
fn channel_stats(x: &Tensor) -> Vec<(f64, f64)> {
    let c = *x.shape().last().unwrap();
    let n = x.numel() / c;
    (0..c)
        .map(|ch| {
            let vals: Vec<f64> = x.data().iter().skip(ch).step_by(c).cloned().collect();
            let mu = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64;
            (mu, var.sqrt())
        })
        .collect()
}

#[test]
fn full_toy_model_gradcheck() {
    let cfg = ModelConfig::toy();
    let model = MmnModel::new(cfg.clone()).unwrap();
    let frames = toy_frames(&cfg, 2, 1);
    let labels = [0usize, 2];
    let inputs: Vec<Tensor> = model.store.iter().map(|p| Tensor::new(p.value.clone(), &p.shape).unwrap()).collect();
    let report = gradcheck(
        |params| {
            let mut ctx = ForwardCtx::with_tensors(params.to_vec(), true, 0);
            let logits = model.forward(&frames, &mut ctx).map_err(|e| match e {
                MmnError::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
            logits.cross_entropy(&labels)
        },
        &inputs,
        1e-5,
    )
    .unwrap();
    let worst = report
        .per_input
        .iter()
        .zip(model.store.iter())
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|(e, p)| format!("{} ({e:.2e})", p.name))
        .unwrap();
    assert!(report.passes(1e-4), "worst parameter {worst}");
    // every parameter actually receives gradient
    for (g, p) in report.analytic.iter().zip(model.store.iter()) {
        assert!(g.iter().any(|v| *v != 0.0), "{} has an all-zero gradient", p.name);
    }
}

#[test]
fn modulation_identity_is_standardization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[2, 6, 5, 4], 3.0).add_scalar(1.7).unwrap();
    let zeros = Tensor::zeros(&[2, 6, 5, 4]);
    let f = ModulationFactors { gamma: zeros.clone(), beta: zeros };
    let y = modulate(&x, &f, 1e-5).unwrap();
    for b in 0..2 {
        let per = Tensor::new(y.data()[b * 120..(b + 1) * 120].to_vec(), &[6, 5, 4]).unwrap();
        for (mu, sd) in channel_stats(&per) {
            assert!(mu.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6, "mean {mu} std {sd}");
        }
    }
}

#[test]
fn gamma_minus_one_leaves_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = rand_tensor(&mut rng, &[5, 3, 4], 2.0);
    let beta = rand_tensor(&mut rng, &[5, 3, 4], 0.9);
    let f = ModulationFactors { gamma: Tensor::full(&[5, 3, 4], -1.0), beta: beta.clone() };
    let y = modulate(&x, &f, 1e-5).unwrap();
    assert_eq!(y.data(), beta.data());
}

#[test]
fn modulated_mean_is_mean_of_beta_when_gamma_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&mut rng, &[7, 4, 2], 1.0);
    let beta = rand_tensor(&mut rng, &[7, 4, 2], 0.5);
    let f = ModulationFactors { gamma: Tensor::zeros(&[7, 4, 2]), beta: beta.clone() };
    let y = modulate(&x, &f, 1e-5).unwrap();
    let ym = channel_stats(&y);
    let bm = channel_stats(&beta);
    for (a, b) in ym.iter().zip(&bm) {
        assert!((a.0 - b.0).abs() < 1e-12);
    }
}

#[test]
fn ablation_strategies_reduce_to_standardization() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_tensor(&mut rng, &[6, 3, 4], 2.0);
    let x_hat = standardize(&x, 1e-5).unwrap();
    let zeros = Tensor::zeros(&[6, 3, 4]);
    let g = rand_tensor(&mut rng, &[6, 3, 4], 0.9);
    // no_scale ignores gamma, no_shift ignores beta
    let f = ModulationFactors { gamma: g.clone(), beta: zeros.clone() };
    assert_eq!(modulate_ablation(&x, &f, ModulationStrategy::NoScale, None, 1e-5).unwrap().data(), x_hat.data());
    let f = ModulationFactors { gamma: zeros.clone(), beta: g.clone() };
    assert_eq!(modulate_ablation(&x, &f, ModulationStrategy::NoShift, None, 1e-5).unwrap().data(), x_hat.data());

    // identity-initialized recombination passes the feature lanes through
    let q = 4;
    let mut w = vec![0.0; 2 * q * q];
    for i in 0..q {
        w[i * q + i] = 1.0;
    }
    let w = Tensor::new(w, &[2 * q, q]).unwrap();
    let b = Tensor::zeros(&[q]);
    let f = ModulationFactors { gamma: zeros.clone(), beta: g.clone() };
    let y = modulate_ablation(&x, &f, ModulationStrategy::Concat, Some((&w, &b)), 1e-5).unwrap();
    assert_eq!(y.data(), x_hat.data());
    assert!(modulate_ablation(&x, &f, ModulationStrategy::Concat, None, 1e-5).is_err());

    let f = ModulationFactors { gamma: g.clone(), beta: g.clone() };
    let add = modulate_ablation(&x, &f, ModulationStrategy::Add, None, 1e-5).unwrap();
    let expect = x_hat.add(&g).unwrap().add(&g).unwrap();
    assert_eq!(add.data(), expect.data());
    let had = modulate_ablation(&x, &f, ModulationStrategy::Hadamard, None, 1e-5).unwrap();
    assert_eq!(had.data(), x_hat.mul(&g).unwrap().data());
}

fn traced_factors(model: &MmnModel, frames: &Tensor) -> Vec<Tensor> {
    let traces = model.trace(frames).unwrap();
    assert_eq!(traces.len(), model.cfg.stages * model.cfg.blocks);
    traces
        .into_iter()
        .flat_map(|t| {
            let mut v = Vec::new();
            for (g, b) in t.msm.into_iter().chain(t.mtm) {
                v.push(g);
                v.push(b);
            }
            v
        })
        .collect()
}

#[test]
fn factor_fields_are_inside_the_open_unit_interval() {
    let cfg = ModelConfig::toy();
    let mut model = MmnModel::new(cfg.clone()).unwrap();
    // large inputs and a narrow running variance push tanh toward saturation
    for b in model.bn.iter_mut() {
        let c = b.state.channels();
        b.state = BatchNormState::from_parts(vec![0.0; c], vec![1e-4; c]);
    }
    let frames = toy_frames(&cfg, 2, 9).mul_scalar(50.0).unwrap();
    let fields = traced_factors(&model, &frames);
    assert_eq!(fields.len(), 4 * cfg.stages * cfg.blocks);
    for f in fields {
        assert!(f.data().iter().all(|v| v.abs() < 1.0));
    }
}

#[test]
fn zero_motion_gives_zero_factors_in_every_block() {
    let cfg = ModelConfig { seq_len: 16, joints: 6, channels: 16, blocks: 2, stages: 3, ..ModelConfig::toy() };
    let mut model = MmnModel::new(cfg.clone()).unwrap();
    for b in model.bn.iter_mut() {
        let c = b.state.channels();
        b.state = BatchNormState::from_parts(vec![0.0; c], vec![1.0; c]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (l, blocks) in model.stages.iter().enumerate() {
        let t = cfg.stage_len(l);
        let frame = rand_tensor(&mut rng, &[1, 1, cfg.joints, cfg.channels], 1.0);
        let x = frame.add(&Tensor::zeros(&[1, t, cfg.joints, cfg.channels])).unwrap();
        for block in blocks {
            let mut ctx = ForwardCtx::eval(&model.store).unwrap();
            ctx.enable_tracing();
            let env = mmn_core::model::block::BlockEnv { cfg: &cfg, bn: &model.bn };
            block.forward(&x, &env, &mut ctx).unwrap();
            let trace = ctx.take_traces().pop().unwrap();
            for (g, b) in trace.msm.into_iter().chain(trace.mtm) {
                assert!(g.data().iter().chain(b.data()).all(|v| *v == 0.0), "stage {l} block {}", block.index);
            }
        }
    }
}

#[test]
fn channel_split_partitions_width() {
    for c in [4usize, 8, 16, 64] {
        let cfg = ModelConfig { channels: c, ..ModelConfig::toy() };
        let [sk, mo, te] = cfg.channel_split();
        assert_eq!((sk.start, sk.end, mo.end, te.end), (0, c / 4, 3 * c / 4, c));
        assert_eq!((mo.start, te.start), (sk.end, mo.end));
        assert_eq!(mo.len(), 2 * sk.len());
    }
}

#[test]
fn skate_embedding_slices_are_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (t, v, c) = (9, 5, 6);
    let f_se = rand_tensor(&mut rng, &[v, c], 1.0);
    let ste = skate_embedding(t, &f_se).unwrap();
    assert_eq!(ste.shape(), [t, v, c]);
    for ch in 0..c {
        let m = nalgebra::DMatrix::from_fn(t, v, |r, j| ste.data()[(r * v + j) * c + ch]);
        let sv = m.singular_values();
        let mut s: Vec<f64> = sv.iter().cloned().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        assert!(s[1] < 1e-10 * s[0], "channel {ch}: {} vs {}", s[1], s[0]);
    }
    // middle frame of an odd length: sin 0 on even channels, F_se on odd
    let mid = t / 2;
    for vv in 0..v {
        for ch in 0..c {
            let got = ste.data()[(mid * v + vv) * c + ch];
            let want = if ch % 2 == 0 { 0.0 } else { f_se.data()[vv * c + ch] };
            assert!((got - want).abs() < 1e-15);
        }
    }
    // F_se of ones reproduces F_te
    let ones = skate_embedding(t, &Tensor::full(&[v, c], 1.0)).unwrap();
    let te = temporal_features(t, c);
    for tt in 0..t {
        for vv in 0..v {
            assert_eq!(&ones.data()[(tt * v + vv) * c..(tt * v + vv + 1) * c], &te[tt * c..(tt + 1) * c]);
        }
    }
}

#[test]
fn gconv_identity_and_averaging() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (t, v, c) = (3, 4, 5);
    let x = rand_tensor(&mut rng, &[t, v, c], 1.0);
    let mut eye_v = vec![0.0; v * v];
    (0..v).for_each(|i| eye_v[i * v + i] = 1.0);
    let mut eye_c = vec![0.0; c * c];
    (0..c).for_each(|i| eye_c[i * c + i] = 1.0);
    let y = gconv(&x, &Tensor::new(eye_v, &[v, v]).unwrap(), &Tensor::new(eye_c.clone(), &[c, c]).unwrap()).unwrap();
    assert_eq!(y.data(), x.gelu().unwrap().data());

    let avg = Tensor::full(&[v, v], 1.0 / v as f64);
    let pre = x.mix_joints(&avg).unwrap();
    for tt in 0..t {
        for ch in 0..c {
            let mean: f64 = (0..v).map(|j| x.data()[(tt * v + j) * c + ch]).sum::<f64>() / v as f64;
            for j in 0..v {
                assert!((pre.data()[(tt * v + j) * c + ch] - mean).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn gconv_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (t, v, c) = (4, 7, 3);
    for _ in 0..20 {
        let x = rand_tensor(&mut rng, &[t, v, c], 1.0);
        let a = rand_tensor(&mut rng, &[v, v], 1.0);
        let w = rand_tensor(&mut rng, &[c, c], 1.0);
        let mut perm: Vec<usize> = (0..v).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        // (P x)[i] = x[perm[i]], (P A P^T)[i][j] = A[perm[i]][perm[j]]
        let px: Vec<f64> = (0..t)
            .flat_map(|tt| perm.iter().flat_map(move |&p| (0..c).map(move |ch| (tt, p, ch))))
            .map(|(tt, p, ch)| x.data()[(tt * v + p) * c + ch])
            .collect();
        let pa: Vec<f64> = (0..v * v).map(|k| a.data()[perm[k / v] * v + perm[k % v]]).collect();
        let lhs = gconv(&Tensor::new(px, &[t, v, c]).unwrap(), &Tensor::new(pa, &[v, v]).unwrap(), &w).unwrap();
        let rhs = gconv(&x, &a, &w).unwrap();
        for tt in 0..t {
            for i in 0..v {
                for ch in 0..c {
                    let l = lhs.data()[(tt * v + i) * c + ch];
                    let r = rhs.data()[(tt * v + perm[i]) * c + ch];
                    assert!((l - r).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn mtm_factors_shift_with_the_motion_pattern() {
    let cfg = ModelConfig { seq_len: 16, joints: 4, channels: 8, blocks: 1, stages: 1, ..ModelConfig::toy() };
    let model = MmnModel::new(cfg.clone()).unwrap();
    let block = &model.stages[0][0];
    let m = block.mtm.unwrap();
    let ctx = ForwardCtx::eval(&model.store).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (t, v, c2) = (16, 4, 4);
    // a bump confined to frames 4..8, then the same bump at 7..11
    let bump = rand_tensor(&mut rng, &[4, v, c2], 1.0);
    let place = |start: usize| {
        let mut d = vec![0.0; t * v * c2];
        d[start * v * c2..(start + 4) * v * c2].copy_from_slice(bump.data());
        Tensor::new(d, &[t, v, c2]).unwrap()
    };
    let z = |x: &Tensor| {
        let y = x.conv2d(ctx.param(m.kernel)).unwrap();
        let (y, _) = y.batch_norm(&model.bn[m.bn.0].state, false, cfg.bn_eps).unwrap();
        y.tanh().unwrap()
    };
    let (z0, z1) = (z(&place(4)), z(&place(7)));
    let frame = v * c2;
    for tt in 1..t - 4 {
        assert_eq!(&z0.data()[tt * frame..(tt + 1) * frame], &z1.data()[(tt + 3) * frame..(tt + 4) * frame]);
    }
}

#[test]
fn gated_aggregation_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let a = rand_tensor(&mut rng, &[2, 3, 4, 5], 1.0);
    let w = Tensor::zeros(&[10, 2]);
    let b = Tensor::zeros(&[2]);
    let (out, gate) = gated_parts(&[a.clone(), a.clone()], &w, &b).unwrap();
    assert!(gate.data().iter().all(|g| *g == 0.5));
    assert_eq!(out.shape(), [2, 3, 4, 10]);

    let w = rand_tensor(&mut rng, &[10, 2], 5.0);
    let b = rand_tensor(&mut rng, &[2], 5.0);
    let zero = Tensor::zeros(&[2, 3, 4, 5]);
    let (out, gate) = gated_parts(&[a.clone(), zero], &w, &b).unwrap();
    assert!(gate.data().iter().all(|g| *g > 0.0 && *g < 1.0));
    for row in out.data().chunks(10) {
        assert!(row[5..].iter().all(|v| *v == 0.0));
    }

    let bad = Tensor::zeros(&[2, 3, 3, 5]);
    assert!(aggregate_gated(&[a, bad], &w, &b).is_err());
}

#[test]
fn stage_lengths_and_output_shapes() {
    let cfg = ModelConfig { joints: 3, channels: 8, blocks: 1, num_classes: 3, ..ModelConfig::default() };
    let lens: Vec<usize> = (0..cfg.stages).map(|l| cfg.stage_len(l)).collect();
    assert_eq!(lens, [64, 32, 16, 8]);
    let model = MmnModel::new(cfg.clone()).unwrap();
    let frames = toy_frames(&cfg, 1, 2);
    let traces = model.trace(&frames).unwrap();
    for t in &traces {
        assert_eq!(t.x_agg.shape(), [1, lens[t.stage], 3, 8]);
    }
    let mut ctx = ForwardCtx::eval(&model.store).unwrap();
    let x_feat = model.embedding.forward(&frames, &ctx).unwrap();
    assert_eq!(model.mcl_forward(&x_feat, &mut ctx).unwrap().shape(), [1, 8, 3, 8]);
    assert_eq!(model.predict(&frames).unwrap().shape(), [1, 3]);
    assert!(model.mcl_forward(&Tensor::zeros(&[1, 60, 3, 8]), &mut ctx).is_err());
}

#[test]
fn single_stage_returns_the_stage_output() {
    let cfg = ModelConfig { stages: 1, ..ModelConfig::toy() };
    let model = MmnModel::new(cfg.clone()).unwrap();
    assert!(model.fusion.is_none());
    let frames = toy_frames(&cfg, 2, 3);
    let mut ctx = ForwardCtx::eval(&model.store).unwrap();
    let x_feat = model.embedding.forward(&frames, &ctx).unwrap();
    let z = model.mcl_forward(&x_feat, &mut ctx).unwrap();
    let env = mmn_core::model::block::BlockEnv { cfg: &cfg, bn: &model.bn };
    let direct = model.stages[0][0].forward(&x_feat, &env, &mut ctx).unwrap();
    assert_eq!(z.data(), direct.data());
}

#[test]
fn embedding_is_projection_plus_positional_term() {
    let cfg = ModelConfig::toy();
    let model = MmnModel::new(cfg.clone()).unwrap();
    let frames = toy_frames(&cfg, 1, 4);
    let ctx = ForwardCtx::eval(&model.store).unwrap();
    let x_feat = model.embedding.forward(&frames, &ctx).unwrap();
    let x_proj = model.embedding.project(&frames, &ctx).unwrap();
    let ste = skate_embedding(cfg.seq_len, ctx.param(model.embedding.f_se)).unwrap();
    let expect = x_proj.add(&ste).unwrap();
    assert_eq!(x_feat.data(), expect.data());

    // zero input, zero biases and zero joint features give zero features
    let mut zeroed = model.clone();
    for p in zeroed.store.iter_mut() {
        if p.name.ends_with(".b") || p.name.ends_with("F_se") {
            p.value.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let ctx = ForwardCtx::eval(&zeroed.store).unwrap();
    let zero = Tensor::zeros(frames.shape());
    assert!(zeroed.embedding.forward(&zero, &ctx).unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn eval_forward_is_deterministic_and_sample_independent() {
    let cfg = ModelConfig::toy();
    let model = MmnModel::new(cfg.clone()).unwrap();
    let frames = toy_frames(&cfg, 3, 5);
    let a = model.predict(&frames).unwrap();
    let b = model.predict(&frames).unwrap();
    assert_eq!(a.data(), b.data());

    // duplicating the first sample changes nothing for the originals
    let per = frames.numel() / 3;
    let mut dup = frames.data().to_vec();
    dup.extend_from_slice(&frames.data()[..per]);
    let shape = [4, cfg.seq_len, cfg.joints, cfg.in_channels];
    let d = model.predict(&Tensor::new(dup, &shape).unwrap()).unwrap();
    let k = cfg.num_classes;
    assert_eq!(&d.data()[..3 * k], a.data());
    assert_eq!(&d.data()[3 * k..], &a.data()[..k]);
}

#[test]
fn disabled_modulation_builds_no_factor_networks() {
    let cfg = ModelConfig { msm_enabled: false, mtm_enabled: false, ..ModelConfig::toy() };
    let model = MmnModel::new(cfg.clone()).unwrap();
    assert!(model.bn.is_empty());
    assert!(model.store.iter().all(|p| !p.name.contains("msm") && !p.name.contains("mtm")));
    let traces = model.trace(&toy_frames(&cfg, 1, 6)).unwrap();
    assert!(traces.iter().all(|t| t.msm.is_none() && t.mtm.is_none()));
}

#[test]
fn every_strategy_and_switch_runs() {
    for s in ModulationStrategy::ALL {
        for literal in [false, true] {
            let cfg = ModelConfig { modulation_strategy: s, shared_temporal_norm: literal, ..ModelConfig::toy() };
            let model = MmnModel::new(cfg.clone()).unwrap();
            assert_eq!(model.num_params(), count_params_flops(&cfg).params, "{s}");
            let y = model.predict(&toy_frames(&cfg, 2, 7)).unwrap();
            assert_eq!(y.shape(), [2, cfg.num_classes]);
        }
    }
}

#[test]
fn parameter_count_oracle() {
    for cfg in [
        ModelConfig::default(),
        ModelConfig::toy(),
        ModelConfig { msm_enabled: false, ..ModelConfig::toy() },
        ModelConfig { stages: 1, mtm_enabled: false, ..ModelConfig::toy() },
    ] {
        let model = MmnModel::new(cfg.clone()).unwrap();
        assert_eq!(model.num_params(), count_params_flops(&cfg).params);
    }
    // affine-layer weights scale with C^2
    let affine = |c: usize| {
        let model = MmnModel::new(ModelConfig { channels: c, ..ModelConfig::default() }).unwrap();
        model
            .store
            .iter()
            .filter(|p| p.name.ends_with(".W") && p.shape.len() == 2 && !p.name.ends_with(".A"))
            .filter(|p| !p.name.starts_with("embed/proj.0") && !p.name.starts_with("head/fc") && !p.name.contains("gate"))
            .map(|p| p.numel())
            .sum::<usize>()
    };
    assert_eq!(affine(128), 4 * affine(64));
    let c = count_params_flops(&ModelConfig::default());
    assert!(c.macs > 0 && c.params > 0);
}

#[test]
fn export_feature_maps_shapes_and_constant_input() {
    let cfg = ModelConfig { seq_len: 16, joints: 6, channels: 8, blocks: 2, stages: 3, ..ModelConfig::toy() };
    let model = MmnModel::new(cfg.clone()).unwrap();
    let frames = toy_frames(&cfg, 1, 8);
    for l in 0..cfg.stages {
        for n in 0..cfg.blocks {
            let map = model.export_feature_maps(&frames, l, n).unwrap();
            assert_eq!(map.shape(), [1, cfg.stage_len(l), cfg.joints]);
        }
    }
    assert!(matches!(model.export_feature_maps(&frames, 3, 0), Err(MmnError::Config(_))));
    assert!(matches!(model.export_feature_maps(&frames, 0, 2), Err(MmnError::Config(_))));

    // with the joint embedding zeroed, a pose identical across joints and
    // frames leaves nothing to tell joints apart in the first block; later
    // blocks see the zero padding of the temporal and joint convolutions
    let mut flat = model.clone();
    let f_se = flat.store.find("embed/F_se").unwrap();
    flat.store.get_mut(f_se).value.iter_mut().for_each(|v| *v = 0.0);
    let constant = Tensor::full(frames.shape(), 0.3);
    let map = flat.export_feature_maps(&constant, 0, 0).unwrap();
    for row in map.data().chunks(cfg.joints) {
        assert!(row.iter().all(|x| (x - row[0]).abs() < 1e-12), "{row:?}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let cfg = ModelConfig { modulation_strategy: ModulationStrategy::Concat, ..ModelConfig::toy() };
    let mut model = MmnModel::new(cfg.clone()).unwrap();
    for (i, b) in model.bn.iter_mut().enumerate() {
        let c = b.state.channels();
        b.state = BatchNormState::from_parts(vec![0.1 * i as f64; c], vec![1.0 + 0.3 * i as f64; c]);
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    Checkpoint::from_model(&model).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap().to_model().unwrap();
    assert_eq!(back.cfg, cfg);
    assert_eq!(back.store, model.store);
    assert_eq!(back.bn, model.bn);
    let frames = toy_frames(&cfg, 2, 10);
    assert_eq!(back.predict(&frames).unwrap().data(), model.predict(&frames).unwrap().data());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let model = MmnModel::new(ModelConfig::toy()).unwrap();
    let bytes = Checkpoint::from_model(&model).to_bytes();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(MmnError::Checkpoint(_))));
    assert!(matches!(Checkpoint::from_bytes(b"garbage!"), Err(MmnError::Checkpoint(_))));
    let mut ck = Checkpoint::from_bytes(&bytes).unwrap();
    ck.tensors.remove("param/head/fc.W");
    assert!(matches!(ck.to_model(), Err(MmnError::Checkpoint(_))));
}

#[test]
fn uninitialized_running_stats_fail_in_eval() {
    let mut model = MmnModel::new(ModelConfig::toy()).unwrap();
    let c = model.bn[0].state.channels();
    model.bn[0].state = BatchNormState::uninitialized(c);
    let frames = toy_frames(&model.cfg, 1, 1);
    assert!(model.predict(&frames).is_err());
}

#[test]
fn gconv_layer_uses_its_own_adjacency() {
    let model = MmnModel::new(ModelConfig::toy()).unwrap();
    let block = &model.stages[0][0];
    let ids: Vec<GConv> = [Some(block.skeletal), block.msm.map(|m| m.gconv)].into_iter().flatten().collect();
    assert_eq!(ids.len(), 2);
    assert_ne!(ids[0].adjacency, ids[1].adjacency);
}
