use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mmn_autograd::{run_op_suite, Tensor};
use mmn_core::data::{load_dataset, save_dataset, split_dataset, synth_generate, Dataset, SynthSpec};
use mmn_core::kv;
use mmn_core::metrics::{ensemble_scores, read_predictions, write_predictions, MetricsReport, PredictionSet};
use mmn_core::model::checkpoint::Checkpoint;
use mmn_core::model::{count_params_flops, ForwardCtx, MmnModel, ModelConfig};
use mmn_core::train::{assemble_batch, evaluate, Trainer};
use mmn_core::MmnError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::RunConfig;
use crate::{BenchArgs, CliError, ConfigArgs, EvalArgs, GradcheckArgs, InspectArgs, Result, SynthGenArgs, TrainArgs};

/// Latency and size figures reported for the authors' configuration.
pub const PUBLISHED_REFERENCE: (f64, f64, f64) = (1.23, 1.48, 7.15);

pub const SPLITS: [&str; 3] = ["train", "val", "test"];

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MmnError::io(dir, e).into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| MmnError::io(path, e).into())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_file(path, serde_json::to_string_pretty(value).expect("json values serialize") + "\n")
}

fn resolve(start: RunConfig, args: &ConfigArgs, seed: Option<u64>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = start.layered(args.config.as_deref(), args.preset, overrides)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.model.init_seed = s;
    }
    Ok(cfg)
}

/// `path` itself, or `path/<split>.jsonl` when `path` is a directory.
fn dataset_file(path: &Path, split: &str) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{split}.jsonl"))
    } else {
        path.to_path_buf()
    }
}

fn load_checkpoint(path: Option<&Path>) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| CliError::Usage("--checkpoint is required".into()))?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

pub fn synth_gen(a: &SynthGenArgs) -> Result<()> {
    let targets: Vec<PathBuf> = SPLITS.iter().map(|s| a.out.join(format!("{s}.jsonl"))).collect();
    if !a.force {
        if let Some(p) = targets.iter().find(|p| p.exists()) {
            return Err(CliError::Usage(format!("{} already exists; pass --force to overwrite", p.display())));
        }
    }
    let spec = SynthSpec {
        classes: a.classes,
        per_class: a.per_class,
        joints: a.joints,
        raw_len: a.raw_len,
        amplitude: a.amplitude,
        noise_sigma: a.noise,
        similarity: a.similarity,
        body_groups: a.body_groups,
        seed: a.seed,
    };
    let ds = synth_generate(&spec)?;
    let ratios: [f64; 3] = a.split.clone().try_into().map_err(|_| CliError::Usage("--split takes three values".into()))?;
    let parts = split_dataset(&ds, ratios, a.seed)?;
    create_dir(&a.out)?;
    for (part, path) in parts.iter().zip(&targets) {
        save_dataset(part, path)?;
    }
    write_file(&a.out.join("synth.txt"), kv::to_lines(&spec))?;
    println!(
        "wrote {} samples ({} train / {} val / {} test) to {}",
        ds.len(),
        parts[0].len(),
        parts[1].len(),
        parts[2].len(),
        a.out.display()
    );
    if let Some(c) = &ds.comment {
        println!("note: {c}");
    }
    Ok(())
}

pub fn train(a: &TrainArgs, overrides: &[(String, String)]) -> Result<()> {
    let (train_path, val_path) = if a.dataset.is_dir() {
        let val = a.val.clone().or_else(|| Some(a.dataset.join("val.jsonl")).filter(|p| p.exists()));
        (a.dataset.join("train.jsonl"), val)
    } else {
        (a.dataset.clone(), a.val.clone())
    };
    let train_set = load_dataset(&train_path)?;
    let mut val_set = val_path.as_ref().map(load_dataset).transpose()?;
    if val_set.as_ref().is_some_and(Dataset::is_empty) {
        println!("validation split is empty; best.ckpt will not be written");
        val_set = None;
    }

    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(Some(path))?;
            let mut t = Trainer::from_checkpoint(&ck, None, None)?;
            let stored = RunConfig { model: t.model.cfg.clone(), train: t.cfg.clone(), aug: t.aug.clone(), preset: None };
            let mut cfg = resolve(stored, &a.cfg, None, overrides)?;
            if let Some(s) = a.seed {
                cfg.train.seed = s;
            }
            if cfg.model != t.model.cfg {
                return Err(CliError::Usage("model settings cannot change when resuming".into()));
            }
            apply_train_flags(&mut cfg, a);
            cfg.validate()?;
            write_run_config(&a.out, &cfg)?;
            (t.cfg, t.aug) = (cfg.train, cfg.aug);
            t
        }
        None => {
            let base = ModelConfig {
                joints: train_set.joints,
                in_channels: train_set.channels,
                num_classes: train_set.taxonomy.num_actions(),
                ..ModelConfig::default()
            };
            let mut cfg = resolve(RunConfig::new(base), &a.cfg, a.seed, overrides)?;
            apply_train_flags(&mut cfg, a);
            cfg.validate()?;
            write_run_config(&a.out, &cfg)?;
            Trainer::new(MmnModel::new(cfg.model)?, cfg.train, cfg.aug)?
        }
    };

    println!(
        "training {} parameters on {} samples ({} validation), {} epochs",
        trainer.model.num_params(),
        train_set.len(),
        val_set.as_ref().map_or(0, Dataset::len),
        trainer.cfg.epochs
    );
    let started = Instant::now();
    let log = trainer.run(&train_set, val_set.as_ref(), Some(&a.out), |r| {
        let val = match (r.val_top1, r.val_f1_mean) {
            (Some(t), Some(f)) => format!("  val_top1 {:.4}  val_f1_mean {:.4}", t, f),
            _ => String::new(),
        };
        println!("epoch {:3}  lr {:.3e}  loss {:.5}  train_top1 {:.4}{val}", r.epoch, r.lr, r.train_loss, r.train_top1);
    })?;
    println!("finished {} epochs in {:.1} s", log.len(), started.elapsed().as_secs_f64());
    if let Some(b) = trainer.state.best_val_f1 {
        println!("best val F1_mean {b:.4} (best.ckpt)");
    }
    Ok(())
}

fn apply_train_flags(cfg: &mut RunConfig, a: &TrainArgs) {
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = a.batch {
        cfg.train.batch_size = b;
    }
}

fn write_run_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join("config.txt"), cfg.to_text())
}

/// Orders externally produced scores like `ds`.
fn align_predictions(path: &Path, ds: &Dataset) -> Result<PredictionSet> {
    let records = read_predictions(path)?;
    let k = ds.taxonomy.num_actions();
    let mut by_id: HashMap<&str, &[f64]> = HashMap::with_capacity(records.len());
    for r in &records {
        if r.scores.len() != k {
            return Err(MmnError::Data(format!("{}: sample {} has {} scores, expected {k}", path.display(), r.id, r.scores.len())).into());
        }
        if by_id.insert(&r.id, &r.scores).is_some() {
            return Err(MmnError::Data(format!("{}: duplicate sample {}", path.display(), r.id)).into());
        }
    }
    if by_id.len() != ds.len() {
        return Err(MmnError::Data(format!("{} holds {} samples, the dataset {}", path.display(), by_id.len(), ds.len())).into());
    }
    let mut scores = Vec::with_capacity(ds.len() * k);
    for s in &ds.samples {
        let row = by_id
            .get(s.id.as_str())
            .ok_or_else(|| MmnError::Data(format!("{} has no scores for sample {}", path.display(), s.id)))?;
        scores.extend_from_slice(row);
    }
    Ok(PredictionSet::new(ds.samples.iter().map(|s| s.id.clone()).collect(), scores, ds.labels(), ds.taxonomy.clone())?)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let ds = load_dataset(dataset_file(&a.dataset, &a.split))?;
    let mut preds = match (&a.checkpoint, &a.predictions) {
        (Some(ck), _) => {
            let model = load_checkpoint(Some(ck))?.to_model()?;
            if model.cfg.num_classes != ds.taxonomy.num_actions() || model.cfg.joints != ds.joints {
                return Err(MmnError::Config(format!(
                    "checkpoint expects K={} V={}, dataset has K={} V={}",
                    model.cfg.num_classes,
                    model.cfg.joints,
                    ds.taxonomy.num_actions(),
                    ds.joints
                ))
                .into());
            }
            let p = evaluate(&model, &ds, a.batch)?;
            create_dir(&a.out)?;
            write_predictions(&p, a.out.join("predictions.jsonl"))?;
            p
        }
        (None, Some(p)) => align_predictions(p, &ds)?,
        (None, None) => return Err(CliError::Usage("eval needs --checkpoint or --predictions".into())),
    };
    if let Some(other) = &a.ensemble_with {
        let b = align_predictions(other, &ds)?;
        preds = ensemble_scores(&preds, &b, a.ensemble_weight)?;
        create_dir(&a.out)?;
        write_predictions(&preds, a.out.join("ensemble_predictions.jsonl"))?;
    }
    let report = MetricsReport::compute(&preds);
    create_dir(&a.out)?;
    write_json(&a.out.join("report.json"), &report.to_json())?;
    write_file(&a.out.join("confusion.csv"), report.confusion_csv(&ds.taxonomy.action_names))?;
    println!("samples       {}", report.num_samples);
    println!("top1 action   {:.2}", 100.0 * report.top1_action);
    println!("top5 action   {:.2}", 100.0 * report.top5_action);
    println!("top1 body     {:.2}", 100.0 * report.top1_body);
    println!(
        "F1 body       macro {:.2}  micro {:.2}",
        100.0 * report.f1_macro_body,
        100.0 * report.f1_micro_body
    );
    println!(
        "F1 action     macro {:.2}  micro {:.2}",
        100.0 * report.f1_macro_action,
        100.0 * report.f1_micro_action
    );
    println!("F1_mean       {:.2}", 100.0 * report.f1_mean);
    Ok(())
}

fn random_frames(cfg: &ModelConfig, batch: usize, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [batch, cfg.seq_len, cfg.joints, cfg.in_channels];
    let n = shape.iter().product();
    Ok(Tensor::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), &shape)?)
}

pub fn gradcheck(a: &GradcheckArgs, overrides: &[(String, String)]) -> Result<()> {
    let cfg = resolve(RunConfig::new(ModelConfig::toy()), &a.cfg, a.seed, overrides)?;
    cfg.validate()?;
    let started = Instant::now();
    let mut rows = Vec::new();
    for c in run_op_suite(a.step)? {
        rows.push((format!("op/{}", c.name), c.max_rel_error));
    }
    let model = MmnModel::new(cfg.model.clone())?;
    let frames = random_frames(&cfg.model, 2, cfg.model.init_seed)?;
    let labels = [0, cfg.model.num_classes - 1];
    for (name, err) in model.gradcheck(&frames, &labels, a.step)? {
        rows.push((format!("model/{name}"), err));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    for (name, err) in &rows {
        let mark = if *err < a.tol { "ok" } else { "FAIL" };
        println!("{name:width$}  {err:.2e}  {mark}");
    }
    let (worst_name, worst) =
        rows.iter().max_by(|x, y| x.1.total_cmp(&y.1)).map(|(n, e)| (n.clone(), *e)).unwrap_or_default();
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("config.txt"), cfg.to_text())?;
        let checks: Vec<_> = rows.iter().map(|(n, e)| json!({"name": n, "max_rel_error": e})).collect();
        write_json(
            &out.join("gradcheck.json"),
            &json!({"step": a.step, "tolerance": a.tol, "max_rel_error": worst, "worst": worst_name,
                    "passed": worst < a.tol, "seconds": elapsed, "checks": checks}),
        )?;
    }
    if worst < a.tol {
        println!("PASS, max rel err {worst:.2e} < {:e} ({} checks, {elapsed:.1} s)", a.tol, rows.len());
        Ok(())
    } else {
        println!("FAIL, max rel err {worst:.2e} >= {:e} at {worst_name}", a.tol);
        Err(CliError::Failed(format!("gradient check failed at {worst_name}")))
    }
}

/// Median and 90th percentile (nearest rank) of `samples`.
pub fn median_p90(samples: &mut [f64]) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 { samples[n / 2] } else { 0.5 * (samples[n / 2 - 1] + samples[n / 2]) };
    let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
    (median, samples[rank - 1])
}

pub fn bench(a: &BenchArgs, overrides: &[(String, String)]) -> Result<()> {
    if a.iters == 0 {
        return Err(CliError::Usage("--iters must be positive".into()));
    }
    let cfg = resolve(RunConfig::new(ModelConfig::default()), &a.cfg, a.seed, overrides)?;
    cfg.validate()?;
    let mut model = MmnModel::new(cfg.model.clone())?;
    let frames = random_frames(&cfg.model, 1, cfg.model.init_seed)?;
    // one training-mode pass so the normalization statistics are data-derived
    let mut ctx = ForwardCtx::train(&model.store, 0)?;
    model.forward(&frames, &mut ctx)?;
    let updates = ctx.take_bn_updates();
    drop(ctx);
    model.apply_bn_updates(&updates);

    for _ in 0..a.warmup {
        model.predict(&frames)?;
    }
    let mut times = Vec::with_capacity(a.iters);
    for _ in 0..a.iters {
        let t = Instant::now();
        model.predict(&frames)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let (median, p90) = median_p90(&mut times);
    let c = count_params_flops(&cfg.model);
    let (ref_params, ref_flops, ref_ms) = PUBLISHED_REFERENCE;
    println!("config          T={} V={} C={} N={} L={} K={}", cfg.model.seq_len, cfg.model.joints, cfg.model.channels, cfg.model.blocks, cfg.model.stages, cfg.model.num_classes);
    println!("params          {} ({:.3} M)", c.params, c.params as f64 / 1e6);
    println!("MACs            {} ({:.3} G)", c.macs, c.macs as f64 / 1e9);
    println!("latency         median {median:.3} ms  p90 {p90:.3} ms  ({} runs after {} warmup, batch 1)", a.iters, a.warmup);
    println!("reference       {ref_params} M params  {ref_flops} G FLOPs  {ref_ms} ms (published figures, different configuration and hardware)");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_file(&out.join("config.txt"), cfg.to_text())?;
        write_json(
            &out.join("bench.json"),
            &json!({
                "params": c.params,
                "macs": c.macs,
                "flops": 2 * c.macs,
                "latency_ms_median": median,
                "latency_ms_p90": p90,
                "iters": a.iters,
                "warmup": a.warmup,
                "batch": 1,
                "reference": {"params_m": ref_params, "flops_g": ref_flops, "time_ms": ref_ms},
            }),
        )?;
    }
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> Result<()> {
    let model = load_checkpoint(a.checkpoint.as_deref())?.to_model()?;
    let ds = load_dataset(dataset_file(&a.dataset, &a.split))?;
    let n = a.limit.min(ds.len());
    if n == 0 {
        return Err(CliError::Usage("nothing to export: empty dataset or --limit 0".into()));
    }
    let idx: Vec<usize> = (0..n).collect();
    let batch = assemble_batch(&ds, &idx, model.cfg.seq_len, None)?;
    let maps = model.export_feature_maps(&batch.frames, a.stage, a.block)?;
    let (t, v) = (maps.shape()[1], maps.shape()[2]);
    create_dir(&a.out)?;
    let mut text = String::new();
    for (i, chunk) in maps.data().chunks(t * v).enumerate() {
        let rec = json!({
            "id": batch.ids[i],
            "label": batch.labels[i],
            "stage": a.stage,
            "block": a.block,
            "shape": [t, v],
            "values": chunk,
        });
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    let path = a.out.join("feature_maps.jsonl");
    write_file(&path, text)?;
    println!("wrote {n} maps of {t}x{v} (stage {}, block {}) to {}", a.stage, a.block, path.display());
    Ok(())
}
