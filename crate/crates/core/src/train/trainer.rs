use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use mmn_autograd::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adamw::{adamw_step, clip_grad_norm, AdamState};
use super::schedule::lr_at;
use super::TrainConfig;
use crate::data::{prepare_clip, AugmentationParams, Dataset};
use crate::error::{MmnError, Result};
use crate::kv;
use crate::metrics::{argmax, MetricsReport, PredictionSet};
use crate::model::checkpoint::Checkpoint;
use crate::model::{ForwardCtx, MmnModel};

/// 256-bit seed for an independent random stream named by `parts`.
pub fn stream_seed(parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().into()
}

fn stream(parts: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(stream_seed(parts))
}

pub struct Batch {
    pub ids: Vec<String>,
    /// `[B, T, V, C_in]`
    pub frames: Tensor,
    pub labels: Vec<usize>,
}

/// Samples (and, given `augment = Some((params, seed, epoch))`, augments)
/// the clips at `indices`. Every sample draws from its own stream keyed by
/// `(seed, sample id, epoch)`, so the result does not depend on batch
/// composition or thread scheduling.
pub fn assemble_batch(
    ds: &Dataset,
    indices: &[usize],
    t_len: usize,
    augment: Option<(&AugmentationParams, u64, usize)>,
) -> Result<Batch> {
    let clips = indices
        .par_iter()
        .map(|&i| {
            let s = &ds.samples[i];
            match augment {
                None => prepare_clip::<ChaCha8Rng>(s, t_len, &AugmentationParams::disabled(), None),
                Some((params, seed, epoch)) => {
                    let mut rng = stream(&["sample", &seed.to_string(), &s.id, &epoch.to_string()]);
                    prepare_clip(s, t_len, params, Some(&mut rng))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(clips.len() * t_len * ds.joints * ds.channels);
    for c in &clips {
        data.extend_from_slice(&c.data);
    }
    let frames = Tensor::new(data, &[indices.len(), t_len, ds.joints, ds.channels])?;
    Ok(Batch {
        ids: indices.iter().map(|&i| ds.samples[i].id.clone()).collect(),
        frames,
        labels: indices.iter().map(|&i| ds.samples[i].label).collect(),
    })
}

/// Eval-mode scores for every sample of `ds`, in dataset order.
pub fn evaluate(model: &MmnModel, ds: &Dataset, batch_size: usize) -> Result<PredictionSet> {
    let mut scores = Vec::with_capacity(ds.len() * model.cfg.num_classes);
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(batch_size.max(1)) {
        let batch = assemble_batch(ds, chunk, model.cfg.seq_len, None)?;
        scores.extend_from_slice(model.predict(&batch.frames)?.data());
    }
    PredictionSet::new(
        ds.samples.iter().map(|s| s.id.clone()).collect(),
        scores,
        ds.labels(),
        ds.taxonomy.clone(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Running accuracy over the (augmented, train-mode) batches.
    pub train_top1: f64,
    pub val_top1: Option<f64>,
    pub val_f1_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub adam: AdamState,
    pub best_val_f1: Option<f64>,
}

pub struct Trainer {
    pub model: MmnModel,
    pub cfg: TrainConfig,
    pub aug: AugmentationParams,
    pub state: TrainState,
}

impl Trainer {
    pub fn new(model: MmnModel, cfg: TrainConfig, aug: AugmentationParams) -> Result<Self> {
        cfg.validate()?;
        aug.validate()?;
        let state = TrainState { epoch: 0, adam: AdamState::new(&model.store), best_val_f1: None };
        Ok(Self { model, cfg, aug, state })
    }

    pub fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        let m = &self.model.cfg;
        if ds.is_empty() {
            return Err(MmnError::Config("training set is empty".into()));
        }
        if ds.taxonomy.num_actions() != m.num_classes {
            return Err(MmnError::Config(format!(
                "dataset has {} action classes, model expects {}",
                ds.taxonomy.num_actions(),
                m.num_classes
            )));
        }
        if ds.joints != m.joints || ds.channels != m.in_channels {
            return Err(MmnError::Config(format!(
                "dataset has V={} C_in={}, model expects V={} C_in={}",
                ds.joints, ds.channels, m.joints, m.in_channels
            )));
        }
        Ok(())
    }

    /// Forward, backward and one optimizer update. Returns the batch loss
    /// and the number of correctly classified samples.
    pub fn train_step(&mut self, batch: &Batch, lr: f64) -> Result<(f64, usize)> {
        let step = self.state.adam.step + 1;
        let mut ctx = ForwardCtx::train(&self.model.store, dropout_seed(self.cfg.seed, step))?;
        let logits = self.model.forward(&batch.frames, &mut ctx)?;
        let loss = logits.cross_entropy(&batch.labels)?;
        loss.backward()?;
        let mut grads = ctx.grads();
        if let Some(max) = self.cfg.grad_clip {
            clip_grad_norm(&mut grads, max);
        }
        adamw_step(&mut self.model.store, &grads, &mut self.state.adam, &self.cfg.hyper(lr))?;
        self.model.apply_bn_updates(&ctx.take_bn_updates());
        let k = self.model.cfg.num_classes;
        let correct = logits.data().chunks(k).zip(&batch.labels).filter(|(row, &y)| argmax(row) == y).count();
        Ok((loss.item(), correct))
    }

    /// Sample order of epoch `epoch`.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(&["shuffle", &self.cfg.seed.to_string(), &epoch.to_string()]));
        order
    }

    /// One pass over `train`; returns `(mean loss, running top-1)`.
    pub fn train_epoch(&mut self, train: &Dataset) -> Result<(f64, f64)> {
        let epoch = self.state.epoch;
        let order = self.epoch_order(train.len(), epoch);
        let batches: Vec<&[usize]> = order.chunks(self.cfg.batch_size).collect();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let lr = if self.cfg.step_schedule {
                lr_at(epoch as f64 + b as f64 / batches.len() as f64, &self.cfg)
            } else {
                lr_at(epoch as f64, &self.cfg)
            };
            let batch = assemble_batch(train, idx, self.model.cfg.seq_len, Some((&self.aug, self.cfg.seed, epoch)))?;
            let (loss, c) = self.train_step(&batch, lr)?;
            loss_sum += loss * idx.len() as f64;
            correct += c;
        }
        Ok((loss_sum / train.len() as f64, correct as f64 / train.len() as f64))
    }

    /// Trains until `cfg.epochs` epochs are complete. With `out`, appends
    /// to `train_log.jsonl` and writes `last.ckpt` every epoch and
    /// `best.ckpt` whenever validation F1_mean improves.
    pub fn run(
        &mut self,
        train: &Dataset,
        val: Option<&Dataset>,
        out: Option<&Path>,
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<Vec<EpochRecord>> {
        self.check_dataset(train)?;
        if let Some(v) = val {
            self.check_dataset(v)?;
        }
        let mut log = Vec::new();
        while self.state.epoch < self.cfg.epochs {
            let epoch = self.state.epoch;
            let (train_loss, train_top1) = self.train_epoch(train)?;
            self.state.epoch += 1;
            let (val_top1, val_f1_mean) = match val {
                Some(v) => {
                    let r = MetricsReport::compute(&evaluate(&self.model, v, self.cfg.batch_size)?);
                    (Some(r.top1_action), Some(r.f1_mean))
                }
                None => (None, None),
            };
            let improved = val_f1_mean.is_some_and(|f| self.state.best_val_f1.is_none_or(|b| f > b));
            if improved {
                self.state.best_val_f1 = val_f1_mean;
            }
            let rec = EpochRecord { epoch, lr: lr_at(epoch as f64, &self.cfg), train_loss, train_top1, val_top1, val_f1_mean };
            if let Some(dir) = out {
                append_log(&dir.join("train_log.jsonl"), &rec)?;
                let ck = self.checkpoint();
                ck.save(dir.join("last.ckpt"))?;
                if self.cfg.keep_epoch_checkpoints {
                    ck.save(dir.join(format!("epoch_{epoch:03}.ckpt")))?;
                }
                if improved {
                    ck.save(dir.join("best.ckpt"))?;
                }
            }
            on_epoch(&rec);
            log.push(rec);
        }
        Ok(log)
    }

    /// Model, optimizer moments and progress counters.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        for (i, p) in self.model.store.iter().enumerate() {
            ck.insert(format!("optim/m/{}", p.name), p.shape.clone(), self.state.adam.m[i].clone());
            ck.insert(format!("optim/v/{}", p.name), p.shape.clone(), self.state.adam.v[i].clone());
        }
        ck.meta.push(("epoch".into(), self.state.epoch.to_string()));
        ck.meta.push(("adam_step".into(), self.state.adam.step.to_string()));
        if let Some(b) = self.state.best_val_f1 {
            // exact round trip through the text form
            ck.meta.push(("best_val_f1_bits".into(), b.to_bits().to_string()));
        }
        for (k, v) in kv::parse_lines(&kv::to_lines(&self.cfg)).expect("own output parses") {
            ck.meta.push((format!("train.{k}"), v));
        }
        for (k, v) in kv::parse_lines(&kv::to_lines(&self.aug)).expect("own output parses") {
            ck.meta.push((format!("aug.{k}"), v));
        }
        ck
    }

    /// Restores a trainer saved by [`Trainer::checkpoint`]. The stored
    /// training and augmentation settings are used unless overridden.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: Option<TrainConfig>, aug: Option<AugmentationParams>) -> Result<Self> {
        let model = ck.to_model()?;
        let section = |prefix: &str| -> Vec<(String, String)> {
            ck.meta.iter().filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone()))).collect()
        };
        let cfg = match cfg {
            Some(c) => c,
            None => kv::apply(&TrainConfig::default(), &section("train."))?.0,
        };
        let aug = match aug {
            Some(a) => a,
            None => kv::apply(&AugmentationParams::default(), &section("aug."))?.0,
        };
        let mut t = Trainer::new(model, cfg, aug)?;
        let parse = |key: &str| -> Result<u64> {
            ck.meta(key)
                .ok_or_else(|| MmnError::Checkpoint(format!("missing {key}; not a training checkpoint")))?
                .parse()
                .map_err(|_| MmnError::Checkpoint(format!("bad {key}")))
        };
        t.state.epoch = parse("epoch")? as usize;
        t.state.adam.step = parse("adam_step")?;
        t.state.best_val_f1 = ck.meta("best_val_f1_bits").and_then(|b| b.parse().ok()).map(f64::from_bits);
        for (i, p) in t.model.store.iter().enumerate() {
            t.state.adam.m[i].clone_from(&ck.tensor(&format!("optim/m/{}", p.name))?.data);
            t.state.adam.v[i].clone_from(&ck.tensor(&format!("optim/v/{}", p.name))?.data);
        }
        Ok(t)
    }
}

fn dropout_seed(seed: u64, step: u64) -> u64 {
    let s = stream_seed(&["dropout", &seed.to_string(), &step.to_string()]);
    u64::from_le_bytes(s[..8].try_into().unwrap())
}

fn append_log(path: &Path, rec: &EpochRecord) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| MmnError::io(path, e))?;
    let line = serde_json::to_string(rec).expect("record serializes");
    writeln!(f, "{line}").map_err(|e| MmnError::io(path, e))
}
