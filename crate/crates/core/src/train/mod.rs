//! Optimization: schedule, AdamW and the epoch loop.

pub mod adamw;
pub mod schedule;
mod trainer;

pub use adamw::{adamw_step, adamw_update, clip_grad_norm, AdamHyper, AdamState};
pub use schedule::lr_at;
pub use trainer::{assemble_batch, evaluate, stream_seed, Batch, EpochRecord, TrainState, Trainer};

use serde::{Deserialize, Serialize};

use crate::error::{MmnError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_start_lr: f64,
    pub warmup_epochs: usize,
    pub cosine_cycles: usize,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Optional global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
    /// Interpolate the schedule per step instead of holding it per epoch.
    pub step_schedule: bool,
    /// Also keep `epoch_NNN.ckpt` for every epoch, not just `last.ckpt`.
    pub keep_epoch_checkpoints: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            min_lr: 1e-6,
            warmup_start_lr: 1e-7,
            warmup_epochs: 20,
            cosine_cycles: 3,
            weight_decay: 0.1,
            batch_size: 64,
            epochs: 120,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            grad_clip: None,
            step_schedule: false,
            keep_epoch_checkpoints: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MmnError::Config(m));
        if !(self.warmup_start_lr < self.base_lr) {
            return err(format!("warmup_start_lr {} must be below base_lr {}", self.warmup_start_lr, self.base_lr));
        }
        if !(self.min_lr <= self.base_lr) || self.min_lr < 0.0 {
            return err(format!("min_lr {} must lie in [0, base_lr]", self.min_lr));
        }
        if self.cosine_cycles == 0 {
            return err("cosine_cycles must be at least 1".into());
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return err("batch_size and epochs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return err("betas must lie in [0, 1)".into());
        }
        if self.grad_clip.is_some_and(|c| c <= 0.0) {
            return err("grad_clip must be positive".into());
        }
        Ok(())
    }

    pub fn hyper(&self, lr: f64) -> AdamHyper {
        AdamHyper { lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }
}
