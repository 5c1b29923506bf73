use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MmnError, Result};

/// How the motion-derived `(gamma, beta)` fields act on a standardized branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulationStrategy {
    /// `x_hat * (1 + gamma) + beta`
    Modulate,
    /// `x_hat + gamma + beta`
    Add,
    /// `[x_hat | gamma]` mapped back to the branch width
    Concat,
    /// `x_hat * gamma`
    Hadamard,
    /// `x_hat + beta`
    NoScale,
    /// `x_hat * (1 + gamma)`
    NoShift,
}

impl ModulationStrategy {
    pub const ALL: [ModulationStrategy; 6] = [
        ModulationStrategy::Modulate,
        ModulationStrategy::Add,
        ModulationStrategy::Concat,
        ModulationStrategy::Hadamard,
        ModulationStrategy::NoScale,
        ModulationStrategy::NoShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModulationStrategy::Modulate => "modulate",
            ModulationStrategy::Add => "add",
            ModulationStrategy::Concat => "concat",
            ModulationStrategy::Hadamard => "hadamard",
            ModulationStrategy::NoScale => "no_scale",
            ModulationStrategy::NoShift => "no_shift",
        }
    }
}

impl fmt::Display for ModulationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModulationStrategy {
    type Err = MmnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| MmnError::Config(format!("unknown modulation strategy {s:?}")))
    }
}

/// Architectural hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Frames per clip (T).
    pub seq_len: usize,
    /// Joints per frame (V).
    pub joints: usize,
    /// Coordinates per joint (C_in).
    pub in_channels: usize,
    /// Feature width (C), divisible by 4.
    pub channels: usize,
    /// Blocks per stage (N).
    pub blocks: usize,
    /// Temporal pyramid stages (L).
    pub stages: usize,
    pub tconv_kernel: usize,
    pub mtm_kernel_t: usize,
    pub mtm_kernel_v: usize,
    pub ffn_expansion: usize,
    pub dropout: f64,
    pub modulation_strategy: ModulationStrategy,
    pub msm_enabled: bool,
    pub mtm_enabled: bool,
    /// Normalize both modulated branches by the temporal branch statistics
    /// and modulate the temporal feature in both paths.
    pub shared_temporal_norm: bool,
    pub num_classes: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    pub ln_eps: f64,
    /// Guard inside the branch standard deviation, `sqrt(var + eps^2)`.
    pub modulation_eps: f64,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 64,
            joints: 44,
            in_channels: 2,
            channels: 64,
            blocks: 3,
            stages: 4,
            tconv_kernel: 5,
            mtm_kernel_t: 3,
            mtm_kernel_v: 3,
            ffn_expansion: 4,
            dropout: 0.1,
            modulation_strategy: ModulationStrategy::Modulate,
            msm_enabled: true,
            mtm_enabled: true,
            shared_temporal_norm: false,
            num_classes: 52,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            ln_eps: 1e-5,
            modulation_eps: 1e-5,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// The small configuration used by gradient checks.
    pub fn toy() -> Self {
        Self {
            seq_len: 8,
            joints: 5,
            channels: 8,
            blocks: 1,
            stages: 2,
            tconv_kernel: 3,
            num_classes: 3,
            dropout: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(MmnError::Config(m));
        if self.channels == 0 || self.channels % 4 != 0 {
            return err(format!("channels must be a positive multiple of 4, got {}", self.channels));
        }
        if self.stages == 0 || self.blocks == 0 {
            return err("stages and blocks must be at least 1".into());
        }
        let factor = 1usize << (self.stages - 1);
        if self.seq_len == 0 || self.seq_len % factor != 0 {
            return err(format!("seq_len {} not divisible by 2^(stages-1) = {factor}", self.seq_len));
        }
        if self.seq_len / factor < 2 {
            return err(format!("the last stage needs at least 2 frames, seq_len {} gives {}", self.seq_len, self.seq_len / factor));
        }
        for (name, k) in [("tconv_kernel", self.tconv_kernel), ("mtm_kernel_t", self.mtm_kernel_t), ("mtm_kernel_v", self.mtm_kernel_v)] {
            if k % 2 == 0 {
                return err(format!("{name} must be odd, got {k}"));
            }
        }
        if self.joints == 0 || self.in_channels == 0 || self.ffn_expansion == 0 {
            return err("joints, in_channels and ffn_expansion must be positive".into());
        }
        if self.num_classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return err(format!("bn_momentum must lie in [0, 1], got {}", self.bn_momentum));
        }
        Ok(())
    }

    /// Frames seen by stage `l` (0-based): `T / 2^l`.
    pub fn stage_len(&self, stage: usize) -> usize {
        self.seq_len >> stage
    }

    /// Length of the fused multi-scale feature, `T / 2^(L-1)`.
    pub fn fused_len(&self) -> usize {
        self.stage_len(self.stages - 1)
    }

    pub fn quarter(&self) -> usize {
        self.channels / 4
    }

    /// Channel ranges of the skeletal, motion and temporal branches:
    /// `[0, C/4)`, `[C/4, 3C/4)` and `[3C/4, C)`.
    pub fn channel_split(&self) -> [std::ops::Range<usize>; 3] {
        let (c, q) = (self.channels, self.quarter());
        [0..q, q..3 * q, 3 * q..c]
    }
}
