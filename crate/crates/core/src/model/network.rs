use mmn_autograd::{BatchStats, Tensor};

use super::block::{aggregate_gated, BlockEnv, MstfBlock};
use super::config::ModelConfig;
use super::embedding::Embedding;
use super::layers::{LayerNorm, Linear};
use super::params::{BlockTrace, BnEntry, BnId, ForwardCtx, Init, ParamStore};
use crate::error::{MmnError, Result};

/// Cross-scale fusion: gate over the `L` pooled stage outputs, then a map
/// from `L*C` back to `C` channels.
#[derive(Clone, Debug)]
pub struct Fusion {
    pub gate: Linear,
    pub proj: Linear,
}

#[derive(Clone, Debug)]
pub struct MmnModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub bn: Vec<BnEntry>,
    pub embedding: Embedding,
    /// `stages[l][n]`
    pub stages: Vec<Vec<MstfBlock>>,
    pub fusion: Option<Fusion>,
    pub head_norm: LayerNorm,
    pub head: Linear,
}

impl MmnModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::default();
        let mut bn = Vec::new();
        let mut init = Init::new(cfg.init_seed);
        let embedding = Embedding::build(&mut store, &mut init, &cfg);
        let stages = (0..cfg.stages)
            .map(|l| (0..cfg.blocks).map(|n| MstfBlock::build(&mut store, &mut bn, &mut init, &cfg, l, n)).collect())
            .collect();
        let (c, l) = (cfg.channels, cfg.stages);
        let fusion = (l > 1).then(|| Fusion {
            gate: Linear::zeros(&mut store, "fusion/gate", l * c, l),
            proj: Linear::build(&mut store, &mut init, "fusion/proj", l * c, c, true),
        });
        let head_norm = LayerNorm::build(&mut store, "head/norm", c);
        let head = Linear::build(&mut store, &mut init, "head/fc", c, cfg.num_classes, true);
        Ok(Self { cfg, store, bn, embedding, stages, fusion, head_norm, head })
    }

    pub fn num_params(&self) -> usize {
        self.store.numel()
    }

    fn check_input(&self, frames: &Tensor) -> Result<()> {
        let c = &self.cfg;
        let s = frames.shape();
        if s.len() != 4 || s[1] != c.seq_len || s[2] != c.joints || s[3] != c.in_channels {
            return Err(MmnError::Config(format!(
                "expected frames [B, {}, {}, {}], got {s:?}",
                c.seq_len, c.joints, c.in_channels
            )));
        }
        Ok(())
    }

    /// Runs the temporal pyramid on embedded features `[B, T, V, C]` and
    /// returns the fused feature `[B, T', V, C]`.
    pub fn mcl_forward(&self, x_feat: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let cfg = &self.cfg;
        let t_len = x_feat.shape()[x_feat.ndim() - 3];
        let factor = 1usize << (cfg.stages - 1);
        if t_len % factor != 0 {
            return Err(MmnError::Config(format!("T = {t_len} not divisible by 2^(L-1) = {factor}")));
        }
        let env = BlockEnv { cfg, bn: &self.bn };
        let t_out = t_len / factor;
        let mut pooled = Vec::with_capacity(cfg.stages);
        let mut h = x_feat.clone();
        for (l, blocks) in self.stages.iter().enumerate() {
            if l > 0 {
                h = h.temporal_downsample_by_2()?;
            }
            for b in blocks {
                h = b.forward(&h, &env, ctx)?;
            }
            let t_stage = h.shape()[h.ndim() - 3];
            pooled.push(h.temporal_mean_pool(t_stage / t_out)?);
        }
        match &self.fusion {
            None => Ok(pooled.pop().expect("one stage")),
            Some(f) => {
                let fused = aggregate_gated(
                    &pooled,
                    ctx.param(f.gate.weight),
                    ctx.param(f.gate.bias.expect("gate has bias")),
                )?;
                f.proj.forward(&fused, ctx)
            }
        }
    }

    /// `[B, T, V, C_in] -> [B, K]` logits.
    pub fn forward(&self, frames: &Tensor, ctx: &mut ForwardCtx) -> Result<Tensor> {
        self.check_input(frames)?;
        let x_feat = self.embedding.forward(frames, ctx)?;
        let x_z = self.mcl_forward(&x_feat, ctx)?;
        let h = self.head_norm.forward(&x_z, ctx, self.cfg.ln_eps)?.global_mean_pool()?;
        self.head.forward(&h, ctx)
    }

    /// Eval-mode logits without gradients.
    pub fn predict(&self, frames: &Tensor) -> Result<Tensor> {
        let mut ctx = ForwardCtx::eval(&self.store)?;
        self.forward(frames, &mut ctx)
    }

    /// Folds training-mode batch statistics into the running state.
    pub fn apply_bn_updates(&mut self, updates: &[(BnId, BatchStats)]) {
        for (id, stats) in updates {
            self.bn[id.0].state.update(stats, self.cfg.bn_momentum);
        }
    }

    /// Finite-difference check of the training-mode cross-entropy with
    /// respect to every parameter. Returns `(parameter path, max relative
    /// error)` pairs in store order.
    pub fn gradcheck(&self, frames: &Tensor, labels: &[usize], eps: f64) -> Result<Vec<(String, f64)>> {
        let inputs: Vec<Tensor> =
            self.store.iter().map(|p| Tensor::new(p.value.clone(), &p.shape)).collect::<std::result::Result<_, _>>()?;
        let report = mmn_autograd::gradcheck(
            |params| {
                let mut ctx = ForwardCtx::with_tensors(params.to_vec(), true, 0);
                let logits = self.forward(frames, &mut ctx).map_err(|e| match e {
                    MmnError::Tensor(t) => t,
                    other => mmn_autograd::TensorError::Config(other.to_string()),
                })?;
                logits.cross_entropy(labels)
            },
            &inputs,
            eps,
        )?;
        Ok(self.store.iter().map(|p| p.name.clone()).zip(report.per_input).collect())
    }

    /// Eval-mode pass that records every block's internals.
    pub fn trace(&self, frames: &Tensor) -> Result<Vec<BlockTrace>> {
        let mut ctx = ForwardCtx::eval(&self.store)?;
        ctx.enable_tracing();
        self.forward(frames, &mut ctx)?;
        Ok(ctx.take_traces())
    }

    /// Channel-max of the aggregated block feature, `[B, T_stage, V]`.
    pub fn export_feature_maps(&self, frames: &Tensor, stage: usize, block: usize) -> Result<Tensor> {
        if stage >= self.cfg.stages || block >= self.cfg.blocks {
            return Err(MmnError::Config(format!(
                "block ({stage}, {block}) out of range for {} stages x {} blocks",
                self.cfg.stages, self.cfg.blocks
            )));
        }
        let trace = self
            .trace(frames)?
            .into_iter()
            .find(|t| t.stage == stage && t.block == block)
            .expect("every block is traced");
        channel_max(&trace.x_agg)
    }
}

/// Max over the last axis.
pub fn channel_max(x: &Tensor) -> Result<Tensor> {
    let c = *x.shape().last().unwrap();
    let data = x.data().chunks(c).map(|r| r.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    Ok(Tensor::new(data, &x.shape()[..x.ndim() - 1])?)
}
