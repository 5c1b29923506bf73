//! The motion-guided skeletal-temporal block and its pieces.
//!
//! Channels of the projected input are split into a skeletal quarter, a
//! motion half and a temporal quarter. The frame difference of the motion
//! half drives two small networks whose `tanh` outputs scale and shift the
//! standardized skeletal and temporal branch features.

use mmn_autograd::{BatchNormState, Tensor};

use super::config::{ModelConfig, ModulationStrategy};
use super::layers::{adjacency_init, LayerNorm, Linear};
use super::params::{BlockTrace, BnEntry, BnId, ForwardCtx, Init, ParamId, ParamStore};
use crate::error::{MmnError, Result};

/// Scale and shift fields produced from the motion signal.
#[derive(Clone, Debug)]
pub struct ModulationFactors {
    pub gamma: Tensor,
    pub beta: Tensor,
}

impl ModulationFactors {
    /// Splits `Z` into `gamma` (first channel half) and `beta` (second).
    pub fn from_z(z: &Tensor) -> Result<Self> {
        let c = *z.shape().last().unwrap();
        if c % 2 != 0 {
            return Err(MmnError::Config(format!("factor tensor needs an even channel count, got {c}")));
        }
        Ok(Self { gamma: z.slice_last(0, c / 2)?, beta: z.slice_last(c / 2, c)? })
    }
}

fn time_joint_axes(x: &Tensor) -> Result<[usize; 2]> {
    let nd = x.ndim();
    if nd < 3 {
        return Err(MmnError::Config(format!("expected [.., T, V, C], got {:?}", x.shape())));
    }
    Ok([nd - 3, nd - 2])
}

/// Per-channel standardization over the time and joint axes,
/// `(x - mean) / sqrt(var + eps^2)`.
pub fn standardize(x: &Tensor, eps: f64) -> Result<Tensor> {
    let axes = time_joint_axes(x)?;
    let mu = x.mean_axes(&axes, true)?;
    let sigma = x.std_axes(&axes, true, eps)?;
    Ok(x.sub(&mu)?.div(&sigma)?)
}

/// `standardize(x) * (1 + gamma) + beta`.
pub fn modulate(x: &Tensor, f: &ModulationFactors, eps: f64) -> Result<Tensor> {
    modulate_with(&standardize(x, eps)?, f)
}

fn modulate_with(x_hat: &Tensor, f: &ModulationFactors) -> Result<Tensor> {
    Ok(x_hat.mul(&f.gamma.add_scalar(1.0)?)?.add(&f.beta)?)
}

/// Alternative ways of combining the factors with the standardized
/// feature. `concat` needs the recombination map `(W [2c, c], b [c])`.
pub fn modulate_ablation(
    x: &Tensor,
    f: &ModulationFactors,
    strategy: ModulationStrategy,
    concat_map: Option<(&Tensor, &Tensor)>,
    eps: f64,
) -> Result<Tensor> {
    let x_hat = standardize(x, eps)?;
    combine(&x_hat, f, strategy, concat_map)
}

fn combine(
    x_hat: &Tensor,
    f: &ModulationFactors,
    strategy: ModulationStrategy,
    concat_map: Option<(&Tensor, &Tensor)>,
) -> Result<Tensor> {
    Ok(match strategy {
        ModulationStrategy::Modulate => modulate_with(x_hat, f)?,
        ModulationStrategy::Add => x_hat.add(&f.gamma)?.add(&f.beta)?,
        ModulationStrategy::Hadamard => x_hat.mul(&f.gamma)?,
        ModulationStrategy::NoScale => x_hat.add(&f.beta)?,
        ModulationStrategy::NoShift => x_hat.mul(&f.gamma.add_scalar(1.0)?)?,
        ModulationStrategy::Concat => {
            let (w, b) = concat_map
                .ok_or_else(|| MmnError::Config("concat strategy needs a recombination map".into()))?;
            Tensor::concat_last(&[x_hat, &f.gamma])?.linear(w, Some(b))?
        }
    })
}

/// Joint mixing through `A` followed by a channel map and GELU:
/// `GELU((A x[t]) W)` for every frame.
pub fn gconv(x: &Tensor, a: &Tensor, w: &Tensor) -> Result<Tensor> {
    Ok(x.mix_joints(a)?.linear(w, None)?.gelu()?)
}

/// Gated fusion of branches sharing their leading and `[T, V]` axes.
///
/// Each branch is summarized by its global mean-pooled channel vector; a
/// sigmoid over an affine map of the concatenated summaries gives one
/// weight per branch, and the weighted branches are concatenated.
pub fn aggregate_gated(branches: &[Tensor], gate_w: &Tensor, gate_b: &Tensor) -> Result<Tensor> {
    gated_parts(branches, gate_w, gate_b).map(|(out, _)| out)
}

/// As [`aggregate_gated`], also returning the gate tensor `[.., B]`.
pub fn gated_parts(branches: &[Tensor], gate_w: &Tensor, gate_b: &Tensor) -> Result<(Tensor, Tensor)> {
    if branches.len() < 2 {
        return Err(MmnError::Config(format!("gated aggregation needs at least 2 branches, got {}", branches.len())));
    }
    let first = branches[0].shape();
    let nd = first.len();
    for b in branches {
        if b.ndim() != nd || b.shape()[..nd - 1] != first[..nd - 1] {
            return Err(MmnError::Tensor(mmn_autograd::TensorError::Dimension {
                op: "aggregate_gated",
                msg: format!("branch shapes {:?} and {:?} disagree outside channels", first, b.shape()),
            }));
        }
    }
    let pooled = branches.iter().map(|b| b.global_mean_pool()).collect::<std::result::Result<Vec<_>, _>>()?;
    let pooled_refs: Vec<&Tensor> = pooled.iter().collect();
    let gate = Tensor::concat_last(&pooled_refs)?.linear(gate_w, Some(gate_b))?.sigmoid()?;
    let mut lead = gate.shape()[..gate.ndim() - 1].to_vec();
    lead.extend([1, 1, 1]);
    let mut weighted = Vec::with_capacity(branches.len());
    for (i, b) in branches.iter().enumerate() {
        let g = gate.slice_last(i, i + 1)?.reshape(&lead)?;
        weighted.push(b.mul(&g)?);
    }
    let refs: Vec<&Tensor> = weighted.iter().collect();
    Ok((Tensor::concat_last(&refs)?, gate))
}

/// Graph convolution parameters: adjacency `[V, V]` and channel map `[c, c]`.
#[derive(Clone, Copy, Debug)]
pub struct GConv {
    pub adjacency: ParamId,
    pub weight: ParamId,
}

impl GConv {
    fn build(store: &mut ParamStore, init: &mut Init, name: &str, v: usize, c: usize) -> Self {
        Self {
            adjacency: store.add(format!("{name}.A"), &[v, v], adjacency_init(v)),
            weight: store.add(format!("{name}.W"), &[c, c], init.uniform(c * c, 1.0 / (c as f64).sqrt())),
        }
    }

    pub fn forward(&self, x: &Tensor, ctx: &ForwardCtx) -> Result<Tensor> {
        gconv(x, ctx.param(self.adjacency), ctx.param(self.weight))
    }
}

fn conv_kernel(store: &mut ParamStore, init: &mut Init, name: &str, shape: &[usize]) -> ParamId {
    let fan_in: usize = shape[..shape.len() - 1].iter().product();
    let n = shape.iter().product();
    store.add(name, shape, init.uniform(n, 1.0 / (fan_in as f64).sqrt()))
}

#[derive(Clone, Copy, Debug)]
pub struct Msm {
    pub gconv: GConv,
    pub bn: BnId,
}

#[derive(Clone, Copy, Debug)]
pub struct Mtm {
    /// `[kt, kv, C/2, C/2]`
    pub kernel: ParamId,
    pub bn: BnId,
}

/// Everything a block forward reads besides the bound parameters.
pub struct BlockEnv<'a> {
    pub cfg: &'a ModelConfig,
    pub bn: &'a [BnEntry],
}

#[derive(Clone, Debug)]
pub struct MstfBlock {
    pub stage: usize,
    pub index: usize,
    pub norm1: LayerNorm,
    pub in_proj: Linear,
    pub skeletal: GConv,
    /// `[k, C/4, C/4]`
    pub tconv: ParamId,
    pub msm: Option<Msm>,
    pub mtm: Option<Mtm>,
    /// Recombination maps for the concat strategy, skeletal then temporal.
    pub concat: Option<[Linear; 2]>,
    pub gate: Linear,
    pub out_proj: Linear,
    pub norm2: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

fn concat_map(store: &mut ParamStore, name: &str, q: usize) -> Linear {
    let mut w = vec![0.0; 2 * q * q];
    for i in 0..q {
        w[i * q + i] = 1.0;
    }
    Linear::with_weight(store, name, 2 * q, q, w, true)
}

impl MstfBlock {
    pub fn build(
        store: &mut ParamStore,
        bn: &mut Vec<BnEntry>,
        init: &mut Init,
        cfg: &ModelConfig,
        stage: usize,
        index: usize,
    ) -> Self {
        let p = format!("stage.{stage}/block.{index}");
        let (c, q, v) = (cfg.channels, cfg.quarter(), cfg.joints);
        let mut add_bn = |name: String, channels: usize| {
            bn.push(BnEntry { name, state: BatchNormState::new(channels) });
            BnId(bn.len() - 1)
        };
        let norm1 = LayerNorm::build(store, &format!("{p}/norm1"), c);
        let in_proj = Linear::build(store, init, &format!("{p}/in_proj"), c, c, true);
        let skeletal = GConv::build(store, init, &format!("{p}/skeletal/gconv"), v, q);
        let tconv = conv_kernel(store, init, &format!("{p}/temporal/tconv.K"), &[cfg.tconv_kernel, q, q]);
        let msm = cfg.msm_enabled.then(|| Msm {
            gconv: GConv::build(store, init, &format!("{p}/msm/gconv"), v, 2 * q),
            bn: add_bn(format!("{p}/msm/bn"), 2 * q),
        });
        let mtm = cfg.mtm_enabled.then(|| Mtm {
            kernel: conv_kernel(store, init, &format!("{p}/mtm/conv.K"), &[cfg.mtm_kernel_t, cfg.mtm_kernel_v, 2 * q, 2 * q]),
            bn: add_bn(format!("{p}/mtm/bn"), 2 * q),
        });
        let concat = (cfg.modulation_strategy == ModulationStrategy::Concat).then(|| {
            [concat_map(store, &format!("{p}/msm/concat"), q), concat_map(store, &format!("{p}/mtm/concat"), q)]
        });
        let gate = Linear::zeros(store, &format!("{p}/gate"), c, 3);
        let out_proj = Linear::build(store, init, &format!("{p}/out_proj"), c, c, true);
        let norm2 = LayerNorm::build(store, &format!("{p}/norm2"), c);
        let hidden = cfg.ffn_expansion * c;
        let ffn_in = Linear::build(store, init, &format!("{p}/ffn.0"), c, hidden, true);
        let ffn_out = Linear::build(store, init, &format!("{p}/ffn.1"), hidden, c, true);
        Self { stage, index, norm1, in_proj, skeletal, tconv, msm, mtm, concat, gate, out_proj, norm2, ffn_in, ffn_out }
    }

    fn msm_factors(&self, m: &Msm, dx: &Tensor, env: &BlockEnv, ctx: &mut ForwardCtx) -> Result<ModulationFactors> {
        let z = m.gconv.forward(dx, ctx)?;
        let z = ctx.batch_norm(&z, m.bn, env.bn, env.cfg.bn_eps)?.tanh()?;
        ModulationFactors::from_z(&z)
    }

    fn mtm_factors(&self, m: &Mtm, dx: &Tensor, env: &BlockEnv, ctx: &mut ForwardCtx) -> Result<ModulationFactors> {
        let z = dx.conv2d(ctx.param(m.kernel))?;
        let z = ctx.batch_norm(&z, m.bn, env.bn, env.cfg.bn_eps)?.tanh()?;
        ModulationFactors::from_z(&z)
    }

    fn apply(&self, x_hat: &Tensor, f: Option<&ModulationFactors>, which: usize, cfg: &ModelConfig, ctx: &ForwardCtx) -> Result<Tensor> {
        let Some(f) = f else { return Ok(x_hat.clone()) };
        let map = self.concat.as_ref().map(|m| {
            let l = &m[which];
            (ctx.param(l.weight), ctx.param(l.bias.expect("concat map has bias")))
        });
        combine(x_hat, f, cfg.modulation_strategy, map)
    }

    /// `[.., T, V, C] -> [.., T, V, C]`.
    pub fn forward(&self, x: &Tensor, env: &BlockEnv, ctx: &mut ForwardCtx) -> Result<Tensor> {
        let cfg = env.cfg;
        let c = cfg.channels;
        if c % 4 != 0 {
            return Err(MmnError::Config(format!("channels must be divisible by 4, got {c}")));
        }
        let h = self.norm1.forward(x, ctx, cfg.ln_eps)?;
        let x_in = self.in_proj.forward(&h, ctx)?;

        let [sk, mo, te] = cfg.channel_split();
        let x_gc = self.skeletal.forward(&x_in.slice_last(sk.start, sk.end)?, ctx)?;
        let x_tc = x_in.slice_last(te.start, te.end)?.conv_temporal(ctx.param(self.tconv))?;
        let dx = x_in.slice_last(mo.start, mo.end)?.temporal_diff()?.pad_time_front(1)?;

        let fs = self.msm.as_ref().map(|m| self.msm_factors(m, &dx, env, ctx)).transpose()?;
        let ft = self.mtm.as_ref().map(|m| self.mtm_factors(m, &dx, env, ctx)).transpose()?;

        let eps = cfg.modulation_eps;
        let (x_gcm, x_tcm) = if cfg.shared_temporal_norm {
            let x_hat = standardize(&x_tc, eps)?;
            (self.apply(&x_hat, fs.as_ref(), 0, cfg, ctx)?, self.apply(&x_hat, ft.as_ref(), 1, cfg, ctx)?)
        } else {
            (
                self.apply(&standardize(&x_gc, eps)?, fs.as_ref(), 0, cfg, ctx)?,
                self.apply(&standardize(&x_tc, eps)?, ft.as_ref(), 1, cfg, ctx)?,
            )
        };

        let x_agg = aggregate_gated(
            &[x_gcm, dx, x_tcm],
            ctx.param(self.gate.weight),
            ctx.param(self.gate.bias.expect("gate has bias")),
        )?;
        if ctx.tracing() {
            let pair = |f: &Option<ModulationFactors>| f.as_ref().map(|f| (f.gamma.detach(), f.beta.detach()));
            ctx.push_trace(BlockTrace {
                stage: self.stage,
                block: self.index,
                x_agg: x_agg.detach(),
                msm: pair(&fs),
                mtm: pair(&ft),
            });
        }

        let y = x.add(&self.out_proj.forward(&x_agg, ctx)?)?;
        let f = self.ffn_in.forward(&self.norm2.forward(&y, ctx, cfg.ln_eps)?, ctx)?.gelu()?;
        let f = ctx.dropout(&f, cfg.dropout)?;
        Ok(y.add(&self.ffn_out.forward(&f, ctx)?)?)
    }
}
