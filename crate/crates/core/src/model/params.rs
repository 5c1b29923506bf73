//! Named parameter storage and the per-call forward context.

use mmn_autograd::{BatchNormState, BatchStats, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{MmnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BnId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    /// Stable hierarchical path, e.g. `stage.1/block.0/msm/gconv.W`.
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], value: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), value.len(), "{name}: shape/value mismatch");
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.params.push(Param { name, shape: shape.to_vec(), value });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar parameter count.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Param::numel).sum()
    }
}

/// Named running statistics of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnEntry {
    pub name: String,
    pub state: BatchNormState,
}

/// Parameter initialization helpers, seeded.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn uniform(&mut self, n: usize, bound: f64) -> Vec<f64> {
        (0..n).map(|_| self.rng.gen_range(-bound..bound)).collect()
    }

    pub fn normal(&mut self, n: usize, std: f64) -> Vec<f64> {
        let d = Normal::new(0.0, std).expect("positive std");
        (0..n).map(|_| d.sample(&mut self.rng)).collect()
    }
}

/// Snapshot of one block's internals, recorded when tracing is on.
#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub stage: usize,
    pub block: usize,
    /// Gated aggregation output, `[B, T_l, V, C]`.
    pub x_agg: Tensor,
    /// `(gamma, beta)` from the skeletal modulation path, when enabled.
    pub msm: Option<(Tensor, Tensor)>,
    /// `(gamma, beta)` from the temporal modulation path, when enabled.
    pub mtm: Option<(Tensor, Tensor)>,
}

/// Everything a single forward pass needs besides the model itself:
/// parameter tensors bound for this pass, the train/eval switch, the
/// dropout stream and the side outputs (batch-norm statistics, traces).
pub struct ForwardCtx {
    bound: Vec<Tensor>,
    pub training: bool,
    rng: ChaCha8Rng,
    bn_updates: Vec<(BnId, BatchStats)>,
    traces: Option<Vec<BlockTrace>>,
}

impl ForwardCtx {
    fn bind(store: &ParamStore, training: bool, requires_grad: bool, seed: u64) -> Result<Self> {
        let bound = store
            .iter()
            .map(|p| {
                if requires_grad {
                    Tensor::param(p.value.clone(), &p.shape)
                } else {
                    Tensor::new(p.value.clone(), &p.shape)
                }
            })
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self::with_tensors(bound, training, seed))
    }

    /// Inference pass: no gradients, running batch-norm statistics.
    pub fn eval(store: &ParamStore) -> Result<Self> {
        Self::bind(store, false, false, 0)
    }

    /// Training pass with gradients; `seed` drives dropout masks.
    pub fn train(store: &ParamStore, seed: u64) -> Result<Self> {
        Self::bind(store, true, true, seed)
    }

    /// Binds caller-provided tensors in parameter order.
    pub fn with_tensors(bound: Vec<Tensor>, training: bool, seed: u64) -> Self {
        Self { bound, training, rng: ChaCha8Rng::seed_from_u64(seed), bn_updates: Vec::new(), traces: None }
    }

    pub fn enable_tracing(&mut self) {
        self.traces = Some(Vec::new());
    }

    pub fn param(&self, id: ParamId) -> &Tensor {
        &self.bound[id.0]
    }

    pub fn bound(&self) -> &[Tensor] {
        &self.bound
    }

    /// Gradients of every bound parameter (zeros where none flowed).
    pub fn grads(&self) -> Vec<Vec<f64>> {
        self.bound.iter().map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()])).collect()
    }

    pub fn take_bn_updates(&mut self) -> Vec<(BnId, BatchStats)> {
        std::mem::take(&mut self.bn_updates)
    }

    pub fn take_traces(&mut self) -> Vec<BlockTrace> {
        self.traces.take().unwrap_or_default()
    }

    pub(crate) fn tracing(&self) -> bool {
        self.traces.is_some()
    }

    pub(crate) fn push_trace(&mut self, trace: BlockTrace) {
        if let Some(t) = self.traces.as_mut() {
            t.push(trace);
        }
    }

    pub(crate) fn batch_norm(&mut self, x: &Tensor, id: BnId, bn: &[BnEntry], eps: f64) -> Result<Tensor> {
        let (y, stats) = x.batch_norm(&bn[id.0].state, self.training, eps)?;
        if let Some(stats) = stats {
            self.bn_updates.push((id, stats));
        }
        Ok(y)
    }

    /// Inverted dropout; identity outside training or at `p = 0`.
    pub(crate) fn dropout(&mut self, x: &Tensor, p: f64) -> Result<Tensor> {
        if !self.training || p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..x.numel()).map(|_| if self.rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
        Ok(x.mul(&Tensor::new(mask, x.shape())?)?)
    }
}

/// Looks up a parameter by name or fails with a checkpoint error.
pub fn require(store: &ParamStore, name: &str) -> Result<ParamId> {
    store.find(name).ok_or_else(|| MmnError::Checkpoint(format!("missing parameter {name}")))
}
