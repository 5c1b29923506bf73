use crate::error::{MmnError, Result};
use crate::model::ParamStore;

/// First and second moment accumulators, one pair per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// Updates one parameter slice in place:
/// `theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)`.
pub fn adamw_update(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], step: u64, h: &AdamHyper) {
    let bc1 = 1.0 - h.beta1.powi(step as i32);
    let bc2 = 1.0 - h.beta2.powi(step as i32);
    for i in 0..theta.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= h.lr * (m_hat / (v_hat.sqrt() + h.eps) + h.weight_decay * theta[i]);
    }
}

/// One AdamW step over every parameter of `store`. Nothing is modified
/// when any gradient is non-finite; the error names the first offender.
pub fn adamw_step(store: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, h: &AdamHyper) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(MmnError::Config(format!(
            "optimizer expects {} gradients and moment slots, got {} and {}",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (p, g) in store.iter().zip(grads) {
        if g.len() != p.numel() {
            return Err(MmnError::Config(format!("{}: gradient has {} values, expected {}", p.name, g.len(), p.numel())));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(MmnError::NonFiniteGradient { param: p.name.clone() });
        }
    }
    state.step += 1;
    for (i, p) in store.iter_mut().enumerate() {
        adamw_update(&mut p.value, &grads[i], &mut state.m[i], &mut state.v[i], state.step, h);
    }
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}
