//! Central finite-difference verification of analytic gradients.

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Per-input comparison of analytic and numerical gradients.
#[derive(Clone, Debug)]
pub struct GradcheckReport {
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    /// Maximum elementwise relative error for each input.
    pub per_input: Vec<f64>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_input.iter().cloned().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

/// Magnitude below which a gradient is compared in absolute terms. Finite
/// differences of an O(1) function carry roughly `1e-16 / eps` of rounding
/// noise, so exactly-zero gradients read as ~1e-10 numerically.
pub const GRAD_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn eval_scalar<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let out = f(inputs)?;
    if out.numel() != 1 {
        return Err(TensorError::Dimension {
            op: "gradcheck",
            msg: format!("function must return a scalar, got shape {:?}", out.shape()),
        });
    }
    Ok(out.item())
}

/// Compares the gradients of the scalar function `f` at `inputs` (values
/// and shapes are taken from the given tensors) with five-point central
/// differences of step `eps`. Errors raised by `f`, such as a non-finite intermediate,
/// propagate with the offending op's name.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradcheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> =
        inputs.iter().map(|t| Tensor::param(t.to_vec(), t.shape())).collect::<Result<_>>()?;
    let out = f(&leaves)?;
    if out.numel() != 1 {
        return Err(TensorError::Dimension {
            op: "gradcheck",
            msg: format!("function must return a scalar, got shape {:?}", out.shape()),
        });
    }
    out.backward()?;
    let analytic: Vec<Vec<f64>> =
        leaves.iter().map(|l| l.grad().unwrap_or_else(|| vec![0.0; l.numel()])).collect();

    let mut values: Vec<Vec<f64>> = inputs.iter().map(|t| t.to_vec()).collect();
    let mut numeric = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = vec![0.0; values[i].len()];
        for j in 0..values[i].len() {
            let orig = values[i][j];
            let mut at = |offset: f64| -> Result<f64> {
                values[i][j] = orig + offset;
                eval_scalar(&f, &constants(&values, inputs)?)
            };
            // five-point stencil: truncation error O(eps^4)
            let (p1, m1, p2, m2) = (at(eps)?, at(-eps)?, at(2.0 * eps)?, at(-2.0 * eps)?);
            values[i][j] = orig;
            grad[j] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
        }
        numeric.push(grad);
    }

    let per_input = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| a.iter().zip(n).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max))
        .collect();
    Ok(GradcheckReport { analytic, numeric, per_input })
}

fn constants(values: &[Vec<f64>], like: &[Tensor]) -> Result<Vec<Tensor>> {
    values.iter().zip(like).map(|(v, t)| Tensor::new(v.clone(), t.shape())).collect()
}
