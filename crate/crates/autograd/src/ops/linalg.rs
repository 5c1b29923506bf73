use crate::error::{Result, TensorError};
use crate::tensor::{BackwardOp, Tensor};

/// `c (+)= op(a) * op(b)` with `op(a)` logically `m x k` and `op(b)` `k x n`,
/// all row-major. A transposed operand is stored as its transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices hold at least the addressed extents, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct Linear {
    rows: usize,
    k: usize,
    n: usize,
    has_bias: bool,
}

impl BackwardOp for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, w) = (&parents[0], &parents[1]);
        let gx = x.requires_grad().then(|| {
            let mut g = vec![0.0; self.rows * self.k];
            gemm(self.rows, self.n, self.k, grad, false, w.data(), true, &mut g, false);
            g
        });
        let gw = w.requires_grad().then(|| {
            let mut g = vec![0.0; self.k * self.n];
            gemm(self.k, self.rows, self.n, x.data(), true, grad, false, &mut g, false);
            g
        });
        let mut out = vec![gx, gw];
        if self.has_bias {
            out.push(parents[2].requires_grad().then(|| {
                let mut g = vec![0.0; self.n];
                for row in grad.chunks(self.n) {
                    g.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
                g
            }));
        }
        out
    }
}

struct MixJoints {
    blocks: usize,
    v: usize,
    c: usize,
}

impl BackwardOp for MixJoints {
    fn name(&self) -> &'static str {
        "mix_joints"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (x, a) = (&parents[0], &parents[1]);
        let (v, c) = (self.v, self.c);
        let gx = x.requires_grad().then(|| {
            let mut g = vec![0.0; x.numel()];
            for b in 0..self.blocks {
                let r = b * v * c..(b + 1) * v * c;
                gemm(v, v, c, a.data(), true, &grad[r.clone()], false, &mut g[r], false);
            }
            g
        });
        let ga = a.requires_grad().then(|| {
            let mut g = vec![0.0; v * v];
            for b in 0..self.blocks {
                let r = b * v * c..(b + 1) * v * c;
                gemm(v, c, v, &grad[r.clone()], false, &x.data()[r], true, &mut g, true);
            }
            g
        });
        vec![gx, ga]
    }
}

impl Tensor {
    /// Plain 2-D matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() != 2 || other.ndim() != 2 || self.shape()[1] != other.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let (m, k, n) = (self.shape()[0], self.shape()[1], other.shape()[1]);
        let out = self.reshape(&[m, k])?.linear(other, None)?;
        out.reshape(&[m, n])
    }

    /// `x @ weight + bias` over the last axis, for `weight` of shape `[k, n]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let k = *self.shape().last().unwrap();
        if weight.ndim() != 2 || weight.shape()[0] != k {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        let n = weight.shape()[1];
        if let Some(b) = bias {
            if b.shape() != [n] {
                return Err(TensorError::ShapeMismatch {
                    op: "linear",
                    lhs: weight.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let rows = self.numel() / k;
        let mut data = vec![0.0; rows * n];
        if let Some(b) = bias {
            for row in data.chunks_mut(n) {
                row.copy_from_slice(b.data());
            }
        }
        gemm(rows, k, n, self.data(), false, weight.data(), false, &mut data, bias.is_some());
        let mut shape = self.shape().to_vec();
        *shape.last_mut().unwrap() = n;
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Tensor::from_op("linear", data, shape, parents, Box::new(Linear { rows, k, n, has_bias: bias.is_some() }))
    }

    /// Mixes joints of a `[.., V, C]` tensor through a `[V, V]` matrix:
    /// `out[.., v, c] = sum_u A[v, u] * x[.., u, c]`.
    pub fn mix_joints(&self, adjacency: &Tensor) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 2 {
            return Err(TensorError::Dimension { op: "mix_joints", msg: format!("needs [.., V, C], got {:?}", self.shape()) });
        }
        let (v, c) = (self.shape()[nd - 2], self.shape()[nd - 1]);
        if adjacency.shape() != [v, v] {
            return Err(TensorError::ShapeMismatch {
                op: "mix_joints",
                lhs: self.shape().to_vec(),
                rhs: adjacency.shape().to_vec(),
            });
        }
        let blocks = self.numel() / (v * c);
        let mut data = vec![0.0; self.numel()];
        for b in 0..blocks {
            let r = b * v * c..(b + 1) * v * c;
            gemm(v, v, c, adjacency.data(), false, &self.data()[r.clone()], false, &mut data[r], false);
        }
        Tensor::from_op(
            "mix_joints",
            data,
            self.shape().to_vec(),
            vec![self.clone(), adjacency.clone()],
            Box::new(MixJoints { blocks, v, c }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(data: &[f64], r: usize, c: usize) -> Tensor {
        Tensor::new(data.to_vec(), &[r, c]).unwrap()
    }

    #[test]
    fn identity_times_matrix() {
        let i = m(&[1.0, 0.0, 0.0, 1.0], 2, 2);
        let b = m(&[1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(i.matmul(&b).unwrap().data(), b.data());
    }

    #[test]
    fn projector_selects_first_row() {
        let p = m(&[1.0, 0.0, 0.0, 0.0], 2, 2);
        let b = m(&[5.0, 6.0, 7.0, 8.0], 2, 2);
        assert_eq!(p.matmul(&b).unwrap().data(), &[5.0, 6.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_error_names_both_shapes() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn sum_of_product_gradient_is_ones_times_b_transposed() {
        let a = Tensor::param(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]).unwrap();
        let b = Tensor::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        a.matmul(&b).unwrap().sum().unwrap().backward().unwrap();
        // row sums of b, repeated for each row of a
        assert_eq!(a.grad().unwrap(), vec![3.0, 7.0, 11.0, 3.0, 7.0, 11.0]);
    }

    #[test]
    fn mix_joints_with_identity_is_noop() {
        let x = Tensor::new((0..12).map(f64::from).collect(), &[2, 3, 2]).unwrap();
        let eye = Tensor::new(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &[3, 3]).unwrap();
        assert_eq!(x.mix_joints(&eye).unwrap().data(), x.data());
    }
}
