//! "Same"-padded convolutions over the (time, joint) plane.
//!
//! Inputs are `[.., T, V, Cin]`; kernels are `[kt, kv, Cin, Cout]`. Both are
//! lowered to one matrix product against an im2col buffer that is rebuilt
//! from the input during the backward pass instead of being kept alive.

use crate::error::{Result, TensorError};
use crate::ops::linalg::gemm;
use crate::tensor::{numel, BackwardOp, Tensor};

#[derive(Clone, Copy)]
struct Geometry {
    batch: usize,
    t: usize,
    v: usize,
    cin: usize,
    cout: usize,
    kt: usize,
    kv: usize,
}

impl Geometry {
    fn patch(&self) -> usize {
        self.kt * self.kv * self.cin
    }

    fn rows(&self) -> usize {
        self.batch * self.t * self.v
    }
}

fn im2col(x: &[f64], g: Geometry) -> Vec<f64> {
    let (pt, pv) = (g.kt / 2, g.kv / 2);
    let patch = g.patch();
    let mut col = vec![0.0; g.rows() * patch];
    for b in 0..g.batch {
        for t in 0..g.t {
            for v in 0..g.v {
                let row = ((b * g.t + t) * g.v + v) * patch;
                for i in 0..g.kt {
                    let Some(st) = (t + i).checked_sub(pt).filter(|&s| s < g.t) else { continue };
                    for j in 0..g.kv {
                        let Some(sv) = (v + j).checked_sub(pv).filter(|&s| s < g.v) else { continue };
                        let src = ((b * g.t + st) * g.v + sv) * g.cin;
                        let dst = row + (i * g.kv + j) * g.cin;
                        col[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], g: Geometry) -> Vec<f64> {
    let (pt, pv) = (g.kt / 2, g.kv / 2);
    let patch = g.patch();
    let mut x = vec![0.0; g.batch * g.t * g.v * g.cin];
    for b in 0..g.batch {
        for t in 0..g.t {
            for v in 0..g.v {
                let row = ((b * g.t + t) * g.v + v) * patch;
                for i in 0..g.kt {
                    let Some(st) = (t + i).checked_sub(pt).filter(|&s| s < g.t) else { continue };
                    for j in 0..g.kv {
                        let Some(sv) = (v + j).checked_sub(pv).filter(|&s| s < g.v) else { continue };
                        let dst = ((b * g.t + st) * g.v + sv) * g.cin;
                        let src = row + (i * g.kv + j) * g.cin;
                        for c in 0..g.cin {
                            x[dst + c] += col[src + c];
                        }
                    }
                }
            }
        }
    }
    x
}

struct Conv2d {
    geom: Geometry,
}

impl BackwardOp for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let g = self.geom;
        let (x, w) = (&parents[0], &parents[1]);
        let gx = x.requires_grad().then(|| {
            let mut dcol = vec![0.0; g.rows() * g.patch()];
            gemm(g.rows(), g.cout, g.patch(), grad, false, w.data(), true, &mut dcol, false);
            col2im(&dcol, g)
        });
        let gw = w.requires_grad().then(|| {
            let col = im2col(x.data(), g);
            let mut dw = vec![0.0; g.patch() * g.cout];
            gemm(g.patch(), g.rows(), g.cout, &col, true, grad, false, &mut dw, false);
            dw
        });
        vec![gx, gw]
    }
}

impl Tensor {
    /// 2-D convolution over time and joints with zero "same" padding and
    /// fully connected channels. Kernel extents must be odd.
    pub fn conv2d(&self, kernel: &Tensor) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 3 || kernel.ndim() != 4 {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                lhs: self.shape().to_vec(),
                rhs: kernel.shape().to_vec(),
            });
        }
        let (kt, kv, kin, cout) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2], kernel.shape()[3]);
        if kt % 2 == 0 || kv % 2 == 0 {
            return Err(TensorError::Config(format!("conv2d kernel extents must be odd, got {kt}x{kv}")));
        }
        let s = self.shape();
        let geom = Geometry {
            batch: numel(&s[..nd - 3]),
            t: s[nd - 3],
            v: s[nd - 2],
            cin: s[nd - 1],
            cout,
            kt,
            kv,
        };
        if kin != geom.cin {
            return Err(TensorError::ShapeMismatch { op: "conv2d", lhs: s.to_vec(), rhs: kernel.shape().to_vec() });
        }
        let col = im2col(self.data(), geom);
        let mut data = vec![0.0; geom.rows() * cout];
        gemm(geom.rows(), geom.patch(), cout, &col, false, kernel.data(), false, &mut data, false);
        let mut shape = s.to_vec();
        shape[nd - 1] = cout;
        Tensor::from_op("conv2d", data, shape, vec![self.clone(), kernel.clone()], Box::new(Conv2d { geom }))
    }

    /// Convolution along time only, independently per joint, with a
    /// `[k, Cin, Cout]` kernel and zero padding `(k-1)/2` on each side.
    pub fn conv_temporal(&self, kernel: &Tensor) -> Result<Tensor> {
        if kernel.ndim() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: "conv_temporal",
                lhs: self.shape().to_vec(),
                rhs: kernel.shape().to_vec(),
            });
        }
        let k = kernel.shape()[0];
        if k % 2 == 0 {
            return Err(TensorError::Config(format!("temporal kernel size must be odd, got {k}")));
        }
        let (cin, cout) = (kernel.shape()[1], kernel.shape()[2]);
        self.conv2d(&kernel.reshape(&[k, 1, cin, cout])?)
    }
}
