use crate::error::{Result, TensorError};
use crate::tensor::{numel, BackwardOp, Tensor};

/// Right-aligned broadcast of two shapes.
pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let nd = a.len().max(b.len());
    let mut out = vec![0; nd];
    for i in 0..nd {
        let da = if i + a.len() >= nd { a[i + a.len() - nd] } else { 1 };
        let db = if i + b.len() >= nd { b[i + b.len() - nd] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::ShapeMismatch { op, lhs: a.to_vec(), rhs: b.to_vec() }),
        };
    }
    Ok(out)
}

/// For each flat index of `out_shape`, the flat index of the broadcast
/// source element in `in_shape`. `None` when the shapes are identical.
pub(crate) fn broadcast_index(in_shape: &[usize], out_shape: &[usize]) -> Option<Vec<usize>> {
    if in_shape == out_shape {
        return None;
    }
    let nd = out_shape.len();
    let off = nd - in_shape.len();
    let mut in_strides = vec![0usize; nd];
    let mut s = 1;
    for d in (0..in_shape.len()).rev() {
        in_strides[d + off] = if in_shape[d] == 1 { 0 } else { s };
        s *= in_shape[d];
    }
    let total = numel(out_shape);
    let mut idx = Vec::with_capacity(total);
    let mut counter = vec![0usize; nd];
    let mut cur = 0usize;
    for _ in 0..total {
        idx.push(cur);
        for d in (0..nd).rev() {
            counter[d] += 1;
            cur += in_strides[d];
            if counter[d] < out_shape[d] {
                break;
            }
            cur -= in_strides[d] * out_shape[d];
            counter[d] = 0;
        }
    }
    Some(idx)
}

/// Sums an output-shaped gradient back onto a broadcast input.
fn reduce_to(grad: Vec<f64>, map: &Option<Vec<usize>>, len: usize) -> Vec<f64> {
    match map {
        None => grad,
        Some(map) => {
            let mut out = vec![0.0; len];
            for (g, &j) in grad.iter().zip(map) {
                out[j] += g;
            }
            out
        }
    }
}

#[inline]
fn at(data: &[f64], map: &Option<Vec<usize>>, i: usize) -> f64 {
    match map {
        None => data[i],
        Some(m) => data[m[i]],
    }
}

#[derive(Clone, Copy, Debug)]
enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

struct Binary {
    kind: BinaryKind,
    map_a: Option<Vec<usize>>,
    map_b: Option<Vec<usize>>,
}

impl BackwardOp for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        }
    }

    fn backward(&self, parents: &[Tensor], _output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let (a, b) = (&parents[0], &parents[1]);
        let (ad, bd) = (a.data(), b.data());
        let n = grad.len();
        let ga = a.requires_grad().then(|| {
            let g: Vec<f64> = match self.kind {
                BinaryKind::Add | BinaryKind::Sub => grad.to_vec(),
                BinaryKind::Mul => (0..n).map(|i| grad[i] * at(bd, &self.map_b, i)).collect(),
                BinaryKind::Div => (0..n).map(|i| grad[i] / at(bd, &self.map_b, i)).collect(),
            };
            reduce_to(g, &self.map_a, a.numel())
        });
        let gb = b.requires_grad().then(|| {
            let g: Vec<f64> = match self.kind {
                BinaryKind::Add => grad.to_vec(),
                BinaryKind::Sub => grad.iter().map(|g| -g).collect(),
                BinaryKind::Mul => (0..n).map(|i| grad[i] * at(ad, &self.map_a, i)).collect(),
                BinaryKind::Div => (0..n)
                    .map(|i| {
                        let bv = at(bd, &self.map_b, i);
                        -grad[i] * at(ad, &self.map_a, i) / (bv * bv)
                    })
                    .collect(),
            };
            reduce_to(g, &self.map_b, b.numel())
        });
        vec![ga, gb]
    }
}

fn binary(kind: BinaryKind, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let op = Binary { kind, map_a: None, map_b: None };
    let name = op.name();
    let shape = broadcast_shapes(name, a.shape(), b.shape())?;
    let map_a = broadcast_index(a.shape(), &shape);
    let map_b = broadcast_index(b.shape(), &shape);
    let n = numel(&shape);
    let (ad, bd) = (a.data(), b.data());
    let f = |x: f64, y: f64| match kind {
        BinaryKind::Add => x + y,
        BinaryKind::Sub => x - y,
        BinaryKind::Mul => x * y,
        BinaryKind::Div => x / y,
    };
    let data: Vec<f64> = if map_a.is_none() && map_b.is_none() {
        ad.iter().zip(bd).map(|(&x, &y)| f(x, y)).collect()
    } else {
        (0..n).map(|i| f(at(ad, &map_a, i), at(bd, &map_b, i))).collect()
    };
    Tensor::from_op(
        name,
        data,
        shape,
        vec![a.clone(), b.clone()],
        Box::new(Binary { kind, map_a, map_b }),
    )
}

#[derive(Clone, Copy, Debug)]
enum UnaryKind {
    Neg,
    Tanh,
    Sigmoid,
    Gelu,
    Sqrt,
    Exp,
    Square,
    Affine { scale: f64, shift: f64 },
}

struct Unary {
    kind: UnaryKind,
}

/// Largest `f64` below 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
// 1 / sqrt(2 pi)
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub(crate) fn gelu_value(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

#[inline]
fn gelu_slope(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
    let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

impl UnaryKind {
    fn apply(self, x: f64) -> f64 {
        match self {
            UnaryKind::Neg => -x,
            // kept strictly inside the open range, which rounding would
            // otherwise close for large |x|
            UnaryKind::Tanh => x.tanh().clamp(-BELOW_ONE, BELOW_ONE),
            UnaryKind::Sigmoid => (1.0 / (1.0 + (-x).exp())).clamp(f64::MIN_POSITIVE, BELOW_ONE),
            UnaryKind::Gelu => gelu_value(x),
            UnaryKind::Sqrt => x.sqrt(),
            UnaryKind::Exp => x.exp(),
            UnaryKind::Square => x * x,
            UnaryKind::Affine { scale, shift } => scale * x + shift,
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn slope(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryKind::Neg => -1.0,
            UnaryKind::Tanh => 1.0 - y * y,
            UnaryKind::Sigmoid => y * (1.0 - y),
            UnaryKind::Gelu => gelu_slope(x),
            UnaryKind::Sqrt => 0.5 / y,
            UnaryKind::Exp => y,
            UnaryKind::Square => 2.0 * x,
            UnaryKind::Affine { scale, .. } => scale,
        }
    }
}

impl BackwardOp for Unary {
    fn name(&self) -> &'static str {
        match self.kind {
            UnaryKind::Neg => "neg",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Gelu => "gelu",
            UnaryKind::Sqrt => "sqrt",
            UnaryKind::Exp => "exp",
            UnaryKind::Square => "square",
            UnaryKind::Affine { .. } => "affine",
        }
    }

    fn backward(&self, parents: &[Tensor], output: &Tensor, grad: &[f64]) -> Vec<Option<Vec<f64>>> {
        let x = parents[0].data();
        let y = output.data();
        let g = grad
            .iter()
            .zip(x.iter().zip(y))
            .map(|(g, (&x, &y))| g * self.kind.slope(x, y))
            .collect();
        vec![Some(g)]
    }
}

fn unary(kind: UnaryKind, x: &Tensor) -> Result<Tensor> {
    let op = Unary { kind };
    let data = x.data().iter().map(|&v| kind.apply(v)).collect();
    Tensor::from_op(op.name(), data, x.shape().to_vec(), vec![x.clone()], Box::new(op))
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Add, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Sub, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Mul, self, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(BinaryKind::Div, self, other)
    }

    pub fn neg(&self) -> Result<Tensor> {
        unary(UnaryKind::Neg, self)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        unary(UnaryKind::Tanh, self)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        unary(UnaryKind::Sigmoid, self)
    }

    /// Exact (erf-based) GELU.
    pub fn gelu(&self) -> Result<Tensor> {
        unary(UnaryKind::Gelu, self)
    }

    pub fn sqrt(&self) -> Result<Tensor> {
        unary(UnaryKind::Sqrt, self)
    }

    pub fn exp(&self) -> Result<Tensor> {
        unary(UnaryKind::Exp, self)
    }

    pub fn square(&self) -> Result<Tensor> {
        unary(UnaryKind::Square, self)
    }

    pub fn mul_scalar(&self, scale: f64) -> Result<Tensor> {
        unary(UnaryKind::Affine { scale, shift: 0.0 }, self)
    }

    pub fn add_scalar(&self, shift: f64) -> Result<Tensor> {
        unary(UnaryKind::Affine { scale: 1.0, shift }, self)
    }
}
