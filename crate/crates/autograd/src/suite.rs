//! A fixed battery of finite-difference checks covering every op, used by
//! the command-line `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::gradcheck;
use crate::ops::norm::BatchNormState;
use crate::tensor::Tensor;

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(), shape).expect("shape matches data")
}

fn away_from_zero(t: &Tensor) -> Tensor {
    Tensor::new(t.data().iter().map(|v| v.signum() * (v.abs() + 0.5)).collect(), t.shape()).expect("same shape")
}

fn weighted_sum(y: &Tensor, seed: u64) -> Result<Tensor> {
    y.mul(&random(y.shape(), seed))?.sum()
}

type Check = (&'static str, Box<dyn Fn(&[Tensor]) -> Result<Tensor>>, Vec<Tensor>);

fn checks() -> Vec<Check> {
    let x4 = random(&[2, 6, 3, 4], 90);
    let bn_eval = BatchNormState::from_parts(vec![0.3, -0.2], vec![1.5, 0.7]);
    vec![
        ("matmul", Box::new(|x| weighted_sum(&x[0].matmul(&x[1])?, 9)), vec![random(&[3, 4], 1), random(&[4, 2], 2)]),
        (
            "linear",
            Box::new(|x| weighted_sum(&x[0].linear(&x[1], Some(&x[2]))?, 5)),
            vec![random(&[2, 3, 4], 1), random(&[4, 6], 2), random(&[6], 3)],
        ),
        ("mix_joints", Box::new(|x| weighted_sum(&x[0].mix_joints(&x[1])?, 51)), vec![random(&[2, 3, 4, 2], 50), random(&[4, 4], 52)]),
        ("conv_temporal", Box::new(|x| weighted_sum(&x[0].conv_temporal(&x[1])?, 31)), vec![random(&[6, 2, 3], 30), random(&[3, 3, 4], 32)]),
        ("conv2d", Box::new(|x| weighted_sum(&x[0].conv2d(&x[1])?, 41)), vec![random(&[5, 4, 2], 40), random(&[3, 3, 2, 3], 42)]),
        ("add", Box::new(|x| weighted_sum(&x[0].add(&x[1])?, 62)), vec![random(&[2, 3, 4], 60), random(&[3, 1], 61)]),
        ("sub", Box::new(|x| weighted_sum(&x[0].sub(&x[1])?, 63)), vec![random(&[2, 3, 4], 60), random(&[3, 1], 61)]),
        ("mul", Box::new(|x| weighted_sum(&x[0].mul(&x[1])?, 64)), vec![random(&[2, 3, 4], 60), random(&[3, 1], 61)]),
        ("div", Box::new(|x| weighted_sum(&x[0].div(&x[1])?, 65)), vec![random(&[2, 3, 4], 60), away_from_zero(&random(&[3, 1], 61))]),
        ("neg", Box::new(|x| weighted_sum(&x[0].neg()?, 66)), vec![random(&[4, 5], 70)]),
        ("tanh", Box::new(|x| weighted_sum(&x[0].tanh()?, 71)), vec![random(&[4, 5], 70)]),
        ("gelu", Box::new(|x| weighted_sum(&x[0].gelu()?, 72)), vec![random(&[4, 5], 70)]),
        ("sigmoid", Box::new(|x| weighted_sum(&x[0].sigmoid()?, 73)), vec![random(&[4, 5], 70)]),
        ("exp", Box::new(|x| weighted_sum(&x[0].exp()?, 74)), vec![random(&[4, 5], 70)]),
        ("square", Box::new(|x| weighted_sum(&x[0].square()?, 75)), vec![random(&[4, 5], 70)]),
        ("scalar_affine", Box::new(|x| weighted_sum(&x[0].mul_scalar(-1.5)?.add_scalar(0.2)?, 76)), vec![random(&[4, 5], 70)]),
        ("sqrt", Box::new(|x| weighted_sum(&x[0].sqrt()?, 77)), vec![away_from_zero(&random(&[4, 5], 70)).square().expect("finite")]),
        (
            "layer_norm",
            Box::new(|x| weighted_sum(&x[0].layer_norm(&x[1], &x[2], 1e-5)?, 7)),
            vec![random(&[3, 4, 8], 11), random(&[8], 12), random(&[8], 13)],
        ),
        (
            "batch_norm_train",
            Box::new(|x| weighted_sum(&x[0].batch_norm(&BatchNormState::new(3), true, 1e-5)?.0, 21)),
            vec![random(&[2, 4, 3, 3], 20)],
        ),
        ("batch_norm_eval", Box::new(move |x| weighted_sum(&x[0].batch_norm(&bn_eval, false, 1e-5)?.0, 23)), vec![random(&[2, 3, 2, 2], 22)]),
        ("sum", Box::new(|x| x[0].mul(&random(&[2, 3], 3))?.sum()), vec![random(&[2, 3], 80)]),
        ("mean", Box::new(|x| x[0].mean()), vec![random(&[2, 3, 4, 5], 80)]),
        ("sum_axes", Box::new(|x| weighted_sum(&x[0].sum_axes(&[0, 2], false)?, 85)), vec![random(&[2, 3, 4, 5], 80)]),
        ("mean_axes", Box::new(|x| weighted_sum(&x[0].mean_axes(&[1, 2], true)?, 82)), vec![random(&[2, 3, 4, 5], 80)]),
        ("std_axes", Box::new(|x| weighted_sum(&x[0].std_axes(&[1, 2], false, 1e-5)?, 83)), vec![random(&[2, 3, 4, 5], 80)]),
        ("softmax", Box::new(|x| weighted_sum(&x[0].softmax()?, 81)), vec![random(&[2, 3, 4, 5], 80)]),
        ("global_mean_pool", Box::new(|x| weighted_sum(&x[0].global_mean_pool()?, 84)), vec![random(&[2, 3, 4, 5], 80)]),
        ("reshape", Box::new(|x| weighted_sum(&x[0].reshape(&[12, 12])?, 98)), vec![x4.clone()]),
        ("concat_last", Box::new(|x| weighted_sum(&Tensor::concat_last(&[&x[0], &x[1]])?, 92)), vec![x4.clone(), random(&[2, 6, 3, 2], 93)]),
        ("slice_last", Box::new(|x| weighted_sum(&x[0].slice_last(1, 3)?, 91)), vec![x4.clone()]),
        ("temporal_diff", Box::new(|x| weighted_sum(&x[0].temporal_diff()?, 94)), vec![x4.clone()]),
        ("pad_time_front", Box::new(|x| weighted_sum(&x[0].pad_time_front(1)?, 95)), vec![x4.clone()]),
        ("temporal_mean_pool", Box::new(|x| weighted_sum(&x[0].temporal_mean_pool(3)?, 97)), vec![x4.clone()]),
        ("temporal_downsample_by_2", Box::new(|x| weighted_sum(&x[0].temporal_downsample_by_2()?, 96)), vec![x4]),
        ("cross_entropy", Box::new(|x| x[0].cross_entropy(&[0, 5, 2, 3])), vec![random(&[4, 6], 100)]),
    ]
}

/// Runs every op check with central differences of step `eps`.
pub fn run_op_suite(eps: f64) -> Result<Vec<OpCheck>> {
    checks()
        .into_iter()
        .map(|(name, f, inputs)| Ok(OpCheck { name, max_rel_error: gradcheck(f, &inputs, eps)?.max_rel_error() }))
        .collect()
}
