//! Finite-difference checks of every differentiable operation on small
//! random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, OpKind, Tape, Tensor, Var};
use crate::error::Result;

/// Finite-difference step used by the suites.
pub const SUITE_EPS: f64 = 1e-5;
/// Largest relative error the suites accept.
pub const SUITE_TOLERANCE: f64 = 1e-4;

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 1.0, rng)
}

/// Uniform magnitudes in `[0.1, 1)` with random sign, clear of the ReLU kink.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_f64(shape, &vals).expect("length matches shape")
}

/// `sse(y, c)` against a fixed random target.
fn readout(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = uniform(&tape.shape(y).to_vec(), &mut rng);
    let c = tape.constant(c);
    tape.sse(y, c)
}

/// Worst relative error for one operation family.
pub fn check_op(op: OpKind, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = seed.wrapping_add(1);
    let img = [1, 2, 3, 3];
    let mut rand_inputs = |shapes: &[&[usize]]| -> Vec<Tensor<f64>> {
        shapes.iter().map(|s| uniform(s, &mut rng)).collect()
    };
    match op {
        OpKind::Conv2d => grad_check(
            |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), 2, 1)?;
                readout(t, y, r)
            },
            &rand_inputs(&[&[1, 3, 6, 5], &[4, 3, 3, 3], &[4]]),
            SUITE_EPS,
        ),
        OpKind::ConvTranspose2d => grad_check(
            |t, v| {
                let y = t.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 1, 0)?;
                readout(t, y, r)
            },
            &rand_inputs(&[&[1, 3, 4, 4], &[3, 2, 4, 4], &[2]]),
            SUITE_EPS,
        ),
        OpKind::Add | OpKind::Mul => grad_check(
            |t, v| {
                let y = if op == OpKind::Add {
                    t.add(v[0], v[1])?
                } else {
                    t.mul(v[0], v[1])?
                };
                readout(t, y, r)
            },
            &rand_inputs(&[&img, &img]),
            SUITE_EPS,
        ),
        OpKind::Sigmoid | OpKind::Tanh | OpKind::Scale => grad_check(
            |t, v| {
                let y = match op {
                    OpKind::Sigmoid => t.sigmoid(v[0]),
                    OpKind::Tanh => t.tanh(v[0]),
                    _ => t.scale(v[0], -1.7),
                };
                readout(t, y, r)
            },
            &rand_inputs(&[&img]),
            SUITE_EPS,
        ),
        OpKind::Relu => grad_check(
            |t, v| {
                let y = t.relu(v[0]);
                readout(t, y, r)
            },
            &[off_kink(&img, &mut rng)],
            SUITE_EPS,
        ),
        OpKind::Concat => grad_check(
            |t, v| {
                let y = t.concat_channels(&[v[0], v[1]])?;
                readout(t, y, r)
            },
            &rand_inputs(&[&img, &[1, 1, 3, 3]]),
            SUITE_EPS,
        ),
        OpKind::Slice => grad_check(
            |t, v| {
                let y = t.slice_channels(v[0], 1, 2)?;
                readout(t, y, r)
            },
            &rand_inputs(&[&[1, 4, 3, 3]]),
            SUITE_EPS,
        ),
        OpKind::Sum => grad_check(
            |t, v| {
                let y = t.sum_tensors(v)?;
                readout(t, y, r)
            },
            &rand_inputs(&[&img, &img, &img]),
            SUITE_EPS,
        ),
        OpKind::Sse => grad_check(|t, v| t.sse(v[0], v[1]), &rand_inputs(&[&img, &img]), SUITE_EPS),
        OpKind::AddScalarAt => grad_check(
            |t, v| {
                let y = t.add_scalar_at(v[0], v[1], 1)?;
                readout(t, y, r)
            },
            &rand_inputs(&[&img, &[3]]),
            SUITE_EPS,
        ),
    }
}

/// [`check_op`] for every operation family, in [`OpKind::ALL`] order.
pub fn op_suite(seed: u64) -> Result<Vec<(OpKind, f64)>> {
    OpKind::ALL
        .into_iter()
        .map(|op| Ok((op, check_op(op, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes() {
        for seed in 0..3 {
            for (op, err) in op_suite(seed).unwrap() {
                assert!(err < SUITE_TOLERANCE, "{}: {err:e}", op.name());
            }
        }
    }
}
