//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

const REL_FLOOR: f64 = 1e-8;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compare the tape gradient of a scalar-valued function against central
/// differences `(f(x+ε) − f(x−ε)) / 2ε`, coordinate by coordinate. Returns
/// the maximum relative error `|a−n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<S, F>(f: F, x: &Tensor<S>, eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, TensorId) -> Result<TensorId>,
{
    finite_diff_check_multi(
        |tape, ids| f(tape, ids[0]),
        std::slice::from_ref(x),
        eps,
    )
}

/// Multi-input variant: every input becomes a `requires_grad` leaf and every
/// coordinate of every input is perturbed.
pub fn finite_diff_check_multi<S, F>(f: F, inputs: &[Tensor<S>], eps: f64) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    let all: Vec<Vec<usize>> = inputs.iter().map(|t| (0..t.numel()).collect()).collect();
    check_coords(&f, inputs, eps, &all)
}

/// Like [`finite_diff_check_multi`] but checks a seeded random sample of at
/// most `coords_per_input` coordinates per input. Exhaustive differencing of
/// a full-size network is quadratic in parameter count; a spread of sampled
/// coordinates per tensor catches the same wiring mistakes.
pub fn finite_diff_check_sampled<S, F>(
    f: F,
    inputs: &[Tensor<S>],
    eps: f64,
    coords_per_input: usize,
    seed: u64,
) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampled: Vec<Vec<usize>> = inputs
        .iter()
        .map(|t| {
            let mut idx: Vec<usize> = (0..t.numel()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(coords_per_input.min(t.numel()));
            idx.sort_unstable();
            idx
        })
        .collect();
    check_coords(&f, inputs, eps, &sampled)
}

/// Per-coordinate (analytic, numeric) derivative pairs over a sampled set
/// of coordinates, for callers that need to distinguish disagreement from
/// measurement noise on near-zero gradients.
pub fn finite_diff_pairs<S, F>(
    f: F,
    inputs: &[Tensor<S>],
    eps: f64,
    coords_per_input: Option<(usize, u64)>,
) -> Result<Vec<(f64, f64)>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    let coords: Vec<Vec<usize>> = match coords_per_input {
        None => inputs.iter().map(|t| (0..t.numel()).collect()).collect(),
        Some((count, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            inputs
                .iter()
                .map(|t| {
                    let mut idx: Vec<usize> = (0..t.numel()).collect();
                    idx.shuffle(&mut rng);
                    idx.truncate(count.min(t.numel()));
                    idx.sort_unstable();
                    idx
                })
                .collect()
        }
    };
    pairs_at_coords(&f, inputs, eps, &coords)
}

fn check_coords<S, F>(
    f: &F,
    inputs: &[Tensor<S>],
    eps: f64,
    coords: &[Vec<usize>],
) -> Result<f64>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    let pairs = pairs_at_coords(f, inputs, eps, coords)?;
    Ok(pairs
        .into_iter()
        .fold(0.0f64, |worst, (a, n)| worst.max(rel_err(a, n))))
}

fn pairs_at_coords<S, F>(
    f: &F,
    inputs: &[Tensor<S>],
    eps: f64,
    coords: &[Vec<usize>],
) -> Result<Vec<(f64, f64)>>
where
    S: Scalar,
    F: Fn(&mut Tape<S>, &[TensorId]) -> Result<TensorId>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone(), true))
        .collect::<Result<_>>()?;
    let loss = f(&mut tape, &ids)?;
    if !tape.value(loss).is_scalar() {
        return Err(CoreError::LossNotScalar {
            shape: tape.value(loss).shape.clone(),
        });
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| {
            tape.grad(id)
                .map(|g| g.iter().map(|x| x.as_f64()).collect())
                .unwrap_or_else(|| vec![0.0; tape.value(id).numel()])
        })
        .collect();

    let eval = |perturbed: &[Tensor<S>]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = perturbed
            .iter()
            .map(|t| tape.leaf(t.clone(), false))
            .collect::<Result<_>>()?;
        let loss = f(&mut tape, &ids)?;
        Ok(tape.value(loss).data[0].as_f64())
    };

    let step = S::of_f64(eps);
    let mut pairs = Vec::new();
    let mut work: Vec<Tensor<S>> = inputs.to_vec();
    for (which, idx_list) in coords.iter().enumerate() {
        for &i in idx_list {
            let orig = work[which].data[i];
            work[which].data[i] = orig + step;
            let plus = eval(&work)?;
            work[which].data[i] = orig - step;
            let minus = eval(&work)?;
            work[which].data[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            pairs.push((analytic[which][i], numeric));
        }
    }
    Ok(pairs)
}

/// Relative error with the standard floor; public so verification suites
/// reduce [`finite_diff_pairs`] with the same formula the checkers use.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    rel_err(analytic, numeric)
}
