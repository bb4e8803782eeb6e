//! Largest-singular-value estimation.
//!
//! Spectral norms are computed by power iteration on a Gram operator
//! `G = M^T M` (or `M M^T`, whichever side is smaller). The iteration starts
//! from the deterministic all-ones vector so repeated runs agree bit-for-bit;
//! if that start vector is annihilated by the operator it restarts once from
//! a fixed-seed random vector. Convergence is declared when successive
//! Rayleigh quotients agree to a relative tolerance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Matricization;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Seed for the one-time random restart; fixed so results stay reproducible.
const RESTART_SEED: u64 = 0x7e57_0001;

/// Largest singular value of the matrix represented by `gram`, where
/// `gram(v)` applies a positive semidefinite operator of size `dim` equal to
/// `M^T M` for the matrix `M` in question. Returns `sqrt(lambda_max)`.
pub fn gram_spectral_norm<F>(gram: F, dim: usize, tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return Err(Error::ShapeError {
            detail: "gram operator of dimension zero".to_string(),
        });
    }
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut prev_rq: Option<f64> = None;
    let mut best = 0.0_f64;
    let mut restarted = false;
    let mut iters = 0usize;
    while iters < max_iter {
        iters += 1;
        let w = gram(&v);
        debug_assert_eq!(w.len(), dim);
        let rq: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        if rq > best {
            best = rq;
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !nw.is_finite() {
            return Err(Error::ConvergenceError {
                best: best.max(0.0).sqrt(),
                iters,
            });
        }
        if nw <= f64::MIN_POSITIVE {
            if restarted {
                // Operator is (numerically) zero on both start vectors.
                return Ok(0.0);
            }
            restarted = true;
            let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
            v = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= nv;
            }
            prev_rq = None;
            continue;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        if let Some(p) = prev_rq {
            if (rq - p).abs() <= tol * rq.abs().max(f64::MIN_POSITIVE) {
                return Ok(rq.max(0.0).sqrt());
            }
        }
        prev_rq = Some(rq);
    }
    Err(Error::ConvergenceError {
        best: best.max(0.0).sqrt(),
        iters,
    })
}

/// Largest singular value of a dense matricization.
pub fn spectral_norm(m: &Matricization, tol: f64, max_iter: usize) -> Result<f64> {
    let (r, c) = (m.rows(), m.cols());
    if r == 0 || c == 0 {
        return Err(Error::ShapeError {
            detail: "spectral norm of empty matricization".to_string(),
        });
    }
    if c <= r {
        gram_spectral_norm(|v| m.apply_transpose(&m.apply(v)), c, tol, max_iter)
    } else {
        gram_spectral_norm(|v| m.apply(&m.apply_transpose(v)), r, tol, max_iter)
    }
}

/// [`spectral_norm`] with the crate-default tolerance and iteration budget.
pub fn spectral_norm_default(m: &Matricization) -> Result<f64> {
    spectral_norm(m, DEFAULT_TOL, DEFAULT_MAX_ITER)
}
