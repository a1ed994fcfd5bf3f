//! Weighted Fréchet (Karcher) means by fixed-point iteration.
//!
//! `x <- exp_x(sum_i w_i log_x(x_i))` from `points[0]` until the Riemannian
//! gradient of `phi(x) = 1/2 sum_i w_i d^2(x_i, x)` falls below `tol`. The
//! iteration is deterministic, so the selected mean is reproducible.

use crate::manifolds::{Manifold, ManifoldError, Mat, Point, TangentVector};
use crate::network::MixingMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrechetOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FrechetOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct FrechetResult {
    pub mean: Point,
    /// `sum_i w_i d^2(x_i, mean)`; with uniform weights the average squared distance.
    pub variance: f64,
    pub iterations: usize,
    pub residual_grad_norm: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum FrechetError {
    #[error("Fréchet mean of an empty point set")]
    Empty,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("Fréchet iteration did not converge in {max_iter} steps (residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("Fréchet iteration hit a singular map: {0}")]
    LogFailure(#[from] ManifoldError),
}

fn check_weights(n: usize, weights: Option<&[f64]>) -> Result<Vec<f64>, FrechetError> {
    if n == 0 {
        return Err(FrechetError::Empty);
    }
    match weights {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(FrechetError::InvalidWeights(format!("{} weights for {n} points", w.len())));
            }
            if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(FrechetError::InvalidWeights("weights must be finite and nonnegative".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(FrechetError::InvalidWeights(format!("weights sum to {total}")));
            }
            Ok(w.to_vec())
        }
    }
}

/// `sum_i w_i log_x(x_i)`: the negative Riemannian gradient of `phi` at `x`.
pub fn mean_direction<M: Manifold + ?Sized>(
    m: &M,
    points: &[Point],
    weights: &[f64],
    x: &Point,
) -> Result<TangentVector, ManifoldError> {
    let mut acc = Mat::zeros(x.coords().nrows(), x.coords().ncols());
    for (p, &w) in points.iter().zip(weights) {
        if w != 0.0 {
            acc += m.log(x, p)?.into_vec() * w;
        }
    }
    Ok(TangentVector::from_raw(x.clone(), acc))
}

/// `sum_i w_i d^2(x_i, x)`.
pub fn weighted_sq_dist<M: Manifold + ?Sized>(
    m: &M,
    points: &[Point],
    weights: &[f64],
    x: &Point,
) -> Result<f64, ManifoldError> {
    let mut total = 0.0;
    for (p, &w) in points.iter().zip(weights) {
        let d = m.dist(p, x)?;
        total += w * d * d;
    }
    Ok(total)
}

pub fn frechet_mean<M: Manifold + ?Sized>(
    m: &M,
    points: &[Point],
    weights: Option<&[f64]>,
    opts: FrechetOptions,
) -> Result<FrechetResult, FrechetError> {
    let (r, converged) = frechet_mean_lenient(m, points, weights, opts)?;
    if converged {
        Ok(r)
    } else {
        Err(FrechetError::NoConvergence {
            max_iter: opts.max_iter,
            residual: r.residual_grad_norm,
        })
    }
}

/// Like [`frechet_mean`] but returns the last iterate when `max_iter` is
/// exhausted, together with a convergence flag.
pub fn frechet_mean_lenient<M: Manifold + ?Sized>(
    m: &M,
    points: &[Point],
    weights: Option<&[f64]>,
    opts: FrechetOptions,
) -> Result<(FrechetResult, bool), FrechetError> {
    let w = check_weights(points.len(), weights)?;
    let mut x = points[0].clone();
    let mut iterations = 0;
    loop {
        let dir = mean_direction(m, points, &w, &x)?;
        let residual = dir.norm();
        let converged = residual <= opts.tol;
        if converged || iterations == opts.max_iter {
            let variance = weighted_sq_dist(m, points, &w, &x)?;
            let r = FrechetResult {
                mean: x,
                variance,
                iterations,
                residual_grad_norm: residual,
            };
            return Ok((r, converged));
        }
        x = m.exp(&x, &dir)?;
        iterations += 1;
    }
}

/// Fréchet variance with uniform weights.
pub fn frechet_variance<M: Manifold + ?Sized>(m: &M, points: &[Point]) -> Result<f64, FrechetError> {
    Ok(frechet_mean(m, points, None, FrechetOptions::default())?.variance)
}

/// Network disagreement `sum_{i,j} w_ij d^2(x_i, x_j)` over the nonzero pattern of `w`.
pub fn weighted_disagreement<M: Manifold + ?Sized>(
    m: &M,
    points: &[Point],
    w: &MixingMatrix,
) -> Result<f64, ManifoldError> {
    let mut total = 0.0;
    for (i, x) in points.iter().enumerate() {
        for &(j, wij) in w.neighbors(i) {
            if j > i {
                let d = m.dist(x, &points[j])?;
                total += 2.0 * wij * d * d;
            }
        }
    }
    Ok(total)
}
