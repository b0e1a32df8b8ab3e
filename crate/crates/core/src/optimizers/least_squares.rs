//! DP-FTRL specialised to squared loss.
//!
//! Two trees run side by side: one over `y_t·x_t` and one over the
//! symmetric matrices `x_t x_tᵀ`. The model minimises
//! `θᵀWθ − 2⟨s, θ⟩ + λ/2 ‖θ‖²` where `W` and `s` are their noisy prefix sums.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, DpError, Result};
use crate::primitives::{NoiseSource, RealVector};
use crate::tree::{AggregationTree, EstimatorMode};

use super::Constraint;

const DUAL_TOLERANCE: f64 = 1e-13;

/// `argmin_θ∈C θᵀWθ − 2⟨s, θ⟩ + λ/2 ‖θ‖²` for symmetric `W` (row-major).
///
/// Requires `2W + λI` positive definite. On a ball the multiplier `κ` of
/// the norm constraint is found by bisection on `‖θ(κ)‖ = μ` with
/// `θ(κ) = (2W + (λ + 2κ)I)⁻¹ 2s`.
pub fn ls_argmin(w: &[f64], s: &RealVector, lambda: f64, constraint: Constraint) -> Result<RealVector> {
    let p = s.dim();
    if w.len() != p * p {
        return Err(invalid(format!("matrix has {} entries, expected {}", w.len(), p * p)));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let m = DMatrix::from_row_slice(p, p, w);
    let sym = (&m + m.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(sym);
    let shifted: Vec<f64> = eigen.eigenvalues.iter().map(|d| 2.0 * d + lambda).collect();
    let min_eigenvalue = shifted.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eigenvalue > 0.0) {
        return Err(DpError::IndefiniteSystem { min_eigenvalue });
    }
    // coordinates of 2s in the eigenbasis
    let rhs = eigen.eigenvectors.transpose() * DVector::from_column_slice(s.as_slice()) * 2.0;
    let solve = |kappa: f64| -> DVector<f64> {
        let coords = DVector::from_iterator(p, rhs.iter().zip(&shifted).map(|(b, d)| b / (d + 2.0 * kappa)));
        &eigen.eigenvectors * coords
    };

    let mut theta = solve(0.0);
    if let Constraint::Ball(mu) = constraint {
        if theta.norm() > mu {
            let mut lo = 0.0;
            let mut hi = 1.0;
            while solve(hi).norm() > mu {
                hi *= 2.0;
            }
            while hi - lo > DUAL_TOLERANCE * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if solve(mid).norm() > mu {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            theta = solve(hi);
            let n = theta.norm();
            if n > mu {
                theta *= mu / n;
            }
        }
    }
    RealVector::new(theta.iter().copied().collect())
}

/// Running state of least-squares DP-FTRL.
#[derive(Debug, Clone)]
pub struct LsState {
    lambda: f64,
    constraint: Constraint,
    clip_norm: f64,
    bias: AggregationTree,
    cov: AggregationTree,
    theta: RealVector,
}

impl LsState {
    /// The bias tree clips at `L` and the covariance tree at `L²` (the
    /// Frobenius norm of `xxᵀ`); both add noise with multiplier `σ`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        horizon: usize,
        lambda: f64,
        clip_norm: f64,
        noise_scale: f64,
        constraint: Constraint,
        noise: NoiseSource,
        mode: EstimatorMode,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        let bias = AggregationTree::new(horizon, noise_scale, clip_norm, dim, noise.derive(0), mode)?;
        let cov =
            AggregationTree::new_symmetric(horizon, noise_scale, clip_norm * clip_norm, dim, noise.derive(1), mode)?;
        Ok(Self { lambda, constraint, clip_norm, bias, cov, theta: RealVector::zeros(dim) })
    }

    pub fn theta(&self) -> &RealVector {
        &self.theta
    }

    pub fn steps(&self) -> usize {
        self.bias.leaf_count()
    }

    /// Consumes `(x, y)` and returns the next model. Needs `‖x‖ ≤ L` and
    /// `|y| ≤ 1`.
    pub fn step(&mut self, x: &RealVector, y: f64) -> Result<&RealVector> {
        let p = self.theta.dim();
        if x.dim() != p {
            return Err(invalid(format!("feature dimension {} != model dimension {p}", x.dim())));
        }
        if x.norm() > self.clip_norm * (1.0 + crate::tree::SENSITIVITY_TOLERANCE) {
            return Err(DpError::SensitivityViolation { norm: x.norm(), clip_norm: self.clip_norm });
        }
        if !(y.abs() <= 1.0) {
            return Err(invalid(format!("label must lie in [-1, 1], got {y}")));
        }
        let outer: Vec<f64> = x.iter().flat_map(|&a| x.iter().map(move |&b| a * b)).collect();
        self.bias.push(x.scaled(y).as_slice())?;
        self.cov.push(&outer)?;
        let t = self.bias.leaf_count();
        let s = self.bias.estimate(t)?.value;
        let w = self.cov.estimate(t)?.value;
        self.theta = ls_argmin(w.as_slice(), &s, self.lambda, self.constraint)?;
        Ok(&self.theta)
    }
}
