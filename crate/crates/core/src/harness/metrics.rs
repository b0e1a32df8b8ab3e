//! Regret, online-to-batch conversion and the regret bound.

use crate::error::{invalid, Result};
use crate::optimizers::{Example, LossOracle};
use crate::primitives::RealVector;
use crate::tree::ceil_log2;

/// Per-step losses of the learner and a fixed comparator.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub algorithm_losses: Vec<f64>,
    pub comparator_losses: Vec<f64>,
    pub comparator: RealVector,
    /// `(1/t)·Σ_{i≤t} (ℓ(θ_i; d_i) − ℓ(θ*; d_i))` for each prefix `t`.
    pub running_regret: Vec<f64>,
    /// Mean of the emitted models.
    pub averaged_model: RealVector,
}

impl RegretRecord {
    pub fn new(
        algorithm_losses: Vec<f64>,
        comparator_losses: Vec<f64>,
        comparator: RealVector,
        averaged_model: RealVector,
    ) -> Result<Self> {
        if algorithm_losses.len() != comparator_losses.len() {
            return Err(invalid("loss sequences differ in length"));
        }
        let mut total = 0.0;
        let running_regret = algorithm_losses
            .iter()
            .zip(&comparator_losses)
            .enumerate()
            .map(|(i, (a, c))| {
                total += a - c;
                total / (i + 1) as f64
            })
            .collect();
        Ok(Self { algorithm_losses, comparator_losses, comparator, running_regret, averaged_model })
    }

    /// Average regret over the whole run.
    pub fn regret(&self) -> f64 {
        self.running_regret.last().copied().unwrap_or(0.0)
    }
}

/// `(1/n)·Σ ℓ(θ_t; d_t) − (1/n)·Σ ℓ(θ*; d_t)`.
pub fn compute_regret<O: LossOracle + ?Sized>(
    trajectory: &[RealVector],
    data: &[Example],
    comparator: &RealVector,
    oracle: &O,
) -> Result<f64> {
    if trajectory.len() != data.len() {
        return Err(invalid(format!("trajectory has {} models for {} examples", trajectory.len(), data.len())));
    }
    if data.is_empty() {
        return Err(invalid("empty stream"));
    }
    let total: f64 =
        trajectory.iter().zip(data).map(|(theta, d)| oracle.loss(theta, d) - oracle.loss(comparator, d)).sum();
    Ok(total / data.len() as f64)
}

/// Coordinate-wise mean of the models.
pub fn online_to_batch(trajectory: &[RealVector]) -> Result<RealVector> {
    let first = trajectory.first().ok_or_else(|| invalid("empty trajectory"))?;
    let mut sum = RealVector::zeros(first.dim());
    for theta in trajectory {
        if theta.dim() != first.dim() {
            return Err(invalid("trajectory models differ in dimension"));
        }
        sum.axpy(1.0, theta);
    }
    Ok(sum.scaled(1.0 / trajectory.len() as f64))
}

/// Mean loss of `theta` over `data`.
pub fn empirical_risk<O: LossOracle + ?Sized>(theta: &RealVector, data: &[Example], oracle: &O) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("empty stream"));
    }
    Ok(data.iter().map(|d| oracle.loss(theta, d)).sum::<f64>() / data.len() as f64)
}

/// Risk of `theta` minus risk of `reference` on held-out data.
pub fn excess_risk<O: LossOracle + ?Sized>(
    theta: &RealVector,
    reference: &RealVector,
    held_out: &[Example],
    oracle: &O,
) -> Result<f64> {
    Ok(empirical_risk(theta, held_out, oracle)? - empirical_risk(reference, held_out, oracle)?)
}

/// Minimiser of `Σ⟨θ, g⟩` over the ball of radius `radius`: `−μ·G/‖G‖`.
pub fn best_linear_comparator(gradient_sum: &RealVector, radius: f64) -> RealVector {
    let n = gradient_sum.norm();
    if n == 0.0 {
        RealVector::zeros(gradient_sum.dim())
    } else {
        gradient_sum.scaled(-radius / n)
    }
}

/// Inputs of the high-probability regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub clip_norm: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub n: usize,
    pub p: usize,
    pub comparator_norm: f64,
    /// Failure probability.
    pub beta: f64,
}

/// `(Lσ·sqrt(p⌈lg n⌉ ln(n/β)) + L²)/λ + λ‖θ*‖²/(2n)`, with `θ₁ = 0`.
///
/// Choosing `λ` to balance the two terms gives the usual
/// `O(1/√n)`-type rate; here `λ` is taken as given.
pub fn regret_bound_general(params: &BoundParams) -> Result<f64> {
    let BoundParams { clip_norm, lambda, sigma, n, p, comparator_norm, beta } = *params;
    if !(clip_norm > 0.0 && lambda > 0.0 && sigma >= 0.0 && comparator_norm >= 0.0) || n == 0 || p == 0 {
        return Err(invalid("bound parameters must be positive"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("failure probability must lie in (0, 1), got {beta}")));
    }
    let nf = n as f64;
    let noise = clip_norm * sigma * (p as f64 * ceil_log2(n) as f64 * (nf / beta).ln()).sqrt();
    Ok((noise + clip_norm * clip_norm) / lambda + lambda * comparator_norm * comparator_norm / (2.0 * nf))
}
