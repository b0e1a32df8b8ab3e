//! Noisy SGD and its trajectory equivalence with DP-FTRL.

use crate::error::{invalid, DpError, Result};
use crate::primitives::{clip, NoiseSource, RealVector};

use super::{Constraint, DpFtrl, Example, FtrlVariant, LossOracle, OptimizerConfig};

/// `θ − η(∇ + a)`.
pub fn noisy_sgd_step(theta: &RealVector, gradient: &RealVector, noise: &RealVector, eta: f64) -> Result<RealVector> {
    if gradient.dim() != theta.dim() || noise.dim() != theta.dim() {
        return Err(invalid("noisy SGD step with mismatched dimensions"));
    }
    let mut out = theta.clone();
    out.axpy(-eta, &gradient.add(noise));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// `max_t ‖θ_t^SGD − θ_t^FTRL‖`.
    pub max_deviation: f64,
    /// `max_deviation / max_t ‖θ_t^FTRL‖` (or the raw deviation when every
    /// FTRL model is zero).
    pub max_relative_deviation: f64,
    pub steps: usize,
}

/// Runs unconstrained base DP-FTRL and noisy SGD with `a_t = b_t − b_{t−1}`
/// side by side on `data`. The SGD learning rate defaults to `1/λ`.
pub fn equivalence_check<O: LossOracle + ?Sized>(
    data: &[Example],
    oracle: &O,
    config: &OptimizerConfig,
    seed: u64,
    eta_override: Option<f64>,
) -> Result<EquivalenceReport> {
    if config.constraint != Constraint::Unconstrained {
        return Err(DpError::Unsupported("trajectory equivalence needs an unconstrained domain".into()));
    }
    if data.is_empty() {
        return Err(invalid("empty stream"));
    }
    let dim = data[0].x.dim();
    let mut ftrl = DpFtrl::new(config.clone(), FtrlVariant::Base, dim, data.len(), NoiseSource::new(seed))?;
    let eta = eta_override.unwrap_or_else(|| config.learning_rate());
    let mut sgd = RealVector::zeros(dim);
    let mut prev_noise = RealVector::zeros(dim);
    let mut max_dev: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    for example in data {
        let g_ftrl = oracle.gradient(ftrl.theta(), example);
        let g_sgd = clip(&oracle.gradient(&sgd, example), config.clip_norm)?;
        ftrl.step(&g_ftrl)?;
        let b = ftrl.last_noise().clone();
        sgd = noisy_sgd_step(&sgd, &g_sgd, &b.sub(&prev_noise), eta)?;
        prev_noise = b;
        max_dev = max_dev.max(sgd.sub(ftrl.theta()).norm());
        max_norm = max_norm.max(ftrl.theta().norm());
    }
    let max_relative_deviation = if max_norm > 0.0 { max_dev / max_norm } else { max_dev };
    Ok(EquivalenceReport { max_deviation: max_dev, max_relative_deviation, steps: data.len() })
}
