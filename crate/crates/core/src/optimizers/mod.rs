//! DP-FTRL optimizers and the noisy-SGD baseline.
//!
//! All FTRL variants read the gradient prefix sum from an
//! [`AggregationTree`](crate::tree::AggregationTree) and solve a small
//! regularised problem in closed form.

mod ftrl;
mod least_squares;
mod loss;
mod sgd;

pub use ftrl::{composite_argmin, ftrl_argmin, momentum_argmin, DpFtrl, FtrlVariant};
pub use least_squares::{ls_argmin, LsState};
pub use loss::{minibatch_gradient, Example, LinearLoss, LogisticLoss, LossOracle, SquaredLoss};
pub use sgd::{equivalence_check, noisy_sgd_step, EquivalenceReport};

use crate::error::{invalid, Result};
use crate::tree::EstimatorMode;

/// Feasible set for the model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Constraint {
    #[default]
    Unconstrained,
    /// Origin-centred ℓ2 ball.
    Ball(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Regularisation strength; the matching SGD learning rate is `1/λ`.
    pub lambda: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub noise_scale: f64,
    pub constraint: Constraint,
    /// Per-step ℓ1 weight for the composite variant.
    pub l1_weight: f64,
    pub batch_size: usize,
    pub estimator: EstimatorMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            momentum: 0.0,
            clip_norm: 1.0,
            noise_scale: 0.0,
            constraint: Constraint::Unconstrained,
            l1_weight: 0.0,
            batch_size: 1,
            estimator: EstimatorMode::Honaker,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(invalid(format!("momentum must lie in [0, 1], got {}", self.momentum)));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(invalid(format!("clip norm must be positive, got {}", self.clip_norm)));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(invalid(format!("noise scale must be >= 0, got {}", self.noise_scale)));
        }
        if !(self.l1_weight >= 0.0 && self.l1_weight.is_finite()) {
            return Err(invalid(format!("l1 weight must be >= 0, got {}", self.l1_weight)));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be >= 1"));
        }
        if let Constraint::Ball(mu) = self.constraint {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(invalid(format!("ball radius must be positive, got {mu}")));
            }
        }
        Ok(())
    }

    /// Learning rate of the equivalent SGD run.
    pub fn learning_rate(&self) -> f64 {
        1.0 / self.lambda
    }
}
