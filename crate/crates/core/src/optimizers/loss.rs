use crate::error::{invalid, Result};
use crate::primitives::{clip, RealVector};

/// A labelled example `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: RealVector,
    pub y: f64,
}

impl Example {
    pub fn new(x: RealVector, y: f64) -> Self {
        Self { x, y }
    }
}

/// Loss and gradient of a model on one example. The empty example `⊥`
/// (passed as `None`) always has zero gradient.
pub trait LossOracle {
    fn loss(&self, theta: &RealVector, example: &Example) -> f64;

    fn gradient(&self, theta: &RealVector, example: &Example) -> RealVector;

    fn gradient_or_zero(&self, theta: &RealVector, example: Option<&Example>) -> RealVector {
        match example {
            Some(e) => self.gradient(theta, e),
            None => RealVector::zeros(theta.dim()),
        }
    }
}

/// `ℓ(θ; (x, y)) = y·⟨θ, x⟩`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinearLoss;

impl LossOracle for LinearLoss {
    fn loss(&self, theta: &RealVector, example: &Example) -> f64 {
        example.y * theta.dot(&example.x)
    }

    fn gradient(&self, _theta: &RealVector, example: &Example) -> RealVector {
        example.x.scaled(example.y)
    }
}

/// `ℓ(θ; (x, y)) = ln(1 + exp(−y⟨θ, x⟩))` with `y ∈ {−1, +1}`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticLoss;

impl LossOracle for LogisticLoss {
    fn loss(&self, theta: &RealVector, example: &Example) -> f64 {
        let margin = example.y * theta.dot(&example.x);
        // ln(1 + e^{-m}) without overflow
        if margin > 0.0 {
            (-margin).exp().ln_1p()
        } else {
            -margin + margin.exp().ln_1p()
        }
    }

    fn gradient(&self, theta: &RealVector, example: &Example) -> RealVector {
        let margin = example.y * theta.dot(&example.x);
        let weight = if margin > 0.0 {
            let e = (-margin).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + margin.exp())
        };
        example.x.scaled(-example.y * weight)
    }
}

/// `ℓ(θ; (x, y)) = (y − ⟨θ, x⟩)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredLoss;

impl LossOracle for SquaredLoss {
    fn loss(&self, theta: &RealVector, example: &Example) -> f64 {
        let r = example.y - theta.dot(&example.x);
        r * r
    }

    fn gradient(&self, theta: &RealVector, example: &Example) -> RealVector {
        let r = example.y - theta.dot(&example.x);
        example.x.scaled(-2.0 * r)
    }
}

/// Mean of per-example clipped gradients over a batch of nominal size `q`.
///
/// Short batches are padded with `⊥`, so each real example moves the result
/// by at most `L/q`. Summation is left to right.
pub fn minibatch_gradient<O: LossOracle + ?Sized>(
    batch: &[Option<Example>],
    theta: &RealVector,
    oracle: &O,
    clip_norm: f64,
    batch_size: usize,
) -> Result<RealVector> {
    if batch_size == 0 {
        return Err(invalid("batch size must be >= 1"));
    }
    if batch.len() > batch_size {
        return Err(invalid(format!("batch has {} examples, more than q = {batch_size}", batch.len())));
    }
    let mut sum = RealVector::zeros(theta.dim());
    for example in batch {
        let g = oracle.gradient_or_zero(theta, example.as_ref());
        if g.dim() != theta.dim() {
            return Err(invalid(format!("gradient dimension {} != model dimension {}", g.dim(), theta.dim())));
        }
        sum.axpy(1.0, &clip(&g, clip_norm)?);
    }
    Ok(sum.scaled(1.0 / batch_size as f64))
}
