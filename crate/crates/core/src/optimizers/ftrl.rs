//! DP-FTRL with optional momentum or ℓ1 composite term.
//!
//! At step `t` the clipped gradient enters the tree, the noisy prefix sum
//! `s_t` comes back, and the next model is
//!
//! ```text
//! base:      argmin_θ∈C ⟨s_t, θ⟩ + λ/2 ‖θ − θ₀‖²
//! momentum:  v_t = γ v_{t−1} + s_t;  argmin_θ∈C ⟨v_t, θ⟩ + λ/2 ‖θ − θ₀‖²
//! composite: argmin_θ ⟨s_t, θ⟩ + t·ρ‖θ‖₁ + λ/2 ‖θ − θ₀‖²
//! ```
//!
//! The anchor `θ₀` is the initial model (zero) for the first tree and the
//! current model after each restart.

use crate::error::{invalid, DpError, Result};
use crate::primitives::{clip, project_ball, NoiseSource, RealVector};
use crate::tree::AggregationTree;

use super::{Constraint, OptimizerConfig};

/// `argmin_θ∈C ⟨s, θ⟩ + λ/2 ‖θ‖²`, i.e. `−s/λ` capped radially at `μ`.
pub fn ftrl_argmin(s: &RealVector, lambda: f64, constraint: Constraint) -> Result<RealVector> {
    momentum_argmin(s, &RealVector::zeros(s.dim()), lambda, constraint)
}

/// `argmin_θ∈C ⟨v, θ⟩ + λ/2 ‖θ − θ₀‖²`.
///
/// The objective equals `λ/2 ‖θ − (θ₀ − v/λ)‖²` up to a constant, so over
/// the ball the minimiser is the projection of `θ₀ − v/λ`.
pub fn momentum_argmin(v: &RealVector, anchor: &RealVector, lambda: f64, constraint: Constraint) -> Result<RealVector> {
    if v.dim() != anchor.dim() {
        return Err(invalid("anchor and direction dimensions differ"));
    }
    let mut center = anchor.clone();
    center.axpy(-1.0 / lambda, v);
    match constraint {
        Constraint::Unconstrained => Ok(center),
        Constraint::Ball(mu) => project_ball(&center, mu),
    }
}

/// `argmin_θ ⟨s, θ⟩ + l1_total‖θ‖₁ + λ/2 ‖θ − θ₀‖²`, coordinate-wise soft
/// thresholding. Only the unconstrained domain is supported.
pub fn composite_argmin(
    s: &RealVector,
    anchor: &RealVector,
    l1_total: f64,
    lambda: f64,
    constraint: Constraint,
) -> Result<RealVector> {
    if constraint != Constraint::Unconstrained {
        return Err(DpError::Unsupported("ℓ1 composite step with a ball constraint".into()));
    }
    let threshold = l1_total / lambda;
    let out = s
        .iter()
        .zip(anchor.iter())
        .map(|(&sj, &aj)| {
            let u = aj - sj / lambda;
            u.signum() * (u.abs() - threshold).max(0.0)
        })
        .collect();
    RealVector::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtrlVariant {
    Base,
    Momentum,
    Composite,
}

/// A running DP-FTRL optimiser.
#[derive(Debug, Clone)]
pub struct DpFtrl {
    config: OptimizerConfig,
    variant: FtrlVariant,
    noise: NoiseSource,
    tree: AggregationTree,
    blocks: u64,
    steps: usize,
    theta: RealVector,
    momentum_buf: RealVector,
    anchor: RealVector,
    exact_sum: RealVector,
    last_noise: RealVector,
}

impl DpFtrl {
    /// Starts with `θ₁ = 0` and a tree sized for `horizon` steps.
    pub fn new(
        config: OptimizerConfig,
        variant: FtrlVariant,
        dim: usize,
        horizon: usize,
        noise: NoiseSource,
    ) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(invalid("model dimension must be positive"));
        }
        if variant == FtrlVariant::Composite && config.constraint != Constraint::Unconstrained {
            return Err(DpError::Unsupported("ℓ1 composite step with a ball constraint".into()));
        }
        let tree = Self::fresh_tree(&config, dim, horizon, noise, 0)?;
        Ok(Self {
            config,
            variant,
            noise,
            tree,
            blocks: 0,
            steps: 0,
            theta: RealVector::zeros(dim),
            momentum_buf: RealVector::zeros(dim),
            anchor: RealVector::zeros(dim),
            exact_sum: RealVector::zeros(dim),
            last_noise: RealVector::zeros(dim),
        })
    }

    fn fresh_tree(
        config: &OptimizerConfig,
        dim: usize,
        horizon: usize,
        noise: NoiseSource,
        block: u64,
    ) -> Result<AggregationTree> {
        AggregationTree::new(horizon, config.noise_scale, config.clip_norm, dim, noise.derive(block), config.estimator)
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn variant(&self) -> FtrlVariant {
        self.variant
    }

    /// Current model, the one used to predict on the next example.
    pub fn theta(&self) -> &RealVector {
        &self.theta
    }

    pub fn anchor(&self) -> &RealVector {
        &self.anchor
    }

    pub fn tree(&self) -> &AggregationTree {
        &self.tree
    }

    /// Total real steps taken over all trees.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `b_t = s_t − Σ∇` of the most recent step in the current tree.
    pub fn last_noise(&self) -> &RealVector {
        &self.last_noise
    }

    /// Clips `gradient`, feeds it to the tree and moves to the next model.
    pub fn step(&mut self, gradient: &RealVector) -> Result<&RealVector> {
        if gradient.dim() != self.theta.dim() {
            return Err(invalid(format!(
                "gradient dimension {} != model dimension {}",
                gradient.dim(),
                self.theta.dim()
            )));
        }
        let g = clip(gradient, self.config.clip_norm)?;
        self.tree.push(g.as_slice())?;
        self.exact_sum.axpy(1.0, &g);
        self.steps += 1;
        let estimate = self.tree.estimate(self.tree.leaf_count())?;
        let s = estimate.value;
        self.last_noise = s.sub(&self.exact_sum);

        let lambda = self.config.lambda;
        self.theta = match self.variant {
            FtrlVariant::Base => momentum_argmin(&s, &self.anchor, lambda, self.config.constraint)?,
            FtrlVariant::Momentum => {
                let mut v = self.momentum_buf.scaled(self.config.momentum);
                v.axpy(1.0, &s);
                self.momentum_buf = v;
                momentum_argmin(&self.momentum_buf, &self.anchor, lambda, self.config.constraint)?
            }
            FtrlVariant::Composite => {
                let real_steps = self.tree.leaf_count() - self.tree.virtual_leaves().len();
                let l1_total = real_steps as f64 * self.config.l1_weight;
                composite_argmin(&s, &self.anchor, l1_total, lambda, self.config.constraint)?
            }
        };
        Ok(&self.theta)
    }

    /// Closes the current tree and starts a new one for `horizon` steps.
    /// With `complete`, the old tree is first padded with virtual steps up
    /// to its capacity and the model is refreshed from the completed sum.
    /// Returns the number of virtual steps added.
    pub fn restart(&mut self, horizon: usize, complete: bool) -> Result<usize> {
        let mut added = 0;
        if complete && self.tree.leaf_count() > 0 {
            added = self.tree.complete()?;
            if added > 0 {
                // a virtual step contributes a zero gradient
                self.step_virtual()?;
            }
        }
        self.blocks += 1;
        self.tree = Self::fresh_tree(&self.config, self.theta.dim(), horizon, self.noise, self.blocks)?;
        self.anchor = self.theta.clone();
        self.momentum_buf = RealVector::zeros(self.theta.dim());
        self.exact_sum = RealVector::zeros(self.theta.dim());
        self.last_noise = RealVector::zeros(self.theta.dim());
        Ok(added)
    }

    fn step_virtual(&mut self) -> Result<()> {
        let t = self.tree.leaf_count();
        let s = self.tree.estimate(t)?.value;
        self.last_noise = s.sub(&self.exact_sum);
        let lambda = self.config.lambda;
        self.theta = match self.variant {
            FtrlVariant::Base => momentum_argmin(&s, &self.anchor, lambda, self.config.constraint)?,
            FtrlVariant::Momentum => {
                let mut v = self.momentum_buf.scaled(self.config.momentum);
                v.axpy(1.0, &s);
                self.momentum_buf = v;
                momentum_argmin(&self.momentum_buf, &self.anchor, lambda, self.config.constraint)?
            }
            FtrlVariant::Composite => {
                let real_steps = t - self.tree.virtual_leaves().len();
                let l1_total = real_steps as f64 * self.config.l1_weight;
                composite_argmin(&s, &self.anchor, l1_total, lambda, self.config.constraint)?
            }
        };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::EstimatorMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> RealVector {
        RealVector::new(x.to_vec()).unwrap()
    }

    fn close(a: &RealVector, b: &RealVector, tol: f64) -> bool {
        a.sub(b).norm() <= tol
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(ftrl_argmin(&v(&[2.0, -4.0]), 2.0, Constraint::Unconstrained).unwrap(), v(&[-1.0, 2.0]));
        let s5 = 5f64.sqrt();
        assert!(close(
            &ftrl_argmin(&v(&[2.0, -4.0]), 2.0, Constraint::Ball(1.0)).unwrap(),
            &v(&[-1.0 / s5, 2.0 / s5]),
            1e-15
        ));
        assert!(ftrl_argmin(&v(&[0.0, 0.0]), 3.0, Constraint::Ball(1.0)).unwrap().is_zero());
        assert_eq!(
            momentum_argmin(&v(&[2.0, 0.0]), &v(&[1.0, 0.0]), 2.0, Constraint::Unconstrained).unwrap(),
            v(&[0.0, 0.0])
        );
    }

    #[test]
    fn composite_examples() {
        let zero = v(&[0.0]);
        // 1-d oracle: minimise 5θ + 2|θ| + θ²/2 on a fine grid
        let grid_min = (-100_000..=100_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| {
                let f = |t: f64| 5.0 * t + 2.0 * t.abs() + 0.5 * t * t;
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        let theta = composite_argmin(&v(&[5.0]), &zero, 2.0, 1.0, Constraint::Unconstrained).unwrap();
        assert!((theta[0] - grid_min).abs() < 1e-4);
        assert!((theta[0] + 3.0).abs() < 1e-15);

        let sparse =
            composite_argmin(&v(&[1.5, -0.5, 3.0]), &v(&[0.0; 3]), 2.0, 1.0, Constraint::Unconstrained).unwrap();
        assert_eq!(sparse[0], 0.0);
        assert_eq!(sparse[1], 0.0);
        assert!((sparse[2] + 1.0).abs() < 1e-15);

        let s = v(&[0.7, -2.0]);
        assert_eq!(
            composite_argmin(&s, &v(&[0.0, 0.0]), 0.0, 4.0, Constraint::Unconstrained).unwrap(),
            ftrl_argmin(&s, 4.0, Constraint::Unconstrained).unwrap()
        );
        assert!(matches!(
            composite_argmin(&s, &v(&[0.0, 0.0]), 1.0, 1.0, Constraint::Ball(1.0)),
            Err(DpError::Unsupported(_))
        ));
    }

    fn run(variant: FtrlVariant, config: OptimizerConfig, grads: &[RealVector], seed: u64) -> Vec<RealVector> {
        let mut opt = DpFtrl::new(config, variant, grads[0].dim(), grads.len(), NoiseSource::new(seed)).unwrap();
        grads.iter().map(|g| opt.step(g).unwrap().clone()).collect()
    }

    fn random_grads(n: usize, dim: usize, seed: u64) -> Vec<RealVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| v(&(0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<_>>())).collect()
    }

    #[test]
    fn reductions() {
        let grads = random_grads(40, 3, 1);
        let config = OptimizerConfig { lambda: 3.0, noise_scale: 0.7, ..Default::default() };
        let base = run(FtrlVariant::Base, config.clone(), &grads, 9);
        let momentum = run(FtrlVariant::Momentum, OptimizerConfig { momentum: 0.0, ..config.clone() }, &grads, 9);
        assert_eq!(base, momentum);
        let composite = run(FtrlVariant::Composite, OptimizerConfig { l1_weight: 0.0, ..config.clone() }, &grads, 9);
        for (a, b) in base.iter().zip(&composite) {
            assert!(close(a, b, 1e-15));
        }
    }

    #[test]
    fn momentum_with_constant_gradient() {
        // s_i = i·g, so v_t = t(t+1)/2 · g when γ = 1
        let g = v(&[0.2, -0.1]);
        let config = OptimizerConfig { lambda: 4.0, momentum: 1.0, ..Default::default() };
        let mut opt = DpFtrl::new(config, FtrlVariant::Momentum, 2, 16, NoiseSource::new(0)).unwrap();
        for t in 1..=16usize {
            let theta = opt.step(&g).unwrap();
            let expected = g.scaled(-((t * (t + 1)) as f64 / 2.0) / 4.0);
            assert!(close(theta, &expected, 1e-12));
        }
    }

    #[test]
    fn noiseless_unconstrained_is_negative_scaled_sum() {
        let grads = random_grads(20, 2, 3);
        let config = OptimizerConfig { lambda: 2.5, clip_norm: 1.0, ..Default::default() };
        let thetas = run(FtrlVariant::Base, config, &grads, 0);
        let mut sum = RealVector::zeros(2);
        for (g, theta) in grads.iter().zip(&thetas) {
            sum.axpy(1.0, &clip(g, 1.0).unwrap());
            assert!(close(theta, &sum.scaled(-1.0 / 2.5), 1e-12));
        }
    }

    #[test]
    fn ball_constraint_holds_every_step() {
        let grads = random_grads(64, 4, 5);
        for variant in [FtrlVariant::Base, FtrlVariant::Momentum] {
            let config = OptimizerConfig {
                lambda: 0.5,
                momentum: 0.9,
                noise_scale: 2.0,
                constraint: Constraint::Ball(0.75),
                ..Default::default()
            };
            for theta in run(variant, config, &grads, 17) {
                assert!(theta.norm() <= 0.75 + 1e-12);
            }
        }
    }

    #[test]
    fn model_is_minus_estimate_over_lambda() {
        let grads = random_grads(30, 3, 8);
        let config =
            OptimizerConfig { lambda: 1.7, noise_scale: 1.1, estimator: EstimatorMode::Vanilla, ..Default::default() };
        let mut opt = DpFtrl::new(config, FtrlVariant::Base, 3, 30, NoiseSource::new(4)).unwrap();
        for g in &grads {
            opt.step(g).unwrap();
            let s = opt.tree().get_sum(opt.tree().leaf_count()).unwrap().value;
            let resid = opt.theta().add(&s.scaled(1.0 / 1.7));
            assert!(resid.norm() < 1e-12);
        }
    }

    #[test]
    fn composite_rejects_ball() {
        let config = OptimizerConfig { l1_weight: 0.1, constraint: Constraint::Ball(1.0), ..Default::default() };
        assert!(matches!(
            DpFtrl::new(config, FtrlVariant::Composite, 2, 4, NoiseSource::new(0)),
            Err(DpError::Unsupported(_))
        ));
    }

    #[test]
    fn restart_anchors_at_current_model() {
        let grads = random_grads(10, 2, 2);
        let config = OptimizerConfig { lambda: 2.0, ..Default::default() };
        let mut opt = DpFtrl::new(config, FtrlVariant::Base, 2, 5, NoiseSource::new(0)).unwrap();
        for g in &grads[..5] {
            opt.step(g).unwrap();
        }
        let before = opt.theta().clone();
        assert_eq!(opt.restart(5, true).unwrap(), 3);
        // zero-noise completion leaves the model where it was
        assert!(close(opt.theta(), &before, 1e-12));
        assert!(close(opt.anchor(), &before, 1e-12));
        assert_eq!(opt.tree().leaf_count(), 0);
        let g = clip(&grads[5], 1.0).unwrap();
        let theta = opt.step(&grads[5]).unwrap().clone();
        assert!(close(&theta, &before.sub(&g.scaled(0.5)), 1e-12));
        assert!(opt.step(&v(&[1.0])).is_err());
    }
}
