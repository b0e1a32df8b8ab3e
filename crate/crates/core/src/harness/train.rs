//! Online training loop, privacy bookkeeping and regularization tuning.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, DpError, Result};
use crate::optimizers::{
    minibatch_gradient, noisy_sgd_step, Constraint, DpFtrl, Example, FtrlVariant, LossOracle, LsState, OptimizerConfig,
};
use crate::primitives::{project_ball, splitmix64, NoiseSource, RealVector};
use crate::privacy::{default_orders, Accounting, IncrementalOrderSensitivity, OrderToken};

use super::data::{make_batches, shuffled};
use super::metrics::{best_linear_comparator, online_to_batch, RegretRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Ftrl,
    FtrlMomentum,
    Composite,
    LeastSquares,
    /// Noisy SGD with independent per-step noise, no amplification.
    Sgd,
}

impl FromStr for Variant {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ftrl" => Ok(Variant::Ftrl),
            "ftrlm" => Ok(Variant::FtrlMomentum),
            "composite" => Ok(Variant::Composite),
            "ls" => Ok(Variant::LeastSquares),
            "sgd" => Ok(Variant::Sgd),
            other => Err(invalid(format!("unknown variant '{other}' (ftrl|ftrlm|composite|ls|sgd)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ftrl => "ftrl",
            Variant::FtrlMomentum => "ftrlm",
            Variant::Composite => "composite",
            Variant::LeastSquares => "ls",
            Variant::Sgd => "sgd",
        })
    }
}

/// Fixed point of comparison for regret.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparator {
    Fixed(RealVector),
    /// Best point of the ball in hindsight for linear losses.
    BestLinear {
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// `clip_norm` is the per-example bound `L`; trees see `L/q`.
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    /// Steps per tree; `None` keeps a single tree.
    pub restart_every: Option<usize>,
    pub complete_tree: bool,
    pub delta: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(variant: Variant, optimizer: OptimizerConfig, seed: u64) -> Self {
        Self { variant, optimizer, epochs: 1, restart_every: None, complete_tree: false, delta: 1e-5, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// `θ_t`, the model used to predict on step `t`.
    pub trajectory: Vec<RealVector>,
    pub final_model: RealVector,
    pub record: RegretRecord,
    /// Batch identifiers (1-based) per tree, including virtual steps.
    pub participation: Vec<Vec<OrderToken>>,
    /// `ε` spent after each step at the configured `δ`.
    pub epsilon: Vec<f64>,
    /// Squared sensitivity of everything released so far.
    pub squared_sensitivity: f64,
}

enum Learner {
    Ftrl(DpFtrl),
    Ls(LsState),
    Sgd { theta: RealVector, noise: NoiseSource, step: u64, eta: f64, std: f64, constraint: Constraint },
}

impl Learner {
    fn theta(&self) -> &RealVector {
        match self {
            Learner::Ftrl(o) => o.theta(),
            Learner::Ls(s) => s.theta(),
            Learner::Sgd { theta, .. } => theta,
        }
    }
}

/// Online training: at each step the current model is scored on the next
/// batch, then updated with it. Batches are fixed and visited in a fixed
/// order within each tree; the visiting order is reshuffled only at the
/// first epoch start after a restart.
pub fn run_online<O: LossOracle + ?Sized>(
    data: &[Example],
    oracle: &O,
    config: &TrainConfig,
    comparator: &Comparator,
) -> Result<TrainOutcome> {
    let opt = &config.optimizer;
    opt.validate()?;
    let first = data.first().ok_or_else(|| invalid("empty stream"))?;
    let dim = first.x.dim();
    if data.iter().any(|e| e.x.dim() != dim) {
        return Err(invalid("examples differ in dimension"));
    }
    if config.epochs == 0 {
        return Err(invalid("epochs must be >= 1"));
    }
    if config.restart_every == Some(0) {
        return Err(invalid("restart interval must be >= 1"));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {}", config.delta)));
    }
    if config.variant == Variant::LeastSquares && (opt.batch_size != 1 || config.restart_every.is_some()) {
        return Err(DpError::Unsupported("least squares runs with batch size 1 and a single tree".into()));
    }

    let batches = make_batches(data.len(), opt.batch_size)?;
    let schedule = visit_schedule(batches.len(), config);
    let total = schedule.len();
    let block_len = config.restart_every.unwrap_or(total).min(total);
    let tree_clip = opt.clip_norm / opt.batch_size as f64;
    let tree_config = OptimizerConfig { clip_norm: tree_clip, ..opt.clone() };
    let root = NoiseSource::new(config.seed);

    let mut learner = match config.variant {
        Variant::Ftrl | Variant::FtrlMomentum | Variant::Composite => {
            let variant = match config.variant {
                Variant::Ftrl => FtrlVariant::Base,
                Variant::FtrlMomentum => FtrlVariant::Momentum,
                _ => FtrlVariant::Composite,
            };
            Learner::Ftrl(DpFtrl::new(tree_config, variant, dim, block_len, root)?)
        }
        Variant::LeastSquares => Learner::Ls(LsState::new(
            dim,
            total,
            opt.lambda,
            opt.clip_norm,
            opt.noise_scale,
            opt.constraint,
            root,
            opt.estimator,
        )?),
        Variant::Sgd => Learner::Sgd {
            theta: RealVector::zeros(dim),
            noise: root,
            step: 0,
            eta: opt.learning_rate(),
            std: opt.noise_scale * tree_clip,
            constraint: opt.constraint,
        },
    };

    let comparator = match comparator {
        Comparator::Fixed(theta) => {
            if theta.dim() != dim {
                return Err(invalid("comparator dimension differs from data"));
            }
            theta.clone()
        }
        Comparator::BestLinear { radius } => {
            let mut sum = RealVector::zeros(dim);
            for &b in &schedule {
                sum.axpy(1.0, &batch_loss_gradient(data, &batches[b], oracle, &RealVector::zeros(dim)));
            }
            best_linear_comparator(&sum, *radius)
        }
    };

    let orders = default_orders();
    let mut trajectory = Vec::with_capacity(total);
    let mut alg_losses = Vec::with_capacity(total);
    let mut cmp_losses = Vec::with_capacity(total);
    let mut epsilon = Vec::with_capacity(total);
    let mut participation: Vec<Vec<OrderToken>> = vec![Vec::new()];
    let mut block_sens = IncrementalOrderSensitivity::new();
    let mut closed_zeta = 0.0;
    let mut sgd_counts = vec![0u64; batches.len()];
    let mut cached: Option<(f64, f64)> = None;

    for (i, &b) in schedule.iter().enumerate() {
        if i > 0 && i % block_len == 0 {
            if let Learner::Ftrl(o) = &mut learner {
                let added = o.restart(block_len.min(total - i), config.complete_tree)?;
                for _ in 0..added {
                    block_sens.push(OrderToken::Virtual);
                    participation.last_mut().expect("non-empty").push(OrderToken::Virtual);
                }
            }
            closed_zeta += block_sens.max_squared() as f64;
            block_sens = IncrementalOrderSensitivity::new();
            participation.push(Vec::new());
        }

        let theta = learner.theta().clone();
        let batch = &batches[b];
        alg_losses.push(mean_loss(data, batch, oracle, &theta));
        cmp_losses.push(mean_loss(data, batch, oracle, &comparator));
        trajectory.push(theta.clone());

        let token = OrderToken::Sample(b as u64 + 1);
        block_sens.push(token);
        participation.last_mut().expect("non-empty").push(token);
        match &mut learner {
            Learner::Ftrl(o) => {
                let items: Vec<Option<Example>> = batch.iter().map(|&k| Some(data[k].clone())).collect();
                let g = minibatch_gradient(&items, &theta, oracle, opt.clip_norm, opt.batch_size)?;
                o.step(&g)?;
            }
            Learner::Ls(s) => {
                let e = &data[batch[0]];
                s.step(&e.x, e.y)?;
            }
            Learner::Sgd { theta: t, noise, step, eta, std, constraint } => {
                let items: Vec<Option<Example>> = batch.iter().map(|&k| Some(data[k].clone())).collect();
                let g = minibatch_gradient(&items, t, oracle, opt.clip_norm, opt.batch_size)?;
                *step += 1;
                let a = noise.gaussian_sample(*step, dim, *std);
                let next = noisy_sgd_step(t, &g, &a, *eta)?;
                *t = match constraint {
                    Constraint::Unconstrained => next,
                    Constraint::Ball(mu) => project_ball(&next, *mu)?,
                };
            }
        }

        let zeta = match config.variant {
            Variant::Sgd => {
                sgd_counts[b] += 1;
                sgd_counts.iter().copied().max().unwrap_or(0) as f64
            }
            Variant::LeastSquares => 2.0 * (closed_zeta + block_sens.max_squared() as f64),
            _ => closed_zeta + block_sens.max_squared() as f64,
        };
        let eps = match cached {
            Some((z, e)) if z == zeta => e,
            _ => {
                let e = epsilon_for(zeta, opt.noise_scale, config.delta, &orders)?;
                cached = Some((zeta, e));
                e
            }
        };
        epsilon.push(eps);
    }

    let final_model = learner.theta().clone();
    let averaged = online_to_batch(&trajectory)?;
    let record = RegretRecord::new(alg_losses, cmp_losses, comparator, averaged)?;
    let squared_sensitivity = cached.map(|(z, _)| z).unwrap_or(0.0);
    Ok(TrainOutcome { trajectory, final_model, record, participation, epsilon, squared_sensitivity })
}

fn epsilon_for(zeta: f64, sigma: f64, delta: f64, orders: &[f64]) -> Result<f64> {
    if zeta == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(Accounting::Sensitivity { zeta }.epsilon(sigma, delta, orders)?.epsilon)
}

fn mean_loss<O: LossOracle + ?Sized>(data: &[Example], batch: &[usize], oracle: &O, theta: &RealVector) -> f64 {
    batch.iter().map(|&k| oracle.loss(theta, &data[k])).sum::<f64>() / batch.len() as f64
}

fn batch_loss_gradient<O: LossOracle + ?Sized>(
    data: &[Example],
    batch: &[usize],
    oracle: &O,
    theta: &RealVector,
) -> RealVector {
    let mut g = RealVector::zeros(theta.dim());
    for &k in batch {
        g.axpy(1.0, &oracle.gradient(theta, &data[k]));
    }
    g.scaled(1.0 / batch.len() as f64)
}

/// Batch index visited at each step.
fn visit_schedule(num_batches: usize, config: &TrainConfig) -> Vec<usize> {
    let total = num_batches * config.epochs;
    let block_len = config.restart_every.unwrap_or(total).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0x5348_5546));
    let mut perm: Vec<usize> = (0..num_batches).collect();
    let mut restarted = false;
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        if i > 0 && i % block_len == 0 {
            restarted = true;
        }
        if i % num_batches == 0 && i > 0 && restarted {
            perm = shuffled(num_batches, &mut rng);
            restarted = false;
        }
        out.push(perm[i % num_batches]);
    }
    out
}

/// `{10^i, 2·10^i, 5·10^i}` for `i` in `lo..=hi`.
pub fn lambda_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).flat_map(|i| [1.0, 2.0, 5.0].map(|m| m * 10f64.powi(i))).collect()
}

/// Runs every `λ` of the grid and keeps the one with the lowest final
/// regret. Candidates whose least-squares system is indefinite are skipped.
pub fn tune_lambda<O: LossOracle + ?Sized>(
    data: &[Example],
    oracle: &O,
    config: &TrainConfig,
    comparator: &Comparator,
    grid: &[f64],
) -> Result<(f64, TrainOutcome)> {
    let mut best: Option<(f64, TrainOutcome)> = None;
    for &lambda in grid {
        let mut c = config.clone();
        c.optimizer.lambda = lambda;
        let outcome = match run_online(data, oracle, &c, comparator) {
            Ok(o) => o,
            Err(DpError::IndefiniteSystem { .. }) => continue,
            Err(e) => return Err(e),
        };
        let better = best.as_ref().is_none_or(|(_, b)| outcome.record.regret() < b.record.regret());
        if better {
            best = Some((lambda, outcome));
        }
    }
    best.ok_or_else(|| invalid("no λ in the grid produced a run"))
}
