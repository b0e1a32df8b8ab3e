//! Seeded synthetic data streams and batching.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, DpError, Result};
use crate::optimizers::{Example, LinearLoss, LogisticLoss, LossOracle, SquaredLoss};
use crate::primitives::{clip, RealVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Squared loss, `y = ⟨θ*, x⟩ + noise` clipped to `[−1, 1]`.
    LinearRegression,
    /// Logistic loss, `y = sign(⟨θ*, x⟩ + noise)`.
    Logistic,
    /// Linear loss `⟨θ, x⟩` (`y = 1`), with features centred at `−(L/2)·θ*/‖θ*‖`.
    LinearLoss,
}

impl Task {
    pub fn oracle(&self) -> &'static dyn LossOracle {
        match self {
            Task::LinearRegression => &SquaredLoss,
            Task::Logistic => &LogisticLoss,
            Task::LinearLoss => &LinearLoss,
        }
    }
}

impl FromStr for Task {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linreg" => Ok(Task::LinearRegression),
            "logistic" => Ok(Task::Logistic),
            "linear" => Ok(Task::LinearLoss),
            other => Err(invalid(format!("unknown task '{other}' (linreg|logistic|linear)"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::LinearRegression => "linreg",
            Task::Logistic => "logistic",
            Task::LinearLoss => "linear",
        })
    }
}

/// Recipe for a seeded synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStream {
    pub task: Task,
    pub n: usize,
    pub p: usize,
    pub theta_star: RealVector,
    /// Feature norm bound `L`.
    pub feature_scale: f64,
    pub noise_level: f64,
    pub seed: u64,
}

impl SyntheticStream {
    /// A stream whose ground truth has norm `theta_norm` and a direction
    /// drawn from `seed`.
    pub fn new(task: Task, n: usize, p: usize, theta_norm: f64, seed: u64) -> Result<Self> {
        if p == 0 {
            return Err(invalid("dimension must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7468_6574_615f_7374);
        let dir: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let dir = RealVector::new(dir)?;
        let theta_star = dir.scaled(theta_norm / dir.norm());
        Ok(Self { task, n, p, theta_star, feature_scale: 1.0, noise_level: 0.1, seed })
    }

    pub fn with_noise_level(mut self, noise_level: f64) -> Self {
        self.noise_level = noise_level;
        self
    }

    pub fn with_feature_scale(mut self, feature_scale: f64) -> Self {
        self.feature_scale = feature_scale;
        self
    }

    /// Same recipe with another seed, for held-out data.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Generates the data set; identical for identical recipes.
pub fn gen_stream(spec: &SyntheticStream) -> Result<Vec<Example>> {
    if spec.n == 0 || spec.p == 0 {
        return Err(invalid("stream needs n >= 1 and p >= 1"));
    }
    if spec.theta_star.dim() != spec.p {
        return Err(invalid("ground truth dimension differs from p"));
    }
    if !(spec.feature_scale > 0.0) || !(spec.noise_level >= 0.0) {
        return Err(invalid("feature scale must be positive and noise level non-negative"));
    }
    let l = spec.feature_scale;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let spread = l / (spec.p as f64).sqrt();
    let mean = match spec.task {
        Task::LinearLoss if !spec.theta_star.is_zero() => spec.theta_star.scaled(-0.5 * l / spec.theta_star.norm()),
        _ => RealVector::zeros(spec.p),
    };
    let mut out = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let raw: Vec<f64> = (0..spec.p).map(|j| mean[j] + spread * rng.sample::<f64, _>(StandardNormal)).collect();
        let x = clip(&RealVector::new(raw)?, l)?;
        let eps = spec.noise_level * rng.sample::<f64, _>(StandardNormal);
        let y = match spec.task {
            Task::LinearRegression => (spec.theta_star.dot(&x) + eps).clamp(-1.0, 1.0),
            Task::Logistic => {
                if spec.theta_star.dot(&x) + eps >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Task::LinearLoss => 1.0,
        };
        out.push(Example::new(x, y));
    }
    Ok(out)
}

/// Fixed batches of `batch_size` consecutive examples (the last may be short).
pub fn make_batches(n: usize, batch_size: usize) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be >= 1"));
    }
    Ok((0..n).collect::<Vec<_>>().chunks(batch_size).map(|c| c.to_vec()).collect())
}

pub(crate) fn shuffled(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}
