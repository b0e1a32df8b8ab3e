//! Vector arithmetic, clipping, ball projection and seeded Gaussian noise.
//!
//! Everything in here is a pure function of its inputs. Noise is derived
//! from a counter-based generator keyed by `(seed, node index)` so any node
//! of an aggregation tree can be materialised on demand and replayed
//! exactly.

use std::ops::Index;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// A dense real vector with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("vector must have positive dimension"));
        }
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite entry at index {i}")));
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    /// Wraps entries that are already known to be finite.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite()));
        Self(entries)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn dot(&self, other: &RealVector) -> f64 {
        dot(&self.0, &other.0)
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &RealVector) {
        axpy(&mut self.0, a, &x.0);
    }

    pub fn scaled(&self, a: f64) -> RealVector {
        RealVector(self.0.iter().map(|x| a * x).collect())
    }

    pub fn add(&self, other: &RealVector) -> RealVector {
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &RealVector) -> RealVector {
        RealVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

impl Index<usize> for RealVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl AsRef<[f64]> for RealVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn check_finite(v: &RealVector) -> Result<()> {
    if v.0.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid("vector has non-finite entries"))
    }
}

/// Scales `v` by `min(L / ‖v‖, 1)`.
///
/// A vector on the boundary (`‖v‖ == L`) is returned unchanged.
pub fn clip(v: &RealVector, clip_norm: f64) -> Result<RealVector> {
    if !(clip_norm > 0.0 && clip_norm.is_finite()) {
        return Err(invalid(format!("clip norm must be positive, got {clip_norm}")));
    }
    check_finite(v)?;
    let n = v.norm();
    if n <= clip_norm {
        Ok(v.clone())
    } else {
        Ok(v.scaled(clip_norm / n))
    }
}

/// Euclidean projection onto the origin-centred ball of radius `radius`.
pub fn project_ball(v: &RealVector, radius: f64) -> Result<RealVector> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("ball radius must be positive, got {radius}")));
    }
    check_finite(v)?;
    let n = v.norm();
    if n <= radius {
        Ok(v.clone())
    } else {
        Ok(v.scaled(radius / n))
    }
}

/// Counter-based Gaussian noise keyed by `(seed, node index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent source for a sub-stream (a restarted tree, the
    /// covariance tree of the least-squares variant, ...).
    pub fn derive(&self, label: u64) -> NoiseSource {
        NoiseSource::new(splitmix64(self.seed ^ splitmix64(label.wrapping_add(0x9e37_79b9))))
    }

    fn rng(&self, node_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(node_index);
        rng
    }

    /// `dim` i.i.d. draws from `N(0, std²)`. `std == 0` yields exact zeros.
    pub fn gaussian_sample(&self, node_index: u64, dim: usize, std: f64) -> RealVector {
        RealVector::from_raw(self.gaussian_entries(node_index, dim, std))
    }

    pub(crate) fn gaussian_entries(&self, node_index: u64, dim: usize, std: f64) -> Vec<f64> {
        assert!(std >= 0.0 && std.is_finite(), "noise std must be finite and non-negative");
        if std == 0.0 {
            return vec![0.0; dim];
        }
        let mut rng = self.rng(node_index);
        (0..dim).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Symmetric `side × side` Gaussian matrix (row-major) whose upper
    /// triangle, diagonal included, is i.i.d. `N(0, std²)`.
    pub(crate) fn symmetric_entries(&self, node_index: u64, side: usize, std: f64) -> Vec<f64> {
        let mut out = vec![0.0; side * side];
        if std == 0.0 {
            return out;
        }
        let mut rng = self.rng(node_index);
        for i in 0..side {
            for j in i..side {
                let z = std * rng.sample::<f64, _>(StandardNormal);
                out[i * side + j] = z;
                out[j * side + i] = z;
            }
        }
        out
    }
}

/// Convenience wrapper matching the free-function form used elsewhere.
pub fn gaussian_sample(src: &NoiseSource, node_index: u64, dim: usize, std: f64) -> RealVector {
    src.gaussian_sample(node_index, dim, std)
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
