//! Binary-tree aggregation for private prefix sums.
//!
//! Leaves are filled strictly in order, 1-based. Every node holds the sum of
//! the leaves below it plus one Gaussian draw of standard deviation `σ·L`,
//! materialised the first time the node is touched. A prefix `1..t` is
//! covered by the complete dyadic blocks given by the binary expansion of
//! `t`, so only nodes whose subtree is already full are ever read.
//!
//! Two estimators are offered. The vanilla one adds the block nodes. The
//! variance-reduced one combines every level inside each block through the
//! recursion `r'[x:z] = r[x:z] + (r'[x:y] + r'[y+1:z]) / 2`, then rescales by
//! `2 - 1/(z - x + 1)` to stay unbiased.

use std::collections::HashMap;

use crate::error::{invalid, DpError, Result};
use crate::primitives::{axpy, norm, NoiseSource, RealVector};

/// Relative slack allowed when checking a leaf against the clip norm.
pub const SENSITIVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    Vanilla,
    #[default]
    Honaker,
}

impl std::str::FromStr for EstimatorMode {
    type Err = DpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Self::Vanilla),
            "honaker" => Ok(Self::Honaker),
            other => Err(invalid(format!("unknown estimator mode `{other}`"))),
        }
    }
}

/// How node noise is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseShape {
    /// i.i.d. entries.
    Isotropic,
    /// A flattened symmetric `side × side` matrix; the upper triangle is
    /// i.i.d. and mirrored.
    Symmetric { side: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefixSumEstimate {
    pub value: RealVector,
    /// Per-coordinate variance of the additive noise in units of `L²σ²`.
    pub variance_multiplier: f64,
}

#[derive(Debug, Clone)]
struct FrontierBlock {
    level: u32,
    reduced: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AggregationTree {
    capacity: usize,
    depth: u32,
    leaf_count: usize,
    dim: usize,
    clip_norm: f64,
    noise_scale: f64,
    mode: EstimatorMode,
    shape: NoiseShape,
    noise: NoiseSource,
    // noisy values of touched nodes, heap-indexed (root = 1)
    nodes: HashMap<usize, Vec<f64>>,
    // r' of the complete blocks covering 1..leaf_count, largest first
    frontier: Vec<FrontierBlock>,
    virtual_leaves: Vec<usize>,
}

impl AggregationTree {
    /// A tree for a stream of `n` vectors of dimension `dim`, with
    /// `2^⌈lg n⌉` leaves.
    pub fn new(
        n: usize,
        noise_scale: f64,
        clip_norm: f64,
        dim: usize,
        noise: NoiseSource,
        mode: EstimatorMode,
    ) -> Result<Self> {
        Self::with_shape(n, noise_scale, clip_norm, dim, noise, mode, NoiseShape::Isotropic)
    }

    /// A tree whose leaves are flattened symmetric `side × side` matrices.
    pub fn new_symmetric(
        n: usize,
        noise_scale: f64,
        clip_norm: f64,
        side: usize,
        noise: NoiseSource,
        mode: EstimatorMode,
    ) -> Result<Self> {
        Self::with_shape(n, noise_scale, clip_norm, side * side, noise, mode, NoiseShape::Symmetric { side })
    }

    fn with_shape(
        n: usize,
        noise_scale: f64,
        clip_norm: f64,
        dim: usize,
        noise: NoiseSource,
        mode: EstimatorMode,
        shape: NoiseShape,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("tree needs at least one leaf"));
        }
        if dim == 0 {
            return Err(invalid("tree dimension must be positive"));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(invalid(format!("noise scale must be non-negative, got {noise_scale}")));
        }
        if !(clip_norm > 0.0 && clip_norm.is_finite()) {
            return Err(invalid(format!("clip norm must be positive, got {clip_norm}")));
        }
        let capacity = n.checked_next_power_of_two().ok_or_else(|| invalid("tree capacity overflows"))?;
        Ok(Self {
            capacity,
            depth: capacity.trailing_zeros(),
            leaf_count: 0,
            dim,
            clip_norm,
            noise_scale,
            mode,
            shape,
            noise,
            nodes: HashMap::new(),
            frontier: Vec::new(),
            virtual_leaves: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> EstimatorMode {
        self.mode
    }

    pub fn clip_norm(&self) -> f64 {
        self.clip_norm
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Standard deviation of each node's noise, `σ·L`.
    pub fn node_noise_std(&self) -> f64 {
        self.noise_scale * self.clip_norm
    }

    /// 1-based positions of the zero leaves appended by [`complete_tree`](Self::complete_tree).
    pub fn virtual_leaves(&self) -> &[usize] {
        &self.virtual_leaves
    }

    /// Number of nodes currently materialised.
    pub fn materialized_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn node_noise(&self, node: usize) -> Vec<f64> {
        let std = self.node_noise_std();
        match self.shape {
            NoiseShape::Isotropic => self.noise.gaussian_entries(node as u64, self.dim, std),
            NoiseShape::Symmetric { side } => self.noise.symmetric_entries(node as u64, side, std),
        }
    }

    fn leaf_node(&self, t: usize) -> usize {
        self.capacity + t - 1
    }

    /// Adds `v` to every node on the path from leaf `t` to the root and
    /// returns how many nodes were updated.
    pub fn add_to_tree(&mut self, t: usize, v: &[f64]) -> Result<usize> {
        if t != self.leaf_count + 1 {
            return Err(DpError::Ordering { expected: self.leaf_count + 1, got: t });
        }
        if t > self.capacity {
            return Err(invalid(format!("tree is full ({} leaves)", self.capacity)));
        }
        if v.len() != self.dim {
            return Err(invalid(format!("expected dimension {}, got {}", self.dim, v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("leaf vector has non-finite entries"));
        }
        let n = norm(v);
        if n > self.clip_norm * (1.0 + SENSITIVITY_TOLERANCE) {
            return Err(DpError::SensitivityViolation { norm: n, clip_norm: self.clip_norm });
        }
        self.accumulate(t, v);
        Ok(self.depth as usize + 1)
    }

    /// Appends the next leaf.
    pub fn push(&mut self, v: &[f64]) -> Result<usize> {
        self.add_to_tree(self.leaf_count + 1, v)
    }

    fn accumulate(&mut self, t: usize, v: &[f64]) {
        let leaf = self.leaf_node(t);
        for level in 0..=self.depth {
            let node = leaf >> level;
            if !self.nodes.contains_key(&node) {
                let fresh = self.node_noise(node);
                self.nodes.insert(node, fresh);
            }
            let value = self.nodes.get_mut(&node).expect("node materialised above");
            axpy(value, 1.0, v);
        }
        self.leaf_count = t;

        // leaf t completes the block ending at t; fold equal-sized blocks upwards
        self.frontier.push(FrontierBlock { level: 0, reduced: self.nodes[&leaf].clone() });
        while self.frontier.len() >= 2 {
            let n = self.frontier.len();
            if self.frontier[n - 1].level != self.frontier[n - 2].level {
                break;
            }
            let right = self.frontier.pop().expect("len >= 2");
            let left = self.frontier.pop().expect("len >= 2");
            let level = left.level + 1;
            let parent = leaf >> level;
            let mut reduced = self.nodes[&parent].clone();
            for ((r, a), b) in reduced.iter_mut().zip(&left.reduced).zip(&right.reduced) {
                *r += 0.5 * (a + b);
            }
            self.frontier.push(FrontierBlock { level, reduced });
        }
    }

    /// Appends zero leaves until `leaf_count == up_to`; returns how many were added.
    pub fn complete_tree(&mut self, up_to: usize) -> Result<usize> {
        if up_to < self.leaf_count || up_to > self.capacity {
            return Err(invalid(format!(
                "cannot complete to leaf {up_to}: have {} of {} leaves",
                self.leaf_count, self.capacity
            )));
        }
        let zero = vec![0.0; self.dim];
        let added = up_to - self.leaf_count;
        for _ in 0..added {
            let t = self.leaf_count + 1;
            self.accumulate(t, &zero);
            self.virtual_leaves.push(t);
        }
        Ok(added)
    }

    /// Completes up to the capacity.
    pub fn complete(&mut self) -> Result<usize> {
        self.complete_tree(self.capacity)
    }

    fn check_query(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.leaf_count {
            return Err(invalid(format!("prefix {t} outside 1..={}", self.leaf_count)));
        }
        Ok(())
    }

    /// Estimate with the configured estimator.
    pub fn estimate(&self, t: usize) -> Result<PrefixSumEstimate> {
        match self.mode {
            EstimatorMode::Vanilla => self.get_sum(t),
            EstimatorMode::Honaker => self.get_sum_reduced_variance(t),
        }
    }

    /// Sums the noisy nodes of the dyadic blocks selected by the bits of `t`.
    pub fn get_sum(&self, t: usize) -> Result<PrefixSumEstimate> {
        self.check_query(t)?;
        let mut sum = vec![0.0; self.dim];
        for (_, node) in dyadic_blocks(t, self.capacity) {
            axpy(&mut sum, 1.0, &self.nodes[&node]);
        }
        Ok(PrefixSumEstimate { value: RealVector::from_raw(sum), variance_multiplier: t.count_ones() as f64 })
    }

    /// Variance-reduced estimate built only from nodes inside `1..t`.
    pub fn get_sum_reduced_variance(&self, t: usize) -> Result<PrefixSumEstimate> {
        self.check_query(t)?;
        let mut sum = vec![0.0; self.dim];
        let mut variance = 0.0;
        if t == self.leaf_count {
            for block in &self.frontier {
                axpy(&mut sum, 1.0 / block_normalizer(block.level), &block.reduced);
                variance += honaker_block_variance(block.level);
            }
        } else {
            for (level, node) in dyadic_blocks(t, self.capacity) {
                let reduced = self.reduced(node, level);
                axpy(&mut sum, 1.0 / block_normalizer(level), &reduced);
                variance += honaker_block_variance(level);
            }
        }
        Ok(PrefixSumEstimate { value: RealVector::from_raw(sum), variance_multiplier: variance })
    }

    fn reduced(&self, node: usize, level: u32) -> Vec<f64> {
        let mut value = self.nodes[&node].clone();
        if level > 0 {
            let left = self.reduced(2 * node, level - 1);
            let right = self.reduced(2 * node + 1, level - 1);
            for ((v, a), b) in value.iter_mut().zip(&left).zip(&right) {
                *v += 0.5 * (a + b);
            }
        }
        value
    }
}

/// `(level, heap index)` of the blocks covering `1..t`, largest first.
fn dyadic_blocks(t: usize, capacity: usize) -> impl Iterator<Item = (u32, usize)> {
    let depth = capacity.trailing_zeros();
    let mut start = 0usize;
    (0..=depth).rev().filter_map(move |level| {
        if t & (1usize << level) == 0 {
            return None;
        }
        let node = (capacity + start) >> level;
        start += 1usize << level;
        Some((level, node))
    })
}

/// `2 - 1/size` for a block of `2^level` leaves.
fn block_normalizer(level: u32) -> f64 {
    2.0 - 1.0 / (1u64 << level) as f64
}

/// Variance of one block estimate when every node carries unit variance,
/// obtained by pushing the variances through the r' recursion.
fn honaker_block_variance(level: u32) -> f64 {
    let mut var = 1.0;
    for _ in 0..level {
        var = 1.0 + var / 2.0;
    }
    var / block_normalizer(level).powi(2)
}

/// Analytic per-coordinate noise variance of the estimate at step `t`, in
/// units of the node variance.
pub fn noise_variance_multiplier(t: usize, capacity: usize, mode: EstimatorMode) -> Result<f64> {
    if !capacity.is_power_of_two() {
        return Err(invalid(format!("capacity {capacity} is not a power of two")));
    }
    if t == 0 || t > capacity {
        return Err(invalid(format!("step {t} outside 1..={capacity}")));
    }
    Ok(match mode {
        EstimatorMode::Vanilla => t.count_ones() as f64,
        EstimatorMode::Honaker => dyadic_blocks(t, capacity).map(|(level, _)| honaker_block_variance(level)).sum(),
    })
}

/// `⌈lg x⌉` for `x ≥ 1`.
pub fn ceil_log2(x: usize) -> u32 {
    assert!(x >= 1, "ceil_log2 of zero");
    x.next_power_of_two().trailing_zeros()
}
