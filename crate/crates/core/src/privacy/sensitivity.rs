//! Squared sensitivity of the tree release under multiple participation.
//!
//! A participant that lands in several leaves changes every node above
//! those leaves. Releasing all complete nodes is one Gaussian mechanism
//! whose squared sensitivity (in units of `L²`) is `Σ_z c(z)²`, with `c(z)`
//! the participant's count under node `z`. Three bounds are provided:
//!
//! * level-wise: a per-level quadratic program over `(T, E, ξ)`;
//! * dynamic program: the exact maximum over all placements allowed by
//!   `(T, E, ξ)`;
//! * given order: the exact value for a known sequence of identifiers.
//!
//! `T` is the number of steps, `E` the maximum participations and `ξ` the
//! minimum number of steps strictly between two participations.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{invalid, DpError, Result};

/// Default cap on the number of memoised states in [`sensitivity_dp`].
pub const DEFAULT_DP_STATE_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OrderToken {
    Sample(u64),
    /// A zero leaf added by tree completion.
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParticipationPattern {
    Constraints { steps: usize, max_participations: usize, min_separation: usize },
    Order(Vec<OrderToken>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMethod {
    LevelWise,
    DynamicProgram,
    GivenOrder,
}

impl std::fmt::Display for SensitivityMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SensitivityMethod::LevelWise => "level-wise",
            SensitivityMethod::DynamicProgram => "dynamic-program",
            SensitivityMethod::GivenOrder => "given-order",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitivityReport {
    pub method: SensitivityMethod,
    /// Largest squared sensitivity, ζ.
    pub max_squared: u64,
    /// ρ_i per identifier; only filled for [`SensitivityMethod::GivenOrder`].
    pub per_identifier: BTreeMap<u64, u64>,
}

impl SensitivityReport {
    fn bound(method: SensitivityMethod, max_squared: u64) -> Self {
        Self { method, max_squared, per_identifier: BTreeMap::new() }
    }

    /// ℓ2 sensitivity, `sqrt(ζ)`.
    pub fn sensitivity(&self) -> f64 {
        (self.max_squared as f64).sqrt()
    }
}

/// Dispatches on the pattern: constraints go to the dynamic program.
pub fn sensitivity(pattern: &ParticipationPattern) -> Result<SensitivityReport> {
    match pattern {
        ParticipationPattern::Constraints { steps, max_participations, min_separation } => {
            sensitivity_dp(*steps, *max_participations, *min_separation)
        }
        ParticipationPattern::Order(order) => sensitivity_given_order(order),
    }
}

/// Level-by-level bound over the `2^⌈lg T⌉`-leaf tree.
pub fn sensitivity_level_wise(
    steps: usize,
    max_participations: usize,
    min_separation: usize,
) -> Result<SensitivityReport> {
    if steps == 0 {
        return Err(invalid("steps must be >= 1"));
    }
    let capacity = steps.checked_next_power_of_two().ok_or_else(|| invalid("step count overflows"))? as u128;
    let depth = capacity.trailing_zeros();
    let e = max_participations as u128;
    let gap = min_separation as u128 + 1;
    let mut rho: u128 = 0;
    for height in 0..=depth {
        let nodes = capacity >> height;
        let per_node = (1u128 << height).div_ceil(gap);
        let full = nodes.min(e / per_node);
        let mut level = full * per_node * per_node;
        if full < nodes {
            let rest = e - full * per_node;
            level += rest * rest;
        }
        rho += level;
    }
    let rho = u64::try_from(rho).map_err(|_| DpError::Resource("level-wise sensitivity overflows u64".into()))?;
    Ok(SensitivityReport::bound(SensitivityMethod::LevelWise, rho))
}

/// Exact worst case over placements, with the default state budget.
pub fn sensitivity_dp(steps: usize, max_participations: usize, min_separation: usize) -> Result<SensitivityReport> {
    sensitivity_dp_with_budget(steps, max_participations, min_separation, DEFAULT_DP_STATE_BUDGET)
}

/// `max_{w ≤ E} ζ(w, 0, ξ, T)` with
///
/// ```text
/// ζ(c, s, e, n) = c²·[n is a power of two]
///               + max_{i ≤ c, j ≤ ξ} ζ(c − i, s, j, k) + ζ(i, j, e, n − k)
/// ```
///
/// where `k` is the largest power of two below `n`, a state is infeasible
/// when `s + c(ξ+1) > n + e`, `ζ(0, ·) = 0` and `ζ(1, ·, ·, 1) = 1`. A
/// non-power-of-two `n` is a forest of complete trees, largest first.
pub fn sensitivity_dp_with_budget(
    steps: usize,
    max_participations: usize,
    min_separation: usize,
    state_budget: u64,
) -> Result<SensitivityReport> {
    if steps == 0 {
        return Err(invalid("steps must be >= 1"));
    }
    let sizes = 2 * (u64::from(usize::BITS - steps.leading_zeros()) + 1);
    let e = max_participations as u64;
    let xi = min_separation as u64;
    let estimate = (e + 1).saturating_mul(xi + 1).saturating_mul(xi + 1).saturating_mul(sizes);
    if estimate > state_budget {
        return Err(DpError::Resource(format!(
            "dynamic program needs ~{estimate} states (budget {state_budget}); \
             use the level-wise bound or an explicit order"
        )));
    }
    let mut solver = DpSolver { xi, memo: HashMap::new() };
    let best = (0..=e).filter_map(|w| solver.zeta(w, 0, xi, steps as u64)).max().unwrap_or(0);
    Ok(SensitivityReport::bound(SensitivityMethod::DynamicProgram, best))
}

struct DpSolver {
    xi: u64,
    memo: HashMap<(u64, u64, u64, u64), Option<u64>>,
}

impl DpSolver {
    fn zeta(&mut self, contrib: u64, start: u64, end: u64, size: u64) -> Option<u64> {
        if start + contrib * (self.xi + 1) > size + end {
            return None;
        }
        if contrib == 0 {
            return Some(0);
        }
        if size == 1 {
            return Some(1);
        }
        let key = (contrib, start, end, size);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        let pow2 = size.is_power_of_two();
        let split = if pow2 { size / 2 } else { 1u64 << (63 - size.leading_zeros()) };
        let mut best: Option<u64> = None;
        for i in 0..=contrib {
            for j in 0..=self.xi {
                let Some(left) = self.zeta(contrib - i, start, j, split) else { continue };
                let Some(right) = self.zeta(i, j, end, size - split) else { continue };
                best = best.max(Some(left + right));
            }
        }
        let value = best.map(|b| b + if pow2 { contrib * contrib } else { 0 });
        self.memo.insert(key, value);
        value
    }
}

/// Exact ρ_i for a known order.
///
/// Layers are built leaf to root by concatenating neighbouring pairs; a
/// trailing unpaired node is dropped, so only complete subtrees count.
/// Virtual markers occupy leaves but are never counted.
pub fn sensitivity_given_order(order: &[OrderToken]) -> Result<SensitivityReport> {
    if order.is_empty() {
        return Err(invalid("participation order is empty"));
    }
    let mut rho: BTreeMap<u64, u64> = BTreeMap::new();
    // each node is the list of real identifiers below it
    let mut layer: Vec<Vec<u64>> = order
        .iter()
        .map(|tok| match tok {
            OrderToken::Sample(id) => vec![*id],
            OrderToken::Virtual => Vec::new(),
        })
        .collect();
    for node in &layer {
        for &id in node {
            *rho.entry(id).or_insert(0) += 1;
        }
    }
    while layer.len() >= 2 {
        layer = layer
            .chunks_exact(2)
            .map(|pair| {
                let mut merged = pair[0].clone();
                merged.extend_from_slice(&pair[1]);
                merged
            })
            .collect();
        for node in &layer {
            let mut counts: HashMap<u64, u64> = HashMap::new();
            for &id in node {
                *counts.entry(id).or_insert(0) += 1;
            }
            for (id, c) in counts {
                *rho.entry(id).or_insert(0) += c * c;
            }
        }
    }
    let max_squared = rho.values().copied().max().unwrap_or(0);
    Ok(SensitivityReport { method: SensitivityMethod::GivenOrder, max_squared, per_identifier: rho })
}

/// Running version of [`sensitivity_given_order`]: after each push the
/// report covers exactly the complete subtrees of the order so far.
#[derive(Debug, Clone, Default)]
pub struct IncrementalOrderSensitivity {
    rho: HashMap<u64, u64>,
    max: u64,
    len: usize,
    // identifier counts of the complete blocks covering the prefix, largest first
    frontier: Vec<(u32, HashMap<u64, u64>)>,
}

impl IncrementalOrderSensitivity {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_squared(&self) -> u64 {
        self.max
    }

    pub fn push(&mut self, token: OrderToken) {
        self.len += 1;
        let mut leaf = HashMap::new();
        if let OrderToken::Sample(id) = token {
            leaf.insert(id, 1);
            self.bump(id, 1);
        }
        self.frontier.push((0, leaf));
        while self.frontier.len() >= 2 {
            let n = self.frontier.len();
            if self.frontier[n - 1].0 != self.frontier[n - 2].0 {
                break;
            }
            let (level, right) = self.frontier.pop().expect("len >= 2");
            let (_, left) = self.frontier.pop().expect("len >= 2");
            let (mut big, small) = if left.len() >= right.len() { (left, right) } else { (right, left) };
            for (id, c) in small {
                *big.entry(id).or_insert(0) += c;
            }
            let updates: Vec<(u64, u64)> = big.iter().map(|(&id, &c)| (id, c * c)).collect();
            for (id, sq) in updates {
                self.bump(id, sq);
            }
            self.frontier.push((level + 1, big));
        }
    }

    fn bump(&mut self, id: u64, amount: u64) {
        let r = self.rho.entry(id).or_insert(0);
        *r += amount;
        self.max = self.max.max(*r);
    }

    pub fn report(&self) -> SensitivityReport {
        SensitivityReport {
            method: SensitivityMethod::GivenOrder,
            max_squared: self.max,
            per_identifier: self.rho.iter().map(|(&k, &v)| (k, v)).collect(),
        }
    }
}

/// Parses the order-file format: one token per line, a positive integer
/// or `*`. Blank lines are skipped.
pub fn parse_order(text: &str) -> Result<Vec<OrderToken>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        if tok == "*" {
            out.push(OrderToken::Virtual);
            continue;
        }
        match tok.parse::<u64>() {
            Ok(id) if id > 0 => out.push(OrderToken::Sample(id)),
            _ => return Err(invalid(format!("line {}: expected a positive integer or `*`, got `{tok}`", lineno + 1))),
        }
    }
    Ok(out)
}

pub fn read_order_file(path: impl AsRef<Path>) -> Result<Vec<OrderToken>> {
    parse_order(&std::fs::read_to_string(path)?)
}
