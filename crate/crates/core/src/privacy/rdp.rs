//! Renyi-DP curves for Gaussian tree releases.
//!
//! Every accounting regime here is a Gaussian mechanism whose squared
//! sensitivity (in units of `L²`) is known, so each curve is linear in the
//! order: `ε(α) = α·ζ / (2σ²)`.

use crate::error::{invalid, DpError, Result};
use crate::tree::ceil_log2;

/// Orders used when the caller does not supply a grid.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75];
    orders.extend((2..=64).map(f64::from));
    orders.extend((2..10).map(|k| k as f64 + 0.5));
    orders.extend([128.0, 256.0]);
    orders.sort_by(f64::total_cmp);
    orders.dedup();
    orders
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdpCurve {
    // sorted by order, orders unique
    points: Vec<(f64, f64)>,
}

impl RdpCurve {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        for &(alpha, eps) in &points {
            if !(alpha > 1.0 && alpha.is_finite()) {
                return Err(invalid(format!("RDP order must be finite and > 1, got {alpha}")));
            }
            if !(eps >= 0.0) {
                return Err(invalid(format!("RDP epsilon must be >= 0, got {eps}")));
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("duplicate RDP order"));
        }
        Ok(Self { points })
    }

    /// `ε(α) = rate·α` on the given orders.
    pub fn gaussian(rate: f64, orders: &[f64]) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(invalid(format!("Gaussian RDP rate must be >= 0, got {rate}")));
        }
        Self::new(orders.iter().map(|&a| (a, rate * a)).collect())
    }

    pub fn zero(orders: &[f64]) -> Result<Self> {
        Self::gaussian(0.0, orders)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn orders(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Epsilon at exactly `alpha`, if it is on the grid.
    pub fn epsilon_at(&self, alpha: f64) -> Option<f64> {
        self.points.iter().find(|p| p.0 == alpha).map(|p| p.1)
    }

    /// Upper bound at `alpha` from the next grid order at or above it
    /// (RDP epsilon is non-decreasing in the order). Infinite past the grid.
    fn upper_at(&self, alpha: f64) -> f64 {
        self.points.iter().find(|p| p.0 >= alpha).map_or(f64::INFINITY, |p| p.1)
    }
}

/// Sums curves pointwise. Mismatched grids are merged onto the union of
/// orders, reading each curve at its next order upwards.
pub fn compose_rdp(curves: &[RdpCurve]) -> RdpCurve {
    let Some(first) = curves.first() else {
        return RdpCurve::zero(&default_orders()).expect("default grid is valid");
    };
    let same_grid = curves.iter().all(|c| c.points.len() == first.points.len() && c.orders().eq(first.orders()));
    let points = if same_grid {
        first
            .points
            .iter()
            .enumerate()
            .map(|(i, &(alpha, _))| (alpha, curves.iter().map(|c| c.points[i].1).sum()))
            .collect()
    } else {
        let mut orders: Vec<f64> = curves.iter().flat_map(|c| c.orders()).collect();
        orders.sort_by(f64::total_cmp);
        orders.dedup();
        orders.into_iter().map(|alpha| (alpha, curves.iter().map(|c| c.upper_at(alpha)).sum())).collect()
    };
    RdpCurve { points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpConversion {
    pub epsilon: f64,
    /// Minimising order; `None` when every candidate is infinite.
    pub order: Option<f64>,
}

/// `min_α ε(α) + ln(1/δ)/(α − 1)`.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpConversion> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    if curve.is_empty() {
        return Err(invalid("empty RDP curve"));
    }
    let log_inv_delta = -delta.ln();
    let mut best = DpConversion { epsilon: f64::INFINITY, order: None };
    for &(alpha, eps) in curve.points() {
        let candidate = eps + log_inv_delta / (alpha - 1.0);
        if candidate < best.epsilon {
            best = DpConversion { epsilon: candidate, order: Some(alpha) };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Which Gaussian release is being accounted for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Accounting {
    /// One tree over `n` steps, each sample used once.
    SingleTree { n: usize },
    /// A fresh tree per epoch.
    Restarts { n: usize, epochs: usize },
    /// Bias and covariance trees of the least-squares variant.
    LeastSquares { n: usize },
    /// A release with the given squared sensitivity.
    Sensitivity { zeta: f64 },
}

impl Accounting {
    /// Squared sensitivity of the whole release in units of the clip norm.
    /// The least-squares pair counts as twice its per-tree node count.
    pub fn squared_sensitivity(&self) -> Result<f64> {
        match *self {
            Accounting::SingleTree { n } => {
                check_steps(n)?;
                Ok(ceil_log2(n + 1) as f64)
            }
            Accounting::Restarts { n, epochs } => {
                check_steps(n)?;
                if epochs == 0 {
                    return Err(invalid("epochs must be >= 1"));
                }
                Ok(epochs as f64 * ceil_log2(n + 1) as f64)
            }
            Accounting::LeastSquares { n } => {
                check_steps(n)?;
                Ok(2.0 * ceil_log2(n) as f64)
            }
            Accounting::Sensitivity { zeta } => {
                if !(zeta >= 0.0 && zeta.is_finite()) {
                    return Err(invalid(format!("squared sensitivity must be >= 0, got {zeta}")));
                }
                Ok(zeta)
            }
        }
    }

    /// `c` such that `ε(α) = c·α` at noise scale `sigma`.
    pub fn rate(&self, sigma: f64) -> Result<f64> {
        gaussian_rate(self.squared_sensitivity()?, sigma)
    }

    pub fn curve(&self, sigma: f64, orders: &[f64]) -> Result<RdpCurve> {
        RdpCurve::gaussian(self.rate(sigma)?, orders)
    }

    pub fn epsilon(&self, sigma: f64, delta: f64, orders: &[f64]) -> Result<DpConversion> {
        rdp_to_dp(&self.curve(sigma, orders)?, delta)
    }
}

fn check_steps(n: usize) -> Result<()> {
    if n == 0 {
        Err(invalid("number of steps must be >= 1"))
    } else {
        Ok(())
    }
}

fn gaussian_rate(zeta: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(invalid(format!("noise scale must be >= 0, got {sigma}")));
    }
    if zeta == 0.0 {
        return Ok(0.0);
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(zeta / (2.0 * sigma * sigma))
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("RDP order must be finite and > 1, got {alpha}")))
    }
}

/// `α·⌈lg(n+1)⌉ / (2σ²)`; infinite at `σ = 0`.
pub fn rdp_single_tree(n: usize, sigma: f64, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(alpha * Accounting::SingleTree { n }.rate(sigma)?)
}

/// `E` restarted trees compose additively.
pub fn rdp_tree_restarts(n: usize, sigma: f64, epochs: usize, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(alpha * Accounting::Restarts { n, epochs }.rate(sigma)?)
}

/// `α·⌈lg n⌉ / σ²` for the bias and covariance trees together.
pub fn rdp_ls_trees(n: usize, sigma: f64, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(alpha * Accounting::LeastSquares { n }.rate(sigma)?)
}

/// `α·ζ / (2σ²)`.
pub fn rdp_from_sensitivity(zeta: f64, sigma: f64, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(alpha * Accounting::Sensitivity { zeta }.rate(sigma)?)
}

/// Smallest noise scale meeting `target` under `accounting`, by bisection.
pub fn calibrate_noise(target: PrivacyParams, accounting: Accounting, orders: &[f64]) -> Result<f64> {
    let target = PrivacyParams::new(target.epsilon, target.delta)?;
    let epsilon_at = |sigma: f64| -> Result<f64> { Ok(accounting.epsilon(sigma, target.delta, orders)?.epsilon) };

    if accounting.squared_sensitivity()? == 0.0 {
        // nothing to hide: only the conversion term remains
        return if epsilon_at(1.0)? <= target.epsilon {
            Ok(0.0)
        } else {
            Err(DpError::Calibration(format!(
                "epsilon {} is below the conversion floor of the order grid",
                target.epsilon
            )))
        };
    }

    let mut hi = 1.0;
    let mut doublings = 0;
    while epsilon_at(hi)? > target.epsilon {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(DpError::Calibration(format!(
                "epsilon {} unreachable with delta {} on this order grid",
                target.epsilon, target.delta
            )));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if epsilon_at(mid)? <= target.epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn single_tree_examples() {
        assert!((rdp_single_tree(5, 1.0, 2.0).unwrap() - 3.0).abs() < TOL);
        assert!((rdp_single_tree(1, 1.0, 2.0).unwrap() - 1.0).abs() < TOL);
        assert!((rdp_single_tree(7, 2.0, 4.0).unwrap() - 1.5).abs() < TOL);
        assert_eq!(rdp_single_tree(7, 0.0, 2.0).unwrap(), f64::INFINITY);
        assert!(rdp_single_tree(7, 1.0, 1.0).is_err());
        assert!(rdp_single_tree(0, 1.0, 2.0).is_err());
    }

    #[test]
    fn restart_examples() {
        assert!((rdp_tree_restarts(7, 1.0, 2, 2.0).unwrap() - 6.0).abs() < TOL);
        assert_eq!(rdp_tree_restarts(13, 1.7, 1, 3.0).unwrap(), rdp_single_tree(13, 1.7, 3.0).unwrap());
        assert!((rdp_tree_restarts(7, 2f64.sqrt(), 4, 2.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(rdp_tree_restarts(7, 1.0, 0, 2.0).is_err());
    }

    #[test]
    fn least_squares_examples() {
        assert!((rdp_ls_trees(8, 1.0, 2.0).unwrap() - 6.0).abs() < TOL);
        assert!((rdp_ls_trees(2, 2.0, 3.0).unwrap() - 0.75).abs() < TOL);
        // ⌈lg 6⌉ = ⌈lg 7⌉ = 3
        assert!((rdp_ls_trees(6, 1.3, 2.0).unwrap() - 2.0 * rdp_single_tree(6, 1.3, 2.0).unwrap()).abs() < TOL);
    }

    #[test]
    fn sensitivity_examples() {
        assert!((rdp_from_sensitivity(8.0, 2.0, 4.0).unwrap() - 4.0).abs() < TOL);
        assert_eq!(rdp_from_sensitivity(0.0, 2.0, 4.0).unwrap(), 0.0);
        assert_eq!(
            rdp_from_sensitivity(ceil_log2(12) as f64, 1.1, 5.0).unwrap(),
            rdp_single_tree(11, 1.1, 5.0).unwrap()
        );
        assert_eq!(rdp_from_sensitivity(1.0, 0.0, 4.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn composition() {
        let orders = default_orders();
        let c = RdpCurve::gaussian(0.3, &orders).unwrap();
        let doubled = compose_rdp(&[c.clone(), c.clone()]);
        for (a, b) in doubled.points().iter().zip(c.points()) {
            assert!((a.1 - 2.0 * b.1).abs() < TOL);
        }
        assert_eq!(compose_rdp(&[c.clone(), RdpCurve::zero(&orders).unwrap()]), c);
        assert!(compose_rdp(&[]).points().iter().all(|p| p.1 == 0.0));

        let blocks: Vec<RdpCurve> =
            (0..5).map(|_| Accounting::Sensitivity { zeta: 12.0 }.curve(3.0, &orders).unwrap()).collect();
        let total = compose_rdp(&blocks);
        for &(alpha, eps) in total.points() {
            assert!((eps - 5.0 * alpha * 12.0 / 18.0).abs() < 1e-9);
        }
    }

    #[test]
    fn composition_on_mismatched_grids_is_conservative() {
        let a = RdpCurve::new(vec![(2.0, 1.0), (4.0, 2.0)]).unwrap();
        let b = RdpCurve::new(vec![(3.0, 0.5)]).unwrap();
        let c = compose_rdp(&[a, b]);
        assert_eq!(c.points(), &[(2.0, 1.5), (3.0, 2.5), (4.0, f64::INFINITY)]);
    }

    #[test]
    fn conversion_matches_closed_form_minimum() {
        // ε(α) = α/2; the continuous minimum is 1/2 + sqrt(2 ln(1/δ))
        let delta: f64 = 1e-5;
        let curve = RdpCurve::gaussian(0.5, &default_orders()).unwrap();
        let conv = rdp_to_dp(&curve, delta).unwrap();
        let closed = 0.5 + (2.0 * (1.0 / delta).ln()).sqrt();
        assert!((conv.epsilon - closed).abs() < 1e-2, "{} vs {}", conv.epsilon, closed);
        assert!(conv.epsilon >= closed);
        assert!((conv.epsilon - 5.30).abs() < 1e-2);
        assert!(conv.order.is_some());

        let near_one = rdp_to_dp(&curve, 1.0 - 1e-12).unwrap();
        assert!((near_one.epsilon - 0.5 * 1.25).abs() < 1e-9);

        let quieter = rdp_to_dp(&RdpCurve::gaussian(0.125, &default_orders()).unwrap(), delta).unwrap();
        assert!(quieter.epsilon < conv.epsilon);

        let inf = RdpCurve::gaussian(f64::INFINITY, &default_orders()).unwrap();
        let conv = rdp_to_dp(&inf, delta).unwrap();
        assert_eq!(conv.epsilon, f64::INFINITY);
        assert_eq!(conv.order, None);
        assert!(rdp_to_dp(&curve, 0.0).is_err());
    }

    #[test]
    fn calibration_round_trip() {
        let orders = default_orders();
        for (acc, sigma0) in [
            (Accounting::SingleTree { n: 1000 }, 3.0),
            (Accounting::Restarts { n: 100, epochs: 5 }, 7.5),
            (Accounting::Sensitivity { zeta: 12.0 }, 1.2),
        ] {
            let eps = acc.epsilon(sigma0, 1e-6, &orders).unwrap().epsilon;
            let sigma = calibrate_noise(PrivacyParams::new(eps, 1e-6).unwrap(), acc, &orders).unwrap();
            assert!(sigma <= sigma0 * (1.0 + 1e-9));
            let back = acc.epsilon(sigma, 1e-6, &orders).unwrap().epsilon;
            assert!((back - eps).abs() < 1e-4 && back <= eps);
        }
    }

    #[test]
    fn calibration_grows_with_epochs() {
        let orders = default_orders();
        let target = PrivacyParams::new(2.0, 1e-5).unwrap();
        let mut last = 0.0;
        for epochs in 1..6 {
            let s = calibrate_noise(target, Accounting::Restarts { n: 500, epochs }, &orders).unwrap();
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn calibration_edge_cases() {
        let orders = default_orders();
        let zero = Accounting::Sensitivity { zeta: 0.0 };
        assert_eq!(calibrate_noise(PrivacyParams::new(1.0, 1e-5).unwrap(), zero, &orders).unwrap(), 0.0);
        // ln(1e5)/255 ≈ 0.045 is the floor of the default grid
        assert!(matches!(
            calibrate_noise(PrivacyParams { epsilon: 0.01, delta: 1e-5 }, zero, &orders),
            Err(DpError::Calibration(_))
        ));
        assert!(matches!(
            calibrate_noise(PrivacyParams { epsilon: 0.01, delta: 1e-5 }, Accounting::SingleTree { n: 10 }, &orders),
            Err(DpError::Calibration(_))
        ));
        assert!(PrivacyParams::new(0.0, 1e-5).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
    }

    /// With the classic conversion, the single-tree closed form
    /// σ = sqrt(2⌈lg(n+1)⌉ ln(1/δ)) / ε lands at ε + ε²/(4 ln(1/δ)) in the
    /// continuous-order limit, so the calibrated σ sits slightly above it.
    #[test]
    fn closed_form_sigma_under_classic_conversion() {
        let orders = default_orders();
        for n in [10usize, 1000, 100_000] {
            for eps in [1.0, 5.0, 10.0] {
                for delta in [1e-5f64, 1e-6] {
                    let log_inv = (1.0 / delta).ln();
                    let closed = (2.0 * ceil_log2(n + 1) as f64 * log_inv).sqrt() / eps;
                    let achieved = Accounting::SingleTree { n }.epsilon(closed, delta, &orders).unwrap().epsilon;
                    let limit = eps + eps * eps / (4.0 * log_inv);
                    assert!(achieved >= limit - 1e-9);
                    assert!(achieved <= limit + 0.02 * eps, "n={n} eps={eps} delta={delta}: {achieved} vs {limit}");
                    let calibrated =
                        calibrate_noise(PrivacyParams::new(eps, delta).unwrap(), Accounting::SingleTree { n }, &orders)
                            .unwrap();
                    assert!(calibrated > closed);
                }
            }
        }
    }

    #[test]
    fn default_grid_shape() {
        let g = default_orders();
        assert_eq!(g.first(), Some(&1.25));
        assert_eq!(g.last(), Some(&256.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!((2..=64).all(|k| g.contains(&(k as f64))));
    }
}
