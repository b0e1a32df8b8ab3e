//! CSV rendering of training runs and noise comparisons.

use std::io::Write;

use crate::error::{invalid, Result};
use crate::tree::{noise_variance_multiplier, EstimatorMode};

use super::train::TrainOutcome;

const SIGNIFICANT_DIGITS: i32 = 12;

/// Decimal rendering with 12 significant digits, trailing zeros trimmed.
/// Non-finite values print as `inf`, `-inf` or `nan`.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (SIGNIFICANT_DIGITS - 1 - magnitude).clamp(0, 340) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// `t,loss,regret,epsilon` rows for a training run.
pub fn write_train_csv<W: Write>(out: &mut W, outcome: &TrainOutcome) -> Result<()> {
    writeln!(out, "t,loss,regret,epsilon")?;
    for (i, ((loss, regret), eps)) in
        outcome.record.algorithm_losses.iter().zip(&outcome.record.running_regret).zip(&outcome.epsilon).enumerate()
    {
        writeln!(out, "{},{},{},{}", i + 1, fmt_sig(*loss), fmt_sig(*regret), fmt_sig(*eps))?;
    }
    Ok(())
}

/// Per-step noise comparison for an `n`-step run at noise multiplier `sigma`.
///
/// Columns: vanilla and variance-reduced multipliers `ν(t)`, the DP-FTRL
/// cumulative noise std `σ·sqrt(ν(t))` for both (in units of `ηL`), and the
/// cumulative std `σ·sqrt(t)` of unamplified noisy SGD run for one epoch.
pub fn noise_table<W: Write>(out: &mut W, n: usize, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("noise table needs n >= 1"));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let capacity = n.next_power_of_two();
    writeln!(out, "# noisy SGD baseline: no amplification by sampling or shuffling")?;
    writeln!(out, "t,vanilla_nu,honaker_nu,ftrl_vanilla_std,ftrl_honaker_std,dpsgd_unamplified_std")?;
    for t in 1..=n {
        let vanilla = noise_variance_multiplier(t, capacity, EstimatorMode::Vanilla)?;
        let honaker = noise_variance_multiplier(t, capacity, EstimatorMode::Honaker)?;
        writeln!(
            out,
            "{t},{},{},{},{},{}",
            fmt_sig(vanilla),
            fmt_sig(honaker),
            fmt_sig(sigma * vanilla.sqrt()),
            fmt_sig(sigma * honaker.sqrt()),
            fmt_sig(sigma * (t as f64).sqrt())
        )?;
    }
    Ok(())
}
