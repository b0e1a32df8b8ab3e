//! `dpftrl` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dpftrl::harness::{
    fmt_sig, gen_stream, lambda_grid, noise_table, run_online, tune_lambda, write_train_csv, Comparator,
    SyntheticStream, Task, TrainConfig, Variant,
};
use dpftrl::optimizers::{equivalence_check, Constraint, OptimizerConfig};
use dpftrl::privacy::{
    calibrate_noise, default_orders, read_order_file, sensitivity_dp, sensitivity_given_order, sensitivity_level_wise,
    Accounting, PrivacyParams, SensitivityReport,
};
use dpftrl::{DpError, EstimatorMode, Result};

#[derive(Parser, Debug)]
#[command(name = "dpftrl", version, about = "Private online learning with tree aggregation")]
#[command(args_override_self = true)]
struct Cli {
    /// File of `key=value` lines used as defaults for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Privacy spent by a training regime.
    Account(AccountArgs),
    /// Squared sensitivity of a tree under multiple participation.
    Sensitivity(SensitivityArgs),
    /// Smallest noise multiplier meeting an (ε, δ) target.
    Calibrate(CalibrateArgs),
    /// Online training on a synthetic stream; writes t,loss,regret,epsilon.
    Train(TrainArgs),
    /// Per-step noise of the tree estimators against noisy SGD.
    NoiseTable(NoiseTableArgs),
    /// Largest gap between DP-FTRL and matched noisy SGD trajectories.
    Equivalence(EquivalenceArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum AccountMode {
    Tree,
    Restarts,
    Ls,
    Sensitivity,
}

#[derive(Args, Debug)]
struct AccountArgs {
    #[arg(long, value_enum)]
    mode: AccountMode,
    /// Steps per epoch.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Minimum steps between participations (sensitivity mode); defaults to n − 1.
    #[arg(long)]
    xi: Option<usize>,
    /// Participation order file (sensitivity mode).
    #[arg(long)]
    order: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SensitivityMethodArg {
    Levelwise,
    Dp,
    Order,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    #[arg(long, value_enum, default_value = "dp")]
    method: SensitivityMethodArg,
    /// Number of steps.
    #[arg(long = "T")]
    steps: Option<usize>,
    /// Maximum participations.
    #[arg(long = "E", default_value_t = 1)]
    participations: usize,
    /// Minimum steps between participations.
    #[arg(long, default_value_t = 0)]
    xi: usize,
    #[arg(long)]
    order: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CalibrateMode {
    Tree,
    Restarts,
    Ls,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Defaults to `tree` for one epoch and `restarts` otherwise.
    #[arg(long, value_enum)]
    mode: Option<CalibrateMode>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// linreg | logistic | linear
    #[arg(long, default_value = "linreg")]
    task: String,
    /// ftrl | ftrlm | composite | ls | sgd
    #[arg(long, default_value = "ftrl")]
    variant: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Pick λ from {10^i, 2·10^i, 5·10^i} by final regret.
    #[arg(long)]
    grid: bool,
    /// Exponent range `LO:HI` of the λ grid.
    #[arg(long, default_value = "-2:4", allow_hyphen_values = true)]
    grid_range: String,
    #[arg(long)]
    restart_every: Option<usize>,
    #[arg(long)]
    complete_tree: bool,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    clip: f64,
    /// Radius of the feasible ball; unconstrained when absent.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1e-3)]
    l1: f64,
    /// vanilla | honaker
    #[arg(long, default_value = "honaker")]
    estimator: String,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    theta_norm: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NoiseTableArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EquivalenceArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    /// linreg | logistic | linear
    #[arg(long, default_value = "logistic")]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// `println!` that reports write failures instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)?
    };
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match splice_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DpError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Inserts `--key value` pairs from the config file right after the
/// subcommand so that flags given later on the command line win.
fn splice_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let extra = config_args(&std::fs::read_to_string(&path)?)?;
    let names = ["account", "sensitivity", "calibrate", "train", "noise-table", "equivalence"];
    let Some(pos) = argv.iter().position(|a| names.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let mut out = argv[..=pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&argv[pos + 1..]);
    Ok(out)
}

fn config_args(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| DpError::InvalidInput(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => out.push(format!("--{key}={value}")),
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Account(a) => account(a),
        Command::Sensitivity(a) => sensitivity_cmd(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Train(a) => train(a),
        Command::NoiseTable(a) => {
            let mut out = open_output(a.out.as_deref())?;
            noise_table(&mut out, a.n, a.sigma)?;
            out.flush()?;
            Ok(())
        }
        Command::Equivalence(a) => equivalence(a),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_report(report: &SensitivityReport) -> Result<()> {
    outln!("method={}", report.method);
    outln!("zeta={}", report.max_squared);
    outln!("sensitivity={}", fmt_sig(report.sensitivity()));
    for (id, rho) in &report.per_identifier {
        outln!("rho[{id}]={rho}");
    }
    Ok(())
}

fn constraint_report(steps: usize, participations: usize, xi: usize) -> Result<SensitivityReport> {
    match sensitivity_dp(steps, participations, xi) {
        Err(DpError::Resource(_)) => sensitivity_level_wise(steps, participations, xi),
        other => other,
    }
}

fn account(a: AccountArgs) -> Result<()> {
    let mut report = None;
    let accounting = match a.mode {
        AccountMode::Tree => Accounting::SingleTree { n: a.n },
        AccountMode::Restarts => Accounting::Restarts { n: a.n, epochs: a.epochs },
        AccountMode::Ls => Accounting::LeastSquares { n: a.n },
        AccountMode::Sensitivity => {
            let r = match &a.order {
                Some(path) => sensitivity_given_order(&read_order_file(path)?)?,
                None => {
                    let steps =
                        a.n.checked_mul(a.epochs).ok_or_else(|| DpError::InvalidInput("n·epochs overflows".into()))?;
                    constraint_report(steps, a.epochs, a.xi.unwrap_or(a.n.saturating_sub(1)))?
                }
            };
            let zeta = r.max_squared as f64;
            report = Some(r);
            Accounting::Sensitivity { zeta }
        }
    };
    let conv = accounting.epsilon(a.sigma, a.delta, &default_orders())?;
    outln!("epsilon={}", fmt_sig(conv.epsilon));
    match conv.order {
        Some(alpha) => outln!("alpha={}", fmt_sig(alpha)),
        None => outln!("alpha=none"),
    }
    outln!("squared_sensitivity={}", fmt_sig(accounting.squared_sensitivity()?));
    if let Some(r) = report {
        print_report(&r)?;
    }
    Ok(())
}

fn sensitivity_cmd(a: SensitivityArgs) -> Result<()> {
    let report = match (a.method, &a.order) {
        (_, Some(path)) => sensitivity_given_order(&read_order_file(path)?)?,
        (SensitivityMethodArg::Order, None) => {
            return Err(DpError::InvalidInput("--method order needs --order FILE".into()))
        }
        (method, None) => {
            let steps = a.steps.ok_or_else(|| DpError::InvalidInput("--T is required without --order".into()))?;
            match method {
                SensitivityMethodArg::Levelwise => sensitivity_level_wise(steps, a.participations, a.xi)?,
                _ => sensitivity_dp(steps, a.participations, a.xi)?,
            }
        }
    };
    print_report(&report)?;
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mode = a.mode.unwrap_or(if a.epochs > 1 { CalibrateMode::Restarts } else { CalibrateMode::Tree });
    let accounting = match mode {
        CalibrateMode::Tree => Accounting::SingleTree { n: a.n },
        CalibrateMode::Restarts => Accounting::Restarts { n: a.n, epochs: a.epochs },
        CalibrateMode::Ls => Accounting::LeastSquares { n: a.n },
    };
    let orders = default_orders();
    let sigma = calibrate_noise(PrivacyParams::new(a.epsilon, a.delta)?, accounting, &orders)?;
    outln!("sigma={}", fmt_sig(sigma));
    outln!("achieved_epsilon={}", fmt_sig(accounting.epsilon(sigma, a.delta, &orders)?.epsilon));
    Ok(())
}

fn parse_grid(range: &str) -> Result<Vec<f64>> {
    let bad = || DpError::InvalidInput(format!("grid range '{range}' is not LO:HI"));
    let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
    let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok(lambda_grid(lo, hi))
}

fn train(a: TrainArgs) -> Result<()> {
    let task: Task = a.task.parse()?;
    let variant: Variant = a.variant.parse()?;
    let estimator: EstimatorMode = a.estimator.parse()?;
    let spec = SyntheticStream::new(task, a.n, a.p, a.theta_norm, a.seed)?
        .with_noise_level(a.noise_level)
        .with_feature_scale(a.clip);
    let data = gen_stream(&spec)?;
    let constraint = a.radius.map_or(Constraint::Unconstrained, Constraint::Ball);
    let optimizer = OptimizerConfig {
        lambda: a.lambda,
        momentum: if variant == Variant::FtrlMomentum { a.momentum } else { 0.0 },
        clip_norm: a.clip,
        noise_scale: a.sigma,
        constraint,
        l1_weight: if variant == Variant::Composite { a.l1 } else { 0.0 },
        batch_size: a.batch,
        estimator,
    };
    let config = TrainConfig {
        variant,
        optimizer,
        epochs: a.epochs,
        restart_every: a.restart_every,
        complete_tree: a.complete_tree,
        delta: a.delta,
        seed: a.seed,
    };
    let comparator = match (task, a.radius) {
        (Task::LinearLoss, Some(radius)) => Comparator::BestLinear { radius },
        _ => Comparator::Fixed(spec.theta_star.clone()),
    };
    let oracle = task.oracle();
    let (lambda, outcome) = if a.grid {
        tune_lambda(&data, oracle, &config, &comparator, &parse_grid(&a.grid_range)?)?
    } else {
        (a.lambda, run_online(&data, oracle, &config, &comparator)?)
    };
    let mut out = open_output(a.out.as_deref())?;
    write_train_csv(&mut out, &outcome)?;
    out.flush()?;
    if a.out.is_some() {
        outln!("lambda={}", fmt_sig(lambda));
        outln!("regret={}", fmt_sig(outcome.record.regret()));
        outln!("epsilon={}", fmt_sig(outcome.epsilon.last().copied().unwrap_or(0.0)));
    }
    Ok(())
}

fn equivalence(a: EquivalenceArgs) -> Result<()> {
    let task: Task = a.task.parse()?;
    let spec = SyntheticStream::new(task, a.n, a.p, 1.0, a.seed)?;
    let data = gen_stream(&spec)?;
    let config = OptimizerConfig { lambda: a.lambda, noise_scale: a.sigma, ..Default::default() };
    let report = equivalence_check(&data, task.oracle(), &config, a.seed, None)?;
    outln!("max_deviation={}", fmt_sig(report.max_deviation));
    outln!("max_relative_deviation={}", fmt_sig(report.max_relative_deviation));
    Ok(())
}
