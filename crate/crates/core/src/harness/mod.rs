//! Experiment driver: synthetic streams, online training with regret and
//! privacy tracking, bound evaluation and CSV output.

mod data;
mod metrics;
mod output;
mod train;

pub use data::{gen_stream, make_batches, SyntheticStream, Task};
pub use metrics::{
    best_linear_comparator, compute_regret, empirical_risk, excess_risk, online_to_batch, regret_bound_general,
    BoundParams, RegretRecord,
};
pub use output::{fmt_sig, noise_table, write_train_csv};
pub use train::{lambda_grid, run_online, tune_lambda, Comparator, TrainConfig, TrainOutcome, Variant};
