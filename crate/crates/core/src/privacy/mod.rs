//! Renyi-DP accounting for tree-aggregated training.
//!
//! [`rdp`] holds the curves, composition, conversion and calibration;
//! [`sensitivity`] computes the squared ℓ2 sensitivity of the full tree
//! release under multiple participation.

pub mod rdp;
pub mod sensitivity;

pub use rdp::{
    calibrate_noise, compose_rdp, default_orders, rdp_from_sensitivity, rdp_ls_trees, rdp_single_tree, rdp_to_dp,
    rdp_tree_restarts, Accounting, DpConversion, PrivacyParams, RdpCurve,
};
pub use sensitivity::{
    parse_order, read_order_file, sensitivity_dp, sensitivity_dp_with_budget, sensitivity_given_order,
    sensitivity_level_wise, IncrementalOrderSensitivity, OrderToken, ParticipationPattern, SensitivityMethod,
    SensitivityReport,
};
