//! Subcommand options. Every field can come from a flag or from the JSON config;
//! flags given on the command line win.

use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

fn default_levels() -> Vec<f64> {
    vec![0.01, 0.025, 0.05, 0.95, 0.975, 0.99]
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Catalog process (DGP1..DGP5); ignored when --params is given.
    #[arg(long, default_value = "DGP1")]
    pub dgp: String,
    /// Parameter file (params.json or fit.json) to simulate from.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `normal` or `t(nu)`, e.g. `t5`.
    #[arg(long, default_value = "normal")]
    pub dist: String,
    #[arg(long)]
    pub burn: Option<usize>,
    #[arg(long)]
    pub allow_nonstationary: bool,
}

impl Default for SimulateArgs {
    fn default() -> Self {
        Self {
            dgp: "DGP1".into(),
            params: None,
            n: 2000,
            seed: None,
            dist: "normal".into(),
            burn: None,
            allow_nonstationary: false,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Return panel CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub center: bool,
    /// `drop_common_and_zero_fill` or `error`.
    #[arg(long, default_value = "drop_common_and_zero_fill")]
    pub missing: String,
    /// `r,s`.
    #[arg(long, default_value = "1,0")]
    pub order: String,
    /// Ψ window; defaults to the number of series.
    #[arg(long)]
    pub k_window: Option<usize>,
    /// `general` or `lowrank`.
    #[arg(long, default_value = "general")]
    pub estimator: String,
    #[arg(long, default_value_t = 5)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Default for FitArgs {
    fn default() -> Self {
        Self {
            data: None,
            center: false,
            missing: "drop_common_and_zero_fill".into(),
            order: "1,0".into(),
            k_window: None,
            estimator: "general".into(),
            n_starts: 5,
            max_iter: 500,
            grad_tol: 1e-6,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value = "drop_common_and_zero_fill")]
    pub missing: String,
    /// Largest `r + 2s` on the grid.
    #[arg(long, default_value_t = 2)]
    pub omax: usize,
    #[arg(long)]
    pub k_window: Option<usize>,
    #[arg(long, default_value = "general")]
    pub estimator: String,
    #[arg(long, default_value_t = 5)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Default for SelectArgs {
    fn default() -> Self {
        Self {
            data: None,
            center: false,
            missing: "drop_common_and_zero_fill".into(),
            omax: 2,
            k_window: None,
            estimator: "general".into(),
            n_starts: 5,
            max_iter: 500,
            seed: None,
        }
    }
}

/// Shared by `infer` and `spillover`.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value = "drop_common_and_zero_fill")]
    pub missing: String,
    /// fit.json written by `fit`.
    #[arg(long)]
    pub fit: Option<PathBuf>,
    /// Use the inverse information instead of the sandwich.
    #[arg(long)]
    pub gaussian: bool,
}

impl Default for InferArgs {
    fn default() -> Self {
        Self {
            data: None,
            center: false,
            missing: "drop_common_and_zero_fill".into(),
            fit: None,
            gaussian: false,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarityArgs {
    /// params.json or fit.json.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Catalog process, when no parameter file is given.
    #[arg(long)]
    pub dgp: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value = "drop_common_and_zero_fill")]
    pub missing: String,
    /// params.json or fit.json.
    #[arg(long)]
    pub params: Option<PathBuf>,
}

impl Default for ForecastArgs {
    fn default() -> Self {
        Self {
            data: None,
            center: false,
            missing: "drop_common_and_zero_fill".into(),
            params: None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub center: bool,
    #[arg(long, default_value = "drop_common_and_zero_fill")]
    pub missing: String,
    #[arg(long, default_value = "1,0")]
    pub order: String,
    #[arg(long)]
    pub k_window: Option<usize>,
    #[arg(long, default_value = "general")]
    pub estimator: String,
    /// Rolling estimation window `n0`.
    #[arg(long, default_value_t = 500)]
    pub window: usize,
    #[arg(long, value_delimiter = ',', default_values_t = default_levels())]
    pub levels: Vec<f64>,
    /// Origins between re-estimations.
    #[arg(long, default_value_t = 1)]
    pub refit_every: usize,
    #[arg(long, default_value_t = 5)]
    pub n_starts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Keep these parameters fixed instead of re-estimating.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Default for BacktestArgs {
    fn default() -> Self {
        Self {
            data: None,
            center: false,
            missing: "drop_common_and_zero_fill".into(),
            order: "1,0".into(),
            k_window: None,
            estimator: "general".into(),
            window: 500,
            levels: default_levels(),
            refit_every: 1,
            n_starts: 5,
            max_iter: 500,
            params: None,
            seed: None,
        }
    }
}
