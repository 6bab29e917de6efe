//! Quadratic variation of diffusions driven by a Brownian sheet: simulation,
//! realized-variation estimators with a studentized central limit theorem,
//! the weighted quadratic-variation processes and their limit, and a
//! deterministic Monte Carlo toolkit to check all of it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod functions;
pub mod grid;
pub mod kernel;
pub mod limit;
pub mod mc;
pub mod sheet;
pub mod stats;
pub mod variation;

pub use diffusion::{
    corner_quadrature, observe_on_grid, quadratic_variation_field, simulate_diffusion, true_quadratic_variation,
    DiffusionPath, ModelSpec, Smoothness,
};
pub use error::{Error, Result};
pub use functions::{DriftFn, ScalarFn, REGISTRY};
pub use grid::{floor_index, max_norm_dist, Cell, Grid, Lattice, ParamPoint};
pub use kernel::{stream_replicate, ReplicateStats};
pub use limit::{
    conditional_covariance, evaluate_along_flow, modulus_of_continuity, simulate_limit, tightness_diagnostic,
    LimitProcess, PiecewiseLinear, SimpleFlow, TightnessRow,
};
pub use mc::{aggregate, derive_seed, run_campaign, CampaignOutput, CampaignSpec, Experiment, McSummary, PerN};
pub use sheet::{coarsen, generate_sheet, read_dump, write_dump, BrownianSheet, SeedSpec, SheetRole, SheetStream};
pub use stats::{Moment, Sample, TestVerdict};
pub use variation::{
    confidence_interval, predictable_bracket, studentized, weighted_qv_process, write_reports_csv, EstimateReport,
    VariationKind, VariationProcess,
};
