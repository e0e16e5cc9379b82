//! Grid experiment runner: enumerate the toy grid, run pretrain → fine-tune →
//! λ sweep per case, aggregate, and persist results.

mod config;
mod grid;
pub mod report;
pub mod stats;
mod studies;

pub use config::{case_seed, CaseCoords, GridConfig};
pub use grid::{
    case_pair, run_case, run_case_with, run_grid, CaseResult, FractionStats, HistogramBin, OutcomeClass,
    SourceBundle, SweepSummary,
};
pub use stats::spearman;
pub use studies::{compare_strategies, rescale_sensitivity, shifted_subgrid, Sensitivity};
