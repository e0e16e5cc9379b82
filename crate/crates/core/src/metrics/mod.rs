//! Shift measurements: LayerNorm parameter shift, empirical Wasserstein data
//! shift, the fine-tuning shift ratio and sample-size calculators.

mod fsr;
mod lnshift;
pub mod sample_complexity;
mod wasserstein;

pub use fsr::{fsr, fsr_default, fsr_with, FsrReport, FSR_EPSILON};
pub use lnshift::{ln_shift, LnShiftReport};
pub use sample_complexity::{mean_sample_size, variance_ci};
pub use wasserstein::{data_shift, wasserstein, wasserstein_1d, DataShiftMetric};
