//! Post-hoc edits of fine-tuned LayerNorm parameters: λ-rescaling of the
//! learned shift, the λ sweep, and SVD / random-drop sparsification.

mod rescale;
mod sparsify;
pub mod svd;

pub use rescale::{
    default_lambda_grid, lambda_sweep, rescale, rescale_beta, rescale_gamma, select_best, sweep_family,
    uniform_grid, ParamFamily, SweepResult,
};
pub use sparsify::{
    apply_shift, apply_surgery, random_drop_shift, svd_keep_range, svd_truncate_shift, ShiftMatrix, SurgeryKind,
    SurgerySpec, SurgeryTarget, SvdMode,
};
