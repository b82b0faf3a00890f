//! Smoothing of segment series: an isolated-value filter for daily presence
//! flags and a non-negative penalized B-spline (P-spline) for tonnage.

pub mod binary;
pub mod bspline;
pub mod nnls;
pub mod pspline;
mod series;

pub use binary::{count_runs, smooth_binary};
pub use bspline::{build_bspline_basis, BSplineBasis};
pub use pspline::{
    default_lambda_grid, fit_nonneg_pspline, interior_knots_for, select_lambda_gcv, smooth_tonnage, SplineFit,
};
pub use series::{read_smoothed_csv, smooth_segment, write_smoothed_csv, SmoothedSegment, SMOOTHED_HEADER};
