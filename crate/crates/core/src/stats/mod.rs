//! Summary statistics and rank-based tests.

mod dist;
mod rank;
mod summary;

pub use dist::{chi_square_sf, normal_sf};
pub use rank::{
    adjust_p_values, dunn_posthoc, kruskal_wallis, mann_whitney, mann_whitney_exact_p, mid_ranks, Adjustment, TestKind,
    TestResult, KW_EXACT_MAX_N, MW_EXACT_MAX_PRODUCT,
};
pub use summary::{quantile, summarize, Summary};
