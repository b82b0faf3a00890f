//! Tuna aggregation dynamics at drifting fish aggregating devices (dFADs),
//! derived from satellite echo-sounder buoy data.
//!
//! The crate is organised as a batch pipeline:
//!
//! 1. [`clean`] drops duplicates, shallow-water and high-velocity records.
//! 2. [`estimation`] turns hourly acoustic records into daily biomass
//!    series through a pluggable [`estimation::BiomassEstimator`].
//! 3. [`segmentation`] cuts each buoy's series into virgin segments, free of
//!    human interaction and long transmission gaps.
//! 4. [`smoothing`] cleans the binary presence series and fits
//!    non-negative P-splines to the tonnage series.
//! 5. [`metrics`] computes soak/colonization/residence/absence times,
//!    occupancy rates and aggregation episodes.
//! 6. [`stats`] provides the summary statistics and the rank-based test
//!    battery used to compare ocean basins.
//!
//! [`synthgen`] produces synthetic fleets with known ground truth and
//! [`pipeline`] glues all stages together over flat CSV files.

pub mod basin;
pub mod bathymetry;
pub mod clean;
pub mod error;
pub mod estimation;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod segmentation;
pub mod smoothing;
pub mod stats;
pub mod synthgen;

pub use error::{Error, Result};
pub use model::{BuoyRecord, EventKind, LogbookEvent, OceanBasin};
