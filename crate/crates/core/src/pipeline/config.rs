use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::basin::BasinConfig;
use crate::clean::{DEFAULT_MAX_KNOTS, DEFAULT_MIN_DEPTH_M};
use crate::estimation::{DEFAULT_MAX_MISSING_DAYS, DEFAULT_MAX_MISSING_HOURS, PRESENCE_TONS};
use crate::metrics::EpisodeConfig;
use crate::segmentation::SegmentConfig;
use crate::smoothing::default_lambda_grid;
use crate::stats::Adjustment;
use crate::{Error, Result};

/// Every knob of a pipeline run. Field defaults are the published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub buoys: PathBuf,
    pub logbook: PathBuf,
    /// Depth grid; without one the depth filter is skipped.
    pub bathymetry: Option<PathBuf>,
    /// Hourly model outputs replacing the baseline estimator.
    pub estimates: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub threshold_tons: f64,
    pub max_knots: f64,
    pub min_depth_m: f64,
    pub gap_hours: f64,
    pub min_segment_hours: f64,
    /// Largest share of a segment's days without an estimate.
    pub max_missing_days: f64,
    /// Largest share of empty hours in an estimator window.
    pub max_missing_hours: f64,
    pub event_tolerance_hours: f64,
    pub edge_days: usize,
    pub min_peak_segment_days: usize,

    pub basins: BasinConfig,
    pub lambda_grid: Vec<f64>,
    pub adjustment: Adjustment,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            buoys: PathBuf::from("buoys.csv"),
            logbook: PathBuf::from("logbook.csv"),
            bathymetry: None,
            estimates: None,
            output_dir: PathBuf::from("out"),
            threshold_tons: PRESENCE_TONS,
            max_knots: DEFAULT_MAX_KNOTS,
            min_depth_m: DEFAULT_MIN_DEPTH_M,
            gap_hours: 24.0,
            min_segment_hours: 72.0,
            max_missing_days: DEFAULT_MAX_MISSING_DAYS,
            max_missing_hours: DEFAULT_MAX_MISSING_HOURS,
            event_tolerance_hours: 24.0,
            edge_days: 5,
            min_peak_segment_days: 10,
            basins: BasinConfig::default(),
            lambda_grid: default_lambda_grid(),
            adjustment: Adjustment::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("threshold_tons", self.threshold_tons),
            ("max_knots", self.max_knots),
            ("min_depth_m", self.min_depth_m),
            ("gap_hours", self.gap_hours),
            ("min_segment_hours", self.min_segment_hours),
            ("max_missing_days", self.max_missing_days),
            ("max_missing_hours", self.max_missing_hours),
            ("event_tolerance_hours", self.event_tolerance_hours),
            ("edge_days", self.edge_days as f64),
            ("min_peak_segment_days", self.min_peak_segment_days as f64),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("max_missing_days", self.max_missing_days),
            ("max_missing_hours", self.max_missing_hours),
        ] {
            if v > 1.0 {
                return Err(Error::InvalidArgument(format!("{name} is a fraction, got {v}")));
            }
        }
        if self.lambda_grid.is_empty() || self.lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidArgument("lambda_grid must hold positive values".into()));
        }
        let b = &self.basins;
        if !(b.atlantic_west < b.atlantic_east && b.atlantic_east < b.indian_east && b.max_abs_lat > 0.0) {
            return Err(Error::InvalidArgument(
                "basin meridians must increase west to east".into(),
            ));
        }
        Ok(())
    }

    pub fn segment_config(&self) -> SegmentConfig {
        SegmentConfig {
            gap_hours: self.gap_hours,
            min_segment_hours: self.min_segment_hours,
            max_missing_fraction: self.max_missing_days,
            event_tolerance_hours: self.event_tolerance_hours,
        }
    }

    pub fn episode_config(&self) -> EpisodeConfig {
        EpisodeConfig {
            threshold: self.threshold_tons,
            edge_days: self.edge_days,
            min_segment_days: self.min_peak_segment_days,
        }
    }
}
