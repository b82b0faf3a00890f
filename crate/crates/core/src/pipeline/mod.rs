//! End-to-end orchestration over flat files.
//!
//! Each stage reads the previous stage's CSV from the output directory and
//! writes its own, so any stage can be rerun or fed a replacement file.
//! Buoys and segments are processed in parallel and merged in sorted
//! order; every output is a deterministic function of inputs and config.

mod config;
pub mod report;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;

use crate::bathymetry::BathymetryGrid;
use crate::clean::{dedupe_and_drop_missing, filter_depth, filter_velocity};
use crate::estimation::{
    aggregate_daily, estimate_hourly, fill_gaps, impute_zero, load_external_estimates, read_daily_csv, write_daily_csv,
    BaselineEstimator, DailySeries, HourlyEstimate,
};
use crate::io::{parse_buoy_csv, parse_logbook_csv, write_buoy_csv, write_logbook_csv, write_rejects_csv, write_text};
use crate::metrics::{
    collect_samples, compute_binary_metrics, detect_episodes, read_samples_csv, write_episodes_csv, write_samples_csv,
    Episode, MetricSample, SegmentMetrics,
};
use crate::model::{BuoyRecord, LogbookEvent, OceanBasin};
use crate::segmentation::{
    generate_segments, read_segments_csv, segment_days, write_segments_csv, Cause, SegmentRow, VirginSegment,
};
use crate::smoothing::{read_smoothed_csv, smooth_segment, write_smoothed_csv, SmoothedSegment};
use crate::{Error, Result};

pub const REJECTS_BUOYS_FILE: &str = "rejects_buoys.csv";
pub const REJECTS_LOGBOOK_FILE: &str = "rejects_logbook.csv";
pub const CLEAN_BUOYS_FILE: &str = "clean_buoys.csv";
pub const CLEAN_LOGBOOK_FILE: &str = "clean_logbook.csv";
pub const DAILY_FILE: &str = "daily.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const SMOOTHED_FILE: &str = "smoothed.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const TESTS_FILE: &str = "tests.csv";
pub const SUMMARY_BINARY_FILE: &str = "summary_binary.csv";
pub const SUMMARY_EPISODES_FILE: &str = "summary_episodes.csv";
pub const NEVER_COLONIZED_FILE: &str = "never_colonized.csv";
pub const BOXPLOT_FILE: &str = "boxplot.csv";
pub const OUTLIERS_FILE: &str = "outliers.csv";
pub const VIOLIN_FILE: &str = "violin.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Clean,
    Estimate,
    Segment,
    Smooth,
    Metrics,
    Stats,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Clean,
        Stage::Estimate,
        Stage::Segment,
        Stage::Smooth,
        Stage::Metrics,
        Stage::Stats,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Clean => "clean",
            Stage::Estimate => "estimate",
            Stage::Segment => "segment",
            Stage::Smooth => "smooth",
            Stage::Metrics => "metrics",
            Stage::Stats => "stats",
            Stage::Report => "report",
        }
    }

    /// Files the stage writes into the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Clean => &[
                REJECTS_BUOYS_FILE,
                REJECTS_LOGBOOK_FILE,
                CLEAN_BUOYS_FILE,
                CLEAN_LOGBOOK_FILE,
            ],
            Stage::Estimate => &[DAILY_FILE],
            Stage::Segment => &[SEGMENTS_FILE],
            Stage::Smooth => &[SMOOTHED_FILE],
            Stage::Metrics => &[SAMPLES_FILE, EPISODES_FILE],
            Stage::Stats => &[TESTS_FILE],
            Stage::Report => &[
                SUMMARY_BINARY_FILE,
                SUMMARY_EPISODES_FILE,
                NEVER_COLONIZED_FILE,
                BOXPLOT_FILE,
                OUTLIERS_FILE,
                VIOLIN_FILE,
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage `{s}`")))
    }
}

/// Named row counts of one stage, in a stable order.
pub type Counts = BTreeMap<String, usize>;

/// Config echo plus per-stage counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Option<PipelineConfig>,
    pub stages: BTreeMap<String, Counts>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_text(path, &text)
    }

    pub fn count(&self, stage: Stage, name: &str) -> Option<usize> {
        self.stages.get(stage.as_str())?.get(name).copied()
    }
}

fn counts<const N: usize>(pairs: [(&str, usize); N]) -> Counts {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Splits records by buoy (sorted ids), each buoy sorted by time; ties keep
/// input order.
pub fn group_by_buoy(records: Vec<BuoyRecord>) -> BTreeMap<String, Vec<BuoyRecord>> {
    let mut out: BTreeMap<String, Vec<BuoyRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.buoy_id.clone()).or_default().push(r);
    }
    for v in out.values_mut() {
        v.sort_by_key(|r| r.timestamp);
    }
    out
}

fn group_events(events: &[LogbookEvent]) -> HashMap<&str, Vec<LogbookEvent>> {
    let mut out: HashMap<&str, Vec<LogbookEvent>> = HashMap::new();
    for e in events {
        out.entry(e.buoy_id.as_str()).or_default().push(e.clone());
    }
    out
}

/// Cleaning outcome of one buoy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CleanedBuoy {
    pub records: Vec<BuoyRecord>,
    pub deduped: usize,
    pub after_depth: usize,
}

/// Duplicates, depth and velocity filters for the time-sorted records of
/// one buoy.
pub fn clean_buoy(records: &[BuoyRecord], grid: Option<&BathymetryGrid>, config: &PipelineConfig) -> CleanedBuoy {
    let deduped = dedupe_and_drop_missing(records);
    let n_deduped = deduped.len();
    let deep = match grid {
        Some(g) => filter_depth(&deduped, g, config.min_depth_m).0,
        None => deduped,
    };
    let after_depth = deep.len();
    let (records, _) = filter_velocity(&deep, config.max_knots);
    CleanedBuoy {
        records,
        deduped: n_deduped,
        after_depth,
    }
}

/// Daily series of one buoy from its cleaned, time-sorted records. With
/// `external` the given hourly estimates replace the baseline estimator.
/// The series spans the days of the records.
pub fn estimate_buoy(
    buoy_id: &str,
    records: &[BuoyRecord],
    external: Option<&[HourlyEstimate]>,
    config: &PipelineConfig,
) -> (usize, DailySeries) {
    let (Some(first), Some(last)) = (records.first(), records.last()) else {
        return (0, DailySeries::empty(buoy_id, NaiveDate::default()));
    };
    let span = (first.timestamp.date_naive(), last.timestamp.date_naive());
    let hourly = match external {
        Some(e) => e.to_vec(),
        None => {
            let estimator = BaselineEstimator {
                max_missing_fraction: config.max_missing_hours,
                threshold: config.threshold_tons,
            };
            estimate_hourly(buoy_id, &impute_zero(records.to_vec()), &estimator)
        }
    };
    (hourly.len(), aggregate_daily(buoy_id, &hourly, Some(span)))
}

/// Metrics of one smoothed segment: binary metrics on the smoothed
/// presence series, episodes on the smoothed tonnage.
pub fn measure_segment(
    smoothed: &SmoothedSegment,
    basin: Option<OceanBasin>,
    deployment_started: bool,
    config: &PipelineConfig,
) -> SegmentMetrics {
    let id = &smoothed.segment_id;
    SegmentMetrics {
        segment_id: id.clone(),
        basin,
        binary: compute_binary_metrics(id, &smoothed.binary_smooth, deployment_started),
        episodes: smoothed
            .tonnage_smooth
            .as_ref()
            .map(|t| detect_episodes(id, t, &config.episode_config()))
            .unwrap_or_default(),
    }
}

/// Every intermediate product of one buoy.
#[derive(Debug, Clone, PartialEq)]
pub struct BuoyResult {
    pub cleaned: CleanedBuoy,
    pub daily: DailySeries,
    pub segments: Vec<VirginSegment>,
    pub smoothed: Vec<SmoothedSegment>,
    pub metrics: Vec<SegmentMetrics>,
}

/// Runs clean → estimate → segment → smooth → metrics in memory for one
/// buoy. `records` and `events` must belong to that buoy.
pub fn process_buoy(
    buoy_id: &str,
    records: &[BuoyRecord],
    events: &[LogbookEvent],
    grid: Option<&BathymetryGrid>,
    external: Option<&[HourlyEstimate]>,
    config: &PipelineConfig,
) -> Result<BuoyResult> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| r.timestamp);
    let cleaned = clean_buoy(&sorted, grid, config);
    let events = dedupe_and_drop_missing(events);
    let (_, daily) = estimate_buoy(buoy_id, &cleaned.records, external, config);
    let segments = if cleaned.records.is_empty() {
        Vec::new()
    } else {
        generate_segments(
            &daily,
            &events,
            &cleaned.records,
            &config.segment_config(),
            &config.basins,
        )
        .segments
    };
    let smoothed = segments
        .iter()
        .map(|s| smooth_segment(s, &config.lambda_grid))
        .collect::<Result<Vec<_>>>()?;
    let metrics = segments
        .iter()
        .zip(&smoothed)
        .map(|(seg, sm)| measure_segment(sm, seg.basin, seg.start_cause == Cause::Deployment, config))
        .collect();
    Ok(BuoyResult {
        cleaned,
        daily,
        segments,
        smoothed,
        metrics,
    })
}

fn out(config: &PipelineConfig, file: &str) -> PathBuf {
    config.output_dir.join(file)
}

fn stage_clean(config: &PipelineConfig) -> Result<Counts> {
    let grid = config.bathymetry.as_deref().map(BathymetryGrid::read).transpose()?;
    let buoys = parse_buoy_csv(&config.buoys)?;
    let logbook = parse_logbook_csv(&config.logbook)?;
    write_rejects_csv(&out(config, REJECTS_BUOYS_FILE), &buoys.rejects)?;
    write_rejects_csv(&out(config, REJECTS_LOGBOOK_FILE), &logbook.rejects)?;

    let parsed = buoys.rows.len();
    let groups: Vec<(String, Vec<BuoyRecord>)> = group_by_buoy(buoys.rows).into_iter().collect();
    let cleaned: Vec<CleanedBuoy> = groups
        .par_iter()
        .map(|(_, recs)| clean_buoy(recs, grid.as_ref(), config))
        .collect();
    let records: Vec<BuoyRecord> = cleaned.iter().flat_map(|c| c.records.iter().cloned()).collect();
    write_buoy_csv(&out(config, CLEAN_BUOYS_FILE), &records)?;

    let events = dedupe_and_drop_missing(&logbook.rows);
    let mut events_sorted = events.clone();
    events_sorted.sort_by(|a, b| a.buoy_id.cmp(&b.buoy_id).then(a.timestamp.cmp(&b.timestamp)));
    write_logbook_csv(&out(config, CLEAN_LOGBOOK_FILE), &events_sorted)?;

    Ok(counts([
        ("buoy_rows_read", parsed + buoys.rejects.len()),
        ("buoy_rows_parsed", parsed),
        ("buoy_rows_deduped", cleaned.iter().map(|c| c.deduped).sum()),
        ("buoy_rows_after_depth", cleaned.iter().map(|c| c.after_depth).sum()),
        ("buoy_rows_after_velocity", records.len()),
        ("buoys", cleaned.iter().filter(|c| !c.records.is_empty()).count()),
        ("logbook_rows_read", logbook.rows.len() + logbook.rejects.len()),
        ("logbook_rows_parsed", logbook.rows.len()),
        ("logbook_rows_deduped", events_sorted.len()),
    ]))
}

fn read_clean_records(config: &PipelineConfig) -> Result<Vec<BuoyRecord>> {
    let path = out(config, CLEAN_BUOYS_FILE);
    parse_buoy_csv(&path)?.strict(&path)
}

fn read_clean_events(config: &PipelineConfig) -> Result<Vec<LogbookEvent>> {
    let path = out(config, CLEAN_LOGBOOK_FILE);
    parse_logbook_csv(&path)?.strict(&path)
}

fn stage_estimate(config: &PipelineConfig) -> Result<Counts> {
    let groups: Vec<(String, Vec<BuoyRecord>)> = group_by_buoy(read_clean_records(config)?).into_iter().collect();
    let external: Option<HashMap<String, Vec<HourlyEstimate>>> = match &config.estimates {
        Some(path) => {
            let mut by_buoy: HashMap<String, Vec<HourlyEstimate>> = HashMap::new();
            for e in load_external_estimates(path)?.strict(path)? {
                by_buoy.entry(e.buoy_id.clone()).or_default().push(e);
            }
            for v in by_buoy.values_mut() {
                v.sort_by_key(|e| e.timestamp);
            }
            Some(by_buoy)
        }
        None => None,
    };
    let results: Vec<(usize, DailySeries)> = groups
        .par_iter()
        .map(|(id, recs)| {
            let ext = external
                .as_ref()
                .map(|m| m.get(id).map(Vec::as_slice).unwrap_or_default());
            estimate_buoy(id, recs, ext, config)
        })
        .collect();
    let series: Vec<DailySeries> = results.iter().map(|(_, s)| s.clone()).collect();
    write_daily_csv(&out(config, DAILY_FILE), &series)?;
    let days: usize = series.iter().map(DailySeries::len).sum();
    let missing: usize = series
        .iter()
        .map(|s| s.tonnage.iter().filter(|t| t.is_none()).count())
        .sum();
    Ok(counts([
        ("buoys", series.len()),
        ("hourly_estimates", results.iter().map(|(n, _)| n).sum()),
        ("daily_rows", days),
        ("daily_rows_missing", missing),
    ]))
}

fn stage_segment(config: &PipelineConfig) -> Result<Counts> {
    let records = group_by_buoy(read_clean_records(config)?);
    let events = read_clean_events(config)?;
    let by_buoy = group_events(&events);
    let series = read_daily_csv(&out(config, DAILY_FILE))?;
    let seg_config = config.segment_config();
    let outcomes: Vec<_> = series
        .par_iter()
        .map(|s| {
            let recs = records.get(&s.buoy_id).map(Vec::as_slice).unwrap_or_default();
            let evs = by_buoy.get(s.buoy_id.as_str()).map(Vec::as_slice).unwrap_or_default();
            if recs.is_empty() {
                return Default::default();
            }
            generate_segments(s, evs, recs, &seg_config, &config.basins)
        })
        .collect();
    let rows: Vec<SegmentRow> = outcomes
        .iter()
        .flat_map(|o| o.segments.iter().map(SegmentRow::from))
        .collect();
    write_segments_csv(&out(config, SEGMENTS_FILE), &rows)?;
    Ok(counts([
        ("candidates", outcomes.iter().map(|o| o.candidates).sum()),
        ("too_short", outcomes.iter().map(|o| o.too_short).sum()),
        ("low_coverage", outcomes.iter().map(|o| o.low_coverage).sum()),
        ("segments", rows.len()),
        ("unassigned_basin", rows.iter().filter(|r| r.basin.is_none()).count()),
    ]))
}

/// Rebuilds a segment's gap-filled daily values from the daily export.
pub fn rebuild_segment(row: &SegmentRow, series: &DailySeries, max_missing_days: f64) -> Result<VirginSegment> {
    let bad = |why: &str| Error::Input(format!("segment {}: {why}", row.segment_id));
    let (first, last) = segment_days(row.start, row.end).ok_or_else(|| bad("covers no whole day"))?;
    let daily = fill_gaps(&series.slice(first, last), max_missing_days)
        .map_err(|r| bad(&format!("daily coverage too low ({:.2} missing)", r.missing_fraction)))?;
    if daily.len() != row.n_days {
        return Err(bad(&format!(
            "has {} days in the daily export, {} recorded",
            daily.len(),
            row.n_days
        )));
    }
    Ok(VirginSegment {
        segment_id: row.segment_id.clone(),
        buoy_id: row.buoy_id.clone(),
        start: row.start,
        end: row.end,
        start_cause: row.start_cause,
        end_cause: row.end_cause,
        daily,
        basin: row.basin,
    })
}

fn stage_smooth(config: &PipelineConfig) -> Result<Counts> {
    let rows = read_segments_csv(&out(config, SEGMENTS_FILE))?;
    let series: HashMap<String, DailySeries> = read_daily_csv(&out(config, DAILY_FILE))?
        .into_iter()
        .map(|s| (s.buoy_id.clone(), s))
        .collect();
    let smoothed = rows
        .par_iter()
        .map(|row| {
            let s = series
                .get(&row.buoy_id)
                .ok_or_else(|| Error::Input(format!("no daily series for buoy {}", row.buoy_id)))?;
            smooth_segment(&rebuild_segment(row, s, config.max_missing_days)?, &config.lambda_grid)
        })
        .collect::<Result<Vec<_>>>()?;
    write_smoothed_csv(&out(config, SMOOTHED_FILE), &smoothed)?;
    Ok(counts([
        ("segments", smoothed.len()),
        (
            "spline_fits",
            smoothed.iter().filter(|s| s.tonnage_smooth.is_some()).count(),
        ),
        ("daily_rows", smoothed.iter().map(SmoothedSegment::len).sum()),
    ]))
}

fn stage_metrics(config: &PipelineConfig) -> Result<Counts> {
    let rows: HashMap<String, SegmentRow> = read_segments_csv(&out(config, SEGMENTS_FILE))?
        .into_iter()
        .map(|r| (r.segment_id.clone(), r))
        .collect();
    let smoothed = read_smoothed_csv(&out(config, SMOOTHED_FILE))?;
    let metrics = smoothed
        .par_iter()
        .map(|s| {
            let row = rows
                .get(&s.segment_id)
                .ok_or_else(|| Error::Input(format!("segment {} missing from {SEGMENTS_FILE}", s.segment_id)))?;
            Ok(measure_segment(
                s,
                row.basin,
                row.start_cause == Cause::Deployment,
                config,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = collect_samples(&metrics);
    let episodes: Vec<Episode> = metrics.iter().flat_map(|m| m.episodes.iter().cloned()).collect();
    write_samples_csv(&out(config, SAMPLES_FILE), &samples)?;
    write_episodes_csv(&out(config, EPISODES_FILE), &episodes)?;
    Ok(counts([
        ("segments", metrics.len()),
        ("samples", samples.len()),
        ("episodes", episodes.len()),
    ]))
}

fn read_samples(config: &PipelineConfig) -> Result<Vec<MetricSample>> {
    read_samples_csv(&out(config, SAMPLES_FILE))
}

fn stage_stats(config: &PipelineConfig) -> Result<Counts> {
    let tests = report::test_battery(&read_samples(config)?, config.adjustment);
    report::write_tests(&out(config, TESTS_FILE), &tests)?;
    Ok(counts([("tests", tests.len())]))
}

fn stage_report(config: &PipelineConfig) -> Result<Counts> {
    let samples = read_samples(config)?;
    let summary = report::summary_rows(&samples);
    report::write_summary_binary(&out(config, SUMMARY_BINARY_FILE), &summary)?;
    report::write_summary_episodes(&out(config, SUMMARY_EPISODES_FILE), &summary)?;
    let never = report::never_colonized(&samples);
    report::write_never_colonized(&out(config, NEVER_COLONIZED_FILE), &never)?;
    let [boxes, outliers, violin] = report::write_plot_data(
        &samples,
        &out(config, BOXPLOT_FILE),
        &out(config, OUTLIERS_FILE),
        &out(config, VIOLIN_FILE),
    )?;
    Ok(counts([
        ("summary_cells", summary.len()),
        ("boxplot_rows", boxes),
        ("outlier_rows", outliers),
        ("violin_rows", violin),
        ("never_colonized_rows", never.len()),
    ]))
}

/// Runs one stage from the files in the output directory and records its
/// counts in the manifest.
pub fn run_stage(config: &PipelineConfig, stage: Stage) -> Result<Counts> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::output(dir, e))?;
    let result = match stage {
        Stage::Clean => stage_clean(config),
        Stage::Estimate => stage_estimate(config),
        Stage::Segment => stage_segment(config),
        Stage::Smooth => stage_smooth(config),
        Stage::Metrics => stage_metrics(config),
        Stage::Stats => stage_stats(config),
        Stage::Report => stage_report(config),
    };
    let counts = result.map_err(|e| e.in_stage(stage.as_str()))?;
    let path = out(config, MANIFEST_FILE);
    // A stale or foreign manifest is simply replaced.
    let mut manifest = Manifest::read(&path).unwrap_or_default();
    manifest.config = Some(config.clone());
    manifest.stages.insert(stage.as_str().to_string(), counts.clone());
    manifest.write(&path)?;
    Ok(counts)
}

/// Every stage in order, starting from a fresh manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::output(dir, e))?;
    let path = out(config, MANIFEST_FILE);
    if path.exists() {
        std::fs::remove_file(&path).map_err(|e| Error::output(&path, e))?;
    }
    for stage in Stage::ALL {
        run_stage(config, stage)?;
    }
    Manifest::read(&path)
}
