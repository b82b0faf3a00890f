//! Aggregation metrics on smoothed daily series.
//!
//! Binary metrics (soak time, colonization time, continuous residence and
//! absence runs, occupancy rate) come from the presence/absence series;
//! aggregation episodes with their aggregation and disaggregation times
//! come from the smoothed tonnage series.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimation::PRESENCE_TONS;
use crate::io::{fmt_f64, read_rows, CsvOut};
use crate::model::OceanBasin;
use crate::{Error, Result};

pub const SAMPLES_HEADER: [&str; 4] = ["metric", "basin", "segment_id", "value"];
pub const EPISODES_HEADER: [&str; 9] = [
    "segment_id",
    "run_start",
    "peak_day",
    "run_end",
    "peak_tonnage",
    "at",
    "dt",
    "at_censored",
    "dt_censored",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    St,
    Ct,
    Acrt,
    Acat,
    Or,
    At,
    Dt,
}

impl Metric {
    pub const BINARY: [Metric; 5] = [Metric::St, Metric::Ct, Metric::Acrt, Metric::Acat, Metric::Or];
    pub const EPISODE: [Metric; 2] = [Metric::At, Metric::Dt];
    pub const ALL: [Metric; 7] = [
        Metric::St,
        Metric::Ct,
        Metric::Acrt,
        Metric::Acat,
        Metric::Or,
        Metric::At,
        Metric::Dt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::St => "ST",
            Metric::Ct => "CT",
            Metric::Acrt => "aCRT",
            Metric::Acat => "aCAT",
            Metric::Or => "OR",
            Metric::At => "AT",
            Metric::Dt => "DT",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMetrics {
    pub segment_id: String,
    /// Soak time; only for segments that start with a deployment.
    pub st_days: Option<usize>,
    /// Colonization time; absent when never colonized or not
    /// deployment-started.
    pub ct_days: Option<usize>,
    pub acrt_days: Vec<usize>,
    pub acat_days: Vec<usize>,
    pub or_fraction: Option<f64>,
    pub colonized: bool,
    pub deployment_started: bool,
}

/// Lengths of the maximal runs of `true` and of `false`, in order.
pub fn run_lengths(series: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let (mut ones, mut zeros) = (Vec::new(), Vec::new());
    for run in series.chunk_by(|a, b| a == b) {
        if run[0] {
            ones.push(run.len());
        } else {
            zeros.push(run.len());
        }
    }
    (ones, zeros)
}

pub fn compute_binary_metrics(segment_id: &str, binary: &[bool], deployment_started: bool) -> BinaryMetrics {
    let (acrt_days, acat_days) = run_lengths(binary);
    let first = binary.iter().position(|b| *b);
    let st = binary.len();
    let (st_days, ct_days, or_fraction) = if deployment_started {
        let or = first.filter(|ct| *ct < st).map(|ct| {
            let present = binary[ct..].iter().filter(|b| **b).count();
            present as f64 / (st - ct) as f64
        });
        (Some(st), first, or)
    } else {
        (None, None, None)
    };
    BinaryMetrics {
        segment_id: segment_id.to_string(),
        st_days,
        ct_days,
        acrt_days,
        acat_days,
        or_fraction,
        colonized: first.is_some(),
        deployment_started,
    }
}

/// Share of deployment-started segments that never see tuna.
pub fn never_colonized_rate(metrics: &[BinaryMetrics]) -> Result<f64> {
    let started: Vec<&BinaryMetrics> = metrics.iter().filter(|m| m.deployment_started).collect();
    if started.is_empty() {
        return Err(Error::InvalidArgument("no deployment-started segments".into()));
    }
    let never = started.iter().filter(|m| !m.colonized).count();
    Ok(never as f64 / started.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub threshold: f64,
    pub edge_days: usize,
    pub min_segment_days: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            threshold: PRESENCE_TONS,
            edge_days: 5,
            min_segment_days: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub segment_id: String,
    pub run_start: usize,
    pub peak_day: usize,
    pub run_end: usize,
    pub peak_tonnage: f64,
    /// Days from the last day at or below the threshold before the run to
    /// the peak; `None` when the run starts on the first segment day.
    pub at_days: Option<usize>,
    /// Days from the peak to the first day at or below the threshold after
    /// the run; `None` when the run reaches the last segment day.
    pub dt_days: Option<usize>,
}

/// One episode per maximal run of tonnage above the threshold, peaking at
/// the run maximum.
///
/// With several days tied at the maximum, the peak is the earliest of them,
/// AT runs up to the earliest and DT starts from the latest, so a reversed
/// series swaps AT and DT exactly.
pub fn detect_episodes(segment_id: &str, tonnage: &[f64], config: &EpisodeConfig) -> Vec<Episode> {
    let n = tonnage.len();
    if n < config.min_segment_days {
        return Vec::new();
    }
    let mut episodes = Vec::new();
    let mut day = 0;
    while day < n {
        if tonnage[day] <= config.threshold {
            day += 1;
            continue;
        }
        let start = day;
        while day < n && tonnage[day] > config.threshold {
            day += 1;
        }
        let end = day - 1;
        let run = &tonnage[start..=end];
        let max = run.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let first_max = start + run.iter().position(|v| *v == max).expect("run is non-empty");
        let last_max = start + run.iter().rposition(|v| *v == max).expect("run is non-empty");
        if first_max < config.edge_days || last_max + config.edge_days >= n {
            continue;
        }
        episodes.push(Episode {
            segment_id: segment_id.to_string(),
            run_start: start,
            peak_day: first_max,
            run_end: end,
            peak_tonnage: max,
            at_days: (start > 0).then(|| first_max + 1 - start),
            dt_days: (end + 1 < n).then(|| end + 1 - last_max),
        });
    }
    episodes
}

/// Everything computed for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetrics {
    pub segment_id: String,
    pub basin: Option<OceanBasin>,
    pub binary: BinaryMetrics,
    pub episodes: Vec<Episode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub metric: Metric,
    pub basin: Option<OceanBasin>,
    pub segment_id: String,
    pub value: f64,
}

/// Long-format samples; censored AT/DT values are left out.
pub fn collect_samples(segments: &[SegmentMetrics]) -> Vec<MetricSample> {
    let mut out = Vec::new();
    for s in segments {
        let mut push = |metric, value: f64| {
            out.push(MetricSample {
                metric,
                basin: s.basin,
                segment_id: s.segment_id.clone(),
                value,
            })
        };
        let b = &s.binary;
        if let Some(st) = b.st_days {
            push(Metric::St, st as f64);
        }
        if let Some(ct) = b.ct_days {
            push(Metric::Ct, ct as f64);
        }
        for &r in &b.acrt_days {
            push(Metric::Acrt, r as f64);
        }
        for &r in &b.acat_days {
            push(Metric::Acat, r as f64);
        }
        if let Some(or) = b.or_fraction {
            push(Metric::Or, or);
        }
        for e in &s.episodes {
            if let Some(at) = e.at_days {
                push(Metric::At, at as f64);
            }
            if let Some(dt) = e.dt_days {
                push(Metric::Dt, dt as f64);
            }
        }
    }
    out
}

pub(crate) fn basin_str(basin: Option<OceanBasin>) -> &'static str {
    basin.map_or("", OceanBasin::as_str)
}

pub(crate) fn parse_basin(s: &str) -> Result<Option<OceanBasin>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

pub fn write_samples_csv(path: &Path, samples: &[MetricSample]) -> Result<()> {
    let mut out = CsvOut::create(path, &SAMPLES_HEADER)?;
    for s in samples {
        out.row([
            s.metric.as_str().to_string(),
            basin_str(s.basin).to_string(),
            s.segment_id.clone(),
            fmt_f64(s.value),
        ])?;
    }
    out.finish()
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<MetricSample>> {
    let file = std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::io(path, e))?;
    let parsed = read_rows(file, path, &SAMPLES_HEADER, |row| {
        Ok(MetricSample {
            metric: row[0].parse()?,
            basin: parse_basin(&row[1])?,
            segment_id: row[2].to_string(),
            value: crate::io::parse_f64(&row[3], "value")?,
        })
    })?;
    parsed.strict(path)
}

fn fmt_usize(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_episodes_csv(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut out = CsvOut::create(path, &EPISODES_HEADER)?;
    for e in episodes {
        out.row([
            e.segment_id.clone(),
            e.run_start.to_string(),
            e.peak_day.to_string(),
            e.run_end.to_string(),
            fmt_f64(e.peak_tonnage),
            fmt_usize(e.at_days),
            fmt_usize(e.dt_days),
            e.at_days.is_none().to_string(),
            e.dt_days.is_none().to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<Episode>> {
    let file = std::fs::File::open(path)
        .map(std::io::BufReader::new)
        .map_err(|e| Error::io(path, e))?;
    let day =
        |s: &str, name: &str| -> Result<usize> { s.parse().map_err(|_| Error::Input(format!("invalid {name} {s:?}"))) };
    let parsed = read_rows(file, path, &EPISODES_HEADER, |row| {
        let opt = |s: &str, name: &str| if s.is_empty() { Ok(None) } else { day(s, name).map(Some) };
        Ok(Episode {
            segment_id: row[0].to_string(),
            run_start: day(&row[1], "run_start")?,
            peak_day: day(&row[2], "peak_day")?,
            run_end: day(&row[3], "run_end")?,
            peak_tonnage: crate::io::parse_f64(&row[4], "peak_tonnage")?,
            at_days: opt(&row[5], "at")?,
            dt_days: opt(&row[6], "dt")?,
        })
    })?;
    parsed.strict(path)
}
