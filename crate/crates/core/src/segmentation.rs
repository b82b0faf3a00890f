//! Virgin segments: the slices of a buoy's series that contain no human
//! interaction and no transmission gap.
//!
//! Boundaries come from segment-generating logbook events (deployments,
//! sets, retrievals, recoveries, losses), from both edges of every silence
//! longer than the gap threshold, and from the ends of the series. Adjacent
//! segments share an event instant: the earlier one ends there and the next
//! one starts there.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, Utc};
use serde::{Deserialize, Serialize};

use crate::basin::{assign_basin, BasinConfig};
use crate::estimation::{fill_gaps, DailySeries, DEFAULT_MAX_MISSING_DAYS};
use crate::io::{read_rows, CsvOut};
use crate::model::{format_timestamp, parse_timestamp, BuoyRecord, EventKind, LogbookEvent, OceanBasin};
use crate::{Error, Result};

pub const SEGMENTS_HEADER: [&str; 8] = [
    "segment_id",
    "buoy_id",
    "start",
    "end",
    "start_cause",
    "end_cause",
    "basin",
    "n_days",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    /// Silence longer than this splits the series.
    pub gap_hours: f64,
    /// Segments must be strictly longer than this.
    pub min_segment_hours: f64,
    /// Segments missing more estimates than this fraction are dropped.
    pub max_missing_fraction: f64,
    /// How far outside a covered stretch an event may lie and still be
    /// recorded as the cause of its start or end.
    pub event_tolerance_hours: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            gap_hours: 24.0,
            min_segment_hours: 72.0,
            max_missing_fraction: DEFAULT_MAX_MISSING_DAYS,
            event_tolerance_hours: 24.0,
        }
    }
}

fn hours(h: f64) -> Duration {
    Duration::milliseconds((h * 3_600_000.0).round() as i64)
}

/// Why a segment starts or ends where it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cause {
    Deployment,
    Set,
    RetrievalAtSea,
    RecoveryAtPort,
    Loss,
    GapEnd,
    GapStart,
    SeriesStart,
    SeriesEnd,
}

impl Cause {
    const ALL: [Cause; 9] = [
        Cause::Deployment,
        Cause::Set,
        Cause::RetrievalAtSea,
        Cause::RecoveryAtPort,
        Cause::Loss,
        Cause::GapEnd,
        Cause::GapStart,
        Cause::SeriesStart,
        Cause::SeriesEnd,
    ];

    fn from_event(kind: EventKind) -> Option<Cause> {
        match kind {
            EventKind::Deployment => Some(Cause::Deployment),
            EventKind::Set => Some(Cause::Set),
            EventKind::RetrievalAtSea => Some(Cause::RetrievalAtSea),
            EventKind::RecoveryAtPort => Some(Cause::RecoveryAtPort),
            EventKind::Loss => Some(Cause::Loss),
            EventKind::Visit | EventKind::Modification => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cause::Deployment => "deployment",
            Cause::Set => "set",
            Cause::RetrievalAtSea => "retrieval_at_sea",
            Cause::RecoveryAtPort => "recovery_at_port",
            Cause::Loss => "loss",
            Cause::GapEnd => "gap_end",
            Cause::GapStart => "gap_start",
            Cause::SeriesStart => "series_start",
            Cause::SeriesEnd => "series_end",
        }
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cause {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cause::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown segment cause `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirginSegment {
    pub segment_id: String,
    pub buoy_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub start_cause: Cause,
    pub end_cause: Cause,
    /// Gap-filled daily values of the days belonging to the segment.
    pub daily: DailySeries,
    pub basin: Option<OceanBasin>,
}

impl VirginSegment {
    pub fn n_days(&self) -> usize {
        self.daily.len()
    }
}

/// Segment boundaries before the length and coverage filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub start_cause: Cause,
    pub end_cause: Cause,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentationOutcome {
    pub segments: Vec<VirginSegment>,
    pub candidates: usize,
    pub too_short: usize,
    pub low_coverage: usize,
    /// Events whose buoy id did not match the series.
    pub foreign_events: usize,
}

/// Days that belong to `[start, end)`: those whose midday instant falls in
/// the interval.
pub fn segment_days(start: DateTime<Utc>, end: DateTime<Utc>) -> Option<(NaiveDate, NaiveDate)> {
    let noon = NaiveTime::from_hms_opt(12, 0, 0).expect("valid time");
    let mut first = start.date_naive();
    if start.time() > noon {
        first = first.succ_opt()?;
    }
    let mut last = end.date_naive();
    if end.time() <= noon {
        last = last.pred_opt()?;
    }
    (first <= last).then_some((first, last))
}

/// Cuts the record timeline of one buoy at gaps and segment-generating
/// events. `record_times` must be sorted; `events` must belong to the buoy.
pub fn split_timeline(record_times: &[DateTime<Utc>], events: &[LogbookEvent], config: &SegmentConfig) -> Vec<Piece> {
    let (Some(&first), Some(&last)) = (record_times.first(), record_times.last()) else {
        return Vec::new();
    };
    let gap = hours(config.gap_hours);
    let tolerance = hours(config.event_tolerance_hours);

    // Stretches of continuous transmission.
    let mut covered = Vec::new();
    let mut stretch_start = (first, Cause::SeriesStart);
    for w in record_times.windows(2) {
        if w[1] - w[0] > gap {
            covered.push((stretch_start, (w[0], Cause::GapStart)));
            stretch_start = (w[1], Cause::GapEnd);
        }
    }
    covered.push((stretch_start, (last, Cause::SeriesEnd)));

    let mut cuts: Vec<(DateTime<Utc>, Cause)> = events
        .iter()
        .filter_map(|e| Cause::from_event(e.kind).map(|c| (e.timestamp, c)))
        .collect();
    cuts.sort_by_key(|(t, _)| *t);
    cuts.dedup_by_key(|(t, _)| *t);

    let mut pieces = Vec::new();
    for (k, &((s, mut s_cause), (e, mut e_cause))) in covered.iter().enumerate() {
        let prev_end = if k == 0 { None } else { Some(covered[k - 1].1 .0) };
        let next_start = covered.get(k + 1).map(|c| c.0 .0);

        // Latest event at or before the stretch start, after the previous stretch.
        if let Some(&(_, c)) = cuts
            .iter()
            .rev()
            .find(|(t, _)| *t <= s && s - *t <= tolerance && prev_end.is_none_or(|p| *t > p))
        {
            s_cause = c;
        }
        // Earliest event at or after the stretch end, before the next stretch.
        if let Some(&(_, c)) = cuts
            .iter()
            .find(|(t, _)| *t >= e && *t - e <= tolerance && next_start.is_none_or(|n| *t < n))
        {
            e_cause = c;
        }

        let mut cursor = (s, s_cause);
        for &(t, c) in cuts.iter().filter(|(t, _)| *t > s && *t < e) {
            pieces.push(Piece {
                start: cursor.0,
                end: t,
                start_cause: cursor.1,
                end_cause: c,
            });
            cursor = (t, c);
        }
        pieces.push(Piece {
            start: cursor.0,
            end: e,
            start_cause: cursor.1,
            end_cause: e_cause,
        });
    }
    pieces
}

/// Builds the virgin segments of one buoy.
///
/// `series` is the buoy's daily series, `records` its cleaned records sorted
/// by time (used for gap detection and basin assignment). Candidates not
/// longer than the minimum length, or whose daily values cannot be
/// gap-filled, are discarded; survivors are numbered in time order.
pub fn generate_segments(
    series: &DailySeries,
    events: &[LogbookEvent],
    records: &[BuoyRecord],
    config: &SegmentConfig,
    basins: &BasinConfig,
) -> SegmentationOutcome {
    let buoy = series.buoy_id.as_str();
    let own: Vec<LogbookEvent> = events.iter().filter(|e| e.buoy_id == buoy).cloned().collect();
    let records: Vec<&BuoyRecord> = records.iter().filter(|r| r.buoy_id == buoy).collect();
    let times: Vec<DateTime<Utc>> = records.iter().map(|r| r.timestamp).collect();
    let pieces = split_timeline(&times, &own, config);
    let min_len = hours(config.min_segment_hours);

    let mut out = SegmentationOutcome {
        candidates: pieces.len(),
        foreign_events: events.len() - own.len(),
        ..Default::default()
    };
    for p in pieces {
        if p.end - p.start <= min_len {
            out.too_short += 1;
            continue;
        }
        let Some((first, last)) = segment_days(p.start, p.end) else {
            out.too_short += 1;
            continue;
        };
        let daily = match fill_gaps(&series.slice(first, last), config.max_missing_fraction) {
            Ok(d) => d,
            Err(_) => {
                out.low_coverage += 1;
                continue;
            }
        };
        let i = records.partition_point(|r| r.timestamp < p.start);
        let basin = records
            .get(i)
            .or(records.last())
            .copied()
            .and_then(|r| assign_basin(r.lat, r.lon, basins));
        out.segments.push(VirginSegment {
            segment_id: format!("{buoy}:{}", out.segments.len()),
            buoy_id: buoy.to_string(),
            start: p.start,
            end: p.end,
            start_cause: p.start_cause,
            end_cause: p.end_cause,
            daily,
            basin,
        });
    }
    out
}

/// Segment metadata as exported to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRow {
    pub segment_id: String,
    pub buoy_id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub start_cause: Cause,
    pub end_cause: Cause,
    pub basin: Option<OceanBasin>,
    pub n_days: usize,
}

impl From<&VirginSegment> for SegmentRow {
    fn from(s: &VirginSegment) -> Self {
        Self {
            segment_id: s.segment_id.clone(),
            buoy_id: s.buoy_id.clone(),
            start: s.start,
            end: s.end,
            start_cause: s.start_cause,
            end_cause: s.end_cause,
            basin: s.basin,
            n_days: s.n_days(),
        }
    }
}

pub fn write_segments_csv(path: &Path, rows: &[SegmentRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &SEGMENTS_HEADER)?;
    for s in rows {
        out.row([
            s.segment_id.clone(),
            s.buoy_id.clone(),
            format_timestamp(&s.start),
            format_timestamp(&s.end),
            s.start_cause.to_string(),
            s.end_cause.to_string(),
            s.basin.map(|b| b.to_string()).unwrap_or_default(),
            s.n_days.to_string(),
        ])?;
    }
    out.finish()
}

pub fn read_segments_csv(path: &Path) -> Result<Vec<SegmentRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = read_rows(std::io::BufReader::new(file), path, &SEGMENTS_HEADER, |row| {
        Ok(SegmentRow {
            segment_id: row[0].to_string(),
            buoy_id: row[1].to_string(),
            start: parse_timestamp(&row[2])?,
            end: parse_timestamp(&row[3])?,
            start_cause: row[4].parse()?,
            end_cause: row[5].parse()?,
            basin: match &row[6] {
                "" => None,
                b => Some(b.parse()?),
            },
            n_days: row[7]
                .parse()
                .map_err(|_| Error::Input(format!("malformed n_days `{}`", &row[7])))?,
        })
    })?;
    parsed.strict(path)
}
