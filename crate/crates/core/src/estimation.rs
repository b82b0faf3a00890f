//! Biomass estimation: the estimator contract, a transparent baseline,
//! loading of externally produced estimates, daily aggregation and
//! within-segment gap filling.
//!
//! The baseline estimator is *not* a trained model. It averages the raw
//! acoustic tonnage over a 72 h window so that the rest of the pipeline can
//! run end to end; genuine model outputs can be supplied through
//! [`load_external_estimates`] and flow through the same code.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, DurationRound, NaiveDate, Utc};

use crate::io::{fmt_opt, parse_f64, read_rows, CsvOut, Parsed};
use crate::model::{format_timestamp, parse_date, parse_timestamp, BuoyRecord, N_LAYERS};
use crate::{Error, Result};

/// Length of the acoustic window consumed by an estimator, in hours.
pub const WINDOW_HOURS: usize = 72;
/// Tonnage at or above which the binary output reports tuna presence.
pub const PRESENCE_TONS: f64 = 10.0;
pub const DEFAULT_MAX_MISSING_HOURS: f64 = 0.2;
pub const DEFAULT_MAX_MISSING_DAYS: f64 = 0.8;

pub const EXTERNAL_HEADER: [&str; 4] = ["buoy_id", "timestamp", "binary", "tonnage"];
pub const DAILY_HEADER: [&str; 5] = ["buoy_id", "date", "binary", "tonnage", "imputed_flag"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateSource {
    Baseline,
    External,
    Imputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourlyEstimate {
    pub buoy_id: String,
    pub timestamp: DateTime<Utc>,
    /// Tuna presence (at least 10 t).
    pub binary: bool,
    pub tonnage: f64,
    pub source: EstimateSource,
}

/// Output of an estimator for one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub binary: bool,
    pub tonnage: f64,
    pub source: EstimateSource,
}

/// One hour of a buoy's acoustic timeline.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HourSlot {
    /// Total tonnage over the ten layers; `None` when nothing was received
    /// during that hour.
    pub tonnage: Option<f64>,
    /// Every reading in the hour was zero-imputed.
    pub imputed: bool,
}

/// Anything that maps a window of [`WINDOW_HOURS`] hourly slots to a
/// biomass estimate. Returning `None` marks the hour as missing.
pub trait BiomassEstimator: Send + Sync {
    fn estimate(&self, window: &[HourSlot]) -> Option<Estimate>;
}

/// Mean of the per-hour layer sums over the window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineEstimator {
    /// Largest tolerated fraction of empty hours in a window.
    pub max_missing_fraction: f64,
    pub threshold: f64,
}

impl Default for BaselineEstimator {
    fn default() -> Self {
        Self {
            max_missing_fraction: DEFAULT_MAX_MISSING_HOURS,
            threshold: PRESENCE_TONS,
        }
    }
}

impl BiomassEstimator for BaselineEstimator {
    fn estimate(&self, window: &[HourSlot]) -> Option<Estimate> {
        estimate_baseline(window, self.max_missing_fraction, self.threshold)
    }
}

pub fn estimate_baseline(window: &[HourSlot], max_missing_fraction: f64, threshold: f64) -> Option<Estimate> {
    if window.len() != WINDOW_HOURS {
        return None;
    }
    let available: Vec<&HourSlot> = window.iter().filter(|s| s.tonnage.is_some()).collect();
    let missing = (WINDOW_HOURS - available.len()) as f64 / WINDOW_HOURS as f64;
    if available.is_empty() || missing > max_missing_fraction {
        return None;
    }
    let tonnage = available.iter().filter_map(|s| s.tonnage).sum::<f64>() / available.len() as f64;
    let source = if available.iter().all(|s| s.imputed) {
        EstimateSource::Imputed
    } else {
        EstimateSource::Baseline
    };
    Some(Estimate {
        binary: tonnage >= threshold,
        tonnage,
        source,
    })
}

/// Fills absent acoustic readings with ten zero layers. Buoys only transmit
/// biomass above a small floor, so a position without biomass means "no
/// detectable fish".
pub fn impute_zero(records: Vec<BuoyRecord>) -> Vec<BuoyRecord> {
    records
        .into_iter()
        .map(|mut r| {
            if r.layers.is_none() {
                r.layers = Some([0.0; N_LAYERS]);
                r.imputed = true;
            }
            r
        })
        .collect()
}

fn floor_hour(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(Duration::hours(1)).expect("in range")
}

/// Bins the time-sorted records of one buoy into consecutive hour slots,
/// from the hour of the first record to the hour of the last. Several
/// readings within one hour are averaged.
pub fn hourly_slots(records: &[BuoyRecord]) -> Option<(DateTime<Utc>, Vec<HourSlot>)> {
    let first = floor_hour(records.first()?.timestamp);
    let last = floor_hour(records.last()?.timestamp);
    let n = ((last - first).num_hours() + 1) as usize;
    let mut sums = vec![(0.0, 0usize, true); n];
    for r in records {
        let Some(total) = r.total_tonnage() else {
            continue;
        };
        let i = (floor_hour(r.timestamp) - first).num_hours() as usize;
        let s = &mut sums[i];
        s.0 += total;
        s.1 += 1;
        s.2 &= r.imputed;
    }
    let slots = sums
        .into_iter()
        .map(|(sum, count, imputed)| HourSlot {
            tonnage: (count > 0).then(|| sum / count as f64),
            imputed: count > 0 && imputed,
        })
        .collect();
    Some((first, slots))
}

/// Runs an estimator over every hour of one buoy's timeline. The window
/// for hour `h` covers hours `h-36 ..= h+35`; hours beyond the timeline
/// count as missing.
pub fn estimate_hourly(buoy_id: &str, records: &[BuoyRecord], estimator: &dyn BiomassEstimator) -> Vec<HourlyEstimate> {
    let Some((first, slots)) = hourly_slots(records) else {
        return Vec::new();
    };
    let half = WINDOW_HOURS / 2;
    let mut padded = vec![HourSlot::default(); half];
    padded.extend_from_slice(&slots);
    padded.extend(std::iter::repeat_n(HourSlot::default(), WINDOW_HOURS - half));
    (0..slots.len())
        .filter_map(|h| {
            estimator
                .estimate(&padded[h..h + WINDOW_HOURS])
                .map(|e| HourlyEstimate {
                    buoy_id: buoy_id.to_string(),
                    timestamp: first + Duration::hours(h as i64),
                    binary: e.binary,
                    tonnage: e.tonnage,
                    source: e.source,
                })
        })
        .collect()
}

fn parse_external_row(row: &csv::StringRecord) -> Result<HourlyEstimate> {
    let timestamp = parse_timestamp(&row[1])?;
    let binary = match &row[2] {
        "1" | "true" => true,
        "0" | "false" => false,
        other => return Err(Error::Input(format!("malformed binary `{other}`"))),
    };
    let tonnage = parse_f64(&row[3], "tonnage")?;
    if tonnage < 0.0 {
        return Err(Error::Input("negative tonnage".into()));
    }
    Ok(HourlyEstimate {
        buoy_id: row[0].to_string(),
        timestamp,
        binary,
        tonnage,
        source: EstimateSource::External,
    })
}

/// Loads model outputs produced outside this crate.
pub fn load_external_estimates(path: &Path) -> Result<Parsed<HourlyEstimate>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(
        std::io::BufReader::new(file),
        path,
        &EXTERNAL_HEADER,
        parse_external_row,
    )
}

pub fn load_external_reader<R: std::io::Read>(reader: R) -> Result<Parsed<HourlyEstimate>> {
    read_rows(
        reader,
        Path::new("<estimates csv>"),
        &EXTERNAL_HEADER,
        parse_external_row,
    )
}

/// Per-buoy daily presence flags and tonnage, one entry per consecutive
/// UTC calendar day starting at `start_date`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub buoy_id: String,
    pub start_date: NaiveDate,
    pub binary: Vec<Option<bool>>,
    pub tonnage: Vec<Option<f64>>,
    /// The day's value was not directly observed (zero-imputed or gap-filled).
    pub imputed: Vec<bool>,
}

impl DailySeries {
    pub fn empty(buoy_id: impl Into<String>, start_date: NaiveDate) -> Self {
        Self {
            buoy_id: buoy_id.into(),
            start_date,
            binary: Vec::new(),
            tonnage: Vec::new(),
            imputed: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.binary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.binary.is_empty()
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start_date + Duration::days(i as i64)
    }

    pub fn end_date(&self) -> Option<NaiveDate> {
        (!self.is_empty()).then(|| self.date(self.len() - 1))
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let i = (date - self.start_date).num_days();
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// Days `first..=last`, with missing entries where the series does not
    /// reach.
    pub fn slice(&self, first: NaiveDate, last: NaiveDate) -> DailySeries {
        let mut out = DailySeries::empty(self.buoy_id.clone(), first);
        let mut d = first;
        while d <= last {
            match self.index_of(d) {
                Some(i) => {
                    out.binary.push(self.binary[i]);
                    out.tonnage.push(self.tonnage[i]);
                    out.imputed.push(self.imputed[i]);
                }
                None => {
                    out.binary.push(None);
                    out.tonnage.push(None);
                    out.imputed.push(false);
                }
            }
            d = d.succ_opt().expect("date in range");
        }
        out
    }

    /// Fraction of days where either output is missing.
    pub fn missing_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let missing = self
            .binary
            .iter()
            .zip(&self.tonnage)
            .filter(|(b, t)| b.is_none() || t.is_none())
            .count();
        missing as f64 / self.len() as f64
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Collapses the time-sorted hourly estimates of one buoy into daily values:
/// median tonnage and majority presence (ties take the previous day's
/// value, or absence on the first day). Days without estimates are missing.
///
/// `span` fixes the first and last day; by default the series spans the
/// estimates.
pub fn aggregate_daily(
    buoy_id: &str,
    estimates: &[HourlyEstimate],
    span: Option<(NaiveDate, NaiveDate)>,
) -> DailySeries {
    let mut by_day: BTreeMap<NaiveDate, Vec<&HourlyEstimate>> = BTreeMap::new();
    for e in estimates {
        by_day.entry(e.timestamp.date_naive()).or_default().push(e);
    }
    let (first, last) = match span {
        Some(s) => s,
        None => match (by_day.keys().next(), by_day.keys().next_back()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => return DailySeries::empty(buoy_id, NaiveDate::default()),
        },
    };

    let mut out = DailySeries::empty(buoy_id, first);
    let mut previous = false;
    let mut day = first;
    while day <= last {
        match by_day.get(&day) {
            Some(hours) => {
                let mut tons: Vec<f64> = hours.iter().map(|e| e.tonnage).collect();
                let ones = hours.iter().filter(|e| e.binary).count();
                let zeros = hours.len() - ones;
                let binary = match ones.cmp(&zeros) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => previous,
                };
                previous = binary;
                out.binary.push(Some(binary));
                out.tonnage.push(Some(median(&mut tons)));
                out.imputed
                    .push(hours.iter().all(|e| e.source == EstimateSource::Imputed));
            }
            None => {
                out.binary.push(None);
                out.tonnage.push(None);
                out.imputed.push(false);
            }
        }
        day = day.succ_opt().expect("date in range");
    }
    out
}

/// A series with too little estimator coverage to be used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejected {
    pub missing_fraction: f64,
}

/// Fills the gaps of a segment-scoped series: tonnage is linearly
/// interpolated between the nearest valid days, presence is carried forward
/// from the last valid day. Leading and trailing gaps copy the nearest valid
/// value. Series missing more than `max_missing_fraction` of their days are
/// rejected.
pub fn fill_gaps(series: &DailySeries, max_missing_fraction: f64) -> Result<DailySeries, Rejected> {
    let missing_fraction = series.missing_fraction();
    let all_missing = series.binary.iter().all(Option::is_none) || series.tonnage.iter().all(Option::is_none);
    if all_missing || missing_fraction > max_missing_fraction {
        return Err(Rejected { missing_fraction });
    }

    let mut out = series.clone();
    for (i, flag) in out.imputed.iter_mut().enumerate() {
        if series.binary[i].is_none() || series.tonnage[i].is_none() {
            *flag = true;
        }
    }
    out.tonnage = interpolate(&series.tonnage);

    let first_valid = series.binary.iter().flatten().next().copied();
    let mut last = first_valid;
    for b in out.binary.iter_mut() {
        match b {
            Some(v) => last = Some(*v),
            None => *b = last,
        }
    }
    Ok(out)
}

fn interpolate(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let valid: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    if valid.is_empty() {
        return values.to_vec();
    }
    let mut out = Vec::with_capacity(values.len());
    let mut k = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            out.push(Some(*v));
            continue;
        }
        while k + 1 < valid.len() && valid[k + 1].0 < i {
            k += 1;
        }
        let (i0, v0) = valid[k];
        let filled = if i < i0 {
            v0
        } else if k + 1 < valid.len() {
            let (i1, v1) = valid[k + 1];
            let w = (i - i0) as f64 / (i1 - i0) as f64;
            v0 + w * (v1 - v0)
        } else {
            v0
        };
        out.push(Some(filled));
    }
    out
}

pub fn write_daily_csv(path: &Path, series: &[DailySeries]) -> Result<()> {
    let mut out = CsvOut::create(path, &DAILY_HEADER)?;
    for s in series {
        for i in 0..s.len() {
            out.row([
                s.buoy_id.clone(),
                s.date(i).to_string(),
                s.binary[i]
                    .map(|b| if b { "1" } else { "0" }.to_string())
                    .unwrap_or_default(),
                fmt_opt(s.tonnage[i]),
                if s.imputed[i] { "1" } else { "0" }.to_string(),
            ])?;
        }
    }
    out.finish()
}

/// Reads a daily export back into one series per buoy, in file order.
/// Dates of one buoy must be consecutive.
pub fn read_daily_csv(path: &Path) -> Result<Vec<DailySeries>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed = read_rows(std::io::BufReader::new(file), path, &DAILY_HEADER, |row| {
        let binary = match &row[2] {
            "" => None,
            "1" => Some(true),
            "0" => Some(false),
            other => return Err(Error::Input(format!("malformed binary `{other}`"))),
        };
        let tonnage = match &row[3] {
            "" => None,
            t => Some(parse_f64(t, "tonnage")?),
        };
        Ok((
            row[0].to_string(),
            parse_date(&row[1])?,
            binary,
            tonnage,
            &row[4] == "1",
        ))
    })?;
    if let Some(r) = parsed.rejects.first() {
        return Err(Error::Input(format!(
            "{}: row {}: {}",
            path.display(),
            r.row_number,
            r.reason
        )));
    }
    let mut out: Vec<DailySeries> = Vec::new();
    for (buoy, date, binary, tonnage, imputed) in parsed.rows {
        match out.last_mut() {
            Some(s) if s.buoy_id == buoy => {
                if Some(date) != s.end_date().and_then(|d| d.succ_opt()) {
                    return Err(Error::Input(format!(
                        "{}: non-consecutive dates for buoy {buoy}",
                        path.display()
                    )));
                }
            }
            _ => out.push(DailySeries::empty(buoy, date)),
        }
        let s = out.last_mut().expect("just pushed");
        s.binary.push(binary);
        s.tonnage.push(tonnage);
        s.imputed.push(imputed);
    }
    Ok(out)
}

pub fn format_hourly(e: &HourlyEstimate) -> [String; 4] {
    [
        e.buoy_id.clone(),
        format_timestamp(&e.timestamp),
        if e.binary { "1" } else { "0" }.to_string(),
        crate::io::fmt_f64(e.tonnage),
    ]
}
