use std::path::Path;

use chrono::NaiveDate;

use super::{
    binary::smooth_binary,
    pspline::{smooth_tonnage, MIN_POINTS},
};
use crate::io::{fmt_f64, fmt_opt, read_rows, CsvOut};
use crate::model::parse_date;
use crate::segmentation::VirginSegment;
use crate::{Error, Result};

pub const SMOOTHED_HEADER: [&str; 6] = [
    "segment_id",
    "date",
    "binary_raw",
    "binary_smooth",
    "tonnage_raw",
    "tonnage_smooth",
];

/// Raw and smoothed daily series of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSegment {
    pub segment_id: String,
    pub start_date: NaiveDate,
    pub binary_raw: Vec<bool>,
    pub binary_smooth: Vec<bool>,
    pub tonnage_raw: Vec<f64>,
    /// Absent for segments too short for a spline fit.
    pub tonnage_smooth: Option<Vec<f64>>,
}

impl SmoothedSegment {
    pub fn len(&self) -> usize {
        self.binary_raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.binary_raw.is_empty()
    }
}

/// Smooths the gap-filled daily values of a segment.
pub fn smooth_segment(segment: &VirginSegment, lambda_grid: &[f64]) -> Result<SmoothedSegment> {
    let daily = &segment.daily;
    let missing = || Error::Numerical(format!("segment {} has unfilled days", segment.segment_id));
    let binary_raw: Vec<bool> = daily
        .binary
        .iter()
        .map(|b| b.ok_or_else(missing))
        .collect::<Result<_>>()?;
    let tonnage_raw: Vec<f64> = daily
        .tonnage
        .iter()
        .map(|t| t.ok_or_else(missing))
        .collect::<Result<_>>()?;
    let tonnage_smooth = if tonnage_raw.len() >= MIN_POINTS {
        Some(smooth_tonnage(&tonnage_raw, lambda_grid)?.fitted)
    } else {
        None
    };
    Ok(SmoothedSegment {
        segment_id: segment.segment_id.clone(),
        start_date: daily.start_date,
        binary_smooth: smooth_binary(&binary_raw),
        binary_raw,
        tonnage_raw,
        tonnage_smooth,
    })
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_smoothed_csv(path: &Path, segments: &[SmoothedSegment]) -> Result<()> {
    let mut out = CsvOut::create(path, &SMOOTHED_HEADER)?;
    for s in segments {
        let mut date = s.start_date;
        for i in 0..s.len() {
            out.row([
                s.segment_id.clone(),
                date.to_string(),
                bit(s.binary_raw[i]).to_string(),
                bit(s.binary_smooth[i]).to_string(),
                fmt_f64(s.tonnage_raw[i]),
                fmt_opt(s.tonnage_smooth.as_ref().map(|t| t[i])),
            ])?;
            date = date.succ_opt().expect("date in range");
        }
    }
    out.finish()
}

struct Row {
    segment_id: String,
    date: NaiveDate,
    binary_raw: bool,
    binary_smooth: bool,
    tonnage_raw: f64,
    tonnage_smooth: Option<f64>,
}

fn parse_bit(s: &str) -> Result<bool> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(Error::Input(format!("malformed binary `{other}`"))),
    }
}

/// Reads segments back; rows of one segment must be contiguous and on
/// consecutive days.
pub fn read_smoothed_csv(path: &Path) -> Result<Vec<SmoothedSegment>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let rows = read_rows(std::io::BufReader::new(file), path, &SMOOTHED_HEADER, |row| {
        Ok(Row {
            segment_id: row[0].to_string(),
            date: parse_date(&row[1])?,
            binary_raw: parse_bit(&row[2])?,
            binary_smooth: parse_bit(&row[3])?,
            tonnage_raw: crate::io::parse_f64(&row[4], "tonnage_raw")?,
            tonnage_smooth: match &row[5] {
                "" => None,
                v => Some(crate::io::parse_f64(v, "tonnage_smooth")?),
            },
        })
    })?
    .strict(path)?;

    let mut out: Vec<SmoothedSegment> = Vec::new();
    let mut smooth: Vec<Option<f64>> = Vec::new();
    let close = |seg: &mut SmoothedSegment, smooth: &mut Vec<Option<f64>>| -> Result<()> {
        seg.tonnage_smooth = if smooth.iter().all(Option::is_some) {
            Some(smooth.iter().map(|v| v.expect("checked")).collect())
        } else if smooth.iter().all(Option::is_none) {
            None
        } else {
            return Err(Error::Input(format!(
                "segment {} has partial smoothed tonnage",
                seg.segment_id
            )));
        };
        smooth.clear();
        Ok(())
    };
    for r in rows {
        let continues = out.last().is_some_and(|s| s.segment_id == r.segment_id);
        if continues {
            let s = out.last_mut().expect("non-empty");
            let expected = s.start_date + chrono::Duration::days(s.len() as i64);
            if r.date != expected {
                return Err(Error::Input(format!(
                    "{}: segment {} skips to {}",
                    path.display(),
                    r.segment_id,
                    r.date
                )));
            }
        } else {
            if let Some(prev) = out.last_mut() {
                close(prev, &mut smooth)?;
            }
            out.push(SmoothedSegment {
                segment_id: r.segment_id.clone(),
                start_date: r.date,
                binary_raw: Vec::new(),
                binary_smooth: Vec::new(),
                tonnage_raw: Vec::new(),
                tonnage_smooth: None,
            });
        }
        let s = out.last_mut().expect("non-empty");
        s.binary_raw.push(r.binary_raw);
        s.binary_smooth.push(r.binary_smooth);
        s.tonnage_raw.push(r.tonnage_raw);
        smooth.push(r.tonnage_smooth);
    }
    if let Some(last) = out.last_mut() {
        close(last, &mut smooth)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let d = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let segs = vec![
            SmoothedSegment {
                segment_id: "B1:0".into(),
                start_date: d,
                binary_raw: vec![true, false, true],
                binary_smooth: vec![true, true, true],
                tonnage_raw: vec![12.5, 3.0, 11.0],
                tonnage_smooth: None,
            },
            SmoothedSegment {
                segment_id: "B1:1".into(),
                start_date: d,
                binary_raw: vec![false; 2],
                binary_smooth: vec![false; 2],
                tonnage_raw: vec![0.0, 0.1],
                tonnage_smooth: Some(vec![0.0, 0.1 / 3.0]),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("smoothed.csv");
        write_smoothed_csv(&p, &segs).unwrap();
        assert_eq!(read_smoothed_csv(&p).unwrap(), segs);
    }
}
