//! Flat-file formats: buoy and logbook CSVs, rejects reports, and a CSV
//! writer that only publishes a file once it is complete.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::model::{
    check_layers, check_position, format_timestamp, parse_timestamp, BuoyRecord, Layers, LogbookEvent, N_LAYERS,
};
use crate::{Error, Result};

pub const BUOY_HEADER: [&str; 14] = [
    "buoy_id",
    "timestamp",
    "lat",
    "lon",
    "layer_1",
    "layer_2",
    "layer_3",
    "layer_4",
    "layer_5",
    "layer_6",
    "layer_7",
    "layer_8",
    "layer_9",
    "layer_10",
];
pub const LOGBOOK_HEADER: [&str; 5] = ["buoy_id", "timestamp", "lat", "lon", "event_type"];
pub const REJECTS_HEADER: [&str; 2] = ["row_number", "reason"];

/// A data row that failed to parse. `row_number` is 1-based and does not
/// count the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub row_number: usize,
    pub reason: String,
}

/// Parsed rows plus the rows that were rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub rejects: Vec<Reject>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Reads a CSV with an exact expected header and maps every data row
/// through `parse_row`. Row-level failures become rejects.
pub(crate) fn read_rows<T, R: Read>(
    reader: R,
    path: &Path,
    header: &[&str],
    mut parse_row: impl FnMut(&csv::StringRecord) -> Result<T>,
) -> Result<Parsed<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut out = Parsed {
        rows: Vec::new(),
        rejects: Vec::new(),
    };
    for (i, row) in rdr.records().enumerate() {
        let row_number = i + 1;
        let result = row.map_err(|e| Error::Input(e.to_string())).and_then(|row| {
            if row.len() != header.len() {
                Err(Error::Input(format!(
                    "expected {} fields, found {}",
                    header.len(),
                    row.len()
                )))
            } else {
                parse_row(&row)
            }
        });
        match result {
            Ok(v) => out.rows.push(v),
            Err(e) => out.rejects.push(Reject {
                row_number,
                reason: reason_of(e),
            }),
        }
    }
    Ok(out)
}

impl<T> Parsed<T> {
    /// Rows of an intermediate file, where any reject is an error.
    pub(crate) fn strict(self, path: &Path) -> Result<Vec<T>> {
        match self.rejects.first() {
            None => Ok(self.rows),
            Some(r) => Err(Error::Input(format!(
                "{}: row {}: {}",
                path.display(),
                r.row_number,
                r.reason
            ))),
        }
    }
}

fn reason_of(e: Error) -> String {
    match e {
        Error::Input(msg) => msg,
        other => other.to_string(),
    }
}

pub(crate) fn parse_f64(field: &str, name: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Input(format!("malformed {name} `{field}`")))
}

fn parse_buoy_row(row: &csv::StringRecord) -> Result<BuoyRecord> {
    let buoy_id = row[0].to_string();
    let timestamp = parse_timestamp(&row[1])?;
    let lat = parse_f64(&row[2], "lat")?;
    let lon = parse_f64(&row[3], "lon")?;
    check_position(lat, lon)?;

    let fields: Vec<&str> = (4..4 + N_LAYERS).map(|i| &row[i]).collect();
    let layers = if fields.iter().all(|f| f.is_empty()) {
        None
    } else if fields.iter().any(|f| f.is_empty()) {
        return Err(Error::Input("partial layer data".into()));
    } else {
        let mut layers: Layers = [0.0; N_LAYERS];
        for (slot, f) in layers.iter_mut().zip(&fields) {
            *slot = parse_f64(f, "layer value")?;
        }
        check_layers(&layers)?;
        Some(layers)
    };
    BuoyRecord::new(buoy_id, timestamp, lat, lon, layers)
}

pub fn parse_buoy_csv(path: &Path) -> Result<Parsed<BuoyRecord>> {
    read_rows(open(path)?, path, &BUOY_HEADER, parse_buoy_row)
}

pub fn parse_buoy_reader<R: Read>(reader: R) -> Result<Parsed<BuoyRecord>> {
    read_rows(reader, Path::new("<buoy csv>"), &BUOY_HEADER, parse_buoy_row)
}

fn parse_logbook_row(row: &csv::StringRecord) -> Result<LogbookEvent> {
    let timestamp = parse_timestamp(&row[1])?;
    let lat = parse_f64(&row[2], "lat")?;
    let lon = parse_f64(&row[3], "lon")?;
    check_position(lat, lon)?;
    Ok(LogbookEvent {
        buoy_id: row[0].to_string(),
        timestamp,
        lat,
        lon,
        kind: row[4].parse()?,
    })
}

pub fn parse_logbook_csv(path: &Path) -> Result<Parsed<LogbookEvent>> {
    read_rows(open(path)?, path, &LOGBOOK_HEADER, parse_logbook_row)
}

pub fn parse_logbook_reader<R: Read>(reader: R) -> Result<Parsed<LogbookEvent>> {
    read_rows(reader, Path::new("<logbook csv>"), &LOGBOOK_HEADER, parse_logbook_row)
}

/// CSV writer that writes to `<path>.partial` and renames to `path` on
/// [`CsvOut::finish`]. A failed stage leaves the `.partial` file behind.
pub struct CsvOut {
    path: PathBuf,
    partial: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let partial = partial_path(path);
        let file = File::create(&partial).map_err(|e| Error::output(&partial, e))?;
        let mut writer = csv::WriterBuilder::new().from_writer(BufWriter::new(file));
        writer
            .write_record(header)
            .map_err(|e| Error::output(&partial, std::io::Error::other(e)))?;
        Ok(Self {
            path: path.to_path_buf(),
            partial,
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer
            .write_record(fields)
            .map_err(|e| Error::output(&self.partial, std::io::Error::other(e)))
    }

    pub fn finish(self) -> Result<()> {
        let CsvOut { path, partial, writer } = self;
        let mut inner = writer
            .into_inner()
            .map_err(|e| Error::output(&partial, e.into_error()))?;
        inner.flush().map_err(|e| Error::output(&partial, e))?;
        drop(inner);
        std::fs::rename(&partial, &path).map_err(|e| Error::output(&path, e))
    }
}

pub fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes a whole text file through the same `.partial` protocol.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let partial = partial_path(path);
    std::fs::write(&partial, text).map_err(|e| Error::output(&partial, e))?;
    std::fs::rename(&partial, path).map_err(|e| Error::output(path, e))
}

/// Shortest round-tripping decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn buoy_fields(r: &BuoyRecord) -> Vec<String> {
    let mut fields = vec![
        r.buoy_id.clone(),
        format_timestamp(&r.timestamp),
        fmt_f64(r.lat),
        fmt_f64(r.lon),
    ];
    match &r.layers {
        Some(layers) => fields.extend(layers.iter().map(|v| fmt_f64(*v))),
        None => fields.extend(std::iter::repeat_n(String::new(), N_LAYERS)),
    }
    fields
}

pub fn logbook_fields(e: &LogbookEvent) -> [String; 5] {
    [
        e.buoy_id.clone(),
        format_timestamp(&e.timestamp),
        fmt_f64(e.lat),
        fmt_f64(e.lon),
        e.kind.as_str().to_string(),
    ]
}

pub fn write_buoy_csv(path: &Path, records: &[BuoyRecord]) -> Result<()> {
    let mut out = CsvOut::create(path, &BUOY_HEADER)?;
    for r in records {
        out.row(buoy_fields(r))?;
    }
    out.finish()
}

pub fn write_logbook_csv(path: &Path, events: &[LogbookEvent]) -> Result<()> {
    let mut out = CsvOut::create(path, &LOGBOOK_HEADER)?;
    for e in events {
        out.row(logbook_fields(e))?;
    }
    out.finish()
}

pub fn write_rejects_csv(path: &Path, rejects: &[Reject]) -> Result<()> {
    let mut out = CsvOut::create(path, &REJECTS_HEADER)?;
    for r in rejects {
        out.row([r.row_number.to_string(), r.reason.clone()])?;
    }
    out.finish()
}
