//! Core domain types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of equally spaced depth layers reported by the echo-sounder.
pub const N_LAYERS: usize = 10;
/// Largest tonnage a single layer can report.
pub const MAX_LAYER_TONS: f64 = 63.0;

pub type Layers = [f64; N_LAYERS];

/// One timestamped acoustic/GPS observation from one buoy.
#[derive(Debug, Clone, PartialEq)]
pub struct BuoyRecord {
    pub buoy_id: String,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    /// Per-layer tonnage, absent when the buoy sent only a position.
    pub layers: Option<Layers>,
    /// Set when `layers` was filled with zeros because no acoustic
    /// reading was transmitted.
    pub imputed: bool,
}

impl BuoyRecord {
    pub fn new(
        buoy_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        lat: f64,
        lon: f64,
        layers: Option<Layers>,
    ) -> Result<Self> {
        check_position(lat, lon)?;
        if let Some(layers) = &layers {
            check_layers(layers)?;
        }
        Ok(Self {
            buoy_id: buoy_id.into(),
            timestamp,
            lat,
            lon,
            layers,
            imputed: false,
        })
    }

    /// Sum of the ten layers, if an acoustic reading is present.
    pub fn total_tonnage(&self) -> Option<f64> {
        self.layers.map(|l| l.iter().sum())
    }
}

pub(crate) fn check_position(lat: f64, lon: f64) -> Result<()> {
    if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
        return Err(Error::Input("lat out of range".into()));
    }
    if !lon.is_finite() || !(-180.0..180.0).contains(&lon) {
        return Err(Error::Input("lon out of range".into()));
    }
    Ok(())
}

pub(crate) fn check_layers(layers: &Layers) -> Result<()> {
    if layers
        .iter()
        .any(|v| !v.is_finite() || !(0.0..=MAX_LAYER_TONS).contains(v))
    {
        return Err(Error::Input("layer value out of range".into()));
    }
    Ok(())
}

/// Kind of human interaction recorded in the FAD logbook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    Deployment,
    Set,
    RetrievalAtSea,
    RecoveryAtPort,
    Loss,
    Visit,
    Modification,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Deployment,
        EventKind::Set,
        EventKind::RetrievalAtSea,
        EventKind::RecoveryAtPort,
        EventKind::Loss,
        EventKind::Visit,
        EventKind::Modification,
    ];

    /// Events that can alter the aggregation or the acoustic readings and
    /// therefore bound virgin segments. Visits and modifications do not.
    pub fn is_segment_generating(self) -> bool {
        !matches!(self, EventKind::Visit | EventKind::Modification)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Deployment => "deployment",
            EventKind::Set => "set",
            EventKind::RetrievalAtSea => "retrieval_at_sea",
            EventKind::RecoveryAtPort => "recovery_at_port",
            EventKind::Loss => "loss",
            EventKind::Visit => "visit",
            EventKind::Modification => "modification",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown event type `{s}`")))
    }
}

/// One human interaction with a dFAD.
#[derive(Debug, Clone, PartialEq)]
pub struct LogbookEvent {
    pub buoy_id: String,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OceanBasin {
    Atlantic,
    Indian,
    Pacific,
}

impl OceanBasin {
    pub const ALL: [OceanBasin; 3] = [OceanBasin::Atlantic, OceanBasin::Indian, OceanBasin::Pacific];

    pub fn as_str(self) -> &'static str {
        match self {
            OceanBasin::Atlantic => "Atlantic",
            OceanBasin::Indian => "Indian",
            OceanBasin::Pacific => "Pacific",
        }
    }
}

impl fmt::Display for OceanBasin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OceanBasin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OceanBasin::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown basin `{s}`")))
    }
}

/// Formats an instant as ISO-8601 UTC with second resolution.
pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Parses an ISO-8601 instant and truncates it to whole seconds.
pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let t = DateTime::parse_from_rfc3339(s.trim())
        .map_err(|_| Error::Input(format!("malformed timestamp `{s}`")))?
        .with_timezone(&Utc);
    Ok(DateTime::from_timestamp(t.timestamp(), 0).expect("in range"))
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| Error::Input(format!("malformed date `{s}`")))
}
