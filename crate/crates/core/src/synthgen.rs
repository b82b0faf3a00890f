//! Synthetic echo-sounder fleets with known aggregation dynamics.
//!
//! Each buoy is deployed at `start` and reports one fix per hour for
//! `days_per_buoy` days. Its acoustic signal alternates between absence and
//! presence periods with lognormal durations, starting in absence. During a
//! presence period of `H` hours peaking at `P` tons, hour `h` carries
//!
//! ```text
//! 10 + (P − 10)·(h + 1)/(R + 1)      for h ≤ R = round(rise_fraction·H)
//! 10 + (P − 10)·(H − h)/(H − R)      for h > R
//! ```
//!
//! so the noise-free signal is above 10 t exactly on the presence hours and
//! peaks at hour `R`. A diel sinusoid is added during presence, Gaussian
//! noise everywhere; the total is clipped to [0, 63] t and split over the
//! ten layers with fixed weights. Totals under one ton are transmitted with
//! no layer data, as real buoys do below their detection floor.
//!
//! Sets arrive as a Poisson process. A set zeroes the signal: an ongoing
//! presence period is cut at the set hour and a new absence period starts.
//!
//! Every buoy draws from its own ChaCha8 stream (`seed`, stream = buoy
//! index), so output does not depend on generation order.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::bathymetry::BathymetryGrid;
use crate::estimation::PRESENCE_TONS;
use crate::io::{fmt_f64, write_text, CsvOut, BUOY_HEADER, LOGBOOK_HEADER};
use crate::model::{format_timestamp, BuoyRecord, EventKind, Layers, LogbookEvent, MAX_LAYER_TONS};
use crate::{Error, Result};

pub const TRUTH_HEADER: [&str; 7] = [
    "buoy_id",
    "episode_idx",
    "start",
    "peak_day",
    "end",
    "true_at",
    "true_dt",
];

/// Share of the total biomass in each layer, surface to bottom.
pub const LAYER_WEIGHTS: Layers = [0.02, 0.05, 0.08, 0.12, 0.15, 0.18, 0.15, 0.12, 0.08, 0.05];

/// Totals below this are sent without layer data.
pub const DETECTION_FLOOR_TONS: f64 = 1.0;

/// Centre longitudes of the three fleets; buoys are spread round-robin.
const FLEET_LONGITUDES: [f64; 3] = [-25.0, 65.0, -140.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_buoys: usize,
    pub days_per_buoy: usize,
    pub presence_median_days: f64,
    pub presence_sigma: f64,
    pub absence_median_days: f64,
    pub absence_sigma: f64,
    pub peak_min_tons: f64,
    pub peak_max_tons: f64,
    pub rise_fraction: f64,
    pub noise_sd: f64,
    pub diel_amplitude: f64,
    /// Expected sets per 100 days.
    pub event_rate: f64,
    pub seed: u64,
    pub start: DateTime<Utc>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_buoys: 50,
            days_per_buoy: 365,
            presence_median_days: 6.0,
            presence_sigma: 0.5,
            absence_median_days: 10.0,
            absence_sigma: 0.5,
            peak_min_tons: 15.0,
            peak_max_tons: 40.0,
            rise_fraction: 0.4,
            noise_sd: 1.0,
            diel_amplitude: 2.0,
            event_rate: 1.0,
            seed: 42,
            start: DateTime::from_timestamp(1_577_836_800, 0).expect("valid epoch"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("synth config: {msg}")));
        if self.days_per_buoy == 0 {
            return bad("days_per_buoy must be positive");
        }
        if !(self.presence_median_days > 0.0 && self.absence_median_days > 0.0) {
            return bad("duration medians must be positive");
        }
        if !(self.presence_sigma >= 0.0 && self.absence_sigma >= 0.0) {
            return bad("duration sigmas must be non-negative");
        }
        if !(self.peak_min_tons > PRESENCE_TONS
            && self.peak_min_tons <= self.peak_max_tons
            && self.peak_max_tons <= MAX_LAYER_TONS)
        {
            return bad("peak range must satisfy 10 < min <= max <= 63");
        }
        if !(self.rise_fraction > 0.0 && self.rise_fraction < 1.0) {
            return bad("rise_fraction must lie in (0, 1)");
        }
        if !(self.noise_sd >= 0.0 && self.diel_amplitude >= 0.0 && self.event_rate >= 0.0) {
            return bad("noise_sd, diel_amplitude and event_rate must be non-negative");
        }
        Ok(())
    }

    pub fn buoy_id(&self, index: usize) -> String {
        format!("B{index:04}")
    }
}

/// One presence period as generated.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthEpisode {
    pub buoy_id: String,
    pub episode_idx: usize,
    pub start: DateTime<Utc>,
    pub peak: DateTime<Utc>,
    /// First hour after the period.
    pub end: DateTime<Utc>,
    pub peak_tonnage: f64,
    /// Set ended the period before its natural end.
    pub truncated: bool,
}

impl TruthEpisode {
    pub fn true_at_days(&self) -> f64 {
        (self.peak - self.start).num_seconds() as f64 / 86_400.0
    }

    pub fn true_dt_days(&self) -> f64 {
        (self.end - self.peak).num_seconds() as f64 / 86_400.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthBuoy {
    pub records: Vec<BuoyRecord>,
    pub events: Vec<LogbookEvent>,
    pub truth: Vec<TruthEpisode>,
}

/// Noise-free presence shape at hour `h` of a period of `len` hours.
pub fn presence_profile(h: usize, len: usize, rise_hours: usize, peak: f64) -> f64 {
    let ramp = if h <= rise_hours {
        (h + 1) as f64 / (rise_hours + 1) as f64
    } else {
        (len - h) as f64 / (len - rise_hours) as f64
    };
    PRESENCE_TONS + (peak - PRESENCE_TONS) * ramp
}

fn split_layers(total: f64) -> Option<Layers> {
    if total < DETECTION_FLOOR_TONS {
        return None;
    }
    // Layer values are kept to the gram-per-ton precision of the CSV files.
    Some(LAYER_WEIGHTS.map(|w| (total * w * 1000.0).round() / 1000.0))
}

fn hours(days: f64) -> usize {
    ((days * 24.0).round() as usize).max(1)
}

fn round_coord(v: f64) -> f64 {
    (v * 1e5).round() / 1e5
}

pub fn generate_buoy(config: &SynthConfig, index: usize) -> SynthBuoy {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let buoy_id = config.buoy_id(index);
    let n_hours = config.days_per_buoy * 24;

    let presence = LogNormal::new(config.presence_median_days.ln(), config.presence_sigma).expect("validated");
    let absence = LogNormal::new(config.absence_median_days.ln(), config.absence_sigma).expect("validated");
    let noise = Normal::new(0.0, config.noise_sd).expect("validated");

    // Set hours, drawn first so that the stream layout is fixed.
    let mut sets = Vec::new();
    if config.event_rate > 0.0 {
        let gap = Exp::new(config.event_rate / (100.0 * 24.0)).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            let h = t.ceil() as usize;
            if h >= n_hours {
                break;
            }
            if h > 0 && sets.last() != Some(&h) {
                sets.push(h);
            }
        }
    }

    // Noise-free signal and ground truth.
    let mut signal = vec![0.0; n_hours];
    let mut present = vec![false; n_hours];
    let mut truth = Vec::new();
    let mut pending = sets.iter().copied().peekable();
    let mut h = 0;
    loop {
        // Absence; a set restarts it.
        let mut end = h + hours(absence.sample(&mut rng));
        while let Some(s) = pending.next_if(|&s| s <= end) {
            end = end.max(s + hours(absence.sample(&mut rng)));
        }
        h = end;
        if h >= n_hours {
            break;
        }
        let len = hours(presence.sample(&mut rng)).max(2);
        let peak = rng.random_range(config.peak_min_tons..=config.peak_max_tons);
        let rise = ((config.rise_fraction * len as f64).round() as usize).min(len - 1);
        let cut = pending.next_if(|&s| s < h + len);
        let stop = cut.unwrap_or(h + len).min(n_hours);
        let mut best = (h, f64::NEG_INFINITY);
        for (k, slot) in (h..stop).enumerate() {
            let v = presence_profile(k, len, rise, peak);
            signal[slot] = v;
            present[slot] = true;
            if v > best.1 {
                best = (slot, v);
            }
        }
        truth.push(TruthEpisode {
            buoy_id: buoy_id.clone(),
            episode_idx: truth.len(),
            start: config.start + Duration::hours(h as i64),
            peak: config.start + Duration::hours(best.0 as i64),
            end: config.start + Duration::hours(stop as i64),
            peak_tonnage: best.1,
            truncated: stop < h + len,
        });
        // After a set, the next absence period starts at the set hour.
        h = stop;
    }

    // Slow drift inside the tropical band of one basin.
    let lon0 = FLEET_LONGITUDES[index % FLEET_LONGITUDES.len()] + rng.random_range(-10.0..10.0);
    let lat0: f64 = rng.random_range(-10.0..10.0);
    let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    // Degrees per hour, well under the 3-knot filter.
    let speed = rng.random_range(0.0005..0.003);
    let (dlat, dlon) = (speed * heading.sin() * 0.5, speed * heading.cos());

    let mut records = Vec::with_capacity(n_hours);
    for (k, (&base, &on)) in signal.iter().zip(&present).enumerate() {
        let timestamp = config.start + Duration::hours(k as i64);
        let diel = if on {
            config.diel_amplitude * (std::f64::consts::TAU * (k % 24) as f64 / 24.0).sin()
        } else {
            0.0
        };
        let jitter = if config.noise_sd > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        let total = (base + diel + jitter).clamp(0.0, MAX_LAYER_TONS);
        let lat = round_coord(lat0 + dlat * k as f64);
        let lon = round_coord(lon0 + dlon * k as f64);
        records.push(BuoyRecord {
            buoy_id: buoy_id.clone(),
            timestamp,
            lat,
            lon,
            layers: split_layers(total),
            imputed: false,
        });
    }

    let event_at = |hour: usize, kind| {
        let r = &records[hour];
        LogbookEvent {
            buoy_id: buoy_id.clone(),
            timestamp: r.timestamp,
            lat: r.lat,
            lon: r.lon,
            kind,
        }
    };
    let mut events = vec![event_at(0, EventKind::Deployment)];
    events.extend(sets.iter().map(|&s| event_at(s, EventKind::Set)));

    SynthBuoy { records, events, truth }
}

/// Whole fleet in memory, buoys in index order.
pub fn generate_dataset(config: &SynthConfig) -> Result<SynthBuoy> {
    config.validate()?;
    let mut all = SynthBuoy::default();
    for i in 0..config.n_buoys {
        let b = generate_buoy(config, i);
        all.records.extend(b.records);
        all.events.extend(b.events);
        all.truth.extend(b.truth);
    }
    Ok(all)
}

pub const BUOYS_FILE: &str = "buoys.csv";
pub const LOGBOOK_FILE: &str = "logbook.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const BATHYMETRY_FILE: &str = "bathymetry.txt";

/// Deep open ocean everywhere, so the depth filter keeps every fix.
pub fn open_ocean_bathymetry() -> BathymetryGrid {
    BathymetryGrid::uniform(-90.0, -180.0, 1.0, 1.0, 181, 361, 4000.0).expect("valid grid")
}

fn truth_row(t: &TruthEpisode) -> [String; 7] {
    [
        t.buoy_id.clone(),
        t.episode_idx.to_string(),
        format_timestamp(&t.start),
        t.peak.date_naive().to_string(),
        format_timestamp(&t.end),
        fmt_f64(t.true_at_days()),
        fmt_f64(t.true_dt_days()),
    ]
}

/// Writes buoy, logbook, ground-truth and bathymetry files into `dir`,
/// one buoy at a time.
pub fn write_dataset(config: &SynthConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::output(dir, e))?;
    let mut buoys = CsvOut::create(&dir.join(BUOYS_FILE), &BUOY_HEADER)?;
    let mut logbook = CsvOut::create(&dir.join(LOGBOOK_FILE), &LOGBOOK_HEADER)?;
    let mut truth = CsvOut::create(&dir.join(TRUTH_FILE), &TRUTH_HEADER)?;
    for i in 0..config.n_buoys {
        let b = generate_buoy(config, i);
        for r in &b.records {
            buoys.row(crate::io::buoy_fields(r))?;
        }
        for e in &b.events {
            logbook.row(crate::io::logbook_fields(e))?;
        }
        for t in &b.truth {
            truth.row(truth_row(t))?;
        }
    }
    buoys.finish()?;
    logbook.finish()?;
    truth.finish()?;
    write_text(&dir.join(BATHYMETRY_FILE), &open_ocean_bathymetry().to_text())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SynthConfig {
        SynthConfig {
            n_buoys: 3,
            days_per_buoy: 120,
            noise_sd: 0.0,
            diel_amplitude: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn profile_peaks_at_rise_hour() {
        // Ten days peaking at 30 t with rise fraction 0.4.
        let len = 240;
        let rise = (0.4 * len as f64).round() as usize;
        let values: Vec<f64> = (0..len).map(|h| presence_profile(h, len, rise, 30.0)).collect();
        let (argmax, max) = values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        assert_eq!(argmax, 96);
        assert_eq!(max, 30.0);
        assert!(values.iter().all(|v| *v > PRESENCE_TONS));
    }

    #[test]
    fn noise_free_signal_matches_truth() {
        let cfg = quiet();
        for i in 0..cfg.n_buoys {
            let b = generate_buoy(&cfg, i);
            assert_eq!(b.records.len(), 120 * 24);
            for r in &b.records {
                let total = r.total_tonnage().unwrap_or(0.0);
                let inside = b.truth.iter().any(|t| t.start <= r.timestamp && r.timestamp < t.end);
                assert_eq!(total > PRESENCE_TONS, inside, "{} at {}", r.buoy_id, r.timestamp);
            }
            for t in &b.truth {
                assert!(t.start <= t.peak && t.peak < t.end);
            }
        }
    }

    #[test]
    fn no_sets_means_one_deployment() {
        let cfg = SynthConfig {
            event_rate: 0.0,
            ..quiet()
        };
        let d = generate_dataset(&cfg).unwrap();
        assert_eq!(d.events.len(), cfg.n_buoys);
        assert!(d
            .events
            .iter()
            .all(|e| e.kind == EventKind::Deployment && e.timestamp == cfg.start));
    }

    #[test]
    fn sets_zero_the_signal() {
        let cfg = SynthConfig {
            event_rate: 20.0,
            ..quiet()
        };
        let b = generate_buoy(&cfg, 1);
        let sets: Vec<_> = b.events.iter().filter(|e| e.kind == EventKind::Set).collect();
        assert!(!sets.is_empty());
        for s in sets {
            let r = b.records.iter().find(|r| r.timestamp == s.timestamp).unwrap();
            assert!(r.total_tonnage().unwrap_or(0.0) < PRESENCE_TONS);
        }
    }

    #[test]
    fn deterministic_and_order_free() {
        let cfg = SynthConfig::default();
        assert_eq!(generate_buoy(&cfg, 7), generate_buoy(&cfg, 7));
        let other = SynthConfig {
            n_buoys: 3,
            ..cfg.clone()
        };
        assert_eq!(
            generate_dataset(&other).unwrap().records[..24 * 365],
            generate_buoy(&cfg, 0).records[..]
        );
        assert_ne!(generate_buoy(&cfg, 1).records, generate_buoy(&cfg, 2).records);
    }

    #[test]
    fn files_are_reproducible() {
        let cfg = SynthConfig {
            n_buoys: 2,
            days_per_buoy: 20,
            ..SynthConfig::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_dataset(&cfg, a.path()).unwrap();
        write_dataset(&cfg, b.path()).unwrap();
        for f in [BUOYS_FILE, LOGBOOK_FILE, TRUTH_FILE, BATHYMETRY_FILE] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let parsed = crate::io::parse_buoy_csv(&a.path().join(BUOYS_FILE)).unwrap();
        assert!(parsed.rejects.is_empty());
        assert_eq!(parsed.rows, generate_dataset(&cfg).unwrap().records);
    }

    #[test]
    fn presence_median_converges() {
        let cfg = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = LogNormal::new(cfg.presence_median_days.ln(), cfg.presence_sigma).unwrap();
        let mut v: Vec<f64> = (0..2000).map(|_| d.sample(&mut rng)).collect();
        v.sort_by(f64::total_cmp);
        let median = (v[999] + v[1000]) / 2.0;
        assert!((median / cfg.presence_median_days - 1.0).abs() < 0.1);
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SynthConfig {
                rise_fraction: 1.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                peak_min_tons: 8.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                presence_median_days: 0.0,
                ..SynthConfig::default()
            },
            SynthConfig {
                days_per_buoy: 0,
                ..SynthConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
