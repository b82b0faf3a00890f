//! Record cleaning: duplicates and missing ids, shallow water or land, and
//! implausible drift velocities.
//!
//! Every filter returns a subsequence of its input and is idempotent.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hash::Hash;

use chrono::NaiveDate;

use crate::bathymetry::BathymetryGrid;
use crate::geo::{haversine_km, knots};
use crate::model::{BuoyRecord, LogbookEvent, N_LAYERS};

pub const DEFAULT_MIN_DEPTH_M: f64 = 200.0;
pub const DEFAULT_MAX_KNOTS: f64 = 3.0;

/// Rows that can be deduplicated: exact-duplicate detection needs a
/// hashable identity covering every field.
pub trait RowIdentity {
    type Key<'a>: Hash + Eq
    where
        Self: 'a;

    fn buoy_id(&self) -> &str;
    fn key(&self) -> Self::Key<'_>;
}

impl RowIdentity for BuoyRecord {
    type Key<'a> = (&'a str, i64, u64, u64, Option<[u64; N_LAYERS]>, bool);

    fn buoy_id(&self) -> &str {
        &self.buoy_id
    }

    fn key(&self) -> Self::Key<'_> {
        (
            &self.buoy_id,
            self.timestamp.timestamp(),
            self.lat.to_bits(),
            self.lon.to_bits(),
            self.layers.map(|l| l.map(f64::to_bits)),
            self.imputed,
        )
    }
}

impl RowIdentity for LogbookEvent {
    type Key<'a> = (&'a str, i64, u64, u64, crate::model::EventKind);

    fn buoy_id(&self) -> &str {
        &self.buoy_id
    }

    fn key(&self) -> Self::Key<'_> {
        (
            &self.buoy_id,
            self.timestamp.timestamp(),
            self.lat.to_bits(),
            self.lon.to_bits(),
            self.kind,
        )
    }
}

/// Drops exact-duplicate rows (keeping the first occurrence) and rows with
/// an empty buoy id.
pub fn dedupe_and_drop_missing<T: RowIdentity + Clone>(rows: &[T]) -> Vec<T> {
    let mut seen = HashSet::with_capacity(rows.len());
    rows.iter()
        .filter(|r| !r.buoy_id().trim().is_empty() && seen.insert(r.key()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DepthReport {
    pub removed: usize,
    /// Records outside the grid; kept.
    pub unknown: usize,
}

/// Removes records whose nearest grid cell is shallower than `min_depth_m`
/// (land cells included). Records outside the grid are kept and counted.
pub fn filter_depth(records: &[BuoyRecord], grid: &BathymetryGrid, min_depth_m: f64) -> (Vec<BuoyRecord>, DepthReport) {
    let mut report = DepthReport::default();
    let kept = records
        .iter()
        .filter(|r| match grid.depth_at(r.lat, r.lon) {
            None => {
                report.unknown += 1;
                true
            }
            Some(depth) if depth < min_depth_m => {
                report.removed += 1;
                false
            }
            Some(_) => true,
        })
        .cloned()
        .collect();
    (kept, report)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VelocityReport {
    pub removed_records: usize,
    pub removed_days: usize,
    /// Days with no leg touching them (velocity undefined); kept.
    pub undefined_days: usize,
}

/// Mean drift velocity (knots) per UTC calendar day.
///
/// Each leg between consecutive fixes counts towards every day its closed
/// time interval touches; a day's velocity is the total distance of those
/// legs over their total duration. Days touched by no leg are absent.
pub fn daily_velocities(records: &[&BuoyRecord]) -> BTreeMap<NaiveDate, f64> {
    let mut acc: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
    for pair in records.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let hours = (b.timestamp - a.timestamp).num_seconds() as f64 / 3600.0;
        if hours <= 0.0 {
            continue;
        }
        let dist = haversine_km(a.lat, a.lon, b.lat, b.lon);
        let mut day = a.timestamp.date_naive();
        let last = b.timestamp.date_naive();
        while day <= last {
            let e = acc.entry(day).or_insert((0.0, 0.0));
            e.0 += dist;
            e.1 += hours;
            day = day.succ_opt().expect("date in range");
        }
    }
    acc.into_iter()
        .map(|(day, (dist, hours))| (day, knots(dist, hours)))
        .collect()
}

/// Removes every record of each day whose mean velocity exceeds
/// `max_knots`, for the records of a single buoy sorted by time.
///
/// Removing a day creates new legs between the surviving neighbours, so the
/// check is repeated until no day exceeds the limit; the result is a fixed
/// point and the filter is idempotent.
pub fn filter_velocity(records: &[BuoyRecord], max_knots: f64) -> (Vec<BuoyRecord>, VelocityReport) {
    let keep = velocity_mask(&records.iter().collect::<Vec<_>>(), max_knots);
    let mut report = keep.1;
    report.removed_records = keep.0.iter().filter(|k| !**k).count();
    let kept = records
        .iter()
        .zip(&keep.0)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    (kept, report)
}

fn velocity_mask(records: &[&BuoyRecord], max_knots: f64) -> (Vec<bool>, VelocityReport) {
    let mut keep = vec![true; records.len()];
    let mut removed_days: HashSet<NaiveDate> = HashSet::new();
    loop {
        let alive: Vec<&BuoyRecord> = records
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(r, _)| *r)
            .collect();
        let velocities = daily_velocities(&alive);
        let days: HashSet<NaiveDate> = alive.iter().map(|r| r.timestamp.date_naive()).collect();
        // Days inside a transmission gap carry no fixes; nothing to remove.
        let bad: HashSet<NaiveDate> = velocities
            .iter()
            .filter(|(d, v)| **v > max_knots && days.contains(d))
            .map(|(d, _)| *d)
            .collect();
        if bad.is_empty() {
            let undefined_days = days.iter().filter(|d| !velocities.contains_key(d)).count();
            return (
                keep,
                VelocityReport {
                    removed_records: 0,
                    removed_days: removed_days.len(),
                    undefined_days,
                },
            );
        }
        for (r, k) in records.iter().zip(keep.iter_mut()) {
            if *k && bad.contains(&r.timestamp.date_naive()) {
                *k = false;
            }
        }
        removed_days.extend(bad);
    }
}

/// Applies [`filter_velocity`] to every buoy of a mixed record list. Records
/// of each buoy are ordered by time for the velocity computation; the
/// output keeps the input order.
pub fn filter_velocity_fleet(records: &[BuoyRecord], max_knots: f64) -> (Vec<BuoyRecord>, VelocityReport) {
    let mut by_buoy: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        by_buoy.entry(&r.buoy_id).or_default().push(i);
    }
    let mut keep = vec![true; records.len()];
    let mut report = VelocityReport::default();
    for idx in by_buoy.values_mut() {
        idx.sort_by_key(|&i| (records[i].timestamp, i));
        let buoy: Vec<&BuoyRecord> = idx.iter().map(|&i| &records[i]).collect();
        let (mask, r) = velocity_mask(&buoy, max_knots);
        for (&i, k) in idx.iter().zip(mask) {
            keep[i] = k;
        }
        report.removed_days += r.removed_days;
        report.undefined_days += r.undefined_days;
    }
    report.removed_records = keep.iter().filter(|k| !**k).count();
    let kept = records
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_timestamp, EventKind};
    use chrono::{DateTime, Duration, Utc};
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        parse_timestamp("2019-01-01T00:00:00Z").unwrap()
    }

    fn rec(id: &str, hours: i64, lat: f64, lon: f64) -> BuoyRecord {
        BuoyRecord::new(id, t0() + Duration::hours(hours), lat, lon, None).unwrap()
    }

    #[test]
    fn dedupe_examples() {
        let r = rec("B1", 0, 0.0, 0.0);
        let s = rec("B1", 1, 0.0, 0.0);
        assert_eq!(dedupe_and_drop_missing(&[r.clone(), r.clone(), s.clone()]), vec![r, s]);
        assert!(dedupe_and_drop_missing(&[rec("", 0, 0.0, 0.0)]).is_empty());
        assert!(dedupe_and_drop_missing::<BuoyRecord>(&[]).is_empty());
    }

    #[test]
    fn dedupe_events() {
        let e = LogbookEvent {
            buoy_id: "B1".into(),
            timestamp: t0(),
            lat: 0.0,
            lon: 0.0,
            kind: EventKind::Set,
        };
        let mut f = e.clone();
        f.kind = EventKind::Visit;
        assert_eq!(dedupe_and_drop_missing(&[e.clone(), f.clone(), e.clone()]), vec![e, f]);
    }

    #[test]
    fn depth_examples() {
        let grid = BathymetryGrid::parse("0 0 1 1 1 3\n4000 50 -10\n").unwrap();
        let deep = rec("B1", 0, 0.0, 0.0);
        let shallow = rec("B1", 1, 0.0, 1.0);
        let land = rec("B1", 2, 0.0, 2.0);
        let outside = rec("B1", 3, 10.0, 10.0);
        let (kept, report) = filter_depth(&[deep.clone(), shallow, land, outside.clone()], &grid, 200.0);
        assert_eq!(kept, vec![deep, outside]);
        assert_eq!(report, DepthReport { removed: 2, unknown: 1 });
    }

    #[test]
    fn velocity_examples() {
        let still: Vec<_> = (0..72).map(|h| rec("B1", h, 0.0, 0.0)).collect();
        let (kept, report) = filter_velocity(&still, 3.0);
        assert_eq!(kept.len(), 72);
        assert_eq!(report.removed_days, 0);

        let slow = [rec("B1", 0, 0.0, 0.0), rec("B1", 24, 0.0, 1.0)];
        let v = daily_velocities(&slow.iter().collect::<Vec<_>>());
        assert!(v.values().all(|k| (k - 2.5016).abs() < 1e-3), "{v:?}");
        assert_eq!(filter_velocity(&slow, 3.0).0.len(), 2);

        let fast = [rec("B1", 0, 0.0, 0.0), rec("B1", 24, 0.0, 2.0)];
        let (kept, report) = filter_velocity(&fast, 3.0);
        assert!(kept.is_empty());
        assert_eq!(report.removed_days, 2);
    }

    #[test]
    fn single_fix_is_kept() {
        let (kept, report) = filter_velocity(&[rec("B1", 5, 1.0, 1.0)], 3.0);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.undefined_days, 1);
    }

    #[test]
    fn fleet_filter_preserves_input_order() {
        let records = vec![
            rec("B2", 24, 0.0, 2.0),
            rec("B1", 0, 0.0, 0.0),
            rec("B2", 0, 0.0, 0.0),
            rec("B1", 24, 0.0, 0.1),
        ];
        let (kept, report) = filter_velocity_fleet(&records, 3.0);
        assert_eq!(kept, vec![records[1].clone(), records[3].clone()]);
        assert_eq!(report.removed_records, 2);
    }

    fn track() -> impl Strategy<Value = Vec<BuoyRecord>> {
        prop::collection::vec((1i64..30, -0.8f64..0.8, -0.8f64..0.8), 1..40).prop_map(|steps| {
            let (mut h, mut lat, mut lon) = (0i64, 0.0, 0.0);
            steps
                .into_iter()
                .map(|(dh, dlat, dlon)| {
                    h += dh;
                    lat += dlat;
                    lon += dlon;
                    rec("B1", h, lat, lon)
                })
                .collect()
        })
    }

    fn is_subsequence(sub: &[BuoyRecord], full: &[BuoyRecord]) -> bool {
        let mut it = full.iter();
        sub.iter().all(|s| it.any(|f| f == s))
    }

    proptest! {
        #[test]
        fn velocity_filter_is_idempotent_subsequence(records in track()) {
            let (once, _) = filter_velocity(&records, 3.0);
            prop_assert!(is_subsequence(&once, &records));
            let (twice, _) = filter_velocity(&once, 3.0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn velocity_filter_invariant_under_whole_day_shift(records in track(), days in -400i64..400) {
            let shifted: Vec<_> = records.iter().map(|r| {
                let mut r = r.clone();
                r.timestamp += Duration::days(days);
                r
            }).collect();
            let (a, _) = filter_velocity(&records, 3.0);
            let (b, _) = filter_velocity(&shifted, 3.0);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.timestamp + Duration::days(days), y.timestamp);
            }
        }

        #[test]
        fn depth_filter_is_idempotent(records in track()) {
            let grid = BathymetryGrid::parse("-2 -2 1 1 5 5\n100 4000 4000 -5 4000\n4000 300 150 4000 4000\n4000 4000 4000 4000 199\n0 4000 4000 4000 4000\n4000 4000 4000 4000 4000\n").unwrap();
            let (once, _) = filter_depth(&records, &grid, 200.0);
            prop_assert!(is_subsequence(&once, &records));
            let (twice, report) = filter_depth(&once, &grid, 200.0);
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(report.removed, 0);
        }

        #[test]
        fn dedupe_is_idempotent(picks in prop::collection::vec(0usize..4, 0..20)) {
            let pool = [rec("B1", 0, 0.0, 0.0), rec("B1", 1, 0.0, 0.0), rec("", 2, 0.0, 0.0), rec("B2", 0, 0.0, 0.0)];
            let rows: Vec<_> = picks.iter().map(|&i| pool[i].clone()).collect();
            let once = dedupe_and_drop_missing(&rows);
            prop_assert!(is_subsequence(&once, &rows));
            prop_assert_eq!(dedupe_and_drop_missing(&once), once);
        }
    }
}
