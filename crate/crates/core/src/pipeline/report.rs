//! Report artifacts built from the long-format metric samples: summary
//! tables, the test battery, box-plot and violin data.

use std::collections::BTreeMap;
use std::path::Path;

use crate::io::{fmt_f64, CsvOut};
use crate::metrics::{basin_str, Metric, MetricSample};
use crate::model::OceanBasin;
use crate::stats::{dunn_posthoc, kruskal_wallis, mann_whitney, quantile, summarize, Adjustment, Summary, TestResult};
use crate::Result;

pub const SUMMARY_BINARY_HEADER: [&str; 7] = ["metric", "basin", "count", "mean", "sd", "median", "iqr"];
pub const SUMMARY_EPISODES_HEADER: [&str; 11] = [
    "basin",
    "at_count",
    "at_mean",
    "at_sd",
    "at_median",
    "at_iqr",
    "dt_count",
    "dt_mean",
    "dt_sd",
    "dt_median",
    "dt_iqr",
];
pub const NEVER_COLONIZED_HEADER: [&str; 4] = ["basin", "deployments", "never_colonized", "rate"];
pub const TESTS_HEADER: [&str; 10] = [
    "test",
    "metric",
    "scope",
    "groups",
    "statistic",
    "p_raw",
    "p_value",
    "p_asymptotic",
    "adjustment",
    "exact",
];
pub const BOXPLOT_HEADER: [&str; 9] = [
    "metric",
    "basin",
    "count",
    "q1",
    "median",
    "q3",
    "whisker_low",
    "whisker_high",
    "n_outliers",
];
pub const OUTLIERS_HEADER: [&str; 4] = ["metric", "basin", "segment_id", "value"];
pub const VIOLIN_HEADER: [&str; 5] = ["metric", "basin", "kind", "x", "density"];

pub const VIOLIN_POINTS: usize = 128;
pub const IQR_FACTOR: f64 = 1.5;

/// Samples with a basin, grouped by (metric, basin) in enum order.
pub fn cells(samples: &[MetricSample]) -> BTreeMap<(Metric, OceanBasin), Vec<&MetricSample>> {
    let mut out: BTreeMap<(Metric, OceanBasin), Vec<&MetricSample>> = BTreeMap::new();
    for s in samples {
        if let Some(b) = s.basin {
            out.entry((s.metric, b)).or_default().push(s);
        }
    }
    out
}

fn values(cell: &[&MetricSample]) -> Vec<f64> {
    cell.iter().map(|s| s.value).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: Metric,
    pub basin: OceanBasin,
    pub summary: Summary,
}

/// One row per non-empty (metric, basin) cell.
pub fn summary_rows(samples: &[MetricSample]) -> Vec<SummaryRow> {
    cells(samples)
        .into_iter()
        .map(|((metric, basin), cell)| SummaryRow {
            metric,
            basin,
            summary: summarize(&values(&cell)).expect("cells are non-empty and finite"),
        })
        .collect()
}

fn rounded(v: f64, decimals: usize) -> String {
    // Avoid "-0" for tiny negative rounding.
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Binary-metric table: integers, with OR in percent.
pub fn write_summary_binary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &SUMMARY_BINARY_HEADER)?;
    for r in rows.iter().filter(|r| Metric::BINARY.contains(&r.metric)) {
        let scale = if r.metric == Metric::Or { 100.0 } else { 1.0 };
        let s = &r.summary;
        out.row([
            r.metric.as_str().to_string(),
            r.basin.as_str().to_string(),
            s.count.to_string(),
            rounded(s.mean * scale, 0),
            s.sd.map(|v| rounded(v * scale, 0)).unwrap_or_default(),
            rounded(s.median * scale, 0),
            rounded(s.iqr * scale, 0),
        ])?;
    }
    out.finish()
}

/// AT and DT side by side per basin, one decimal.
pub fn write_summary_episodes(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &SUMMARY_EPISODES_HEADER)?;
    for basin in OceanBasin::ALL {
        let find = |m: Metric| {
            rows.iter()
                .find(|r| r.metric == m && r.basin == basin)
                .map(|r| r.summary)
        };
        let (at, dt) = (find(Metric::At), find(Metric::Dt));
        if at.is_none() && dt.is_none() {
            continue;
        }
        let mut fields = vec![basin.as_str().to_string()];
        for s in [at, dt] {
            match s {
                Some(s) => fields.extend([
                    s.count.to_string(),
                    rounded(s.mean, 1),
                    s.sd.map(|v| rounded(v, 1)).unwrap_or_default(),
                    rounded(s.median, 1),
                    rounded(s.iqr, 1),
                ]),
                None => fields.extend([
                    "0".to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]),
            }
        }
        out.row(fields)?;
    }
    out.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeverColonized {
    pub basin: OceanBasin,
    pub deployments: usize,
    pub never: usize,
}

/// Every deployment-started segment yields one ST sample, and one CT
/// sample once colonized, so the counts give the never-colonized share.
pub fn never_colonized(samples: &[MetricSample]) -> Vec<NeverColonized> {
    let count = |m: Metric, b: OceanBasin| samples.iter().filter(|s| s.metric == m && s.basin == Some(b)).count();
    OceanBasin::ALL
        .into_iter()
        .filter_map(|basin| {
            let deployments = count(Metric::St, basin);
            (deployments > 0).then(|| NeverColonized {
                basin,
                deployments,
                never: deployments - count(Metric::Ct, basin),
            })
        })
        .collect()
}

pub fn write_never_colonized(path: &Path, rows: &[NeverColonized]) -> Result<()> {
    let mut out = CsvOut::create(path, &NEVER_COLONIZED_HEADER)?;
    for r in rows {
        out.row([
            r.basin.as_str().to_string(),
            r.deployments.to_string(),
            r.never.to_string(),
            fmt_f64(r.never as f64 / r.deployments as f64),
        ])?;
    }
    out.finish()
}

/// A row of the test report.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRow {
    /// Metric or metric pair, e.g. `aCRT~aCAT`.
    pub metric: String,
    /// `all` or a basin name.
    pub scope: String,
    pub result: TestResult,
}

const PAIRS: [(Metric, Metric); 2] = [(Metric::Acrt, Metric::Acat), (Metric::At, Metric::Dt)];

/// Kruskal-Wallis and Dunn across basins for every metric, then
/// Mann-Whitney on aCRT vs aCAT and AT vs DT, pooled and per basin.
/// Comparisons without enough data are skipped.
pub fn test_battery(samples: &[MetricSample], adjustment: Adjustment) -> Vec<TestRow> {
    let cells = cells(samples);
    let mut rows = Vec::new();
    for metric in Metric::ALL {
        let groups: Vec<(&str, Vec<f64>)> = OceanBasin::ALL
            .into_iter()
            .filter_map(|b| cells.get(&(metric, b)).map(|c| (b.as_str(), values(c))))
            .collect();
        if groups.len() < 2 {
            continue;
        }
        let refs: Vec<(&str, &[f64])> = groups.iter().map(|(n, v)| (*n, v.as_slice())).collect();
        let Ok(kw) = kruskal_wallis(&refs) else {
            continue;
        };
        rows.push(TestRow {
            metric: metric.as_str().to_string(),
            scope: "all".into(),
            result: kw,
        });
        if let Ok(dunn) = dunn_posthoc(&refs, adjustment) {
            rows.extend(dunn.into_iter().map(|result| TestRow {
                metric: metric.as_str().to_string(),
                scope: "all".into(),
                result,
            }));
        }
    }
    let scopes: Vec<Option<OceanBasin>> = std::iter::once(None).chain(OceanBasin::ALL.map(Some)).collect();
    for (a, b) in PAIRS {
        for scope in &scopes {
            let pick = |m: Metric| -> Vec<f64> {
                samples
                    .iter()
                    .filter(|s| s.metric == m && s.basin.is_some() && (scope.is_none() || s.basin == *scope))
                    .map(|s| s.value)
                    .collect()
            };
            let Ok(mut result) = mann_whitney(&pick(a), &pick(b)) else {
                continue;
            };
            result.groups = vec![a.as_str().to_string(), b.as_str().to_string()];
            rows.push(TestRow {
                metric: format!("{}~{}", a.as_str(), b.as_str()),
                scope: scope.map_or("all", OceanBasin::as_str).to_string(),
                result,
            });
        }
    }
    rows
}

pub fn write_tests(path: &Path, rows: &[TestRow]) -> Result<()> {
    let mut out = CsvOut::create(path, &TESTS_HEADER)?;
    for r in rows {
        let t = &r.result;
        out.row([
            t.test.as_str().to_string(),
            r.metric.clone(),
            r.scope.clone(),
            t.groups.join("|"),
            fmt_f64(t.statistic),
            fmt_f64(t.p_raw),
            fmt_f64(t.p_value),
            fmt_f64(t.p_asymptotic),
            t.adjustment.as_str().to_string(),
            t.exact.to_string(),
        ])?;
    }
    out.finish()
}

/// Five-number box with whiskers at the most extreme points inside the
/// 1.5·IQR fences.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub count: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Indices into the input of values beyond the fences.
    pub outliers: Vec<usize>,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let lo = q1 - IQR_FACTOR * (q3 - q1);
    let hi = q3 + IQR_FACTOR * (q3 - q1);
    let inside = || sorted.iter().copied().filter(move |v| (lo..=hi).contains(v));
    Some(BoxStats {
        count: values.len(),
        q1,
        median,
        q3,
        whisker_low: inside().next().expect("the median lies inside"),
        whisker_high: inside().next_back().expect("the median lies inside"),
        outliers: (0..values.len()).filter(|&i| !(lo..=hi).contains(&values[i])).collect(),
    })
}

/// Gaussian kernel density on an even grid, plus the quartiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Violin {
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    /// (label, position, density there) for q1, median, q3.
    pub quartiles: Vec<(&'static str, f64, f64)>,
}

/// Silverman's rule: 0.9 · min(sd, IQR/1.34) · n^(-1/5), falling back to
/// the sd when the IQR is zero.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let s = summarize(values).ok()?;
    let sd = s.sd?;
    let spread = match s.iqr / 1.34 {
        r if r > 0.0 => sd.min(r),
        _ => sd,
    };
    (spread > 0.0).then(|| 0.9 * spread * (values.len() as f64).powf(-0.2))
}

fn kde(values: &[f64], bw: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    norm * values
        .iter()
        .map(|v| (-0.5 * ((x - v) / bw).powi(2)).exp())
        .sum::<f64>()
}

/// `None` for fewer than two distinct values.
pub fn violin(values: &[f64]) -> Option<Violin> {
    let bw = silverman_bandwidth(values)?;
    let s = summarize(values).ok()?;
    let (lo, hi) = (s.min - 3.0 * bw, s.max + 3.0 * bw);
    let step = (hi - lo) / (VIOLIN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..VIOLIN_POINTS).map(|i| lo + step * i as f64).collect();
    let density = grid.iter().map(|&x| kde(values, bw, x)).collect();
    let quartiles = [("q1", s.q1), ("median", s.median), ("q3", s.q3)]
        .into_iter()
        .map(|(k, x)| (k, x, kde(values, bw, x)))
        .collect();
    Some(Violin {
        bandwidth: bw,
        grid,
        density,
        quartiles,
    })
}

/// Writes box-plot, outlier and violin files; returns their row counts.
pub fn write_plot_data(
    samples: &[MetricSample],
    boxplot: &Path,
    outliers: &Path,
    violins: &Path,
) -> Result<[usize; 3]> {
    let mut box_out = CsvOut::create(boxplot, &BOXPLOT_HEADER)?;
    let mut out_out = CsvOut::create(outliers, &OUTLIERS_HEADER)?;
    let mut vio_out = CsvOut::create(violins, &VIOLIN_HEADER)?;
    let mut counts = [0; 3];
    for ((metric, basin), cell) in cells(samples) {
        let v = values(&cell);
        let (m, b) = (metric.as_str(), basin_str(Some(basin)));
        let bx = box_stats(&v).expect("cells are non-empty");
        box_out.row([
            m.to_string(),
            b.to_string(),
            bx.count.to_string(),
            fmt_f64(bx.q1),
            fmt_f64(bx.median),
            fmt_f64(bx.q3),
            fmt_f64(bx.whisker_low),
            fmt_f64(bx.whisker_high),
            bx.outliers.len().to_string(),
        ])?;
        counts[0] += 1;
        for &i in &bx.outliers {
            out_out.row([m.to_string(), b.to_string(), cell[i].segment_id.clone(), fmt_f64(v[i])])?;
            counts[1] += 1;
        }
        if let Some(vl) = violin(&v) {
            for (x, d) in vl.grid.iter().zip(&vl.density) {
                vio_out.row([m, b, "density", &fmt_f64(*x), &fmt_f64(*d)])?;
            }
            for (k, x, d) in &vl.quartiles {
                vio_out.row([m, b, k, &fmt_f64(*x), &fmt_f64(*d)])?;
            }
            counts[2] += vl.grid.len() + vl.quartiles.len();
        }
    }
    box_out.finish()?;
    out_out.finish()?;
    vio_out.finish()?;
    Ok(counts)
}
