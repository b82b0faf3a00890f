use std::fmt;

use serde::{Deserialize, Serialize};

use super::dist::{chi_square_sf, normal_sf};
use crate::{Error, Result};

/// Largest pooled sample size for the exact Kruskal-Wallis permutation p.
pub const KW_EXACT_MAX_N: usize = 8;
/// Largest `n_x · n_y` for the exact Mann-Whitney p (tie-free samples).
pub const MW_EXACT_MAX_PRODUCT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    KruskalWallis,
    Dunn,
    MannWhitney,
}

impl TestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TestKind::KruskalWallis => "kruskal_wallis",
            TestKind::Dunn => "dunn",
            TestKind::MannWhitney => "mann_whitney",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjustment {
    None,
    #[default]
    Holm,
    Bonferroni,
}

impl Adjustment {
    pub fn as_str(self) -> &'static str {
        match self {
            Adjustment::None => "none",
            Adjustment::Holm => "holm",
            Adjustment::Bonferroni => "bonferroni",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub test: TestKind,
    pub statistic: f64,
    /// Unadjusted p-value; exact when `exact` is set.
    pub p_raw: f64,
    /// p-value after the multiple-comparison adjustment (equal to `p_raw`
    /// for single tests).
    pub p_value: f64,
    /// Large-sample p-value, kept alongside exact ones for comparison.
    pub p_asymptotic: f64,
    pub groups: Vec<String>,
    pub adjustment: Adjustment,
    pub exact: bool,
}

/// Mid-ranks (1-based) of the pooled data and the tie-group sizes.
pub fn mid_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        ties.push(j - i);
        i = j;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum()
}

fn check_groups(groups: &[(&str, &[f64])]) -> Result<()> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("at least two groups are required".into()));
    }
    if let Some((label, _)) = groups.iter().find(|(_, g)| g.is_empty()) {
        return Err(Error::InvalidArgument(format!("group {label:?} is empty")));
    }
    if groups.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("non-finite value in a group".into()));
    }
    Ok(())
}

fn pooled(groups: &[(&str, &[f64])]) -> (Vec<f64>, Vec<usize>) {
    let values: Vec<f64> = groups.iter().flat_map(|(_, g)| g.iter().copied()).collect();
    let sizes = groups.iter().map(|(_, g)| g.len()).collect();
    (values, sizes)
}

fn labels(groups: &[(&str, &[f64])]) -> Vec<String> {
    groups.iter().map(|(l, _)| l.to_string()).collect()
}

/// H from per-group rank sums.
fn h_statistic(rank_sums: &[f64], sizes: &[usize], n: f64, tie_divisor: f64) -> f64 {
    let s: f64 = rank_sums.iter().zip(sizes).map(|(r, &m)| r * r / m as f64).sum();
    ((12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0)) / tie_divisor).max(0.0)
}

/// Share of all assignments of the pooled ranks to groups of the observed
/// sizes whose H is at least `h_obs`.
fn kw_permutation_p(ranks: &[f64], sizes: &[usize], n: f64, tie_divisor: f64, h_obs: f64) -> f64 {
    fn walk(pos: usize, ranks: &[f64], left: &mut [usize], sums: &mut [f64], eval: &mut dyn FnMut(&[f64])) {
        if pos == ranks.len() {
            eval(sums);
            return;
        }
        for g in 0..left.len() {
            if left[g] > 0 {
                left[g] -= 1;
                sums[g] += ranks[pos];
                walk(pos + 1, ranks, left, sums, eval);
                sums[g] -= ranks[pos];
                left[g] += 1;
            }
        }
    }
    let tol = 1e-12 * h_obs.max(1.0);
    let (mut hits, mut total) = (0u64, 0u64);
    let mut left = sizes.to_vec();
    let mut sums = vec![0.0; sizes.len()];
    walk(0, ranks, &mut left, &mut sums, &mut |s| {
        total += 1;
        if h_statistic(s, sizes, n, tie_divisor) >= h_obs - tol {
            hits += 1;
        }
    });
    hits as f64 / total as f64
}

/// Kruskal-Wallis H test with mid-ranks and the tie-correction divisor.
/// For at most [`KW_EXACT_MAX_N`] pooled values `p_value` is the exact
/// permutation p; otherwise the chi-square upper tail with k − 1 degrees
/// of freedom.
pub fn kruskal_wallis(groups: &[(&str, &[f64])]) -> Result<TestResult> {
    check_groups(groups)?;
    let (values, sizes) = pooled(groups);
    let constant = values.iter().all(|v| *v == values[0]);
    let mut result = TestResult {
        test: TestKind::KruskalWallis,
        statistic: 0.0,
        p_raw: 1.0,
        p_value: 1.0,
        p_asymptotic: 1.0,
        groups: labels(groups),
        adjustment: Adjustment::None,
        exact: false,
    };
    if constant {
        return Ok(result);
    }
    if values.len() < 3 {
        return Err(Error::InvalidArgument("Kruskal-Wallis needs at least 3 values".into()));
    }
    let (ranks, ties) = mid_ranks(&values);
    let n = values.len() as f64;
    let tie_divisor = 1.0 - tie_sum(&ties) / (n.powi(3) - n);
    let mut sums = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &m in &sizes {
        sums.push(ranks[offset..offset + m].iter().sum::<f64>());
        offset += m;
    }
    let h = h_statistic(&sums, &sizes, n, tie_divisor);
    result.statistic = h;
    result.p_asymptotic = chi_square_sf(h, (sizes.len() - 1) as f64);
    if values.len() <= KW_EXACT_MAX_N {
        result.p_raw = kw_permutation_p(&ranks, &sizes, n, tie_divisor, h);
        result.exact = true;
    } else {
        result.p_raw = result.p_asymptotic;
    }
    result.p_value = result.p_raw;
    Ok(result)
}

/// Adjusts a family of p-values, returned in input order.
pub fn adjust_p_values(p: &[f64], method: Adjustment) -> Vec<f64> {
    let m = p.len() as f64;
    match method {
        Adjustment::None => p.to_vec(),
        Adjustment::Bonferroni => p.iter().map(|v| (v * m).min(1.0)).collect(),
        Adjustment::Holm => {
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
            let mut out = vec![0.0; p.len()];
            let mut running: f64 = 0.0;
            for (k, &i) in order.iter().enumerate() {
                running = running.max(((m - k as f64) * p[i]).min(1.0));
                out[i] = running;
            }
            out
        }
    }
}

/// Dunn's pairwise comparisons on the pooled ranks, one result per pair
/// `(i, j)` with `i < j`. The statistic is `z = (R̄_i − R̄_j) / se`.
pub fn dunn_posthoc(groups: &[(&str, &[f64])], adjustment: Adjustment) -> Result<Vec<TestResult>> {
    check_groups(groups)?;
    let (values, sizes) = pooled(groups);
    let (ranks, ties) = mid_ranks(&values);
    let n = values.len() as f64;
    let variance = if n > 1.0 {
        n * (n + 1.0) / 12.0 - tie_sum(&ties) / (12.0 * (n - 1.0))
    } else {
        0.0
    };
    let mut means = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &m in &sizes {
        means.push(ranks[offset..offset + m].iter().sum::<f64>() / m as f64);
        offset += m;
    }
    let mut out = Vec::new();
    for i in 0..sizes.len() {
        for j in i + 1..sizes.len() {
            let se = (variance * (1.0 / sizes[i] as f64 + 1.0 / sizes[j] as f64)).sqrt();
            let diff = means[i] - means[j];
            let z = if se > 0.0 { diff / se } else { 0.0 };
            let p = (2.0 * normal_sf(z.abs())).min(1.0);
            out.push(TestResult {
                test: TestKind::Dunn,
                statistic: z,
                p_raw: p,
                p_value: p,
                p_asymptotic: p,
                groups: vec![groups[i].0.to_string(), groups[j].0.to_string()],
                adjustment,
                exact: false,
            });
        }
    }
    let raw: Vec<f64> = out.iter().map(|r| r.p_raw).collect();
    for (r, p) in out.iter_mut().zip(adjust_p_values(&raw, adjustment)) {
        r.p_value = p;
    }
    Ok(out)
}

/// Exact two-sided p of the Mann-Whitney U for tie-free samples of sizes
/// `nx`, `ny`: twice the lower tail at `min(U_x, U_y)`, capped at 1. The
/// null distribution is counted with the usual recurrence on (m, n).
pub fn mann_whitney_exact_p(u_min: f64, nx: usize, ny: usize) -> f64 {
    // counts[m][n][u]: subsets of size m among m + n ranks with U = u.
    let mut prev: Vec<Vec<f64>> = (0..=ny).map(|_| vec![1.0]).collect();
    for m in 1..=nx {
        let mut cur: Vec<Vec<f64>> = Vec::with_capacity(ny + 1);
        cur.push(vec![1.0]);
        for n in 1..=ny {
            let mut c = vec![0.0; m * n + 1];
            // Largest rank in the first group: U shifts by n.
            for (u, v) in prev[n].iter().enumerate() {
                c[u + n] += v;
            }
            for (u, v) in cur[n - 1].iter().enumerate() {
                c[u] += v;
            }
            cur.push(c);
        }
        prev = cur;
    }
    let dist = &prev[ny];
    let total: f64 = dist.iter().sum();
    let k = (u_min + 1e-9).floor() as usize;
    let tail: f64 = dist[..=k.min(dist.len() - 1)].iter().sum();
    (2.0 * tail / total).min(1.0)
}

/// Two-sided Mann-Whitney test; the statistic is `min(U_x, U_y)`.
pub fn mann_whitney(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InvalidArgument(
            "Mann-Whitney needs two non-empty samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in a sample".into()));
    }
    let values: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = mid_ranks(&values);
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let rx: f64 = ranks[..x.len()].iter().sum();
    let ux = rx - nx * (nx + 1.0) / 2.0;
    let uy = nx * ny - ux;
    let u = ux.min(uy);
    let n = nx + ny;
    let variance = nx * ny / 12.0 * ((n + 1.0) - tie_sum(&ties) / (n * (n - 1.0)));
    let p_normal = if variance > 0.0 {
        let z = ((ux - nx * ny / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
        (2.0 * normal_sf(z)).min(1.0)
    } else {
        1.0
    };
    let tie_free = ties.iter().all(|&t| t == 1);
    let exact = tie_free && x.len() * y.len() <= MW_EXACT_MAX_PRODUCT;
    let p = if exact {
        mann_whitney_exact_p(u, x.len(), y.len())
    } else {
        p_normal
    };
    Ok(TestResult {
        test: TestKind::MannWhitney,
        statistic: u,
        p_raw: p,
        p_value: p,
        p_asymptotic: p_normal,
        groups: vec!["x".into(), "y".into()],
        adjustment: Adjustment::None,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g<'a>(label: &'a str, v: &'a [f64]) -> (&'a str, &'a [f64]) {
        (label, v)
    }

    #[test]
    fn ranks_with_ties() {
        let (r, t) = mid_ranks(&[10.0, 20.0, 10.0, 30.0]);
        assert_eq!(r, vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(t, vec![2, 1, 1]);
    }

    #[test]
    fn kruskal_wallis_example() {
        let (a, b, c) = ([1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]);
        let r = kruskal_wallis(&[g("a", &a), g("b", &b), g("c", &c)]).unwrap();
        assert!((r.statistic - 7.2).abs() < 1e-12);
        assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-10);
        assert!(!r.exact);
    }

    #[test]
    fn kruskal_wallis_degenerate() {
        let r = kruskal_wallis(&[g("a", &[1.0]), g("b", &[1.0])]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert!(kruskal_wallis(&[g("a", &[1.0]), g("b", &[])]).is_err());
        assert!(kruskal_wallis(&[g("a", &[1.0])]).is_err());
        assert!(kruskal_wallis(&[g("a", &[1.0]), g("b", &[2.0])]).is_err());
    }

    #[test]
    fn kruskal_wallis_exact_small() {
        // {1,2},{3,4}: H = 2.4; of the 6 splits only the two extremes reach it.
        let r = kruskal_wallis(&[g("a", &[1.0, 2.0]), g("b", &[3.0, 4.0])]).unwrap();
        assert!((r.statistic - 2.4).abs() < 1e-12);
        assert!(r.exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
        assert!((r.p_asymptotic - chi_square_sf(2.4, 1.0)).abs() < 1e-12);
    }

    #[test]
    fn dunn_example() {
        let r = dunn_posthoc(&[g("a", &[1.0, 2.0, 3.0]), g("b", &[7.0, 8.0, 9.0])], Adjustment::None).unwrap();
        assert_eq!(r.len(), 1);
        let z = -3.0 / (7.0f64 / 3.0).sqrt();
        assert!((r[0].statistic - z).abs() < 1e-12);
        assert!((r[0].statistic + 1.964).abs() < 1e-3);
        assert!((r[0].p_raw - 0.0495).abs() < 1e-3);
        let swapped = dunn_posthoc(&[g("b", &[7.0, 8.0, 9.0]), g("a", &[1.0, 2.0, 3.0])], Adjustment::None).unwrap();
        assert_eq!(swapped[0].statistic, -r[0].statistic);
    }

    #[test]
    fn dunn_identical_groups() {
        let v = [1.0, 2.0, 3.0];
        for r in dunn_posthoc(&[g("a", &v), g("b", &v), g("c", &v)], Adjustment::Holm).unwrap() {
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn holm() {
        let adj = adjust_p_values(&[0.01, 0.04, 0.03], Adjustment::Holm);
        assert_eq!(adj, vec![0.03, 0.06, 0.06]);
        let adj = adjust_p_values(&[0.01, 0.5], Adjustment::Bonferroni);
        assert_eq!(adj, vec![0.02, 1.0]);
    }

    #[test]
    fn mann_whitney_examples() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.exact);
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
        let same = [1.0, 2.0, 2.0, 5.0];
        let r = mann_whitney(&same, &same).unwrap();
        assert!(!r.exact);
        assert_eq!(r.p_value, 1.0);
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    /// Share of all splits of ranks 1..=nx+ny at least as extreme as `u_min`.
    fn brute_mw_p(u_min: f64, nx: usize, ny: usize) -> f64 {
        let n = nx + ny;
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != nx {
                continue;
            }
            let rx: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| i + 1).sum();
            let ux = rx as f64 - (nx * (nx + 1)) as f64 / 2.0;
            let u = ux.min((nx * ny) as f64 - ux);
            total += 1;
            if u <= u_min {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn exact_mw_matches_enumeration() {
        for nx in 1..=6 {
            for ny in 1..=6 {
                for u in 0..=(nx * ny / 2) {
                    let a = mann_whitney_exact_p(u as f64, nx, ny);
                    let b = brute_mw_p(u as f64, nx, ny);
                    assert!((a - b).abs() < 1e-12, "nx={nx} ny={ny} u={u}: {a} vs {b}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mw_identities(x in prop::collection::vec(0u8..20, 1..12), y in prop::collection::vec(0u8..20, 1..12)) {
            let xf: Vec<f64> = x.iter().map(|v| *v as f64).collect();
            let yf: Vec<f64> = y.iter().map(|v| *v as f64).collect();
            let r = mann_whitney(&xf, &yf).unwrap();
            let s = mann_whitney(&yf, &xf).unwrap();
            prop_assert_eq!(r.statistic, s.statistic);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!(r.statistic <= (x.len() * y.len()) as f64 / 2.0);
        }

        #[test]
        fn exact_close_to_normal(seed in any::<u64>(), nx in 3usize..=7, ny in 3usize..=7) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut v: Vec<f64> = (0..nx + ny).map(|i| i as f64).collect();
            v.shuffle(&mut rng);
            let r = mann_whitney(&v[..nx], &v[nx..]).unwrap();
            prop_assert!(r.exact);
            prop_assert!((r.p_value - r.p_asymptotic).abs() <= 0.05);
            prop_assert!((r.p_value - brute_mw_p(r.statistic, nx, ny)).abs() < 1e-12);
        }

        #[test]
        fn holm_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..10)) {
            let adj = adjust_p_values(&p, Adjustment::Holm);
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
            for w in order.windows(2) {
                prop_assert!(adj[w[0]] <= adj[w[1]]);
            }
            for (a, r) in adj.iter().zip(&p) {
                prop_assert!(a >= r && *a <= 1.0);
            }
        }

        #[test]
        fn kw_bounds(a in prop::collection::vec(0u8..5, 1..6), b in prop::collection::vec(0u8..5, 1..6), c in prop::collection::vec(0u8..5, 1..6)) {
            let f = |v: &[u8]| v.iter().map(|x| *x as f64).collect::<Vec<_>>();
            let (a, b, c) = (f(&a), f(&b), f(&c));
            let r = kruskal_wallis(&[g("a", &a), g("b", &b), g("c", &c)]).unwrap();
            prop_assert!(r.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!((0.0..=1.0).contains(&r.p_asymptotic));
        }
    }
}
