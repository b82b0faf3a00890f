/// Removes isolated daily values in one left-to-right pass.
///
/// Day `t` is flipped to the (already smoothed) value of day `t-1` when it
/// differs from it and the raw value of day `t+1` agrees with day `t-1`.
/// The first and last days are never changed. Series shorter than three
/// days are returned unchanged.
pub fn smooth_binary(series: &[bool]) -> Vec<bool> {
    let mut out = series.to_vec();
    if out.len() < 3 {
        return out;
    }
    for t in 1..out.len() - 1 {
        if out[t] != out[t - 1] && series[t + 1] == out[t - 1] {
            out[t] = out[t - 1];
        }
    }
    out
}

/// Number of maximal runs of equal values.
pub fn count_runs(series: &[bool]) -> usize {
    if series.is_empty() {
        return 0;
    }
    1 + series.windows(2).filter(|w| w[0] != w[1]).count()
}
