//! Ratio metrics over reward, duration and energy series.
//!
//! Task indices `k` are 1-based; `series[k - 1]` holds task `k`.

use crate::error::{Error, Result};

/// `sum_{j<=k} R[j] / sum_{j<=k} T[j]`.
pub fn cumulative_ratio(r: &[f64], t: &[f64], k: usize) -> Result<f64> {
    check_prefix(r, t, k)?;
    Ok(r[..k].iter().sum::<f64>() / t[..k].iter().sum::<f64>())
}

/// Ratio over the `w` tasks preceding `k0`: tasks `k0 - w ..= k0 - 1`.
pub fn window_ratio(r: &[f64], t: &[f64], k0: usize, w: usize) -> Result<f64> {
    if w == 0 || k0 <= w {
        return Err(Error::InvalidParams(format!(
            "window ratio needs k0 > w >= 1, got k0={k0}, w={w}"
        )));
    }
    check_prefix(r, t, k0 - 1)?;
    let range = k0 - 1 - w..k0 - 1;
    Ok(r[range.clone()].iter().sum::<f64>() / t[range].iter().sum::<f64>())
}

/// `sum Energy / sum T` over tasks `1..=k`.
pub fn power_ratio(energy: &[f64], t: &[f64], k: usize) -> Result<f64> {
    cumulative_ratio(energy, t, k)
}

/// Energy recovered from a penalty of the form `energy - p_av T`.
pub fn energy_series(y: &[f64], t: &[f64], p_av: f64) -> Vec<f64> {
    y.iter().zip(t).map(|(y, t)| y + p_av * t).collect()
}

fn check_prefix(a: &[f64], b: &[f64], k: usize) -> Result<()> {
    if k == 0 || k > a.len() || k > b.len() {
        return Err(Error::InvalidParams(format!(
            "task index {k} outside 1..={}",
            a.len().min(b.len())
        )));
    }
    Ok(())
}

/// Running ratios for `k = 1..=len`.
pub fn cumulative_ratio_series(r: &[f64], t: &[f64]) -> Vec<f64> {
    let (mut sr, mut st) = (0.0, 0.0);
    r.iter()
        .zip(t)
        .map(|(r, t)| {
            sr += r;
            st += t;
            sr / st
        })
        .collect()
}

/// Window ratios for `k0 = 1..=len`; `None` while `k0 <= w`.
///
/// Each entry is summed afresh so that values match [`window_ratio`] exactly.
pub fn window_ratio_series(r: &[f64], t: &[f64], w: usize) -> Vec<Option<f64>> {
    (1..=r.len().min(t.len()))
        .map(|k0| window_ratio(r, t, k0, w).ok())
        .collect()
}
