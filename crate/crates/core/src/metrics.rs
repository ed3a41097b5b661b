//! Scalar performance metrics and their across-trial summaries.

use std::fmt;

use crate::error::{invalid, Result};
use crate::INV_E;

/// Normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricKind {
    RisingTime,
    StationaryThroughput,
    DelayPercentile,
    MeanDelay,
    Divergence,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::RisingTime => "rising_time",
            MetricKind::StationaryThroughput => "stationary_throughput",
            MetricKind::DelayPercentile => "delay_percentile",
            MetricKind::MeanDelay => "mean_delay",
            MetricKind::Divergence => "divergence",
        })
    }
}

/// Mean of per-trial values with a normal-approximation 95% half-width.
/// `value` is `None` when no trial produced a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub value: Option<f64>,
    pub ci95_halfwidth: f64,
    /// Trials that produced a value.
    pub trials: usize,
    pub kind: MetricKind,
}

impl MetricSummary {
    pub fn from_samples(kind: MetricKind, samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                value: None,
                ci95_halfwidth: 0.0,
                trials: 0,
                kind,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let half = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            Z95 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value: Some(mean),
            ci95_halfwidth: half,
            trials: n,
            kind,
        }
    }
}

/// First slot at which `trace` reaches `x_percent` of `e^-1`.
pub fn rising_time(throughput_trace: &[f64], x_percent: f64) -> Option<usize> {
    let level = x_percent / 100.0 * INV_E;
    throughput_trace.iter().position(|&v| v >= level)
}

/// Mean of `trace` from the slot where it first reaches 90% of `e^-1`.
pub fn stationary_throughput(throughput_trace: &[f64]) -> Option<f64> {
    let start = rising_time(throughput_trace, 90.0)?;
    let tail = &throughput_trace[start..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Ratio `n_hat / n` at which the large-`n` throughput `rho e^-rho`, with
/// `rho = n / n_hat`, first reaches `x_percent` of `e^-1` when the estimate
/// grows from below.
pub fn estimate_threshold(x_percent: f64) -> Result<f64> {
    if !(x_percent > 0.0 && x_percent <= 100.0) {
        return Err(invalid(format!("x must lie in (0, 100], got {x_percent}")));
    }
    let target = x_percent / 100.0 * INV_E;
    // rho e^-rho is decreasing on [1, inf): bisect for the root above 1
    let f = |rho: f64| rho * (-rho).exp() - target;
    let (mut lo, mut hi) = (1.0, 2.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 / (0.5 * (lo + hi)))
}

/// Nearest-rank percentile: the `ceil(y/100 * n)`-th smallest delay.
pub fn delay_percentile(delays: &[u64], y_percent: f64) -> Option<u64> {
    if delays.is_empty() || !(y_percent > 0.0 && y_percent <= 100.0) {
        return None;
    }
    let mut sorted = delays.to_vec();
    sorted.sort_unstable();
    Some(nearest_rank(&sorted, y_percent))
}

/// As [`delay_percentile`] on an already sorted slice.
pub fn nearest_rank(sorted: &[u64], y_percent: f64) -> u64 {
    let n = sorted.len();
    let rank = ((y_percent / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Relative excess delay `(d - d_star) / d_star`.
pub fn divergence(d: f64, d_star: f64) -> Result<f64> {
    if !(d_star > 0.0) {
        return Err(invalid(format!("reference delay must be positive, got {d_star}")));
    }
    Ok((d - d_star) / d_star)
}

/// Divergence of two independent summaries, with a first-order (delta
/// method) 95% half-width.
pub fn divergence_summary(d: &MetricSummary, d_star: &MetricSummary) -> Option<MetricSummary> {
    let (dv, sv) = (d.value?, d_star.value?);
    let value = divergence(dv, sv).ok()?;
    let ratio = dv / sv;
    let half = ratio.abs()
        * ((d.ci95_halfwidth / dv).powi(2) + (d_star.ci95_halfwidth / sv).powi(2)).sqrt();
    Some(MetricSummary {
        value: Some(value),
        ci95_halfwidth: if half.is_finite() { half } else { 0.0 },
        trials: d.trials.min(d_star.trials),
        kind: MetricKind::Divergence,
    })
}

/// Divergence from paired per-trial mean delays (trial `i` of both sides
/// saw the same arrivals). Ratio-of-means estimate with the linearised
/// half-width of `d_i - R d*_i`.
pub fn paired_divergence_summary(d: &[f64], d_star: &[f64]) -> Option<MetricSummary> {
    let n = d.len();
    if n == 0 || n != d_star.len() {
        return None;
    }
    let md = d.iter().sum::<f64>() / n as f64;
    let ms = d_star.iter().sum::<f64>() / n as f64;
    let value = divergence(md, ms).ok()?;
    let ratio = md / ms;
    let half = if n > 1 {
        let var = d
            .iter()
            .zip(d_star)
            .map(|(a, b)| (a - ratio * b).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        Z95 * (var / n as f64).sqrt() / ms
    } else {
        0.0
    };
    Some(MetricSummary {
        value: Some(value),
        ci95_halfwidth: half,
        trials: n,
        kind: MetricKind::Divergence,
    })
}
