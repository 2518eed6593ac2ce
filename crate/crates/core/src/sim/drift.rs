//! Empirical drift check on a total-queue-length trace.
//!
//! Positive recurrence cannot be decided from a finite trace; this is a
//! heuristic with explicit, configurable thresholds, and the report carries
//! the statistics behind each verdict.

use serde::{Deserialize, Serialize};

use super::TracePoint;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Combines per-seed verdicts: any unstable seed makes the whole
    /// unstable, and stable requires every seed stable.
    pub fn combine<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
        let mut all_stable = true;
        let mut any = false;
        for v in verdicts {
            any = true;
            match v {
                Verdict::Unstable => return Verdict::Unstable,
                Verdict::Inconclusive => all_stable = false,
                Verdict::Stable => {}
            }
        }
        if any && all_stable {
            Verdict::Stable
        } else {
            Verdict::Inconclusive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftThresholds {
    /// Stable needs `slope * T <= stable_slope_frac * max(trace)`.
    pub stable_slope_frac: f64,
    /// Stable needs the last/first quartile-mean ratio below this.
    pub stable_ratio: f64,
    /// Unstable needs `slope * T > unstable_arrival_frac * (sum p_i) * T`.
    pub unstable_arrival_frac: f64,
    /// Unstable needs the quartile ratio above this.
    pub unstable_ratio: f64,
    pub min_samples: usize,
}

impl Default for DriftThresholds {
    fn default() -> Self {
        Self {
            stable_slope_frac: 0.05,
            stable_ratio: 2.0,
            unstable_arrival_frac: 0.2,
            unstable_ratio: 4.0,
            min_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftReport {
    pub verdict: Verdict,
    /// Least-squares slope of the total queue length per slot.
    pub slope: f64,
    /// Slot span `T` covered by the trace.
    pub horizon: f64,
    pub first_quartile_mean: f64,
    pub last_quartile_mean: f64,
    pub quartile_ratio: f64,
    pub max_value: f64,
}

/// Classifies a trace given the total arrival rate `sum p_i`.
pub fn drift_diagnostic(
    trace: &[TracePoint],
    arrival_rate_sum: f64,
    thresholds: &DriftThresholds,
) -> Result<DriftReport> {
    if trace.len() < thresholds.min_samples.max(4) {
        return Err(Error::TraceTooShort { len: trace.len(), min: thresholds.min_samples.max(4) });
    }
    let n = trace.len() as f64;
    let xs = || trace.iter().map(|p| p.slot as f64);
    let ys = || trace.iter().map(|p| p.total_queue as f64);
    let mean_x = xs().sum::<f64>() / n;
    let mean_y = ys().sum::<f64>() / n;
    let (sxy, sxx) = xs().zip(ys()).fold((0.0, 0.0), |(sxy, sxx), (x, y)| {
        (sxy + (x - mean_x) * (y - mean_y), sxx + (x - mean_x) * (x - mean_x))
    });
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let horizon = (trace[trace.len() - 1].slot - trace[0].slot) as f64;
    let max_value = ys().fold(0.0, f64::max);

    let quarter = trace.len() / 4;
    let mean_of = |pts: &[TracePoint]| {
        pts.iter().map(|p| p.total_queue as f64).sum::<f64>() / pts.len() as f64
    };
    let first = mean_of(&trace[..quarter]);
    let last = mean_of(&trace[trace.len() - quarter..]);
    let ratio = match (first > 0.0, last > 0.0) {
        (true, _) => last / first,
        (false, false) => 1.0,
        (false, true) => f64::INFINITY,
    };

    let drift = slope * horizon;
    let verdict = if drift <= thresholds.stable_slope_frac * max_value && ratio < thresholds.stable_ratio {
        Verdict::Stable
    } else if drift > thresholds.unstable_arrival_frac * arrival_rate_sum * horizon
        && ratio > thresholds.unstable_ratio
    {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(DriftReport {
        verdict,
        slope,
        horizon,
        first_quartile_mean: first,
        last_quartile_mean: last,
        quartile_ratio: ratio,
        max_value,
    })
}
