//! Trajectory evaluation metrics and run-level aggregation.
//!
//! Three per-trajectory metrics: timespan (entry count times the frame
//! interval), population standard deviation of the per-frame mean value, and
//! linearity loss (RMSE of centroids from their orthogonal best-fit line).
//! The latter two are only emitted for trajectories with at least three
//! entries and a timespan strictly above the run median; otherwise they are
//! absent, not zero.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::tracker::{Trajectory, TrajectorySet};

/// Entries below this count never receive SD or linearity metrics.
pub const MIN_METRIC_ENTRIES: usize = 3;

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMetrics {
    pub trajectory_id: u32,
    pub kind: String,
    pub entry_count: usize,
    pub timespan_minutes: f64,
    pub sd_mean_value: Option<f64>,
    pub linearity_loss_km: Option<f64>,
}

/// Aggregate summary over the present values of one metric.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricSummary {
    pub count: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub iqr: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct HistogramBin {
    /// Inclusive bin bounds in timesteps; bins double in width.
    pub low_timesteps: u64,
    pub high_timesteps: u64,
    pub low_minutes: f64,
    pub high_minutes: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterParams {
    pub min_entries: usize,
    /// Run-median timespan; metrics require a strictly larger timespan.
    pub min_timespan_exclusive_minutes: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub interval_minutes: f64,
    pub trajectory_count: usize,
    pub event_counts: BTreeMap<String, usize>,
    pub filter: FilterParams,
    pub timespan_minutes: MetricSummary,
    pub sd_mean_value: MetricSummary,
    pub linearity_loss_km: MetricSummary,
    pub timespan_histogram: Vec<HistogramBin>,
    /// Emitted separately as CSV; aggregates above are exact recomputations
    /// from these records.
    #[serde(skip)]
    pub per_trajectory: Vec<TrajectoryMetrics>,
}

pub fn trajectory_timespan(traj: &Trajectory, interval_minutes: f64) -> f64 {
    traj.entries.len() as f64 * interval_minutes
}

/// Population standard deviation (normalized by n, not n-1).
pub fn population_sd(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (ss / n).sqrt()
}

/// RMSE of orthogonal distances from the points to their total-least-squares
/// line (the first principal axis of the centered cloud). The sum of squared
/// orthogonal residuals is the smaller eigenvalue of the 2x2 scatter matrix.
pub fn tls_rmse_km(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(ax, ay), &(x, y)| (ax + x, ay + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let tr = sxx + syy;
    let gap = ((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy).sqrt();
    let lambda_min = ((tr - gap) / 2.0).max(0.0);
    (lambda_min / n).sqrt()
}

/// Linear-interpolation quantile of a sorted slice (R type 7).
pub fn quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

fn summarize_values(values: &[f64]) -> MetricSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = quantile(&sorted, 0.5);
    let mean = if sorted.is_empty() {
        None
    } else {
        Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
    };
    let iqr = match (quantile(&sorted, 0.75), quantile(&sorted, 0.25)) {
        (Some(hi), Some(lo)) => Some(hi - lo),
        _ => None,
    };
    MetricSummary { count: sorted.len(), median, mean, iqr }
}

/// Evaluates one trajectory against the run-median filter.
pub fn evaluate_trajectory(
    traj: &Trajectory,
    interval_minutes: f64,
    median_timespan_minutes: f64,
) -> TrajectoryMetrics {
    let timespan = trajectory_timespan(traj, interval_minutes);
    let passes = traj.entries.len() >= MIN_METRIC_ENTRIES && timespan > median_timespan_minutes;
    let (sd, linearity) = if passes {
        let means: Vec<f64> = traj.entries.iter().map(|e| e.mean_value).collect();
        let centroids: Vec<(f64, f64)> = traj.entries.iter().map(|e| e.centroid_km).collect();
        (Some(population_sd(&means)), Some(tls_rmse_km(&centroids)))
    } else {
        (None, None)
    };
    TrajectoryMetrics {
        trajectory_id: traj.id,
        kind: traj.kind.as_str().to_string(),
        entry_count: traj.entries.len(),
        timespan_minutes: timespan,
        sd_mean_value: sd,
        linearity_loss_km: linearity,
    }
}

/// Doubling bins over entry counts: [1], [2], [3,4], [5,8], [9,16], ...
/// Intermediate empty bins are kept so the histogram plots directly.
pub fn timespan_histogram(entry_counts: &[usize], interval_minutes: f64) -> Vec<HistogramBin> {
    let max = match entry_counts.iter().max() {
        Some(&m) if m > 0 => m as u64,
        _ => return Vec::new(),
    };
    let top_bin = max.next_power_of_two().trailing_zeros();
    (0..=top_bin)
        .map(|k| {
            let high = 1u64 << k;
            let low = if k == 0 { 1 } else { (1u64 << (k - 1)) + 1 };
            let count = entry_counts
                .iter()
                .filter(|&&n| (n as u64) >= low && (n as u64) <= high)
                .count();
            HistogramBin {
                low_timesteps: low,
                high_timesteps: high,
                low_minutes: low as f64 * interval_minutes,
                high_minutes: high as f64 * interval_minutes,
                count,
            }
        })
        .collect()
}

pub fn summarize_run(set: &TrajectorySet, interval_minutes: f64) -> StatsReport {
    let timespans: Vec<f64> =
        set.trajectories.iter().map(|t| trajectory_timespan(t, interval_minutes)).collect();
    let mut sorted = timespans.clone();
    sorted.sort_by(f64::total_cmp);
    let median_timespan = quantile(&sorted, 0.5);

    let per_trajectory: Vec<TrajectoryMetrics> = set
        .trajectories
        .iter()
        .map(|t| evaluate_trajectory(t, interval_minutes, median_timespan.unwrap_or(0.0)))
        .collect();

    let sds: Vec<f64> = per_trajectory.iter().filter_map(|m| m.sd_mean_value).collect();
    let losses: Vec<f64> = per_trajectory.iter().filter_map(|m| m.linearity_loss_km).collect();
    let entry_counts: Vec<usize> = per_trajectory.iter().map(|m| m.entry_count).collect();

    let mut event_counts = BTreeMap::new();
    for event in &set.events {
        *event_counts.entry(event.kind.as_str().to_string()).or_insert(0) += 1;
    }

    StatsReport {
        interval_minutes,
        trajectory_count: set.trajectories.len(),
        event_counts,
        filter: FilterParams {
            min_entries: MIN_METRIC_ENTRIES,
            min_timespan_exclusive_minutes: median_timespan,
        },
        timespan_minutes: summarize_values(&timespans),
        sd_mean_value: summarize_values(&sds),
        linearity_loss_km: summarize_values(&losses),
        timespan_histogram: timespan_histogram(&entry_counts, interval_minutes),
        per_trajectory,
    }
}
