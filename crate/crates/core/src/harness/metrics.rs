//! Task-deviation and effort metrics over a trace window.

use std::ops::Range;

use nalgebra::Vector2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::Mode;
use crate::harness::sim::EpisodeTrace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mode: Mode,
    pub seed: u64,
    pub window_start: usize,
    pub window_end: usize,
    /// Deviation from the nominal hold position.
    pub devmax_nominal: f64,
    pub devrms_nominal: f64,
    /// Deviation from the attacker's planned trajectory.
    pub devmax_attack: f64,
    pub devrms_attack: f64,
    pub mean_effort: f64,
    pub alarm_count: usize,
    pub max_w_ratio: f64,
    pub f_min: f64,
    pub f_mean: f64,
}

fn max_rms(devs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut max, mut sq, mut n) = (0.0_f64, 0.0, 0usize);
    for d in devs {
        max = max.max(d);
        sq += d * d;
        n += 1;
    }
    (max, (sq / n.max(1) as f64).sqrt())
}

/// Metrics over `window` (clipped to the trace), references read from the trace rows.
pub fn compute_metrics(trace: &EpisodeTrace, window: Range<usize>) -> Result<MetricReport> {
    let end = window.end.min(trace.rows.len());
    let start = window.start.min(end);
    let rows = &trace.rows[start..end];
    if rows.is_empty() {
        return Err(Error::Domain(format!("metric window {start}..{end} is empty")));
    }
    let dev = |a: &Vector2<f64>, b: &Vector2<f64>| (a - b).norm();
    let (devmax_nominal, devrms_nominal) = max_rms(rows.iter().map(|r| dev(&r.p_bar, &r.p)));
    let (devmax_attack, devrms_attack) = max_rms(rows.iter().map(|r| dev(&r.p_bar_a, &r.p)));
    let n = rows.len() as f64;
    let mean_effort = rows.iter().map(|r| r.u.norm()).sum::<f64>() / n;
    let alarm_count = rows.iter().filter(|r| r.alarm).count();
    let max_w_ratio = rows
        .iter()
        .filter(|r| r.w.is_finite())
        .map(|r| r.w / trace.tau)
        .fold(0.0, f64::max);
    let f_min = rows.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
    let f_mean = rows.iter().map(|r| r.f).sum::<f64>() / n;
    Ok(MetricReport {
        mode: trace.mode,
        seed: trace.seed,
        window_start: start,
        window_end: end,
        devmax_nominal,
        devrms_nominal,
        devmax_attack,
        devrms_attack,
        mean_effort,
        alarm_count,
        max_w_ratio,
        f_min,
        f_mean,
    })
}

/// Metrics over the attack window, or the whole episode when there is none.
pub fn default_metrics(trace: &EpisodeTrace) -> Result<MetricReport> {
    let window = if trace.attack_window.is_empty() {
        0..trace.rows.len()
    } else {
        trace.attack_window.clone()
    };
    compute_metrics(trace, window)
}
