use serde::{Deserialize, Serialize};

use super::eval::ReplacementEvent;
use super::HarnessError;
use crate::rl::EpisodeMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub events: usize,
    /// Events with Q_c(s, a_safe) < Q_c(s, a_raw).
    pub strict_fraction: f64,
    /// Events with Q_c(s, a_safe) ≤ Q_c(s, a_raw).
    pub non_strict_fraction: f64,
    pub mean_gap: f64,
}

/// Compares the cost critic on the shield's replacement against the raw action.
pub fn theorem1_check<F>(cost_values: F, events: &[ReplacementEvent]) -> Result<Theorem1Report, HarnessError>
where
    F: Fn(&[f32]) -> Result<Vec<f32>, HarnessError>,
{
    if events.is_empty() {
        return Err(HarnessError::EmptyLog);
    }
    let (mut strict, mut weak, mut gap) = (0usize, 0usize, 0.0f64);
    for e in events {
        let q = cost_values(&e.obs)?;
        let (raw, safe) = (q[e.raw.index()], q[e.safe.index()]);
        strict += (safe < raw) as usize;
        weak += (safe <= raw) as usize;
        gap += (raw - safe) as f64;
    }
    let n = events.len() as f64;
    Ok(Theorem1Report {
        events: events.len(),
        strict_fraction: strict as f64 / n,
        non_strict_fraction: weak as f64 / n,
        mean_gap: gap / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Right edge of the bin in environment steps.
    pub step: u64,
    pub average_cost: f64,
    pub average_return: f64,
    pub crash_rate: f64,
    pub episodes: usize,
}

/// Bins episodes by the step they ended on and averages each bin. Empty bins
/// carry NaN.
pub fn cost_curve(metrics: &[EpisodeMetrics], window: u64, total_steps: u64) -> Vec<CurvePoint> {
    let bins = total_steps.div_ceil(window).max(1) as usize;
    let mut acc = vec![(0.0, 0.0, 0usize, 0usize); bins];
    for m in metrics {
        let b = (m.step.saturating_sub(1) / window).min(bins as u64 - 1) as usize;
        acc[b].0 += m.episode_cost;
        acc[b].1 += m.episode_return;
        acc[b].2 += m.crash as usize;
        acc[b].3 += 1;
    }
    acc.iter()
        .enumerate()
        .map(|(i, &(cost, ret, crash, n))| {
            let d = if n == 0 { f64::NAN } else { n as f64 };
            CurvePoint {
                step: ((i as u64 + 1) * window).min(total_steps),
                average_cost: cost / d,
                average_return: ret / d,
                crash_rate: crash as f64 / d,
                episodes: n,
            }
        })
        .collect()
}

/// Pointwise mean of equally binned curves, skipping empty bins.
pub fn mean_curve(curves: &[Vec<CurvePoint>]) -> Vec<CurvePoint> {
    let Some(first) = curves.first() else { return Vec::new() };
    (0..first.len())
        .map(|i| {
            let pts: Vec<&CurvePoint> = curves.iter().map(|c| &c[i]).filter(|p| p.episodes > 0).collect();
            let n = pts.len() as f64;
            let mean = |f: fn(&CurvePoint) -> f64| if pts.is_empty() { f64::NAN } else { pts.iter().map(|p| f(p)).sum::<f64>() / n };
            CurvePoint {
                step: first[i].step,
                average_cost: mean(|p| p.average_cost),
                average_return: mean(|p| p.average_return),
                crash_rate: mean(|p| p.crash_rate),
                episodes: pts.iter().map(|p| p.episodes).sum(),
            }
        })
        .collect()
}

/// Mean episode cost over episodes ending in the last `window` steps.
pub fn final_average_cost(metrics: &[EpisodeMetrics], window: u64) -> f64 {
    let end = metrics.iter().map(|m| m.step).max().unwrap_or(0);
    let tail: Vec<f64> = metrics.iter().filter(|m| m.step + window > end).map(|m| m.episode_cost).collect();
    if tail.is_empty() {
        f64::NAN
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}
