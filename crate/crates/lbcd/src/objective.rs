//! The one-slot objective −w_p·P̄ + w_a·Ā and its evaluation.

use aopi_core::analytics::aopi_or_infinite;
use aopi_core::model::{SlotContext, VideoConfig};
use serde::{Deserialize, Serialize};

use crate::LbcdError;

/// Per-camera score −accuracy·p + aopi·A. The drift-plus-penalty objective
/// uses (q, V); the accuracy-minus-latency baseline uses (1, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub accuracy: f64,
    pub aopi: f64,
}

impl Weights {
    pub fn drift_plus_penalty(q: f64, v: f64) -> Self {
        Self {
            accuracy: q,
            aopi: v,
        }
    }

    pub fn score(&self, p: f64, aopi: f64) -> f64 {
        -self.accuracy * p + self.aopi * aopi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub drift_penalty: f64,
    pub mean_aopi: f64,
    pub mean_accuracy: f64,
}

impl ObjectiveValue {
    pub fn new(weights: Weights, mean_accuracy: f64, mean_aopi: f64) -> Self {
        Self {
            drift_penalty: weights.score(mean_accuracy, mean_aopi),
            mean_aopi,
            mean_accuracy,
        }
    }
}

/// Closed-form AoPI and accuracy of each camera; `inf` AoPI when unstable
/// or starved.
pub fn camera_values(
    ctx: &SlotContext,
    cameras: &[usize],
    configs: &[VideoConfig],
    bandwidth: &[f64],
    compute: &[f64],
) -> Result<Vec<(f64, f64)>, LbcdError> {
    cameras
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let r = ctx.rates(n, &configs[i], bandwidth[i], compute[i])?;
            let a = if r.lambda > 0.0 && r.mu > 0.0 && r.accuracy > 0.0 {
                aopi_or_infinite(r.policy, r.lambda, r.mu, r.accuracy)
            } else {
                f64::INFINITY
            };
            Ok((r.accuracy, a))
        })
        .collect()
}

/// Objective over `cameras` with means taken over those cameras.
pub fn evaluate(
    ctx: &SlotContext,
    cameras: &[usize],
    configs: &[VideoConfig],
    bandwidth: &[f64],
    compute: &[f64],
    weights: Weights,
) -> Result<ObjectiveValue, LbcdError> {
    let values = camera_values(ctx, cameras, configs, bandwidth, compute)?;
    let n = values.len().max(1) as f64;
    let p = values.iter().map(|v| v.0).sum::<f64>() / n;
    let a = values.iter().map(|v| v.1).sum::<f64>() / n;
    Ok(ObjectiveValue::new(weights, p, a))
}
