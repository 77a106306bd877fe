//! Long-run performance bounds of the drift-plus-penalty controller:
//!
//!   time-average Ā ≤ A_opt + (½ + Φ_max) / V
//!   time-average P̄ ≥ P_min − (½ + V·A_max) / ε
//!
//! The constants are run-time estimates (A_opt from the pooled lower-bound
//! strategy, A_max the worst slot AoPI observed).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub a_opt_estimate: Option<f64>,
    pub a_max: Option<f64>,
    /// Largest per-slot gap between the achieved and the optimal one-slot
    /// objective.
    pub phi_max: Option<f64>,
    /// Accuracy surplus of some stationary policy over P_min.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub slots: usize,
    pub mean_aopi: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub aopi_bound: Option<f64>,
    pub accuracy_bound: Option<f64>,
    pub aopi_violated: bool,
    pub accuracy_violated: bool,
    /// Some estimate or the log itself was missing, so at least one bound
    /// was not checked.
    pub partial: bool,
}

/// Checks the long-run bounds on per-slot (Ā_t, P̄_t) series.
pub fn long_run_bound_report(
    aopi: &[f64],
    accuracy: &[f64],
    constants: &BoundConstants,
    v: f64,
    p_min: f64,
) -> BoundReport {
    let mean = |xs: &[f64]| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let mean_aopi = mean(aopi);
    let mean_accuracy = mean(accuracy);
    let aopi_bound = match (constants.a_opt_estimate, constants.phi_max) {
        (Some(a), Some(phi)) => Some(a + (0.5 + phi) / v),
        _ => None,
    };
    let accuracy_bound = match (constants.a_max, constants.epsilon) {
        (Some(a_max), Some(eps)) if eps > 0.0 => Some(p_min - (0.5 + v * a_max) / eps),
        _ => None,
    };
    let aopi_violated = matches!((mean_aopi, aopi_bound), (Some(m), Some(b)) if m > b);
    let accuracy_violated = matches!((mean_accuracy, accuracy_bound), (Some(m), Some(b)) if m < b);
    BoundReport {
        slots: aopi.len(),
        mean_aopi,
        mean_accuracy,
        aopi_bound,
        accuracy_bound,
        aopi_violated,
        accuracy_violated,
        partial: mean_aopi.is_none()
            || mean_accuracy.is_none()
            || aopi_bound.is_none()
            || accuracy_bound.is_none(),
    }
}
