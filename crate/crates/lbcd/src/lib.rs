//! Online control of multi-camera edge video analytics for minimum age of
//! processed information under a long-term accuracy requirement.
//!
//! Each slot, [`controller::Lbcd`] adds the accuracy shortfall to a virtual
//! queue and minimizes the drift-plus-penalty objective −q·P̄ + V·Ā: server
//! selection by first-fit decreasing ([`select`]), then block coordinate
//! descent ([`bcd`]) over video configurations, bandwidth and compute
//! ([`alloc`]). [`baselines`] holds the comparison strategies.

pub mod alloc;
pub mod baselines;
pub mod bcd;
pub mod bound;
pub mod controller;
pub mod objective;
pub mod queue;
pub mod select;

use aopi_core::model::ModelError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bcd::{bcd_solve, optimize_configs, BcdOutcome};
pub use controller::{Lbcd, SlotMetrics, StepOutcome, Strategy};
pub use objective::{ObjectiveValue, Weights};
pub use queue::{queue_update, VirtualQueue};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LbcdError {
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("allocation did not converge: stationarity residual {residual:e}")]
    NotConverged { residual: f64 },
    #[error("camera {camera} has zero recognition accuracy under every candidate")]
    DegenerateAccuracy { camera: usize },
    #[error("no configuration gives camera {camera} a finite AoPI")]
    NoFiniteConfig { camera: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tuning of the controller and its block solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbcdParams {
    /// Penalty weight V on AoPI.
    pub v: f64,
    /// Maximum BCD iterations M.
    pub max_bcd_iters: usize,
    /// BCD stops once an iteration improves the objective by less than this
    /// fraction.
    pub bcd_rel_tol: f64,
    /// Largest accepted stationarity residual of an allocation.
    pub solver_tol: f64,
    /// FCFS cameras keep λ ≤ (1 − ε)μ.
    pub epsilon_stability: f64,
}

impl Default for LbcdParams {
    fn default() -> Self {
        Self {
            v: 10.0,
            max_bcd_iters: 10,
            bcd_rel_tol: 1e-4,
            solver_tol: 1e-6,
            epsilon_stability: 0.01,
        }
    }
}

impl LbcdParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            ("v", self.v),
            ("bcd_rel_tol", self.bcd_rel_tol),
            ("solver_tol", self.solver_tol),
            ("epsilon_stability", self.epsilon_stability),
        ];
        for (name, value) in checks {
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("{name} must be finite and > 0, got {value}"));
            }
        }
        if self.epsilon_stability >= 1.0 {
            return Err("epsilon_stability must be < 1".into());
        }
        if self.max_bcd_iters == 0 {
            return Err("max_bcd_iters must be >= 1".into());
        }
        Ok(())
    }
}
