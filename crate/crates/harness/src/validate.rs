//! Simulator against closed forms on a fixed (ρ, p) grid with μ = 1.

use aopi_core::analytics::{aopi_fcfs, aopi_lcfsp};
use aopi_core::model::{AopiInputs, Policy};
use aopi_core::sim::{camera_seed, simulate_single, SimConfig, DEFAULT_WARMUP_FRACTION};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const GRID_LOADS: [f64; 3] = [0.2, 0.5, 0.8];
pub const GRID_ACCURACIES: [f64; 3] = [0.4, 0.7, 1.0];
/// Loads at or above 1, where only the preemptive policy is stable.
pub const OVERLOAD_LOADS: [f64; 2] = [1.0, 2.0];
pub const DEFAULT_TOLERANCE: f64 = 0.02;

/// Generated frames needed for `frames` of them to fall after the warmup.
pub fn horizon_for(frames: usize) -> usize {
    (frames as f64 / (1.0 - DEFAULT_WARMUP_FRACTION)).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub policy: Policy,
    pub rho: f64,
    pub p: f64,
}

pub fn grid() -> Vec<GridPoint> {
    let mut points = Vec::new();
    for policy in Policy::ALL {
        for rho in GRID_LOADS {
            for p in GRID_ACCURACIES {
                points.push(GridPoint { policy, rho, p });
            }
        }
    }
    for rho in OVERLOAD_LOADS {
        for p in GRID_ACCURACIES {
            points.push(GridPoint {
                policy: Policy::Lcfsp,
                rho,
                p,
            });
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub point: GridPoint,
    pub closed_form: f64,
    pub simulated: f64,
    pub ci95: f64,
    pub rel_error: f64,
    pub window_frames: usize,
}

impl GridResult {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.rel_error <= tolerance
    }
}

/// Simulates every grid point with `frames` post-warmup frames. Points run
/// in parallel and each has its own seed, so the output is deterministic.
pub fn validate_grid(frames: usize, seed: u64) -> Vec<GridResult> {
    let horizon = horizon_for(frames);
    grid()
        .into_par_iter()
        .enumerate()
        .map(|(i, point)| {
            let (lambda, mu) = (point.rho, 1.0);
            let closed_form = match point.policy {
                Policy::Fcfs => aopi_fcfs(lambda, mu, point.p),
                Policy::Lcfsp => aopi_lcfsp(lambda, mu, point.p),
            }
            .expect("grid point is stable")
            .seconds();
            let inputs = AopiInputs::new(lambda, mu, point.p, point.policy).expect("valid grid point");
            let r = simulate_single(&SimConfig::new(inputs, horizon, camera_seed(seed, i)))
                .expect("valid simulation config");
            GridResult {
                point,
                closed_form,
                simulated: r.mean_aopi,
                ci95: r.aopi_ci95,
                rel_error: ((r.mean_aopi - closed_form) / closed_form).abs(),
                window_frames: horizon - (horizon as f64 * DEFAULT_WARMUP_FRACTION) as usize,
            }
        })
        .collect()
}

pub fn write_grid_csv<W: std::io::Write>(writer: W, results: &[GridResult]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["policy", "rho", "p", "closed_form", "simulated", "ci95", "rel_error"])?;
    for r in results {
        w.write_record([
            r.point.policy.to_string(),
            r.point.rho.to_string(),
            r.point.p.to_string(),
            r.closed_form.to_string(),
            r.simulated.to_string(),
            r.ci95.to_string(),
            r.rel_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
