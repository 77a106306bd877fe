//! Per-slot controllers and the metrics they report.

use aopi_core::model::{
    check_feasible, Feasibility, Policy, SlotContext, SlotDecision, VideoConfig,
};
use serde::{Deserialize, Serialize};

use crate::alloc::{optimize_bandwidth, optimize_compute};
use crate::bcd::{bcd_solve, initial_point, lightest_model, BcdOutcome};
use crate::objective::{camera_values, ObjectiveValue, Weights};
use crate::queue::VirtualQueue;
use crate::select::select_servers;
use crate::{LbcdError, LbcdParams};

/// One camera's realized operating point in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMetrics {
    pub server: usize,
    pub config: VideoConfig,
    pub bandwidth: f64,
    pub compute: f64,
    pub lambda: f64,
    pub mu: f64,
    pub accuracy: f64,
    /// Closed-form AoPI, seconds.
    pub aopi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: usize,
    /// Ā_t over all cameras.
    pub mean_aopi: f64,
    /// P̄_t over all cameras, from the profiles.
    pub mean_accuracy: f64,
    pub q_before: f64,
    pub q_after: f64,
    /// −q·P̄ + V·Ā with q before the update.
    pub objective: ObjectiveValue,
    pub cameras: Vec<CameraMetrics>,
    pub bandwidth_used: Vec<f64>,
    pub compute_used: Vec<f64>,
    /// Objective trace of every BCD run in the slot.
    pub bcd_traces: Vec<Vec<f64>>,
    /// Why the emitted decision is a fallback, if it is one.
    pub fallback: Option<String>,
    /// Cameras the strategy could not serve within its own constraints.
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub decision: SlotDecision,
    pub metrics: SlotMetrics,
}

/// A per-slot decision maker. Each instance owns its state for one run.
pub trait Strategy: Send {
    fn name(&self) -> &str;
    fn step(&mut self, slot: usize, ctx: &SlotContext) -> StepOutcome;
}

pub(crate) fn trace_values(outcome: &BcdOutcome) -> Vec<f64> {
    outcome.trace.iter().map(|o| o.drift_penalty).collect()
}

/// Evaluates `decision`, advances `queue` with the slot's mean accuracy and
/// packages the metrics. `servers` is the number of servers the decision
/// refers to.
pub(crate) fn finish(
    slot: usize,
    ctx: &SlotContext,
    decision: SlotDecision,
    queue: &mut VirtualQueue,
    v: f64,
    servers: usize,
    bcd_traces: Vec<Vec<f64>>,
    fallback: Option<String>,
    flagged: Vec<usize>,
) -> StepOutcome {
    let cams: Vec<usize> = (0..decision.camera_count()).collect();
    let values = camera_values(
        ctx,
        &cams,
        &decision.configs,
        &decision.bandwidth,
        &decision.compute,
    )
    .unwrap_or_else(|_| vec![(0.0, f64::INFINITY); cams.len()]);
    let cameras: Vec<CameraMetrics> = cams
        .iter()
        .map(|&n| {
            let rates = ctx.rates(
                n,
                &decision.configs[n],
                decision.bandwidth[n],
                decision.compute[n],
            );
            let (lambda, mu) = rates.map_or((0.0, 0.0), |r| (r.lambda, r.mu));
            CameraMetrics {
                server: decision.assignment[n],
                config: decision.configs[n],
                bandwidth: decision.bandwidth[n],
                compute: decision.compute[n],
                lambda,
                mu,
                accuracy: values[n].0,
                aopi: values[n].1,
            }
        })
        .collect();
    let count = cameras.len().max(1) as f64;
    let mean_accuracy = cameras.iter().map(|c| c.accuracy).sum::<f64>() / count;
    let mean_aopi = cameras.iter().map(|c| c.aopi).sum::<f64>() / count;
    let mut bandwidth_used = vec![0.0; servers];
    let mut compute_used = vec![0.0; servers];
    for c in &cameras {
        if c.server < servers {
            bandwidth_used[c.server] += c.bandwidth;
            compute_used[c.server] += c.compute;
        }
    }
    let q_before = queue.q;
    let objective = ObjectiveValue::new(
        Weights::drift_plus_penalty(q_before, v),
        mean_accuracy,
        mean_aopi,
    );
    let q_after = if cameras.is_empty() {
        q_before
    } else {
        queue.update(mean_accuracy)
    };
    StepOutcome {
        decision,
        metrics: SlotMetrics {
            slot,
            mean_aopi,
            mean_accuracy,
            q_before,
            q_after,
            objective,
            cameras,
            bandwidth_used,
            compute_used,
            bcd_traces,
            fallback,
            flagged,
        },
    }
}

/// A decision that is always available: the previous slot's configurations
/// with each server's resources rescaled to its new capacity (FCFS cameras
/// that would lose stability switch to LCFSP), or the BCD starting point
/// spread round-robin when there is no usable previous decision.
pub fn fallback_decision(
    previous: Option<&SlotDecision>,
    ctx: &SlotContext,
    epsilon: f64,
) -> SlotDecision {
    let n = ctx.cameras.len();
    let s = ctx.servers.len().max(1);
    let usable = previous.filter(|d| {
        d.camera_count() == n && d.assignment.iter().all(|&a| a < ctx.servers.len())
    });
    let (assignment, mut configs, old_b, old_c) = match usable {
        Some(d) => (
            d.assignment.clone(),
            d.configs.clone(),
            d.bandwidth.clone(),
            d.compute.clone(),
        ),
        None => {
            let cfg = VideoConfig {
                resolution: ctx.resolutions[0],
                policy: Policy::Lcfsp,
                model: lightest_model(ctx).unwrap_or(aopi_core::model::ModelId(0)),
            };
            ((0..n).map(|i| i % s).collect(), vec![cfg; n], vec![1.0; n], vec![1.0; n])
        }
    };
    let mut bandwidth = vec![0.0; n];
    let mut compute = vec![0.0; n];
    for (server, cap) in ctx.servers.iter().enumerate() {
        let cams: Vec<usize> = (0..n).filter(|&i| assignment[i] == server).collect();
        let rescale = |old: &[f64], total: f64, out: &mut [f64]| {
            let sum: f64 = cams.iter().map(|&i| old[i]).sum();
            for &i in &cams {
                out[i] = if sum > 0.0 {
                    old[i] / sum * total
                } else {
                    total / cams.len() as f64
                };
            }
        };
        rescale(&old_b, cap.bandwidth, &mut bandwidth);
        rescale(&old_c, cap.compute, &mut compute);
    }
    for i in 0..n {
        if configs[i].policy == Policy::Fcfs {
            let stable = ctx
                .rates(i, &configs[i], bandwidth[i], compute[i])
                .is_ok_and(|r| r.lambda <= (1.0 - epsilon) * r.mu);
            if !stable {
                configs[i].policy = Policy::Lcfsp;
            }
        }
    }
    SlotDecision {
        assignment,
        configs,
        bandwidth,
        compute,
    }
}

/// Resource blocks only, with every camera forced to LCFSP.
fn lcfsp_resources(
    ctx: &SlotContext,
    server: usize,
    cameras: &[usize],
    params: &LbcdParams,
) -> Result<BcdOutcome, LbcdError> {
    let cap = ctx.servers[server];
    let (configs, _, compute) = initial_point(ctx, cameras, cap.bandwidth, cap.compute)?;
    let eps = params.epsilon_stability;
    let bandwidth = optimize_bandwidth(
        ctx,
        cameras,
        &configs,
        &compute,
        cap.bandwidth,
        eps,
        params.solver_tol,
    )?
    .amounts;
    let compute = optimize_compute(
        ctx,
        cameras,
        &configs,
        &bandwidth,
        cap.compute,
        eps,
        params.solver_tol,
    )?
    .amounts;
    Ok(BcdOutcome {
        configs,
        bandwidth,
        compute,
        trace: vec![],
        iterations: 0,
    })
}

/// Assembles per-server BCD results into one decision. Servers whose BCD
/// fails fall back to LCFSP-only resource allocation.
pub(crate) fn solve_per_server(
    ctx: &SlotContext,
    assignment: Vec<usize>,
    weights: Weights,
    params: &LbcdParams,
    traces: &mut Vec<Vec<f64>>,
) -> Result<SlotDecision, LbcdError> {
    let n = ctx.cameras.len();
    let placeholder = VideoConfig {
        resolution: ctx.resolutions[0],
        policy: Policy::Lcfsp,
        model: aopi_core::model::ModelId(0),
    };
    let mut decision = SlotDecision {
        assignment,
        configs: vec![placeholder; n],
        bandwidth: vec![0.0; n],
        compute: vec![0.0; n],
    };
    for server in 0..ctx.servers.len() {
        let cams = decision.cameras_on(server);
        if cams.is_empty() {
            continue;
        }
        let out = match bcd_solve(ctx, server, &cams, weights, params) {
            Ok(o) => o,
            Err(LbcdError::Infeasible(_) | LbcdError::NotConverged { .. }) => {
                lcfsp_resources(ctx, server, &cams, params)?
            }
            Err(e) => return Err(e),
        };
        traces.push(trace_values(&out));
        for (k, &cam) in cams.iter().enumerate() {
            decision.configs[cam] = out.configs[k];
            decision.bandwidth[cam] = out.bandwidth[k];
            decision.compute[cam] = out.compute[k];
        }
    }
    ensure_feasible(&decision, ctx)?;
    Ok(decision)
}

pub(crate) fn ensure_feasible(decision: &SlotDecision, ctx: &SlotContext) -> Result<(), LbcdError> {
    match check_feasible(decision, ctx)? {
        Feasibility::Feasible => Ok(()),
        Feasibility::Infeasible(v) => Err(LbcdError::Infeasible(format!(
            "decision violates {} constraint(s), first: {:?}",
            v.len(),
            v[0]
        ))),
    }
}

/// The online controller: server selection, per-server BCD on the
/// drift-plus-penalty objective, then the virtual-queue update.
#[derive(Debug, Clone)]
pub struct Lbcd {
    pub params: LbcdParams,
    pub queue: VirtualQueue,
    previous: Option<SlotDecision>,
}

impl Lbcd {
    pub fn new(params: LbcdParams, p_min: f64) -> Self {
        Self {
            params,
            queue: VirtualQueue::new(p_min),
            previous: None,
        }
    }

    fn solve(&self, ctx: &SlotContext, traces: &mut Vec<Vec<f64>>) -> Result<SlotDecision, LbcdError> {
        let weights = Weights::drift_plus_penalty(self.queue.q, self.params.v);
        let selection = select_servers(ctx, weights, &self.params)?;
        traces.push(trace_values(&selection.pooled));
        solve_per_server(ctx, selection.assignment, weights, &self.params, traces)
    }
}

/// One slot of the controller: decide, evaluate, update the queue.
pub fn lbcd_step(state: &mut Lbcd, slot: usize, ctx: &SlotContext) -> StepOutcome {
    let mut traces = Vec::new();
    let (decision, fallback) = match state.solve(ctx, &mut traces) {
        Ok(d) => (d, None),
        Err(e) => (
            fallback_decision(state.previous.as_ref(), ctx, state.params.epsilon_stability),
            Some(e.to_string()),
        ),
    };
    state.previous = Some(decision.clone());
    let v = state.params.v;
    finish(
        slot,
        ctx,
        decision,
        &mut state.queue,
        v,
        ctx.servers.len(),
        traces,
        fallback,
        vec![],
    )
}

impl Strategy for Lbcd {
    fn name(&self) -> &str {
        "lbcd"
    }

    fn step(&mut self, slot: usize, ctx: &SlotContext) -> StepOutcome {
        lbcd_step(self, slot, ctx)
    }
}
