//! Block coordinate descent over {configurations, bandwidth, compute} for the
//! cameras of one server.

use aopi_core::analytics::aopi_or_infinite;
use aopi_core::model::{EdgeServerCapacity, ModelId, Policy, SlotContext, VideoConfig};
use serde::{Deserialize, Serialize};

use crate::alloc::{optimize_bandwidth, optimize_compute};
use crate::objective::{evaluate, ObjectiveValue, Weights};
use crate::{LbcdError, LbcdParams};

/// Slack on the stability margin when re-checking a point the allocation
/// solver put exactly on it.
const MARGIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdOutcome {
    pub configs: Vec<VideoConfig>,
    pub bandwidth: Vec<f64>,
    pub compute: Vec<f64>,
    /// Objective at the start and after every block step.
    pub trace: Vec<ObjectiveValue>,
    pub iterations: usize,
}

impl BcdOutcome {
    pub fn objective(&self) -> Option<ObjectiveValue> {
        self.trace.last().copied()
    }
}

/// The lightest model at the lowest resolution, lowest index on ties.
pub fn lightest_model(ctx: &SlotContext) -> Result<ModelId, LbcdError> {
    let r = *ctx
        .resolutions
        .first()
        .ok_or_else(|| LbcdError::Infeasible("empty resolution catalog".into()))?;
    let mut best: Option<(f64, usize)> = None;
    for m in 0..ctx.model_count() {
        let flops = ctx.complexity.flops(r, ModelId(m))?;
        if best.is_none_or(|(f, _)| flops < f) {
            best = Some((flops, m));
        }
    }
    best.map(|(_, m)| ModelId(m))
        .ok_or_else(|| LbcdError::Infeasible("empty model catalog".into()))
}

/// Lowest resolution, LCFSP, lightest model, equal split of the capacity.
pub fn initial_point(
    ctx: &SlotContext,
    cameras: &[usize],
    bandwidth: f64,
    compute: f64,
) -> Result<(Vec<VideoConfig>, Vec<f64>, Vec<f64>), LbcdError> {
    let cfg = VideoConfig {
        resolution: ctx.resolutions[0],
        policy: Policy::Lcfsp,
        model: lightest_model(ctx)?,
    };
    let k = cameras.len().max(1) as f64;
    Ok((
        vec![cfg; cameras.len()],
        vec![bandwidth / k; cameras.len()],
        vec![compute / k; cameras.len()],
    ))
}

/// Per camera, the configuration minimizing −w_p·p + w_a·A at its current
/// resources. FCFS candidates must keep λ ≤ (1 − ε)μ. Ties go to the first
/// candidate in catalog order.
pub fn optimize_configs(
    ctx: &SlotContext,
    cameras: &[usize],
    bandwidth: &[f64],
    compute: &[f64],
    weights: Weights,
    epsilon: f64,
) -> Result<Vec<VideoConfig>, LbcdError> {
    let candidates: Vec<VideoConfig> = ctx.configs().collect();
    if candidates.is_empty() {
        return Err(LbcdError::Infeasible("empty configuration catalog".into()));
    }
    cameras
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let mut best: Option<(f64, VideoConfig)> = None;
            for cfg in &candidates {
                let Some((p, a)) = candidate(ctx, n, cfg, bandwidth[i], compute[i], epsilon)?
                else {
                    continue;
                };
                let score = weights.score(p, a);
                if best.is_none_or(|(s, _)| score < s) {
                    best = Some((score, *cfg));
                }
            }
            best.map(|(_, c)| c)
                .ok_or(LbcdError::NoFiniteConfig { camera: n })
        })
        .collect()
}

/// (accuracy, closed-form AoPI) of `cfg` at the given resources, or `None`
/// when it is not admissible (zero rate or accuracy, or FCFS beyond the
/// margin).
pub(crate) fn candidate(
    ctx: &SlotContext,
    camera: usize,
    cfg: &VideoConfig,
    bandwidth: f64,
    compute: f64,
    epsilon: f64,
) -> Result<Option<(f64, f64)>, LbcdError> {
    let r = ctx.rates(camera, cfg, bandwidth, compute)?;
    if !(r.lambda > 0.0 && r.mu > 0.0 && r.accuracy > 0.0) {
        return Ok(None);
    }
    if cfg.policy == Policy::Fcfs && r.lambda > (1.0 - epsilon) * r.mu * (1.0 + MARGIN_SLACK) {
        return Ok(None);
    }
    let a = aopi_or_infinite(cfg.policy, r.lambda, r.mu, r.accuracy);
    Ok(a.is_finite().then_some((r.accuracy, a)))
}

/// Runs BCD for `cameras` on `server` from the standard initial point.
pub fn bcd_solve(
    ctx: &SlotContext,
    server: usize,
    cameras: &[usize],
    weights: Weights,
    params: &LbcdParams,
) -> Result<BcdOutcome, LbcdError> {
    let cap = *ctx.servers.get(server).ok_or_else(|| {
        LbcdError::Infeasible(format!("server {server} does not exist"))
    })?;
    if cameras.is_empty() {
        return Ok(BcdOutcome {
            configs: vec![],
            bandwidth: vec![],
            compute: vec![],
            trace: vec![],
            iterations: 0,
        });
    }
    if !(cap.bandwidth > 0.0 && cap.compute > 0.0) {
        return Err(LbcdError::Infeasible(format!(
            "server {server} has no capacity for {} camera(s)",
            cameras.len()
        )));
    }
    let start = initial_point(ctx, cameras, cap.bandwidth, cap.compute)?;
    bcd_solve_from(ctx, server, cameras, start, weights, params)
}

/// Rounds of policy exchange after the block loop settles.
const EXCHANGE_ROUNDS: usize = 3;

/// A flip is only tried when the other policy is already close at the
/// current resources; far-off flips do not survive the resource re-solve.
const EXCHANGE_SCREEN: f64 = 1.25;

fn worth_exchanging(
    ctx: &SlotContext,
    camera: usize,
    current: &VideoConfig,
    flipped: &VideoConfig,
    bandwidth: f64,
    compute: f64,
) -> Result<bool, LbcdError> {
    let r = ctx.rates(camera, current, bandwidth, compute)?;
    let now = aopi_or_infinite(current.policy, r.lambda, r.mu, r.accuracy);
    let other = aopi_or_infinite(flipped.policy, r.lambda, r.mu, r.accuracy);
    Ok(other <= EXCHANGE_SCREEN * now)
}

/// Bandwidth, compute, then bandwidth again for fixed configurations. Going
/// bandwidth-first lets a camera just switched to FCFS shed λ before its
/// compute floor is set.
fn reallocate(
    ctx: &SlotContext,
    cameras: &[usize],
    configs: &[VideoConfig],
    compute: &[f64],
    cap: EdgeServerCapacity,
    params: &LbcdParams,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let eps = params.epsilon_stability;
    let tol = params.solver_tol;
    let b = optimize_bandwidth(ctx, cameras, configs, compute, cap.bandwidth, eps, tol).ok()?;
    let c = optimize_compute(ctx, cameras, configs, &b.amounts, cap.compute, eps, tol).ok()?;
    let b = optimize_bandwidth(ctx, cameras, configs, &c.amounts, cap.bandwidth, eps, tol).ok()?;
    Some((b.amounts, c.amounts))
}

/// Runs BCD from a given feasible point. Each block step is kept only if it
/// does not raise the objective, so the trace is non-increasing.
///
/// Block descent can stall where switching a camera's policy only pays off
/// together with a resource shift (FCFS wants a lower load factor than
/// LCFSP). After the blocks settle, each camera's policy is flipped with the
/// resources re-solved, and the flip is kept if it lowers the objective.
pub fn bcd_solve_from(
    ctx: &SlotContext,
    server: usize,
    cameras: &[usize],
    start: (Vec<VideoConfig>, Vec<f64>, Vec<f64>),
    weights: Weights,
    params: &LbcdParams,
) -> Result<BcdOutcome, LbcdError> {
    let cap = ctx.servers[server];
    let eps = params.epsilon_stability;
    let (mut configs, mut bandwidth, mut compute) = start;
    let eval = |cfg: &[VideoConfig], b: &[f64], c: &[f64]| {
        evaluate(ctx, cameras, cfg, b, c, weights)
    };
    let mut current = eval(&configs, &bandwidth, &compute)?;
    let mut trace = vec![current];
    let mut iterations = 0;

    for _round in 0..EXCHANGE_ROUNDS {
        for _ in 0..params.max_bcd_iters {
            iterations += 1;
            let before = current.drift_penalty;

            let next = optimize_configs(ctx, cameras, &bandwidth, &compute, weights, eps)?;
            let value = eval(&next, &bandwidth, &compute)?;
            if value.drift_penalty <= current.drift_penalty {
                configs = next;
                current = value;
            }
            trace.push(current);

            let next = optimize_bandwidth(
                ctx,
                cameras,
                &configs,
                &compute,
                cap.bandwidth,
                eps,
                params.solver_tol,
            )?
            .amounts;
            let value = eval(&configs, &next, &compute)?;
            if value.drift_penalty <= current.drift_penalty {
                bandwidth = next;
                current = value;
            }
            trace.push(current);

            let next = optimize_compute(
                ctx,
                cameras,
                &configs,
                &bandwidth,
                cap.compute,
                eps,
                params.solver_tol,
            )?
            .amounts;
            let value = eval(&configs, &bandwidth, &next)?;
            if value.drift_penalty <= current.drift_penalty {
                compute = next;
                current = value;
            }
            trace.push(current);

            let gain = before - current.drift_penalty;
            if !(gain > params.bcd_rel_tol * before.abs().max(1e-12)) {
                break;
            }
        }

        let before = current.drift_penalty;
        let mut improved = false;
        for k in 0..cameras.len() {
            let mut trial = configs.clone();
            trial[k].policy = match trial[k].policy {
                Policy::Fcfs => Policy::Lcfsp,
                Policy::Lcfsp => Policy::Fcfs,
            };
            if !worth_exchanging(ctx, cameras[k], &configs[k], &trial[k], bandwidth[k], compute[k])? {
                continue;
            }
            let Some((b, c)) = reallocate(ctx, cameras, &trial, &compute, cap, params) else {
                continue;
            };
            let value = eval(&trial, &b, &c)?;
            if value.drift_penalty < current.drift_penalty {
                configs = trial;
                bandwidth = b;
                compute = c;
                current = value;
                improved = true;
            }
        }
        if improved {
            trace.push(current);
        }
        let gain = before - current.drift_penalty;
        if !(gain > params.bcd_rel_tol * before.abs().max(1e-12)) {
            break;
        }
    }
    Ok(BcdOutcome {
        configs,
        bandwidth,
        compute,
        trace,
        iterations,
    })
}
