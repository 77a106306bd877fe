//! Comparison strategies sharing the controller's machinery.
//!
//! * [`Dos`] maximizes Σ(p − A) with the same selection and BCD solver.
//! * [`Jcab`] maximizes accuracy subject to a per-frame latency budget,
//!   splits compute in proportion to per-frame complexity.
//! * [`Min`] drops the accuracy requirement and pools every server,
//!   giving a per-slot lower bound on AoPI.
//!
//! Each keeps a shadow virtual queue so its accuracy debt is reported on the
//! same scale as the controller's; the queue never affects its decisions.

use aopi_core::analytics::aopi_or_infinite;
use aopi_core::model::{ModelId, Policy, SlotContext, SlotDecision, VideoConfig};
use serde::{Deserialize, Serialize};

use crate::bcd::bcd_solve;
use crate::controller::{
    ensure_feasible, fallback_decision, finish, solve_per_server, trace_values, StepOutcome,
    Strategy,
};
use crate::objective::Weights;
use crate::queue::VirtualQueue;
use crate::select::{first_fit_decreasing, select_servers};
use crate::{LbcdError, LbcdParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Dos,
    Jcab,
    Min,
}

/// Accuracy minus AoPI, weighted 1:1.
pub const DOS_WEIGHTS: Weights = Weights {
    accuracy: 1.0,
    aopi: 1.0,
};

pub const DEFAULT_JCAB_BUDGET: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct Dos {
    pub params: LbcdParams,
    pub queue: VirtualQueue,
    previous: Option<SlotDecision>,
}

impl Dos {
    pub fn new(params: LbcdParams, p_min: f64) -> Self {
        Self {
            params,
            queue: VirtualQueue::new(p_min),
            previous: None,
        }
    }

    fn solve(&self, ctx: &SlotContext, traces: &mut Vec<Vec<f64>>) -> Result<SlotDecision, LbcdError> {
        let selection = select_servers(ctx, DOS_WEIGHTS, &self.params)?;
        traces.push(trace_values(&selection.pooled));
        solve_per_server(ctx, selection.assignment, DOS_WEIGHTS, &self.params, traces)
    }
}

pub fn dos_step(state: &mut Dos, slot: usize, ctx: &SlotContext) -> StepOutcome {
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
    finish(slot, ctx, decision, &mut state.queue, v, ctx.servers.len(), traces, fallback, vec![])
}

impl Strategy for Dos {
    fn name(&self) -> &str {
        "dos"
    }

    fn step(&mut self, slot: usize, ctx: &SlotContext) -> StepOutcome {
        dos_step(self, slot, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct Min {
    pub params: LbcdParams,
    pub queue: VirtualQueue,
}

impl Min {
    pub fn new(params: LbcdParams, p_min: f64) -> Self {
        Self {
            params,
            queue: VirtualQueue::new(p_min),
        }
    }
}

/// BCD with q = 0 on one virtual server holding all capacity. The decision
/// assigns every camera to server 0 of [`SlotContext::pooled`].
pub fn min_step(state: &mut Min, slot: usize, ctx: &SlotContext) -> StepOutcome {
    let pooled = ctx.pooled();
    let cams: Vec<usize> = (0..ctx.cameras.len()).collect();
    let weights = Weights::drift_plus_penalty(0.0, state.params.v);
    let mut traces = Vec::new();
    let solved = bcd_solve(&pooled, 0, &cams, weights, &state.params).and_then(|out| {
        traces.push(trace_values(&out));
        let decision = SlotDecision {
            assignment: vec![0; cams.len()],
            configs: out.configs,
            bandwidth: out.bandwidth,
            compute: out.compute,
        };
        ensure_feasible(&decision, &pooled)?;
        Ok(decision)
    });
    let (decision, fallback) = match solved {
        Ok(d) => (d, None),
        Err(e) => (
            fallback_decision(None, &pooled, state.params.epsilon_stability),
            Some(e.to_string()),
        ),
    };
    let v = state.params.v;
    finish(slot, &pooled, decision, &mut state.queue, v, 1, traces, fallback, vec![])
}

impl Strategy for Min {
    fn name(&self) -> &str {
        "min"
    }

    fn step(&mut self, slot: usize, ctx: &SlotContext) -> StepOutcome {
        min_step(self, slot, ctx)
    }
}

#[derive(Debug, Clone)]
pub struct Jcab {
    pub params: LbcdParams,
    /// Budget on expected transmission plus computation latency, seconds.
    pub latency_budget: f64,
    pub queue: VirtualQueue,
    previous: Option<SlotDecision>,
}

/// Result of JCAB on one server.
#[derive(Debug, Clone, PartialEq)]
pub struct JcabAllocation {
    pub configs: Vec<VideoConfig>,
    pub bandwidth: Vec<f64>,
    pub compute: Vec<f64>,
    /// Positions (into the input camera list) that no candidate could serve
    /// within the budget.
    pub flagged: Vec<usize>,
}

fn latency(ctx: &SlotContext, camera: usize, cfg: &VideoConfig, b: f64, c: f64) -> Result<(f64, f64), LbcdError> {
    let r = ctx.rates(camera, cfg, b, c)?;
    let lat = if r.lambda > 0.0 && r.mu > 0.0 {
        1.0 / r.lambda + 1.0 / r.mu
    } else {
        f64::INFINITY
    };
    Ok((r.accuracy, lat))
}

/// Highest-accuracy (resolution, model) meeting the budget at the given
/// resources; ties go to lower latency, then catalog order. Returns the
/// minimum-latency pair and `true` when nothing meets the budget.
fn pick(
    ctx: &SlotContext,
    camera: usize,
    b: f64,
    c: f64,
    budget: f64,
) -> Result<(VideoConfig, bool), LbcdError> {
    let mut best: Option<(f64, f64, VideoConfig)> = None;
    let mut fastest: Option<(f64, VideoConfig)> = None;
    for &resolution in &ctx.resolutions {
        for m in 0..ctx.model_count() {
            let cfg = VideoConfig {
                resolution,
                policy: Policy::Lcfsp,
                model: ModelId(m),
            };
            let (p, lat) = latency(ctx, camera, &cfg, b, c)?;
            if fastest.is_none_or(|(l, _)| lat < l) {
                fastest = Some((lat, cfg));
            }
            if lat <= budget && best.is_none_or(|(bp, bl, _)| p > bp || (p == bp && lat < bl)) {
                best = Some((p, lat, cfg));
            }
        }
    }
    match (best, fastest) {
        (Some((_, _, cfg)), _) => Ok((cfg, false)),
        (None, Some((_, cfg))) => Ok((cfg, true)),
        (None, None) => Err(LbcdError::Infeasible("empty configuration catalog".into())),
    }
}

/// JCAB on one server: alternate between choosing configurations under
/// the latency budget and reallocating resources, bandwidth ∝ r·√(α/SE)
/// (the split minimizing total transmission latency) and compute ∝ ξ(r, m),
/// until the configurations repeat. The policy is then the one with the
/// smaller closed-form AoPI, FCFS only within the stability margin.
pub fn jcab_allocate(
    ctx: &SlotContext,
    cameras: &[usize],
    bandwidth: f64,
    compute: f64,
    budget: f64,
    params: &LbcdParams,
) -> Result<JcabAllocation, LbcdError> {
    let k = cameras.len();
    if k == 0 {
        return Ok(JcabAllocation {
            configs: vec![],
            bandwidth: vec![],
            compute: vec![],
            flagged: vec![],
        });
    }
    if !(bandwidth > 0.0 && compute > 0.0) {
        return Err(LbcdError::Infeasible(format!(
            "no capacity for {k} camera(s)"
        )));
    }
    let mut b = vec![bandwidth / k as f64; k];
    let mut c = vec![compute / k as f64; k];
    let mut configs: Vec<VideoConfig> = Vec::new();
    for _ in 0..params.max_bcd_iters {
        let next: Vec<VideoConfig> = (0..k)
            .map(|i| pick(ctx, cameras[i], b[i], c[i], budget).map(|(cfg, _)| cfg))
            .collect::<Result<_, _>>()?;
        let bw_weight: Vec<f64> = (0..k)
            .map(|i| {
                let per_hz = ctx.cameras[cameras[i]].link.frames_per_hz(next[i].resolution);
                (1.0 / per_hz).sqrt()
            })
            .collect::<Vec<_>>();
        let cp_weight: Vec<f64> = next
            .iter()
            .map(|cfg| ctx.complexity.flops(cfg.resolution, cfg.model))
            .collect::<Result<_, _>>()?;
        let (sb, sc) = (bw_weight.iter().sum::<f64>(), cp_weight.iter().sum::<f64>());
        b = bw_weight.iter().map(|w| bandwidth * w / sb).collect();
        c = cp_weight.iter().map(|w| compute * w / sc).collect();
        let settled = next == configs;
        configs = next;
        if settled {
            break;
        }
    }
    // Final pass at the settled resources.
    let mut flagged = Vec::new();
    for i in 0..k {
        let (_, lat) = latency(ctx, cameras[i], &configs[i], b[i], c[i])?;
        if lat > budget {
            let (cfg, missed) = pick(ctx, cameras[i], b[i], c[i], budget)?;
            configs[i] = cfg;
            if missed {
                flagged.push(i);
            }
        }
    }
    for i in 0..k {
        let r = ctx.rates(cameras[i], &configs[i], b[i], c[i])?;
        let fcfs = if r.lambda <= (1.0 - params.epsilon_stability) * r.mu {
            aopi_or_infinite(Policy::Fcfs, r.lambda, r.mu, r.accuracy)
        } else {
            f64::INFINITY
        };
        let lcfsp = aopi_or_infinite(Policy::Lcfsp, r.lambda, r.mu, r.accuracy);
        configs[i].policy = if fcfs < lcfsp {
            Policy::Fcfs
        } else {
            Policy::Lcfsp
        };
    }
    Ok(JcabAllocation {
        configs,
        bandwidth: b,
        compute: c,
        flagged,
    })
}

impl Jcab {
    pub fn new(params: LbcdParams, p_min: f64, latency_budget: f64) -> Self {
        Self {
            params,
            latency_budget,
            queue: VirtualQueue::new(p_min),
            previous: None,
        }
    }

    fn solve(&self, ctx: &SlotContext) -> Result<(SlotDecision, Vec<usize>), LbcdError> {
        let all: Vec<usize> = (0..ctx.cameras.len()).collect();
        let pooled = ctx.pooled();
        let cap = pooled.servers[0];
        let ideal = jcab_allocate(
            &pooled,
            &all,
            cap.bandwidth,
            cap.compute,
            self.latency_budget,
            &self.params,
        )?;
        let demands: Vec<(f64, f64)> = ideal
            .bandwidth
            .iter()
            .copied()
            .zip(ideal.compute.iter().copied())
            .collect();
        let assignment = first_fit_decreasing(&demands, &ctx.servers);
        let n = ctx.cameras.len();
        let mut decision = SlotDecision {
            assignment,
            configs: ideal.configs.clone(),
            bandwidth: vec![0.0; n],
            compute: vec![0.0; n],
        };
        let mut flagged = Vec::new();
        for (server, cap) in ctx.servers.iter().enumerate() {
            let cams = decision.cameras_on(server);
            let out = jcab_allocate(
                ctx,
                &cams,
                cap.bandwidth,
                cap.compute,
                self.latency_budget,
                &self.params,
            )?;
            for (k, &cam) in cams.iter().enumerate() {
                decision.configs[cam] = out.configs[k];
                decision.bandwidth[cam] = out.bandwidth[k];
                decision.compute[cam] = out.compute[k];
            }
            flagged.extend(out.flagged.iter().map(|&k| cams[k]));
        }
        flagged.sort_unstable();
        ensure_feasible(&decision, ctx)?;
        Ok((decision, flagged))
    }
}

pub fn jcab_step(state: &mut Jcab, slot: usize, ctx: &SlotContext) -> StepOutcome {
    let (decision, flagged, fallback) = match state.solve(ctx) {
        Ok((d, f)) => (d, f, None),
        Err(e) => (
            fallback_decision(state.previous.as_ref(), ctx, state.params.epsilon_stability),
            vec![],
            Some(e.to_string()),
        ),
    };
    state.previous = Some(decision.clone());
    let v = state.params.v;
    finish(slot, ctx, decision, &mut state.queue, v, ctx.servers.len(), vec![], fallback, flagged)
}

impl Strategy for Jcab {
    fn name(&self) -> &str {
        "jcab"
    }

    fn step(&mut self, slot: usize, ctx: &SlotContext) -> StepOutcome {
        jcab_step(self, slot, ctx)
    }
}
