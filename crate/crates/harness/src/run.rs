//! The slot loop: every (seed, strategy) pair runs on its own state over
//! identical inputs, optionally validated by simulation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use aopi_core::model::SlotContext;
use aopi_core::sim::{simulate_slot, SlotSimOptions};
use aopi_lbcd::baselines::{Dos, Jcab, Min};
use aopi_lbcd::bound::{long_run_bound_report, BoundConstants, BoundReport};
use aopi_lbcd::{Lbcd, SlotMetrics, Strategy};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::scenario::{ScenarioSpec, ScenarioState};
use crate::trace::TraceSeries;
use crate::HarnessError;

/// The running-average accuracy counts as converged within this distance of
/// P_min.
pub const CONVERGENCE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Lbcd,
    Dos,
    Jcab,
    Min,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [Self::Lbcd, Self::Dos, Self::Jcab, Self::Min];

    pub fn name(self) -> &'static str {
        match self {
            Self::Lbcd => "lbcd",
            Self::Dos => "dos",
            Self::Jcab => "jcab",
            Self::Min => "min",
        }
    }

    pub fn build(self, spec: &ScenarioSpec) -> Box<dyn Strategy> {
        let params = spec.lbcd;
        let p_min = spec.scenario.p_min;
        match self {
            Self::Lbcd => Box::new(Lbcd::new(params, p_min)),
            Self::Dos => Box::new(Dos::new(params, p_min)),
            Self::Jcab => Box::new(Jcab::new(params, p_min, spec.jcab.latency_budget)),
            Self::Min => Box::new(Min::new(params, p_min)),
        }
    }

    /// Whether decisions refer to the pooled single server.
    pub fn pooled(self) -> bool {
        self == Self::Min
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown strategy `{s}`, expected one of lbcd, dos, jcab, min"))
    }
}

/// Parses a comma-separated list, keeping the first occurrence of each.
pub fn parse_strategies(list: &str) -> Result<Vec<StrategyKind>, String> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let k: StrategyKind = part.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err("no strategies given".into());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form evaluation only.
    Analytic,
    /// Closed forms plus a discrete-event simulation of every slot.
    Simulate,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "analytic" => Ok(Self::Analytic),
            "simulate" => Ok(Self::Simulate),
            _ => Err(format!("unknown mode `{s}`, expected analytic or simulate")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Analytic => "analytic",
            Self::Simulate => "simulate",
        })
    }
}

/// Simulated counterpart of one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSlot {
    pub mean_aopi: Option<f64>,
    pub mean_accuracy: Option<f64>,
    /// (mean AoPI, empirical accuracy) per camera.
    pub cameras: Vec<(f64, f64)>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub metrics: SlotMetrics,
    pub simulated: Option<SimulatedSlot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub slots: Vec<SlotRecord>,
}

impl StrategyRun {
    pub fn aopi_series(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.metrics.mean_aopi).collect()
    }

    pub fn accuracy_series(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.metrics.mean_accuracy).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub mode: Mode,
    pub spec: ScenarioSpec,
    /// Sorted by (seed, strategy).
    pub runs: Vec<StrategyRun>,
    /// Accuracy surplus over P_min reachable in every slot, per seed.
    pub slack: BTreeMap<u64, Option<f64>>,
}

impl RunOutput {
    pub fn get(&self, strategy: StrategyKind, seed: u64) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.strategy == strategy && r.seed == seed)
    }
}

/// Seed of the simulation of one (seed, strategy, slot); independent of
/// which other strategies run.
fn sim_seed(seed: u64, strategy: StrategyKind, slot: usize) -> u64 {
    aopi_core::sim::camera_seed(
        seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (strategy as u64) << 56,
        slot,
    )
}

fn simulate(
    spec: &ScenarioSpec,
    strategy: StrategyKind,
    seed: u64,
    slot: usize,
    ctx: &SlotContext,
    decision: &aopi_core::model::SlotDecision,
) -> SimulatedSlot {
    let opts = SlotSimOptions {
        horizon_frames: spec.sim.horizon_frames,
        warmup_fraction: spec.sim.warmup_fraction,
        seed: sim_seed(seed, strategy, slot),
    };
    match simulate_slot(decision, ctx, &opts) {
        Ok(results) => {
            let n = results.len().max(1) as f64;
            let cameras: Vec<(f64, f64)> = results
                .iter()
                .map(|r| (r.mean_aopi, r.empirical_accuracy))
                .collect();
            let nonempty = !cameras.is_empty();
            SimulatedSlot {
                mean_aopi: nonempty.then(|| cameras.iter().map(|c| c.0).sum::<f64>() / n),
                mean_accuracy: nonempty.then(|| cameras.iter().map(|c| c.1).sum::<f64>() / n),
                cameras,
                error: None,
            }
        }
        Err(e) => SimulatedSlot {
            mean_aopi: None,
            mean_accuracy: None,
            cameras: vec![],
            error: Some(e.to_string()),
        },
    }
}

fn run_one(spec: &ScenarioSpec, state: &ScenarioState, strategy: StrategyKind, mode: Mode) -> StrategyRun {
    let mut controller = strategy.build(spec);
    let slots = (0..state.slots())
        .map(|t| {
            let ctx = state.context(t);
            let outcome = controller.step(t, &ctx);
            let simulated = (mode == Mode::Simulate).then(|| {
                let sim_ctx = if strategy.pooled() { ctx.pooled() } else { ctx.clone() };
                simulate(spec, strategy, state.seed, t, &sim_ctx, &outcome.decision)
            });
            SlotRecord {
                metrics: outcome.metrics,
                simulated,
            }
        })
        .collect();
    StrategyRun {
        strategy,
        seed: state.seed,
        slots,
    }
}

/// Largest mean accuracy any configuration choice reaches in the worst
/// slot, minus P_min.
fn accuracy_slack(spec: &ScenarioSpec, state: &ScenarioState) -> Option<f64> {
    let mut worst = f64::INFINITY;
    for t in 0..state.slots() {
        let ctx = state.context(t);
        let configs: Vec<_> = ctx.configs().collect();
        let mean = (0..ctx.cameras.len())
            .map(|n| {
                configs
                    .iter()
                    .filter_map(|c| ctx.rates(n, c, 1.0, 1.0).ok().map(|r| r.accuracy))
                    .fold(0.0, f64::max)
            })
            .sum::<f64>()
            / ctx.cameras.len().max(1) as f64;
        worst = worst.min(mean);
    }
    let eps = worst - spec.scenario.p_min;
    (eps > 0.0 && eps.is_finite()).then_some(eps)
}

/// Runs every strategy on every seed. Strategies never share state, so
/// each run is identical to running it alone.
pub fn run_experiment(
    spec: &ScenarioSpec,
    strategies: &[StrategyKind],
    mode: Mode,
    trace: Option<&TraceSeries>,
) -> Result<RunOutput, HarnessError> {
    spec.validate()?;
    let states = spec
        .scenario
        .seeds
        .iter()
        .map(|&seed| ScenarioState::new(spec, seed, trace))
        .collect::<Result<Vec<_>, _>>()?;
    let mut strategies = strategies.to_vec();
    strategies.sort();
    strategies.dedup();
    let jobs: Vec<(usize, StrategyKind)> = (0..states.len())
        .flat_map(|i| strategies.iter().map(move |&k| (i, k)))
        .collect();
    let runs: Vec<StrategyRun> = jobs
        .par_iter()
        .map(|&(i, k)| run_one(spec, &states[i], k, mode))
        .collect();
    let slack = states
        .iter()
        .map(|s| (s.seed, accuracy_slack(spec, s)))
        .collect();
    Ok(RunOutput {
        mode,
        spec: spec.clone(),
        runs,
        slack,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Running average of `accuracy` up to each slot.
pub fn running_average(accuracy: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    accuracy
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            sum += p;
            sum / (i + 1) as f64
        })
        .collect()
}

/// First slot at which the running-average accuracy reaches `level`.
pub fn first_reach(accuracy: &[f64], level: f64) -> Option<usize> {
    running_average(accuracy).iter().position(|&r| r >= level)
}

/// First slot from which the running-average accuracy stays at or above
/// `level` through the end of the run.
pub fn sustained_from(accuracy: &[f64], level: f64) -> Option<usize> {
    let avg = running_average(accuracy);
    let last_below = avg.iter().rposition(|&r| r < level);
    match last_below {
        None if avg.is_empty() => None,
        None => Some(0),
        Some(i) if i + 1 < avg.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub slots: usize,
    pub mean_aopi: Option<f64>,
    pub mean_accuracy: Option<f64>,
    pub final_q: Option<f64>,
    /// Slot from which the running-average accuracy stays within the
    /// tolerance of P_min.
    pub accuracy_convergence_slot: Option<usize>,
    pub fallback_slots: usize,
    pub simulated_mean_aopi: Option<f64>,
    pub simulated_mean_accuracy: Option<f64>,
    pub bound: Option<BoundReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    /// Means over seeds of the per-run long-run means.
    pub mean_aopi: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mode: Mode,
    pub slots: usize,
    pub seeds: Vec<u64>,
    pub p_min: f64,
    pub v: f64,
    pub runs: Vec<RunSummary>,
    pub strategies: Vec<StrategySummary>,
    /// Mean-AoPI ratios keyed `a/b`.
    pub ratios: BTreeMap<String, f64>,
}

/// Constants for the long-run bound check of a controller run: A_opt from
/// the pooled lower-bound run of the same seed, A_max the worst slot, Φ_max
/// the largest gap between the slot objective and the pooled one-slot
/// optimum the controller computed for server selection.
pub fn bound_constants(run: &StrategyRun, min_run: Option<&StrategyRun>, slack: Option<f64>) -> BoundConstants {
    let a_max = run
        .slots
        .iter()
        .map(|s| s.metrics.mean_aopi)
        .fold(None, |m: Option<f64>, a| Some(m.map_or(a, |m| m.max(a))));
    let phi_max = run
        .slots
        .iter()
        .filter_map(|s| {
            let pooled = s.metrics.bcd_traces.first()?.last()?;
            Some((s.metrics.objective.drift_penalty - pooled).max(0.0))
        })
        .fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g))));
    BoundConstants {
        a_opt_estimate: min_run.and_then(|m| mean(m.slots.iter().map(|s| s.metrics.mean_aopi))),
        a_max,
        phi_max,
        epsilon: slack,
    }
}

pub fn summarize(output: &RunOutput) -> Summary {
    let spec = &output.spec;
    let p_min = spec.scenario.p_min;
    let runs: Vec<RunSummary> = output
        .runs
        .iter()
        .map(|run| {
            let accuracy = run.accuracy_series();
            let aopi = run.aopi_series();
            let bound = (run.strategy == StrategyKind::Lbcd).then(|| {
                let constants = bound_constants(
                    run,
                    output.get(StrategyKind::Min, run.seed),
                    output.slack.get(&run.seed).copied().flatten(),
                );
                long_run_bound_report(&aopi, &accuracy, &constants, spec.lbcd.v, p_min)
            });
            let sim = |f: fn(&SimulatedSlot) -> Option<f64>| {
                let values: Vec<f64> = run
                    .slots
                    .iter()
                    .filter_map(|s| s.simulated.as_ref().and_then(f))
                    .collect();
                mean(values.into_iter())
            };
            RunSummary {
                strategy: run.strategy,
                seed: run.seed,
                slots: run.slots.len(),
                mean_aopi: mean(aopi.iter().copied()),
                mean_accuracy: mean(accuracy.iter().copied()),
                final_q: run.slots.last().map(|s| s.metrics.q_after),
                accuracy_convergence_slot: sustained_from(&accuracy, p_min - CONVERGENCE_TOLERANCE),
                fallback_slots: run.slots.iter().filter(|s| s.metrics.fallback.is_some()).count(),
                simulated_mean_aopi: sim(|s| s.mean_aopi),
                simulated_mean_accuracy: sim(|s| s.mean_accuracy),
                bound,
            }
        })
        .collect();

    let mut kinds: Vec<StrategyKind> = runs.iter().map(|r| r.strategy).collect();
    kinds.sort();
    kinds.dedup();
    let strategies: Vec<StrategySummary> = kinds
        .iter()
        .map(|&k| {
            let of = |f: fn(&RunSummary) -> Option<f64>| {
                let values: Option<Vec<f64>> =
                    runs.iter().filter(|r| r.strategy == k).map(f).collect();
                values.and_then(|v| mean(v.into_iter()))
            };
            StrategySummary {
                strategy: k,
                mean_aopi: of(|r| r.mean_aopi),
                mean_accuracy: of(|r| r.mean_accuracy),
            }
        })
        .collect();
    let mut ratios = BTreeMap::new();
    for a in &strategies {
        for b in &strategies {
            if a.strategy == b.strategy {
                continue;
            }
            if let (Some(x), Some(y)) = (a.mean_aopi, b.mean_aopi) {
                if y > 0.0 && (x / y).is_finite() {
                    ratios.insert(format!("{}/{}", a.strategy, b.strategy), x / y);
                }
            }
        }
    }
    Summary {
        schema_version: crate::scenario::SCHEMA_VERSION,
        mode: output.mode,
        slots: spec.scenario.slots,
        seeds: spec.scenario.seeds.clone(),
        p_min,
        v: spec.lbcd.v,
        runs,
        strategies,
        ratios,
    }
}
