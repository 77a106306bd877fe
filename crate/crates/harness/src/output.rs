//! Result files: the per-camera decision log `slots.csv`, per-slot means
//! `slot_means.csv`, `summary.json` and plot data under `curves/`.
//!
//! `slots.csv` columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | strategy | lbcd, dos, jcab or min |
//! | seed | scenario seed |
//! | slot | slot index from 0 |
//! | camera | camera index |
//! | server | assigned server (always 0 for min, which pools all servers) |
//! | resolution | frame side in pixels |
//! | policy | FCFS or LCFSP |
//! | model | model index into the catalog |
//! | bandwidth_hz, compute_flops | allocated resources |
//! | lambda, mu | transmission and computation rates, frames/s |
//! | p | profiled accuracy of the configuration |
//! | aopi_closed_form | AoPI from the closed forms, seconds (`inf` if unstable) |
//! | q_after | virtual queue after the slot |
//! | aopi_simulated, accuracy_simulated | simulation mode only, empty otherwise |

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use aopi_core::analytics::{aopi_fcfs, aopi_lcfsp, min_mu_for_target, policy_threshold};
use aopi_core::model::Policy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::run::{running_average, summarize, RunOutput, StrategyKind, CONVERGENCE_TOLERANCE};
use crate::HarnessError;

pub const SLOTS_HEADER: [&str; 17] = [
    "strategy",
    "seed",
    "slot",
    "camera",
    "server",
    "resolution",
    "policy",
    "model",
    "bandwidth_hz",
    "compute_flops",
    "lambda",
    "mu",
    "p",
    "aopi_closed_form",
    "q_after",
    "aopi_simulated",
    "accuracy_simulated",
];

pub const SLOT_MEANS_HEADER: [&str; 13] = [
    "strategy",
    "seed",
    "slot",
    "mean_aopi",
    "mean_accuracy",
    "running_accuracy",
    "q_before",
    "q_after",
    "objective",
    "fallback",
    "flagged_cameras",
    "aopi_simulated",
    "accuracy_simulated",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_slots_csv<W: Write>(writer: W, output: &RunOutput) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SLOTS_HEADER)?;
    for run in &output.runs {
        for rec in &run.slots {
            let m = &rec.metrics;
            for (n, c) in m.cameras.iter().enumerate() {
                let sim = rec.simulated.as_ref().and_then(|s| s.cameras.get(n));
                w.write_record([
                    run.strategy.to_string(),
                    run.seed.to_string(),
                    m.slot.to_string(),
                    n.to_string(),
                    c.server.to_string(),
                    c.config.resolution.to_string(),
                    c.config.policy.to_string(),
                    c.config.model.0.to_string(),
                    c.bandwidth.to_string(),
                    c.compute.to_string(),
                    c.lambda.to_string(),
                    c.mu.to_string(),
                    c.accuracy.to_string(),
                    c.aopi.to_string(),
                    m.q_after.to_string(),
                    opt(sim.map(|s| s.0)),
                    opt(sim.map(|s| s.1)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_slot_means_csv<W: Write>(writer: W, output: &RunOutput) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SLOT_MEANS_HEADER)?;
    for run in &output.runs {
        let running = running_average(&run.accuracy_series());
        for (rec, avg) in run.slots.iter().zip(running) {
            let m = &rec.metrics;
            let flagged: Vec<String> = m.flagged.iter().map(usize::to_string).collect();
            w.write_record([
                run.strategy.to_string(),
                run.seed.to_string(),
                m.slot.to_string(),
                m.mean_aopi.to_string(),
                m.mean_accuracy.to_string(),
                avg.to_string(),
                m.q_before.to_string(),
                m.q_after.to_string(),
                m.objective.drift_penalty.to_string(),
                m.fallback.clone().unwrap_or_default(),
                flagged.join(" "),
                opt(rec.simulated.as_ref().and_then(|s| s.mean_aopi)),
                opt(rec.simulated.as_ref().and_then(|s| s.mean_accuracy)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of `slots.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub slot: usize,
    pub camera: usize,
    pub server: usize,
    pub resolution: u32,
    pub policy: Policy,
    pub model: usize,
    pub bandwidth_hz: f64,
    pub compute_flops: f64,
    pub lambda: f64,
    pub mu: f64,
    pub p: f64,
    pub aopi_closed_form: f64,
    pub q_after: f64,
    pub aopi_simulated: Option<f64>,
    pub accuracy_simulated: Option<f64>,
}

#[derive(Debug, Error)]
pub enum SlotsCsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("header must be `{expected}`, got `{0}`", expected = SLOTS_HEADER.join(","))]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, line: u64) -> Result<T, SlotsCsvError>
where
    T::Err: std::fmt::Display,
{
    let raw = record.get(i).unwrap_or("");
    raw.parse().map_err(|e: T::Err| SlotsCsvError::Row {
        line,
        reason: format!("{}: `{raw}`: {e}", SLOTS_HEADER[i]),
    })
}

fn optional(record: &csv::StringRecord, i: usize, line: u64) -> Result<Option<f64>, SlotsCsvError> {
    if record.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(record, i, line).map(Some)
    }
}

fn non_negative(v: f64, name: &str, line: u64) -> Result<f64, SlotsCsvError> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(SlotsCsvError::Row {
            line,
            reason: format!("{name} must be non-negative, got {v}"),
        })
    }
}

pub fn read_slots_csv<R: Read>(reader: R) -> Result<Vec<SlotRow>, SlotsCsvError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SLOTS_HEADER) {
        return Err(SlotsCsvError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let r = record?;
        let line = r.position().map_or(0, |p| p.line());
        let resolution: u32 = field(&r, 5, line)?;
        if resolution == 0 {
            return Err(SlotsCsvError::Row {
                line,
                reason: "resolution must be positive".into(),
            });
        }
        let p: f64 = field(&r, 12, line)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(SlotsCsvError::Row {
                line,
                reason: format!("p must lie in [0, 1], got {p}"),
            });
        }
        rows.push(SlotRow {
            strategy: field(&r, 0, line)?,
            seed: field(&r, 1, line)?,
            slot: field(&r, 2, line)?,
            camera: field(&r, 3, line)?,
            server: field(&r, 4, line)?,
            resolution,
            policy: field(&r, 6, line)?,
            model: field(&r, 7, line)?,
            bandwidth_hz: non_negative(field(&r, 8, line)?, "bandwidth_hz", line)?,
            compute_flops: non_negative(field(&r, 9, line)?, "compute_flops", line)?,
            lambda: non_negative(field(&r, 10, line)?, "lambda", line)?,
            mu: non_negative(field(&r, 11, line)?, "mu", line)?,
            p,
            aopi_closed_form: non_negative(field(&r, 13, line)?, "aopi_closed_form", line)?,
            q_after: non_negative(field(&r, 14, line)?, "q_after", line)?,
            aopi_simulated: optional(&r, 15, line)?,
            accuracy_simulated: optional(&r, 16, line)?,
        });
    }
    Ok(rows)
}

/// Long-run figures recomputed from a decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub slots: usize,
    pub mean_aopi: f64,
    pub mean_accuracy: f64,
    pub final_q: f64,
    pub accuracy_convergence_slot: Option<usize>,
}

/// Per (strategy, seed): slot means over cameras, then means over slots.
pub fn summarize_log(rows: &[SlotRow], p_min: f64) -> Vec<LogSummary> {
    // (strategy, seed) → slot → (Σ aopi, Σ p, cameras, q_after)
    let mut groups: BTreeMap<(StrategyKind, u64), BTreeMap<usize, (f64, f64, usize, f64)>> =
        BTreeMap::new();
    for r in rows {
        let slot = groups
            .entry((r.strategy, r.seed))
            .or_default()
            .entry(r.slot)
            .or_insert((0.0, 0.0, 0, r.q_after));
        slot.0 += r.aopi_closed_form;
        slot.1 += r.p;
        slot.2 += 1;
        slot.3 = r.q_after;
    }
    groups
        .into_iter()
        .map(|((strategy, seed), slots)| {
            let n = slots.len() as f64;
            let aopi: Vec<f64> = slots.values().map(|s| s.0 / s.2 as f64).collect();
            let accuracy: Vec<f64> = slots.values().map(|s| s.1 / s.2 as f64).collect();
            LogSummary {
                strategy,
                seed,
                slots: slots.len(),
                mean_aopi: aopi.iter().sum::<f64>() / n,
                mean_accuracy: accuracy.iter().sum::<f64>() / n,
                final_q: slots.values().last().map_or(0.0, |s| s.3),
                accuracy_convergence_slot: crate::run::sustained_from(
                    &accuracy,
                    p_min - CONVERGENCE_TOLERANCE,
                ),
            }
        })
        .collect()
}

/// Load factors ρ = k/100 for k = 1..=99.
fn load_grid() -> impl Iterator<Item = f64> {
    (1..100).map(|k| k as f64 / 100.0)
}

/// p*(ρ), the accuracy at which the two policies tie.
pub fn write_policy_threshold_curve<W: Write>(writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rho", "p_star"])?;
    for rho in load_grid() {
        w.write_record([rho.to_string(), policy_threshold(rho).p_star.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// AoPI of both policies against λ at μ = 1 for several accuracies.
pub fn write_aopi_curve<W: Write>(writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["p", "lambda", "mu", "aopi_fcfs", "aopi_lcfsp"])?;
    for p in [0.4, 0.7, 1.0] {
        for k in 1..=200 {
            let lambda = k as f64 / 100.0;
            let fcfs = aopi_fcfs(lambda, 1.0, p).map(|a| a.seconds()).ok();
            let lcfsp = aopi_lcfsp(lambda, 1.0, p).map(|a| a.seconds()).ok();
            w.write_record([
                p.to_string(),
                lambda.to_string(),
                "1".to_string(),
                opt(fcfs),
                opt(lcfsp),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Smallest μ meeting an AoPI target, against λ, per policy.
pub fn write_min_rate_curve<W: Write>(writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["target", "p", "lambda", "min_mu_fcfs", "min_mu_lcfsp"])?;
    for target in [0.1, 0.2, 0.5] {
        for p in [0.6, 0.9] {
            for k in 1..=200 {
                let lambda = k as f64 * 0.5;
                let rate = |policy| {
                    min_mu_for_target(policy, target, lambda, p)
                        .ok()
                        .and_then(|r| r.rate())
                };
                w.write_record([
                    target.to_string(),
                    p.to_string(),
                    lambda.to_string(),
                    opt(rate(Policy::Fcfs)),
                    opt(rate(Policy::Lcfsp)),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>, HarnessError> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::io(path, std::io::Error::other(e.to_string()))
}

pub fn write_curves(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let p = dir.join("policy_threshold.csv");
    write_policy_threshold_curve(create(&p)?).map_err(|e| csv_io(&p, e))?;
    let p = dir.join("aopi_vs_lambda.csv");
    write_aopi_curve(create(&p)?).map_err(|e| csv_io(&p, e))?;
    let p = dir.join("min_rate.csv");
    write_min_rate_curve(create(&p)?).map_err(|e| csv_io(&p, e))?;
    Ok(())
}

/// Writes every result file into `dir`.
pub fn emit_results(output: &RunOutput, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let p = dir.join("slots.csv");
    write_slots_csv(create(&p)?, output).map_err(|e| csv_io(&p, e))?;
    let p = dir.join("slot_means.csv");
    write_slot_means_csv(create(&p)?, output).map_err(|e| csv_io(&p, e))?;
    let p = dir.join("summary.json");
    let mut f = create(&p)?;
    serde_json::to_writer_pretty(&mut f, &summarize(output))
        .map_err(|e| HarnessError::io(&p, e.into()))?;
    f.write_all(b"\n").and_then(|_| f.flush()).map_err(|e| HarnessError::io(&p, e))?;
    write_curves(&dir.join("curves"))
}
