//! Discrete-event simulation of one camera feeding one edge-server container.
//!
//! The camera is a zero-wait source: frame i+1 starts transmitting the
//! instant frame i's transmission ends, and a frame's generation time is its
//! transmission start. Transmission and service times are exponential and
//! recognition outcomes are Bernoulli, each drawn from its own counter-based
//! stream so that switching policy leaves the other draws untouched.
//!
//! AoPI(t) = t − (generation time of the newest accurately recognized
//! completed frame), starting from a fictitious accurate frame at t = 0.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AopiInputs, ModelError, Policy, SlotContext, SlotDecision};

/// Number of batches for the batch-means confidence interval.
pub const BATCHES: usize = 50;
/// Two-sided 95% Student-t quantile with `BATCHES - 1` degrees of freedom.
const T_975_49: f64 = 2.009_575_234_489_209;

pub const MIN_HORIZON_FRAMES: usize = 1000;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;
/// Completed frames needed before the moment diagnostics are trusted.
pub const MIN_DIAGNOSTIC_COMPLETIONS: usize = 100_000;

const STREAM_TRANSMISSION: u64 = 0;
const STREAM_SERVICE: u64 = 1;
const STREAM_ACCURACY: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("FCFS simulation is unstable: lambda={lambda} >= mu={mu}")]
    Unstable { lambda: f64, mu: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("need at least {needed} completed frames for diagnostics, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("camera {camera}: {source}")]
    Camera {
        camera: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One frame's life in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: u64,
    /// Transmission start.
    pub gen_time: f64,
    /// Transmission end, i.e. arrival at the server.
    pub arrive_time: f64,
    /// `None` when preempted or still in the system at the horizon.
    pub complete_time: Option<f64>,
    /// Recognition outcome; always false for frames that never completed.
    pub accurate: bool,
    pub preempted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub inputs: AopiInputs,
    pub horizon_frames: usize,
    pub warmup_fraction: f64,
    pub rng_seed: u64,
}

impl SimConfig {
    pub fn new(inputs: AopiInputs, horizon_frames: usize, rng_seed: u64) -> Self {
        Self {
            inputs,
            horizon_frames,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let i = &self.inputs;
        if i.policy == Policy::Fcfs && i.lambda.is_finite() && i.lambda >= i.mu {
            return Err(SimError::Unstable {
                lambda: i.lambda,
                mu: i.mu,
            });
        }
        i.validate()?;
        if self.horizon_frames < MIN_HORIZON_FRAMES {
            return Err(SimError::InvalidConfig(format!(
                "horizon_frames must be >= {MIN_HORIZON_FRAMES}, got {}",
                self.horizon_frames
            )));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidConfig(format!(
                "warmup_fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

/// Empirical estimates of intermediate quantities of the AoPI derivations,
/// over the post-warmup window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mean_transmission: f64,
    /// FCFS only: mean of completion minus service start.
    pub mean_service: Option<f64>,
    /// FCFS only: E[Tᵢ·Wᵢ₊₁], transmission time of frame i times the
    /// queueing wait of frame i+1.
    pub tx_wait_product: Option<f64>,
    /// Completions per second.
    pub effective_rate: f64,
    /// Mean time between consecutive completions.
    pub interdeparture_mean: f64,
    pub interdeparture_second_moment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub mean_aopi: f64,
    /// Half-width of the batch-means 95% confidence interval.
    pub aopi_ci95: f64,
    pub empirical_accuracy: f64,
    pub frames_generated: usize,
    pub frames_completed: usize,
    pub frames_preempted: usize,
    /// Post-warmup completions, the sample behind the diagnostics.
    pub window_completions: usize,
    pub window_start: f64,
    pub window_end: f64,
    pub diagnostics: Diagnostics,
}

struct Streams {
    transmission: ChaCha8Rng,
    service: ChaCha8Rng,
    accuracy: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            transmission: stream(STREAM_TRANSMISSION),
            service: stream(STREAM_SERVICE),
            accuracy: stream(STREAM_ACCURACY),
        }
    }
}

/// Runs the event loop and returns the frame log.
pub fn simulate_log(cfg: &SimConfig) -> Result<Vec<FrameRecord>, SimError> {
    cfg.validate()?;
    let AopiInputs {
        lambda,
        mu,
        accuracy,
        policy,
    } = cfg.inputs;
    let transmission = Exp::new(lambda).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let service = Exp::new(mu).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let outcome = Bernoulli::new(accuracy).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    let mut streams = Streams::new(cfg.rng_seed);

    let horizon = cfg.horizon_frames;
    let mut log: Vec<FrameRecord> = Vec::with_capacity(horizon);
    let mut work: Vec<f64> = Vec::with_capacity(horizon);
    let mut waiting: VecDeque<usize> = VecDeque::new();
    // (frame, completion time) of the frame in service
    let mut in_service: Option<(usize, f64)> = None;
    let mut gen_time = 0.0;

    for i in 0..horizon {
        let arrive = gen_time + transmission.sample(&mut streams.transmission);
        work.push(service.sample(&mut streams.service));
        log.push(FrameRecord {
            index: i as u64,
            gen_time,
            arrive_time: arrive,
            complete_time: None,
            accurate: outcome.sample(&mut streams.accuracy),
            preempted: false,
        });

        // Completions that happen before this arrival.
        while let Some((j, done)) = in_service {
            if done > arrive {
                break;
            }
            log[j].complete_time = Some(done);
            in_service = waiting.pop_front().map(|k| (k, done + work[k]));
        }

        match policy {
            Policy::Fcfs => {
                if in_service.is_none() {
                    in_service = Some((i, arrive + work[i]));
                } else {
                    waiting.push_back(i);
                }
            }
            Policy::Lcfsp => {
                if let Some((j, _)) = in_service {
                    log[j].preempted = true;
                }
                in_service = Some((i, arrive + work[i]));
            }
        }
        gen_time = arrive;
    }

    for rec in &mut log {
        if rec.complete_time.is_none() {
            rec.accurate = false;
        }
    }
    Ok(log)
}

/// The AoPI sample path: a staircase of reference generation times. Between
/// jumps AoPI grows with slope 1; at an accurate completion it drops to the
/// completed frame's age.
#[derive(Debug, Clone, PartialEq)]
pub struct AopiPath {
    /// (jump time, generation time in effect from then on), ascending,
    /// starting with (0, 0).
    pub jumps: Vec<(f64, f64)>,
}

impl AopiPath {
    pub fn from_log(log: &[FrameRecord]) -> Self {
        let mut jumps = vec![(0.0, 0.0)];
        for rec in log {
            if let (Some(done), true) = (rec.complete_time, rec.accurate) {
                jumps.push((done, rec.gen_time));
            }
        }
        Self { jumps }
    }

    fn segment_at(&self, t: f64) -> usize {
        self.jumps.partition_point(|&(at, _)| at <= t).saturating_sub(1)
    }

    /// AoPI at time t (right-continuous).
    pub fn age_at(&self, t: f64) -> f64 {
        t - self.jumps[self.segment_at(t)].1
    }

    /// ∫ AoPI(t) dt over [from, to].
    pub fn area(&self, from: f64, to: f64) -> f64 {
        if to <= from {
            return 0.0;
        }
        let mut total = 0.0;
        let mut k = self.segment_at(from);
        let mut a = from;
        while a < to {
            let reference = self.jumps[k].1;
            let b = self.jumps.get(k + 1).map_or(to, |&(at, _)| at.min(to));
            total += (b - a) * (0.5 * (a + b) - reference);
            a = b;
            k += 1;
        }
        total
    }
}

/// Summarizes a frame log into a [`SimResult`].
pub fn summarize(log: &[FrameRecord], warmup_fraction: f64, policy: Policy) -> SimResult {
    let horizon = log.len();
    let first = ((warmup_fraction * horizon as f64).floor() as usize).min(horizon - 1);
    let start = log[first].gen_time;
    let end = log[horizon - 1].arrive_time;
    let path = AopiPath::from_log(log);

    let span = end - start;
    let width = span / BATCHES as f64;
    let batch_means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let a = start + width * b as f64;
            let z = if b + 1 == BATCHES { end } else { a + width };
            path.area(a, z) / (z - a)
        })
        .collect();
    let mean_aopi = path.area(start, end) / span;
    let bm = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    let aopi_ci95 = T_975_49 * (var / BATCHES as f64).sqrt();

    let frames_completed = log.iter().filter(|r| r.complete_time.is_some()).count();
    let frames_preempted = log.iter().filter(|r| r.preempted).count();

    let in_window = |t: f64| t >= start && t <= end;
    let window: Vec<&FrameRecord> = log[first..].iter().collect();
    let mean_transmission =
        window.iter().map(|r| r.arrive_time - r.gen_time).sum::<f64>() / window.len() as f64;

    let completions: Vec<(f64, bool)> = log
        .iter()
        .filter_map(|r| r.complete_time.map(|c| (c, r.accurate)))
        .filter(|&(c, _)| in_window(c))
        .collect();
    let window_completions = completions.len();
    let empirical_accuracy = if completions.is_empty() {
        f64::NAN
    } else {
        completions.iter().filter(|c| c.1).count() as f64 / completions.len() as f64
    };
    let gaps: Vec<f64> = completions.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let n_gaps = gaps.len().max(1) as f64;

    let (mean_service, tx_wait_product) = match policy {
        Policy::Lcfsp => (None, None),
        Policy::Fcfs => {
            let mut service_sum = 0.0;
            let mut service_n = 0usize;
            let mut product_sum = 0.0;
            let mut product_n = 0usize;
            for i in first..horizon {
                let rec = &log[i];
                let Some(done) = rec.complete_time else { continue };
                let previous_done = if i == 0 {
                    0.0
                } else {
                    log[i - 1].complete_time.unwrap_or(f64::INFINITY)
                };
                if previous_done.is_finite() {
                    service_sum += done - rec.arrive_time.max(previous_done);
                    service_n += 1;
                }
                if let Some(next) = log.get(i + 1) {
                    let wait = (done - next.arrive_time).max(0.0);
                    product_sum += (rec.arrive_time - rec.gen_time) * wait;
                    product_n += 1;
                }
            }
            (
                Some(service_sum / service_n.max(1) as f64),
                Some(product_sum / product_n.max(1) as f64),
            )
        }
    };

    SimResult {
        mean_aopi,
        aopi_ci95,
        empirical_accuracy,
        frames_generated: horizon,
        frames_completed,
        frames_preempted,
        window_completions,
        window_start: start,
        window_end: end,
        diagnostics: Diagnostics {
            mean_transmission,
            mean_service,
            tx_wait_product,
            effective_rate: window_completions as f64 / span,
            interdeparture_mean: gaps.iter().sum::<f64>() / n_gaps,
            interdeparture_second_moment: gaps.iter().map(|g| g * g).sum::<f64>() / n_gaps,
        },
    }
}

/// Simulates one camera → server pipeline. Deterministic in `cfg`.
pub fn simulate_single(cfg: &SimConfig) -> Result<SimResult, SimError> {
    let log = simulate_log(cfg)?;
    Ok(summarize(&log, cfg.warmup_fraction, cfg.inputs.policy))
}

/// Theoretical values of the derivation intermediates.
pub mod expected {
    /// E[Tᵢ·Wᵢ₊₁] = (2λ² + μ² − λμ) / (μ⁴ − μ²λ²) under FCFS.
    pub fn tx_wait_product(lambda: f64, mu: f64) -> f64 {
        (2.0 * lambda * lambda + mu * mu - lambda * mu) / (mu.powi(4) - mu * mu * lambda * lambda)
    }

    /// Rate of frames that finish service without being preempted,
    /// λμ/(λ + μ), under LCFSP.
    pub fn effective_rate(lambda: f64, mu: f64) -> f64 {
        lambda * mu / (lambda + mu)
    }

    /// E[Y] = (λ + μ)/(λμ) for LCFSP inter-departure times.
    pub fn interdeparture_mean(lambda: f64, mu: f64) -> f64 {
        (lambda + mu) / (lambda * mu)
    }

    /// E[Y²] = 2/λ² + 2/(λμ) + 2/μ², the second derivative at zero of the
    /// inter-departure MGF λμ/((λ − s)(μ − s)).
    pub fn interdeparture_second_moment(lambda: f64, mu: f64) -> f64 {
        2.0 / (lambda * lambda) + 2.0 / (lambda * mu) + 2.0 / (mu * mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub quantity: String,
    pub empirical: f64,
    pub expected: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub entries: Vec<DiagnosticEntry>,
}

impl DiagnosticsReport {
    pub fn get(&self, quantity: &str) -> Option<&DiagnosticEntry> {
        self.entries.iter().find(|e| e.quantity == quantity)
    }
}

/// Compares a run's empirical moments with their closed forms.
pub fn diagnostics_check(
    result: &SimResult,
    inputs: &AopiInputs,
) -> Result<DiagnosticsReport, SimError> {
    if result.window_completions < MIN_DIAGNOSTIC_COMPLETIONS {
        return Err(SimError::InsufficientSamples {
            needed: MIN_DIAGNOSTIC_COMPLETIONS,
            got: result.window_completions,
        });
    }
    let (l, m) = (inputs.lambda, inputs.mu);
    let d = &result.diagnostics;
    let mut rows: Vec<(&str, f64, f64)> = vec![("mean_transmission", d.mean_transmission, 1.0 / l)];
    match inputs.policy {
        Policy::Fcfs => {
            if let Some(s) = d.mean_service {
                rows.push(("mean_service", s, 1.0 / m));
            }
            if let Some(tw) = d.tx_wait_product {
                rows.push(("tx_wait_product", tw, expected::tx_wait_product(l, m)));
            }
            rows.push(("interdeparture_mean", d.interdeparture_mean, 1.0 / l));
        }
        Policy::Lcfsp => {
            rows.push(("effective_rate", d.effective_rate, expected::effective_rate(l, m)));
            rows.push((
                "interdeparture_mean",
                d.interdeparture_mean,
                expected::interdeparture_mean(l, m),
            ));
            rows.push((
                "interdeparture_second_moment",
                d.interdeparture_second_moment,
                expected::interdeparture_second_moment(l, m),
            ));
        }
    }
    Ok(DiagnosticsReport {
        entries: rows
            .into_iter()
            .map(|(q, emp, exp)| DiagnosticEntry {
                quantity: q.to_string(),
                empirical: emp,
                expected: exp,
                rel_error: ((emp - exp) / exp).abs(),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotSimOptions {
    pub horizon_frames: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
}

/// Seed for camera `camera` derived from a slot seed (splitmix64 finalizer).
pub fn camera_seed(seed: u64, camera: usize) -> u64 {
    let mut z = seed ^ (camera as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates every camera of a slot independently with the rates implied by
/// `decision`. Cameras run in parallel; the result equals a sequential run.
pub fn simulate_slot(
    decision: &SlotDecision,
    ctx: &SlotContext,
    opts: &SlotSimOptions,
) -> Result<Vec<SimResult>, SimError> {
    let outcomes: Vec<Result<SimResult, SimError>> = (0..decision.camera_count())
        .into_par_iter()
        .map(|n| {
            let inputs = ctx.rates(
                n,
                &decision.configs[n],
                decision.bandwidth[n],
                decision.compute[n],
            )?;
            simulate_single(&SimConfig {
                inputs,
                horizon_frames: opts.horizon_frames,
                warmup_fraction: opts.warmup_fraction,
                rng_seed: camera_seed(opts.seed, n),
            })
        })
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(camera, r)| {
            r.map_err(|e| SimError::Camera {
                camera,
                source: Box::new(e),
            })
        })
        .collect()
}

pub const FRAME_LOG_HEADER: [&str; 6] = [
    "index",
    "gen_time",
    "arrive_time",
    "complete_time",
    "accurate",
    "policy",
];

#[derive(Debug, Error)]
pub enum FrameLogError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}; expected {expected:?}")]
    Header {
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("frame log is empty")]
    Empty,
}

/// Writes one record per frame; incomplete frames get `NA` as completion.
pub fn write_frame_log<W: Write>(
    writer: W,
    records: &[FrameRecord],
    policy: Policy,
) -> Result<(), FrameLogError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FRAME_LOG_HEADER)?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            r.gen_time.to_string(),
            r.arrive_time.to_string(),
            r.complete_time.map_or_else(|| "NA".to_string(), |c| c.to_string()),
            r.accurate.to_string(),
            policy.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses a frame log written by [`write_frame_log`], checking the header,
/// contiguous indices, time ordering and a single policy.
pub fn read_frame_log<R: Read>(reader: R) -> Result<(Vec<FrameRecord>, Policy), FrameLogError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(FRAME_LOG_HEADER.iter().copied()) {
        return Err(FrameLogError::Header {
            found: header.iter().map(String::from).collect(),
            expected: FRAME_LOG_HEADER.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut records = Vec::new();
    let mut policy: Option<Policy> = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| FrameLogError::Row { line, reason };
        let field = |i: usize| row.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64, FrameLogError> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| bad(format!("{} is not a number", FRAME_LOG_HEADER[i])))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(bad(format!("{} must be finite and >= 0", FRAME_LOG_HEADER[i])))
            }
        };
        let index: u64 = field(0)
            .parse()
            .map_err(|_| bad("index is not an integer".into()))?;
        if index != records.len() as u64 {
            return Err(bad(format!("expected index {}, got {index}", records.len())));
        }
        let gen_time = num(1)?;
        let arrive_time = num(2)?;
        let complete_time = match field(3) {
            "NA" => None,
            _ => Some(num(3)?),
        };
        let accurate: bool = field(4)
            .parse()
            .map_err(|_| bad("accurate must be true or false".into()))?;
        let row_policy: Policy = field(5).parse().map_err(|e: ModelError| bad(e.to_string()))?;
        if *policy.get_or_insert(row_policy) != row_policy {
            return Err(bad("policy changes mid-log".into()));
        }
        if arrive_time < gen_time || complete_time.is_some_and(|c| c < arrive_time) {
            return Err(bad("times must satisfy gen <= arrive <= complete".into()));
        }
        if let Some(prev) = records.last() {
            let prev: &FrameRecord = prev;
            if gen_time != prev.arrive_time {
                return Err(bad("frame must start when the previous transmission ends".into()));
            }
        }
        if accurate && complete_time.is_none() {
            return Err(bad("an incomplete frame cannot be accurate".into()));
        }
        records.push(FrameRecord {
            index,
            gen_time,
            arrive_time,
            complete_time,
            accurate,
            preempted: false,
        });
    }
    let policy = policy.ok_or(FrameLogError::Empty)?;
    if policy == Policy::Lcfsp {
        // Under LCFSP only the most recent arrival can still be in service
        // at the horizon; every earlier incomplete frame was preempted.
        let last = records.len() - 1;
        for rec in &mut records[..last] {
            rec.preempted = rec.complete_time.is_none();
        }
    }
    Ok((records, policy))
}
