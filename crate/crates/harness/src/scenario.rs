//! Scenario files: schema, defaults, validation and the per-slot inputs
//! they describe.
//!
//! A scenario is a TOML document with a `schema_version` and optional
//! sections; every omitted field takes the default of [`ScenarioSpec::default`].

use std::path::{Path, PathBuf};

use aopi_core::model::{
    AccuracyProfile, CameraSlot, ComplexityProfile, EdgeServerCapacity, LinkParams, Resolution,
    SlotContext,
};
use aopi_lbcd::LbcdParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{gen_traces, TraceParams, TraceSeries};

pub const SCHEMA_VERSION: u32 = 1;

/// RNG stream of the content random walk; trace generation uses its own.
const CONTENT_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub catalog: CatalogSpec,
    #[serde(default)]
    pub cameras: CameraSpec,
    #[serde(default)]
    pub content: ContentSpec,
    #[serde(default)]
    pub traces: TraceSpec,
    #[serde(default)]
    pub lbcd: LbcdParams,
    #[serde(default)]
    pub jcab: JcabSpec,
    #[serde(default)]
    pub sim: SimSpec,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioSection::default(),
            catalog: CatalogSpec::default(),
            cameras: CameraSpec::default(),
            content: ContentSpec::default(),
            traces: TraceSpec::default(),
            lbcd: LbcdParams::default(),
            jcab: JcabSpec::default(),
            sim: SimSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub cameras: usize,
    pub servers: usize,
    pub slots: usize,
    /// Seconds per slot; only used to size simulations and label output.
    pub slot_seconds: f64,
    /// Long-run accuracy requirement.
    pub p_min: f64,
    pub seeds: Vec<u64>,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            cameras: 30,
            servers: 3,
            slots: 2000,
            slot_seconds: 300.0,
            p_min: 0.7,
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    /// FLOPs per frame at the reference resolution.
    pub flops_at_ref: f64,
    /// Accuracy approached at high resolution.
    pub accuracy_ceiling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    /// Frame side lengths in pixels, ascending.
    pub resolutions: Vec<u32>,
    pub ref_resolution: f64,
    pub models: Vec<ModelSpec>,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        let model = |name: &str, tflops: f64, ceiling: f64| ModelSpec {
            name: name.into(),
            flops_at_ref: tflops * 1e12,
            accuracy_ceiling: ceiling,
        };
        Self {
            resolutions: vec![384, 512, 640, 768, 896, 1024],
            ref_resolution: 640.0,
            models: vec![
                model("nano", 0.05, 0.70),
                model("small", 0.15, 0.80),
                model("medium", 0.40, 0.87),
                model("large", 0.90, 0.91),
                model("xlarge", 1.70, 0.93),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    /// Spectral efficiencies (bit/s/Hz) are spread evenly over this range
    /// across cameras.
    pub spectral_efficiency: [f64; 2],
    /// Frame of side r has `bits_per_pixel_sq · r²` bits.
    pub bits_per_pixel_sq: f64,
    /// Explicit links, one per camera; overrides the two fields above.
    pub links: Vec<LinkParams>,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            spectral_efficiency: [4.0, 6.0],
            bits_per_pixel_sq: 2.0,
            links: vec![],
        }
    }
}

/// Content difficulty β per camera: starts evenly spread over `initial`,
/// then each slot is multiplied by exp(U(−step, step)) and clamped to
/// `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContentSpec {
    pub initial: [f64; 2],
    pub step: f64,
    pub bounds: [f64; 2],
}

impl Default for ContentSpec {
    fn default() -> Self {
        Self {
            initial: [3.0, 4.0],
            step: 0.05,
            bounds: [2.5, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSpec {
    pub bandwidth_mean_hz: f64,
    pub compute_mean_flops: f64,
    /// Coefficient of variation of both series.
    pub cv: f64,
    /// Trace CSV to replay instead of generating; relative to the spec file.
    pub file: Option<PathBuf>,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            bandwidth_mean_hz: 30e6,
            compute_mean_flops: 50e12,
            cv: 0.2,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JcabSpec {
    /// Budget on 1/λ + 1/μ, seconds.
    pub latency_budget: f64,
}

impl Default for JcabSpec {
    fn default() -> Self {
        Self {
            latency_budget: aopi_lbcd::baselines::DEFAULT_JCAB_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSpec {
    /// Frames generated per camera per simulated slot.
    pub horizon_frames: usize,
    pub warmup_fraction: f64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            horizon_frames: 10_000,
            warmup_fraction: aopi_core::sim::DEFAULT_WARMUP_FRACTION,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("line {line}: {field}: {message}")]
    Field {
        field: String,
        line: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Value { field: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

impl SpecError {
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Field { field, .. } | Self::Value { field, .. } => Some(field),
            Self::Syntax { .. } => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Field { line, .. } | Self::Syntax { line, .. } => Some(*line),
            Self::Value { .. } => None,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> SpecError {
    SpecError::Value {
        field: field.into(),
        message: message.into(),
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Dotted path (with `[i]` for array entries) and line of the innermost
/// key whose span contains `offset`.
fn field_at(src: &str, offset: usize) -> Option<(String, usize)> {
    use toml::de::{DeTable, DeValue};

    fn is_container(v: &DeValue<'_>) -> bool {
        matches!(v, DeValue::Table(_) | DeValue::Array(_))
    }

    fn walk(value: &DeValue<'_>, offset: usize, path: &mut String, line: &mut usize, src: &str) {
        match value {
            DeValue::Table(table) => {
                // A `[header]` table's span covers only its header, so fall
                // back to the last nested table opened before `offset`.
                let hit = table
                    .iter()
                    .find(|(key, item)| {
                        (key.span().start..item.span().end.max(key.span().end)).contains(&offset)
                    })
                    .or_else(|| {
                        table
                            .iter()
                            .filter(|(key, item)| {
                                is_container(item.get_ref()) && key.span().start <= offset
                            })
                            .max_by_key(|(key, _)| key.span().start)
                    });
                if let Some((key, item)) = hit {
                    if !path.is_empty() {
                        path.push('.');
                    }
                    path.push_str(key.get_ref());
                    *line = line_of(src, key.span().start);
                    walk(item.get_ref(), offset, path, line, src);
                }
            }
            DeValue::Array(array) => {
                let hit = array
                    .iter()
                    .enumerate()
                    .find(|(_, item)| item.span().contains(&offset))
                    .or_else(|| {
                        array
                            .iter()
                            .enumerate()
                            .filter(|(_, item)| {
                                is_container(item.get_ref()) && item.span().start <= offset
                            })
                            .max_by_key(|(_, item)| item.span().start)
                    });
                if let Some((i, item)) = hit {
                    path.push_str(&format!("[{i}]"));
                    *line = line_of(src, item.span().start);
                    walk(item.get_ref(), offset, path, line, src);
                }
            }
            _ => {}
        }
    }

    let root = DeTable::parse(src).ok()?;
    let mut path = String::new();
    let mut line = line_of(src, offset);
    walk(
        &DeValue::Table(root.into_inner()),
        offset,
        &mut path,
        &mut line,
        src,
    );
    (!path.is_empty()).then_some((path, line))
}

/// Line of the key at dotted `path`, e.g. `scenario.cameras` or
/// `catalog.models[1].flops_at_ref`.
fn line_of_field(src: &str, path: &str) -> Option<usize> {
    use toml::de::{DeTable, DeValue};

    let root = DeTable::parse(src).ok()?;
    let mut current = DeValue::Table(root.into_inner());
    let mut line = None;
    for part in path.split('.') {
        let (key, index) = match part.find('[') {
            Some(i) => (
                &part[..i],
                part[i + 1..].trim_end_matches(']').parse::<usize>().ok(),
            ),
            None => (part, None),
        };
        let DeValue::Table(table) = current else {
            return line;
        };
        let (k, v) = table.iter().find(|(k, _)| k.get_ref() == key)?;
        line = Some(line_of(src, k.span().start));
        let mut next = v.get_ref().clone();
        if let Some(i) = index {
            let DeValue::Array(array) = &next else {
                return line;
            };
            let item = array.get(i)?;
            line = Some(line_of(src, item.span().start));
            next = item.get_ref().clone();
        }
        current = next;
    }
    line
}

/// Parses and validates a scenario document.
pub fn parse_scenario(src: &str) -> Result<ScenarioSpec, SpecError> {
    let spec: ScenarioSpec = toml::from_str(src).map_err(|e| {
        let offset = e.span().map(|s| s.start).unwrap_or(0);
        let message = e.message().trim().to_string();
        match field_at(src, offset) {
            Some((field, line)) => SpecError::Field {
                field,
                line,
                message,
            },
            None => SpecError::Syntax {
                line: line_of(src, offset),
                message,
            },
        }
    })?;
    spec.validate().map_err(|e| match e {
        SpecError::Value { field, message } => match line_of_field(src, &field) {
            Some(line) => SpecError::Field {
                field,
                line,
                message,
            },
            None => SpecError::Value { field, message },
        },
        other => other,
    })?;
    Ok(spec)
}

/// Reads a scenario file; a relative trace path is resolved against the
/// file's directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, crate::HarnessError> {
    let src = std::fs::read_to_string(path).map_err(|e| crate::HarnessError::io(path, e))?;
    let mut spec = parse_scenario(&src)?;
    if let Some(file) = &spec.traces.file {
        if file.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            spec.traces.file = Some(base.join(file));
        }
    }
    Ok(spec)
}

fn finite_positive(field: &str, v: f64) -> Result<(), SpecError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn ordered_range(field: &str, r: [f64; 2]) -> Result<(), SpecError> {
    finite_positive(field, r[0])?;
    finite_positive(field, r[1])?;
    if r[0] > r[1] {
        return Err(invalid(field, format!("lower end {} exceeds upper end {}", r[0], r[1])));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let s = &self.scenario;
        for (field, v) in [
            ("scenario.cameras", s.cameras),
            ("scenario.servers", s.servers),
            ("scenario.slots", s.slots),
        ] {
            if v == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        finite_positive("scenario.slot_seconds", s.slot_seconds)?;
        if !(s.p_min >= 0.0 && s.p_min <= 1.0) {
            return Err(invalid("scenario.p_min", format!("must lie in [0, 1], got {}", s.p_min)));
        }
        if s.seeds.is_empty() {
            return Err(invalid("scenario.seeds", "needs at least one seed"));
        }

        let c = &self.catalog;
        if c.resolutions.is_empty() {
            return Err(invalid("catalog.resolutions", "must not be empty"));
        }
        if c.resolutions.contains(&0) {
            return Err(invalid("catalog.resolutions", "resolutions must be positive"));
        }
        if c.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("catalog.resolutions", "must be strictly ascending"));
        }
        finite_positive("catalog.ref_resolution", c.ref_resolution)?;
        if c.models.is_empty() {
            return Err(invalid("catalog.models", "must not be empty"));
        }
        for (i, m) in c.models.iter().enumerate() {
            finite_positive(&format!("catalog.models[{i}].flops_at_ref"), m.flops_at_ref)?;
            if !(m.accuracy_ceiling > 0.0 && m.accuracy_ceiling <= 1.0) {
                return Err(invalid(
                    &format!("catalog.models[{i}].accuracy_ceiling"),
                    format!("must lie in (0, 1], got {}", m.accuracy_ceiling),
                ));
            }
        }

        let cam = &self.cameras;
        if cam.links.is_empty() {
            ordered_range("cameras.spectral_efficiency", cam.spectral_efficiency)?;
            finite_positive("cameras.bits_per_pixel_sq", cam.bits_per_pixel_sq)?;
        } else {
            if cam.links.len() != s.cameras {
                return Err(invalid(
                    "cameras.links",
                    format!("has {} entries for {} cameras", cam.links.len(), s.cameras),
                ));
            }
            for (i, l) in cam.links.iter().enumerate() {
                l.validate()
                    .map_err(|e| invalid(&format!("cameras.links[{i}]"), e.to_string()))?;
            }
        }

        let ct = &self.content;
        ordered_range("content.initial", ct.initial)?;
        ordered_range("content.bounds", ct.bounds)?;
        if !(ct.step.is_finite() && ct.step >= 0.0) {
            return Err(invalid("content.step", format!("must be non-negative, got {}", ct.step)));
        }

        let t = &self.traces;
        finite_positive("traces.bandwidth_mean_hz", t.bandwidth_mean_hz)?;
        finite_positive("traces.compute_mean_flops", t.compute_mean_flops)?;
        if !(t.cv.is_finite() && t.cv >= 0.0) {
            return Err(invalid("traces.cv", format!("must be non-negative, got {}", t.cv)));
        }

        self.lbcd.validate().map_err(|m| invalid("lbcd", m))?;
        finite_positive("jcab.latency_budget", self.jcab.latency_budget)?;
        if self.sim.horizon_frames < aopi_core::sim::MIN_HORIZON_FRAMES {
            return Err(invalid(
                "sim.horizon_frames",
                format!("must be at least {}", aopi_core::sim::MIN_HORIZON_FRAMES),
            ));
        }
        if !(self.sim.warmup_fraction >= 0.0 && self.sim.warmup_fraction < 1.0) {
            return Err(invalid("sim.warmup_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// The template written by `aopi init`.
    pub fn template() -> String {
        let body = toml::to_string_pretty(&Self::default()).expect("default spec serializes");
        format!("# Scenario for the aopi experiment runner. Omitted fields take these defaults.\n{body}")
    }

    pub fn trace_params(&self) -> TraceParams {
        TraceParams {
            servers: self.scenario.servers,
            slots: self.scenario.slots,
            bandwidth_mean: self.traces.bandwidth_mean_hz,
            compute_mean: self.traces.compute_mean_flops,
            cv: self.traces.cv,
        }
    }

    pub fn links(&self) -> Vec<LinkParams> {
        let cam = &self.cameras;
        if !cam.links.is_empty() {
            return cam.links.clone();
        }
        let n = self.scenario.cameras;
        (0..n)
            .map(|i| {
                let se = spread(cam.spectral_efficiency, i, n);
                LinkParams {
                    tx_power: 1.0,
                    channel_gain: 1.0,
                    noise_power: 1.0 / (se.exp2() - 1.0),
                    bits_per_pixel_sq: cam.bits_per_pixel_sq,
                }
            })
            .collect()
    }

    pub fn resolutions(&self) -> Vec<Resolution> {
        self.catalog
            .resolutions
            .iter()
            .map(|&r| Resolution::new(r).expect("validated resolution"))
            .collect()
    }

    pub fn complexity(&self) -> ComplexityProfile {
        ComplexityProfile::Quadratic {
            ref_resolution: self.catalog.ref_resolution,
            flops_at_ref: self.catalog.models.iter().map(|m| m.flops_at_ref).collect(),
        }
    }

    fn accuracy_profile(&self, difficulty: f64) -> AccuracyProfile {
        AccuracyProfile::Saturating {
            ref_resolution: self.catalog.ref_resolution,
            ceilings: self.catalog.models.iter().map(|m| m.accuracy_ceiling).collect(),
            difficulty,
        }
    }
}

/// Point i of n spread evenly over [lo, hi].
fn spread(range: [f64; 2], i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.5 * (range[0] + range[1])
    } else {
        range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
    }
}

/// Content difficulty β[t][n] for every slot and camera.
pub fn content_walk(spec: &ContentSpec, cameras: usize, slots: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CONTENT_STREAM);
    let mut beta: Vec<f64> = (0..cameras).map(|i| spread(spec.initial, i, cameras)).collect();
    let mut out = Vec::with_capacity(slots);
    for t in 0..slots {
        if t > 0 && spec.step > 0.0 {
            for b in beta.iter_mut() {
                let u: f64 = rng.random_range(-spec.step..=spec.step);
                *b = (*b * u.exp()).clamp(spec.bounds[0], spec.bounds[1]);
            }
        }
        out.push(beta.clone());
    }
    out
}

/// The inputs of one seed: capacity trace and content walk, expanded into
/// one [`SlotContext`] per slot on demand.
#[derive(Debug, Clone)]
pub struct ScenarioState {
    pub seed: u64,
    resolutions: Vec<Resolution>,
    complexity: ComplexityProfile,
    links: Vec<LinkParams>,
    spec: ScenarioSpec,
    pub trace: TraceSeries,
    pub difficulty: Vec<Vec<f64>>,
}

impl ScenarioState {
    /// Builds the state for `seed`, replaying `trace` when given and
    /// generating one otherwise.
    pub fn new(spec: &ScenarioSpec, seed: u64, trace: Option<&TraceSeries>) -> Result<Self, crate::HarnessError> {
        let s = &spec.scenario;
        let trace = match trace {
            Some(t) => {
                if t.servers() != s.servers {
                    return Err(SpecError::Value {
                        field: "traces.file".into(),
                        message: format!("trace has {} servers, scenario has {}", t.servers(), s.servers),
                    }
                    .into());
                }
                if t.slots() < s.slots {
                    return Err(SpecError::Value {
                        field: "traces.file".into(),
                        message: format!("trace has {} slots, scenario needs {}", t.slots(), s.slots),
                    }
                    .into());
                }
                t.clone()
            }
            None => gen_traces(&spec.trace_params(), seed),
        };
        for (t, row) in trace.rows.iter().take(s.slots).enumerate() {
            let b: f64 = row.iter().map(|c| c.bandwidth).sum();
            let c: f64 = row.iter().map(|c| c.compute).sum();
            if !(b > 0.0 && c > 0.0) {
                return Err(crate::HarnessError::Infeasible(format!(
                    "slot {t} has no bandwidth or no compute on any server"
                )));
            }
        }
        Ok(Self {
            seed,
            resolutions: spec.resolutions(),
            complexity: spec.complexity(),
            links: spec.links(),
            spec: spec.clone(),
            difficulty: content_walk(&spec.content, s.cameras, s.slots, seed),
            trace,
        })
    }

    pub fn slots(&self) -> usize {
        self.spec.scenario.slots
    }

    pub fn context(&self, slot: usize) -> SlotContext {
        SlotContext {
            resolutions: self.resolutions.clone(),
            complexity: self.complexity.clone(),
            cameras: self
                .links
                .iter()
                .zip(&self.difficulty[slot])
                .map(|(&link, &beta)| CameraSlot {
                    link,
                    accuracy: self.spec.accuracy_profile(beta),
                })
                .collect(),
            servers: self.trace.rows[slot].clone(),
        }
    }

    pub fn capacities(&self, slot: usize) -> &[EdgeServerCapacity] {
        &self.trace.rows[slot]
    }
}
