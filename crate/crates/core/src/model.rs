//! Domain types of the camera → edge-server pipeline and the deterministic
//! maps from resources and configuration to the three quantities every AoPI
//! formula consumes: transmission rate λ, computation rate μ and recognition
//! accuracy p.
//!
//! Units are fixed throughout: bandwidth in Hz, compute in FLOPS, frame sizes
//! in bits, rates in frames per second.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack tolerated on the per-server capacity sums before a
/// decision is reported as over-allocating.
pub const CAPACITY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("unknown model id {id} (catalog has {len} models)")]
    UnknownModel { id: usize, len: usize },
    #[error("resolution {0} is not covered by the profile table")]
    UnknownResolution(u32),
    #[error("dimension mismatch: {what} has {got} entries, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("profile table is not {property} in resolution for model {model}")]
    ProfileShape { property: &'static str, model: usize },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        })
    }
}

fn nonnegative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be finite and >= 0, got {value}"),
        })
    }
}

/// Frame resolution, in pixels per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Resolution(u32);

impl Resolution {
    pub fn new(pixels_per_side: u32) -> Result<Self, ModelError> {
        if pixels_per_side == 0 {
            return Err(ModelError::InvalidParameter {
                name: "resolution",
                reason: "must be a positive pixel count".into(),
            });
        }
        Ok(Self(pixels_per_side))
    }

    pub fn pixels(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }
}

impl TryFrom<u32> for Resolution {
    type Error = ModelError;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Resolution> for u32 {
    fn from(r: Resolution) -> u32 {
        r.0
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index into the scenario's model catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId(pub usize);

/// Catalog entry for one neural network model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    /// FLOPs per frame at the reference resolution.
    pub flops_at_ref: f64,
    /// Accuracy reached as resolution grows without bound.
    pub accuracy_ceiling: f64,
}

/// Computation policy of a camera's container on its edge server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Policy {
    /// First-come-first-serve: frames wait in an unbounded queue.
    #[serde(rename = "FCFS")]
    Fcfs,
    /// Last-come-first-serve with preemption: an arriving frame discards
    /// the one in service.
    #[serde(rename = "LCFSP")]
    Lcfsp,
}

impl Policy {
    pub const ALL: [Policy; 2] = [Policy::Fcfs, Policy::Lcfsp];
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Fcfs => "FCFS",
            Policy::Lcfsp => "LCFSP",
        })
    }
}

impl FromStr for Policy {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FCFS" => Ok(Policy::Fcfs),
            "LCFSP" => Ok(Policy::Lcfsp),
            other => Err(ModelError::InvalidParameter {
                name: "policy",
                reason: format!("expected FCFS or LCFSP, got `{other}`"),
            }),
        }
    }
}

/// Per-camera video configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoConfig {
    pub resolution: Resolution,
    pub policy: Policy,
    pub model: ModelId,
}

/// Uplink parameters of one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Transmission power, watts.
    pub tx_power: f64,
    /// Dimensionless channel gain.
    pub channel_gain: f64,
    /// Noise power, watts.
    pub noise_power: f64,
    /// Encoding constant: a frame of resolution r is `bits_per_pixel_sq * r^2` bits.
    pub bits_per_pixel_sq: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("tx_power", self.tx_power)?;
        positive("channel_gain", self.channel_gain)?;
        positive("noise_power", self.noise_power)?;
        positive("bits_per_pixel_sq", self.bits_per_pixel_sq)?;
        Ok(())
    }

    /// log2(1 + SNR) in bit/s/Hz.
    pub fn spectral_efficiency(&self) -> f64 {
        (1.0 + self.tx_power * self.channel_gain / self.noise_power).log2()
    }

    /// Frames per second delivered per Hz of bandwidth at resolution `r`.
    pub fn frames_per_hz(&self, r: Resolution) -> f64 {
        let side = r.as_f64();
        self.spectral_efficiency() / (self.bits_per_pixel_sq * side * side)
    }
}

/// FLOPs needed to process one frame, per (resolution, model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ComplexityProfile {
    /// ξ(r, m) = κ_m · (r / r₀)².
    Quadratic {
        ref_resolution: f64,
        flops_at_ref: Vec<f64>,
    },
    /// Measured values, `flops[resolution_index][model]`.
    Table {
        resolutions: Vec<Resolution>,
        flops: Vec<Vec<f64>>,
    },
}

impl ComplexityProfile {
    pub fn model_count(&self) -> usize {
        match self {
            ComplexityProfile::Quadratic { flops_at_ref, .. } => flops_at_ref.len(),
            ComplexityProfile::Table { flops, .. } => flops.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ComplexityProfile::Quadratic {
                ref_resolution,
                flops_at_ref,
            } => {
                positive("ref_resolution", *ref_resolution)?;
                for &k in flops_at_ref {
                    positive("flops_at_ref", k)?;
                }
                Ok(())
            }
            ComplexityProfile::Table { resolutions, flops } => {
                validate_table(resolutions, flops, "flops")?;
                let models = self.model_count();
                for m in 0..models {
                    let column: Vec<f64> = flops.iter().map(|row| row[m]).collect();
                    if column.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                        return Err(ModelError::InvalidParameter {
                            name: "flops",
                            reason: format!("model {m} has a non-positive entry"),
                        });
                    }
                    if column.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(ModelError::ProfileShape {
                            property: "increasing",
                            model: m,
                        });
                    }
                }
                Ok(())
            }
        }
    }

    /// ξ(r, m) in FLOPs per frame.
    pub fn flops(&self, r: Resolution, m: ModelId) -> Result<f64, ModelError> {
        match self {
            ComplexityProfile::Quadratic {
                ref_resolution,
                flops_at_ref,
            } => {
                let k = flops_at_ref.get(m.0).ok_or(ModelError::UnknownModel {
                    id: m.0,
                    len: flops_at_ref.len(),
                })?;
                let scale = r.as_f64() / ref_resolution;
                Ok(k * scale * scale)
            }
            ComplexityProfile::Table { resolutions, flops } => {
                let row = table_row(resolutions, r)?;
                flops[row].get(m.0).copied().ok_or(ModelError::UnknownModel {
                    id: m.0,
                    len: self.model_count(),
                })
            }
        }
    }
}

/// Recognition accuracy per (resolution, model) for one camera in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AccuracyProfile {
    /// ζ(r, m) = a_m · (1 − exp(−β · r / r₀)).
    Saturating {
        ref_resolution: f64,
        ceilings: Vec<f64>,
        difficulty: f64,
    },
    /// Profiled values, `values[resolution_index][model]`.
    Table {
        resolutions: Vec<Resolution>,
        values: Vec<Vec<f64>>,
    },
}

impl AccuracyProfile {
    pub fn model_count(&self) -> usize {
        match self {
            AccuracyProfile::Saturating { ceilings, .. } => ceilings.len(),
            AccuracyProfile::Table { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            AccuracyProfile::Saturating {
                ref_resolution,
                ceilings,
                difficulty,
            } => {
                positive("ref_resolution", *ref_resolution)?;
                positive("difficulty", *difficulty)?;
                for &a in ceilings {
                    if !(a > 0.0 && a <= 1.0) {
                        return Err(ModelError::InvalidParameter {
                            name: "accuracy_ceiling",
                            reason: format!("must lie in (0, 1], got {a}"),
                        });
                    }
                }
                Ok(())
            }
            AccuracyProfile::Table { resolutions, values } => {
                validate_table(resolutions, values, "accuracy")?;
                for m in 0..self.model_count() {
                    let column: Vec<f64> = values.iter().map(|row| row[m]).collect();
                    if column.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                        return Err(ModelError::InvalidParameter {
                            name: "accuracy",
                            reason: format!("model {m} has an entry outside [0, 1]"),
                        });
                    }
                    if column.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(ModelError::ProfileShape {
                            property: "increasing",
                            model: m,
                        });
                    }
                }
                Ok(())
            }
        }
    }
}

fn validate_table(
    resolutions: &[Resolution],
    rows: &[Vec<f64>],
    what: &'static str,
) -> Result<(), ModelError> {
    if rows.len() != resolutions.len() {
        return Err(ModelError::DimensionMismatch {
            what,
            got: rows.len(),
            expected: resolutions.len(),
        });
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ModelError::InvalidParameter {
            name: "resolutions",
            reason: "table resolutions must be strictly increasing".into(),
        });
    }
    let width = rows.first().map_or(0, Vec::len);
    for row in rows {
        if row.len() != width {
            return Err(ModelError::DimensionMismatch {
                what,
                got: row.len(),
                expected: width,
            });
        }
    }
    Ok(())
}

fn table_row(resolutions: &[Resolution], r: Resolution) -> Result<usize, ModelError> {
    resolutions
        .binary_search(&r)
        .map_err(|_| ModelError::UnknownResolution(r.pixels()))
}

/// The (λ, μ, p, policy) quadruple every formula and simulation consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AopiInputs {
    pub lambda: f64,
    pub mu: f64,
    pub accuracy: f64,
    pub policy: Policy,
}

impl AopiInputs {
    pub fn new(lambda: f64, mu: f64, accuracy: f64, policy: Policy) -> Result<Self, ModelError> {
        let inputs = Self {
            lambda,
            mu,
            accuracy,
            policy,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("lambda", self.lambda)?;
        positive("mu", self.mu)?;
        if !(self.accuracy > 0.0 && self.accuracy <= 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "accuracy",
                reason: format!("must lie in (0, 1], got {}", self.accuracy),
            });
        }
        if self.policy == Policy::Fcfs && self.lambda >= self.mu {
            return Err(ModelError::InvalidParameter {
                name: "lambda",
                reason: format!(
                    "FCFS needs lambda < mu, got lambda={} mu={}",
                    self.lambda, self.mu
                ),
            });
        }
        Ok(())
    }

    /// Processing load λ/μ.
    pub fn load(&self) -> f64 {
        self.lambda / self.mu
    }
}

/// Per-slot capacity of one edge server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeServerCapacity {
    /// Hz.
    pub bandwidth: f64,
    /// FLOPS.
    pub compute: f64,
}

impl EdgeServerCapacity {
    pub fn validate(&self) -> Result<(), ModelError> {
        nonnegative("bandwidth", self.bandwidth)?;
        nonnegative("compute", self.compute)?;
        Ok(())
    }
}

/// λ = b · log₂(1 + ẼG̃/σ) / (α r²).
pub fn transmission_rate(
    bandwidth: f64,
    link: &LinkParams,
    r: Resolution,
) -> Result<f64, ModelError> {
    nonnegative("bandwidth", bandwidth)?;
    link.validate()?;
    Ok(bandwidth * link.frames_per_hz(r))
}

/// μ = c / ξ(r, m).
pub fn computation_rate(
    compute: f64,
    cfg: &VideoConfig,
    prof: &ComplexityProfile,
) -> Result<f64, ModelError> {
    nonnegative("compute", compute)?;
    Ok(compute / prof.flops(cfg.resolution, cfg.model)?)
}

/// p = ζ(r, m), clamped to [0, 1].
pub fn accuracy(cfg: &VideoConfig, prof: &AccuracyProfile) -> Result<f64, ModelError> {
    let p = match prof {
        AccuracyProfile::Saturating {
            ref_resolution,
            ceilings,
            difficulty,
        } => {
            let ceiling = ceilings.get(cfg.model.0).ok_or(ModelError::UnknownModel {
                id: cfg.model.0,
                len: ceilings.len(),
            })?;
            ceiling * -(-difficulty * cfg.resolution.as_f64() / ref_resolution).exp_m1()
        }
        AccuracyProfile::Table {
            resolutions,
            values,
        } => {
            let row = table_row(resolutions, cfg.resolution)?;
            *values[row].get(cfg.model.0).ok_or(ModelError::UnknownModel {
                id: cfg.model.0,
                len: prof.model_count(),
            })?
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// One camera's slot-specific inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraSlot {
    pub link: LinkParams,
    pub accuracy: AccuracyProfile,
}

/// Everything a strategy needs to decide one slot: the configuration
/// catalogs, the cameras' links and profiles, and the servers' capacities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotContext {
    /// Candidate resolutions in ascending order.
    pub resolutions: Vec<Resolution>,
    pub complexity: ComplexityProfile,
    pub cameras: Vec<CameraSlot>,
    pub servers: Vec<EdgeServerCapacity>,
}

impl SlotContext {
    pub fn model_count(&self) -> usize {
        self.complexity.model_count()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.resolutions.is_empty() {
            return Err(ModelError::InvalidParameter {
                name: "resolutions",
                reason: "catalog is empty".into(),
            });
        }
        if self.model_count() == 0 {
            return Err(ModelError::InvalidParameter {
                name: "models",
                reason: "catalog is empty".into(),
            });
        }
        self.complexity.validate()?;
        for cam in &self.cameras {
            cam.link.validate()?;
            cam.accuracy.validate()?;
            if cam.accuracy.model_count() != self.model_count() {
                return Err(ModelError::DimensionMismatch {
                    what: "accuracy profile models",
                    got: cam.accuracy.model_count(),
                    expected: self.model_count(),
                });
            }
        }
        for s in &self.servers {
            s.validate()?;
        }
        Ok(())
    }

    /// Every (resolution, policy, model) tuple in lowest-index-first order.
    pub fn configs(&self) -> impl Iterator<Item = VideoConfig> + '_ {
        let models = self.model_count();
        self.resolutions.iter().flat_map(move |&resolution| {
            Policy::ALL.into_iter().flat_map(move |policy| {
                (0..models).map(move |m| VideoConfig {
                    resolution,
                    policy,
                    model: ModelId(m),
                })
            })
        })
    }

    /// Rates and accuracy of camera `n` under `cfg` with the given resources.
    /// Does not enforce stability; see [`AopiInputs::validate`].
    pub fn rates(
        &self,
        n: usize,
        cfg: &VideoConfig,
        bandwidth: f64,
        compute: f64,
    ) -> Result<AopiInputs, ModelError> {
        let cam = self.cameras.get(n).ok_or(ModelError::DimensionMismatch {
            what: "camera index",
            got: n,
            expected: self.cameras.len(),
        })?;
        Ok(AopiInputs {
            lambda: transmission_rate(bandwidth, &cam.link, cfg.resolution)?,
            mu: computation_rate(compute, cfg, &self.complexity)?,
            accuracy: accuracy(cfg, &cam.accuracy)?,
            policy: cfg.policy,
        })
    }

    /// Pools every server into one with the summed capacities.
    pub fn pooled(&self) -> SlotContext {
        let total = self.servers.iter().fold(
            EdgeServerCapacity {
                bandwidth: 0.0,
                compute: 0.0,
            },
            |acc, s| EdgeServerCapacity {
                bandwidth: acc.bandwidth + s.bandwidth,
                compute: acc.compute + s.compute,
            },
        );
        SlotContext {
            servers: vec![total],
            ..self.clone()
        }
    }
}

/// Full per-slot control vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDecision {
    /// Server index per camera.
    pub assignment: Vec<usize>,
    pub configs: Vec<VideoConfig>,
    /// Hz per camera.
    pub bandwidth: Vec<f64>,
    /// FLOPS per camera.
    pub compute: Vec<f64>,
}

impl SlotDecision {
    pub fn camera_count(&self) -> usize {
        self.assignment.len()
    }

    /// Indices of the cameras assigned to `server`, ascending.
    pub fn cameras_on(&self, server: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &s)| s == server)
            .map(|(n, _)| n)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resource {
    Bandwidth,
    Compute,
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resource::Bandwidth => "bandwidth",
            Resource::Compute => "compute",
        })
    }
}

/// A violated slot constraint, with the indices it concerns.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CapacityExceeded {
        server: usize,
        resource: Resource,
        used: f64,
        capacity: f64,
    },
    NegativeAllocation {
        camera: usize,
        resource: Resource,
        value: f64,
    },
    /// The camera's server index does not name an existing server.
    Unassigned { camera: usize, server: usize },
    /// FCFS with λ ≥ μ.
    Unstable { camera: usize, lambda: f64, mu: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CapacityExceeded {
                server,
                resource,
                used,
                capacity,
            } => write!(f, "server {server}: {resource} {used} exceeds capacity {capacity}"),
            Violation::NegativeAllocation {
                camera,
                resource,
                value,
            } => write!(f, "camera {camera}: negative {resource} {value}"),
            Violation::Unassigned { camera, server } => {
                write!(f, "camera {camera}: assigned to nonexistent server {server}")
            }
            Violation::Unstable { camera, lambda, mu } => {
                write!(f, "camera {camera}: FCFS unstable with lambda={lambda} >= mu={mu}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Infeasible(Vec<Violation>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            Feasibility::Feasible => &[],
            Feasibility::Infeasible(v) => v,
        }
    }
}

/// Checks the per-slot constraints: per-server bandwidth and compute sums,
/// one existing server per camera, and λ < μ for every FCFS camera.
pub fn check_feasible(
    decision: &SlotDecision,
    ctx: &SlotContext,
) -> Result<Feasibility, ModelError> {
    let n = ctx.cameras.len();
    for (what, got) in [
        ("assignment", decision.assignment.len()),
        ("configs", decision.configs.len()),
        ("bandwidth", decision.bandwidth.len()),
        ("compute", decision.compute.len()),
    ] {
        if got != n {
            return Err(ModelError::DimensionMismatch {
                what,
                got,
                expected: n,
            });
        }
    }

    let mut violations = Vec::new();
    let mut used = vec![(0.0, 0.0); ctx.servers.len()];
    for cam in 0..n {
        let server = decision.assignment[cam];
        let (b, c) = (decision.bandwidth[cam], decision.compute[cam]);
        for (resource, value) in [(Resource::Bandwidth, b), (Resource::Compute, c)] {
            if !(value >= 0.0) {
                violations.push(Violation::NegativeAllocation {
                    camera: cam,
                    resource,
                    value,
                });
            }
        }
        match used.get_mut(server) {
            Some(slot) => {
                slot.0 += b;
                slot.1 += c;
            }
            None => violations.push(Violation::Unassigned {
                camera: cam,
                server,
            }),
        }
        let cfg = &decision.configs[cam];
        if cfg.policy == Policy::Fcfs {
            let rates = ctx.rates(cam, cfg, b.max(0.0), c.max(0.0))?;
            if rates.lambda >= rates.mu {
                violations.push(Violation::Unstable {
                    camera: cam,
                    lambda: rates.lambda,
                    mu: rates.mu,
                });
            }
        }
    }
    for (server, (&(b, c), cap)) in used.iter().zip(&ctx.servers).enumerate() {
        for (resource, u, limit) in [
            (Resource::Bandwidth, b, cap.bandwidth),
            (Resource::Compute, c, cap.compute),
        ] {
            if u > limit * (1.0 + CAPACITY_REL_TOL) {
                violations.push(Violation::CapacityExceeded {
                    server,
                    resource,
                    used: u,
                    capacity: limit,
                });
            }
        }
    }
    Ok(if violations.is_empty() {
        Feasibility::Feasible
    } else {
        Feasibility::Infeasible(violations)
    })
}
