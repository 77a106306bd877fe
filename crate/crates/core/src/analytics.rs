//! Closed-form average AoPI under FCFS and LCFSP service with exponential
//! transmission and computation times, the policy-selection threshold, and
//! numeric inversions that produce minimum-rate trade curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AopiInputs, Policy};

/// Absolute tolerance, in seconds, on AoPI for every root search here.
pub const AOPI_ABS_TOL: f64 = 1e-9;

/// FCFS evaluations with μ − λ below this fraction of μ are reported as
/// unstable instead of returning a huge finite number.
pub const POLE_GUARD: f64 = 1e-12;

/// Relative tolerance of the golden-section argmin over λ.
pub const ARGMIN_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("FCFS queue is unstable: lambda={lambda} >= mu={mu}; AoPI is unbounded")]
    Unstable { lambda: f64, mu: f64 },
    #[error("recognition accuracy must lie in (0, 1], got {0}")]
    DegenerateAccuracy(f64),
    #[error("rate `{name}` must be finite and > 0, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("AoPI target must be finite and > 0, got {0}")]
    InvalidTarget(f64),
}

/// Average AoPI in seconds; `+inf` when the stability condition fails.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AopiValue(pub f64);

impl AopiValue {
    pub const INFINITE: AopiValue = AopiValue(f64::INFINITY);

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<(), AnalyticsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidRate { name, value })
    }
}

fn check_accuracy(p: f64) -> Result<(), AnalyticsError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(AnalyticsError::DegenerateAccuracy(p))
    }
}

fn check_stable(lambda: f64, mu: f64) -> Result<(), AnalyticsError> {
    if lambda >= mu || mu - lambda < POLE_GUARD * mu {
        Err(AnalyticsError::Unstable { lambda, mu })
    } else {
        Ok(())
    }
}

/// A_F = (1 + 1/p)/λ + 1/μ + (2λ³ + λμ² − μλ²) / (μ⁴ − μ²λ²).
pub fn aopi_fcfs(lambda: f64, mu: f64, p: f64) -> Result<AopiValue, AnalyticsError> {
    check_rate("lambda", lambda)?;
    check_rate("mu", mu)?;
    check_accuracy(p)?;
    check_stable(lambda, mu)?;
    let queueing = (2.0 * lambda.powi(3) + lambda * mu * mu - mu * lambda * lambda)
        / (mu * mu * (mu - lambda) * (mu + lambda));
    Ok(AopiValue((1.0 + 1.0 / p) / lambda + 1.0 / mu + queueing))
}

/// A_L = (1 + 1/p)/λ + 1/(pμ).
pub fn aopi_lcfsp(lambda: f64, mu: f64, p: f64) -> Result<AopiValue, AnalyticsError> {
    check_rate("lambda", lambda)?;
    check_rate("mu", mu)?;
    check_accuracy(p)?;
    Ok(AopiValue((1.0 + 1.0 / p) / lambda + 1.0 / (p * mu)))
}

pub fn aopi(inputs: &AopiInputs) -> Result<AopiValue, AnalyticsError> {
    match inputs.policy {
        Policy::Fcfs => aopi_fcfs(inputs.lambda, inputs.mu, inputs.accuracy),
        Policy::Lcfsp => aopi_lcfsp(inputs.lambda, inputs.mu, inputs.accuracy),
    }
}

/// AoPI in seconds with every error mapped to `+inf`. Used where an
/// infeasible point must simply lose a comparison.
pub fn aopi_or_infinite(policy: Policy, lambda: f64, mu: f64, p: f64) -> f64 {
    let value = match policy {
        Policy::Fcfs => aopi_fcfs(lambda, mu, p),
        Policy::Lcfsp => aopi_lcfsp(lambda, mu, p),
    };
    value.map_or(f64::INFINITY, AopiValue::seconds)
}

/// The FCFS service-side factor h(ρ) with A_F = (1 + 1/p)/λ + h(ρ)/μ:
/// h(ρ) = (2ρ³ − 2ρ² + ρ + 1) / (1 − ρ²).
pub fn fcfs_load_factor(rho: f64) -> f64 {
    (2.0 * rho.powi(3) - 2.0 * rho * rho + rho + 1.0) / ((1.0 - rho) * (1.0 + rho))
}

/// h'(ρ) = (−2ρ⁴ + 7ρ² − 2ρ + 1) / (1 − ρ²)².
pub fn fcfs_load_factor_slope(rho: f64) -> f64 {
    let d = (1.0 - rho) * (1.0 + rho);
    (-2.0 * rho.powi(4) + 7.0 * rho * rho - 2.0 * rho + 1.0) / (d * d)
}

/// Partial derivatives of the closed forms. Inputs are assumed valid
/// (positive rates, p in (0, 1], λ < μ for FCFS).
pub mod slope {
    use super::{fcfs_load_factor, fcfs_load_factor_slope};
    use crate::model::Policy;

    /// ∂A/∂λ.
    pub fn wrt_lambda(policy: Policy, lambda: f64, mu: f64, p: f64) -> f64 {
        let transmission = -(1.0 + 1.0 / p) / (lambda * lambda);
        match policy {
            Policy::Lcfsp => transmission,
            Policy::Fcfs => transmission + fcfs_load_factor_slope(lambda / mu) / (mu * mu),
        }
    }

    /// ∂A/∂μ.
    pub fn wrt_mu(policy: Policy, lambda: f64, mu: f64, p: f64) -> f64 {
        match policy {
            Policy::Lcfsp => -1.0 / (p * mu * mu),
            Policy::Fcfs => {
                let rho = lambda / mu;
                -(fcfs_load_factor(rho) + rho * fcfs_load_factor_slope(rho)) / (mu * mu)
            }
        }
    }
}

/// Load at which the two policies tie, as a function of accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyThreshold {
    pub rho: f64,
    pub p_star: f64,
}

/// p* = (1 − ρ²) / (2ρ³ − 2ρ² + ρ + 1). For p ≥ p* LCFSP's AoPI is no larger
/// than FCFS's; below it FCFS is strictly better. Returns p* = 0 for ρ ≥ 1,
/// where FCFS is unstable.
pub fn policy_threshold(rho: f64) -> PolicyThreshold {
    let p_star = if rho >= 1.0 {
        0.0
    } else {
        let rho2 = rho * rho;
        ((1.0 - rho2) / (2.0 * rho2 * rho - 2.0 * rho2 + rho + 1.0)).clamp(0.0, 1.0)
    };
    PolicyThreshold { rho, p_star }
}

/// Outcome of comparing the two closed forms at one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyChoice {
    pub policy: Policy,
    /// `+inf` when FCFS is unstable.
    pub fcfs: AopiValue,
    pub lcfsp: AopiValue,
}

impl PolicyChoice {
    pub fn aopi(&self) -> AopiValue {
        match self.policy {
            Policy::Fcfs => self.fcfs,
            Policy::Lcfsp => self.lcfsp,
        }
    }
}

/// The policy with the smaller closed-form AoPI; ties go to LCFSP and FCFS
/// is excluded whenever λ ≥ μ.
pub fn best_policy(lambda: f64, mu: f64, p: f64) -> Result<PolicyChoice, AnalyticsError> {
    let lcfsp = aopi_lcfsp(lambda, mu, p)?;
    let fcfs = match aopi_fcfs(lambda, mu, p) {
        Ok(v) => v,
        Err(AnalyticsError::Unstable { .. }) => AopiValue::INFINITE,
        Err(e) => return Err(e),
    };
    let policy = if fcfs.0 < lcfsp.0 {
        Policy::Fcfs
    } else {
        Policy::Lcfsp
    };
    Ok(PolicyChoice {
        policy,
        fcfs,
        lcfsp,
    })
}

/// Result of a minimum-rate inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinRate {
    Rate(f64),
    /// No finite rate reaches the target.
    Infeasible,
}

impl MinRate {
    pub fn rate(self) -> Option<f64> {
        match self {
            MinRate::Rate(r) => Some(r),
            MinRate::Infeasible => None,
        }
    }
}

fn check_target(target: f64) -> Result<(), AnalyticsError> {
    if target.is_finite() && target > 0.0 {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidTarget(target))
    }
}

/// Bisection on a function decreasing in x over (lo, hi], where `f(hi) <=
/// target < f(lo)`. Returns the smallest x found with f(x) ≤ target, tight
/// to within [`AOPI_ABS_TOL`] of the target.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    for _ in 0..2000 {
        if f(hi) >= target - AOPI_ABS_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Smallest μ keeping the average AoPI at or below `target`.
pub fn min_mu_for_target(
    policy: Policy,
    target: f64,
    lambda: f64,
    p: f64,
) -> Result<MinRate, AnalyticsError> {
    check_target(target)?;
    check_rate("lambda", lambda)?;
    check_accuracy(p)?;
    let transmission = (1.0 + 1.0 / p) / lambda;
    if transmission >= target {
        return Ok(MinRate::Infeasible);
    }
    match policy {
        Policy::Lcfsp => Ok(MinRate::Rate(1.0 / (p * (target - transmission)))),
        Policy::Fcfs => {
            let f = |mu: f64| aopi_or_infinite(Policy::Fcfs, lambda, mu, p);
            let mut hi = 2.0 * lambda;
            while f(hi) > target {
                hi *= 2.0;
                if !hi.is_finite() {
                    return Ok(MinRate::Infeasible);
                }
            }
            Ok(MinRate::Rate(bisect_decreasing(f, lambda, hi, target)))
        }
    }
}

/// Smallest λ keeping the average AoPI at or below `target`. For FCFS the
/// search runs on the decreasing branch (0, λ*] of the convex curve.
pub fn min_lambda_for_target(
    policy: Policy,
    target: f64,
    mu: f64,
    p: f64,
) -> Result<MinRate, AnalyticsError> {
    check_target(target)?;
    check_rate("mu", mu)?;
    check_accuracy(p)?;
    match policy {
        Policy::Lcfsp => {
            let computation = 1.0 / (p * mu);
            if computation >= target {
                Ok(MinRate::Infeasible)
            } else {
                Ok(MinRate::Rate((1.0 + 1.0 / p) / (target - computation)))
            }
        }
        Policy::Fcfs => {
            let f = |lambda: f64| aopi_or_infinite(Policy::Fcfs, lambda, mu, p);
            let best = optimal_lambda_fcfs(mu, p)?;
            if f(best) > target {
                return Ok(MinRate::Infeasible);
            }
            let mut lo = 0.5 * best;
            while f(lo) <= target {
                lo *= 0.5;
                if lo == 0.0 {
                    return Ok(MinRate::Rate(f64::MIN_POSITIVE));
                }
            }
            Ok(MinRate::Rate(bisect_decreasing(f, lo, best, target)))
        }
    }
}

/// argmin over λ ∈ (0, μ) of the FCFS AoPI, by golden-section search on the
/// load ρ = λ/μ. The objective is convex in λ, so the search is exact up to
/// [`ARGMIN_REL_TOL`].
pub fn optimal_lambda_fcfs(mu: f64, p: f64) -> Result<f64, AnalyticsError> {
    check_rate("mu", mu)?;
    check_accuracy(p)?;
    // μ·A_F as a function of ρ; scale-free.
    let scaled = |rho: f64| (1.0 + 1.0 / p) / rho + fcfs_load_factor(rho);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = scaled(x1);
    let mut f2 = scaled(x2);
    for _ in 0..200 {
        if b - a <= ARGMIN_REL_TOL * 0.5 * (a + b) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = scaled(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = scaled(x2);
        }
    }
    Ok(0.5 * (a + b) * mu)
}
