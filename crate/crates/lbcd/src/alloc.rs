//! Bandwidth and compute allocation on one server.
//!
//! Both blocks minimize Σₙ Aₙ(xₙ) subject to Σₙ xₙ ≤ X, box bounds from the
//! FCFS stability margin, with every Aₙ convex and decreasing near zero. The
//! solver works in normalized coordinates zₙ = xₙ / X. For a multiplier
//! ν ≥ 0 on the budget each camera's minimizer of Aₙ(z) + νz is found in
//! closed form (LCFSP) or by a bracketed root search on a monotone slope
//! (FCFS); ν itself
//! is found by false position on Σₙ zₙ(ν) = 1.

use aopi_core::analytics::{fcfs_load_factor, fcfs_load_factor_slope};
use aopi_core::model::{ModelError, Policy, SlotContext, VideoConfig};

use crate::LbcdError;

/// A solved allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// Hz or FLOPS per camera, in the order of the input cameras.
    pub amounts: Vec<f64>,
    /// Budget multiplier in normalized units; zero when the budget is slack.
    pub multiplier: f64,
    /// Projected-gradient stationarity residual in normalized coordinates.
    pub residual: f64,
}

/// One camera's AoPI as a function of its normalized share z.
#[derive(Debug, Clone, Copy)]
enum Term {
    /// a / z + const, z > 0.
    Reciprocal { a: f64 },
    /// FCFS with λ = k·z and μ fixed; z ≤ (1 − ε)μ / k.
    FcfsBandwidth { k: f64, mu: f64, w: f64, rho_cap: f64 },
    /// FCFS with μ = z / ξ and λ fixed; z ≥ ξλ / (1 − ε).
    FcfsCompute { xi: f64, lambda: f64, rho_cap: f64 },
}

/// Root of `f(ρ) = target` for increasing `f` on (lo, hi) with f(hi) > target,
/// by Illinois false position. Falls back to halving while an end value is
/// not finite.
fn increasing_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, target: f64) -> f64 {
    let mut g_lo = f(lo) - target;
    let mut g_hi = f(hi) - target;
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let x = if g_lo.is_finite() && g_hi.is_finite() {
            let x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
            if x > lo && x < hi {
                x
            } else {
                mid
            }
        } else {
            mid
        };
        let g = f(x) - target;
        if g <= 0.0 {
            lo = x;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if g == 0.0 {
            return x;
        }
    }
    0.5 * (lo + hi)
}

impl Term {
    fn lower(&self) -> f64 {
        match *self {
            Term::FcfsCompute {
                xi,
                lambda,
                rho_cap,
            } => xi * lambda / rho_cap,
            _ => 0.0,
        }
    }

    fn upper(&self) -> f64 {
        match *self {
            Term::FcfsBandwidth { k, mu, rho_cap, .. } => rho_cap * mu / k,
            _ => f64::INFINITY,
        }
    }

    fn slope(&self, z: f64) -> f64 {
        match *self {
            Term::Reciprocal { a } => -a / (z * z),
            Term::FcfsBandwidth { k, mu, w, .. } => {
                let lambda = k * z;
                k * (-w / (lambda * lambda) + fcfs_load_factor_slope(lambda / mu) / (mu * mu))
            }
            Term::FcfsCompute { xi, lambda, .. } => {
                let mu = z / xi;
                let rho = lambda / mu;
                -(fcfs_load_factor(rho) + rho * fcfs_load_factor_slope(rho)) / (mu * mu * xi)
            }
        }
    }

    /// argmin over the box of A(z) + νz; `inf` when unbounded (ν = 0).
    fn minimizer(&self, nu: f64) -> f64 {
        match *self {
            Term::Reciprocal { a } => {
                if nu <= 0.0 {
                    f64::INFINITY
                } else {
                    (a / nu).sqrt()
                }
            }
            Term::FcfsBandwidth { k, mu, w, rho_cap } => {
                // Slope is (k/μ²)·(h'(ρ) − w/ρ²), increasing in ρ.
                let target = -nu * mu * mu / k;
                let phi = |rho: f64| fcfs_load_factor_slope(rho) - w / (rho * rho);
                if phi(rho_cap) <= target {
                    return rho_cap * mu / k;
                }
                increasing_root(phi, 0.0, rho_cap, target) * mu / k
            }
            Term::FcfsCompute {
                xi,
                lambda,
                rho_cap,
            } => {
                // Slope is −ψ(ρ)/(λ²ξ) with ψ(ρ) = ρ²(h + ρh') increasing in ρ.
                if nu <= 0.0 {
                    return f64::INFINITY;
                }
                let target = nu * lambda * lambda * xi;
                let psi = |rho: f64| {
                    rho * rho * (fcfs_load_factor(rho) + rho * fcfs_load_factor_slope(rho))
                };
                if psi(rho_cap) <= target {
                    return xi * lambda / rho_cap;
                }
                xi * lambda / increasing_root(psi, 0.0, rho_cap, target)
            }
        }
    }
}

fn shares(terms: &[Term], nu: f64) -> Vec<f64> {
    terms.iter().map(|t| t.minimizer(nu)).collect()
}

/// Excess of Σ z(ν) over the unit budget.
fn excess(terms: &[Term], nu: f64) -> f64 {
    terms.iter().map(|t| t.minimizer(nu)).sum::<f64>() - 1.0
}

/// Euclidean projection onto {lᵢ ≤ zᵢ ≤ uᵢ, Σ zᵢ ≤ 1}.
pub(crate) fn project_capped_simplex(y: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let clip = |tau: f64| -> Vec<f64> {
        y.iter()
            .zip(lower.iter().zip(upper))
            .map(|(&v, (&l, &u))| (v - tau).clamp(l, u))
            .collect()
    };
    let free = clip(0.0);
    if free.iter().sum::<f64>() <= 1.0 {
        return free;
    }
    let (mut lo, mut hi) = (
        0.0,
        y.iter()
            .zip(lower)
            .map(|(v, l)| v - l)
            .fold(0.0_f64, f64::max),
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clip(mid).iter().sum::<f64>() > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.max(1.0) {
            break;
        }
    }
    clip(hi)
}

fn residual(terms: &[Term], z: &[f64]) -> f64 {
    let lower: Vec<f64> = terms.iter().map(Term::lower).collect();
    let upper: Vec<f64> = terms.iter().map(Term::upper).collect();
    let y: Vec<f64> = terms.iter().zip(z).map(|(t, &v)| v - t.slope(v)).collect();
    let p = project_capped_simplex(&y, &lower, &upper);
    z.iter()
        .zip(&p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Solves the normalized problem. Returns (z, ν).
fn water_fill(terms: &[Term]) -> Result<(Vec<f64>, f64), f64> {
    let required: f64 = terms.iter().map(Term::lower).sum();
    if required > 1.0 + 1e-9 {
        return Err(required);
    }
    let free = shares(terms, 0.0);
    if free.iter().sum::<f64>() <= 1.0 {
        return Ok((free, 0.0));
    }

    // Bracket ν on a log scale around the mean slope at an equal split.
    let even = 1.0 / terms.len() as f64;
    let scale = terms
        .iter()
        .map(|t| t.slope(even.clamp(t.lower(), t.upper())).abs())
        .sum::<f64>()
        / terms.len() as f64;
    let mut t_lo = scale.max(f64::MIN_POSITIVE).ln();
    let mut f_lo = excess(terms, t_lo.exp());
    let mut t_hi = t_lo;
    let mut f_hi = f_lo;
    let step = 4f64.ln();
    for _ in 0..400 {
        if f_lo > 0.0 {
            break;
        }
        t_hi = t_lo;
        f_hi = f_lo;
        t_lo -= step;
        f_lo = excess(terms, t_lo.exp());
    }
    for _ in 0..400 {
        if f_hi <= 0.0 {
            break;
        }
        t_lo = t_hi;
        f_lo = f_hi;
        t_hi += step;
        f_hi = excess(terms, t_hi.exp());
    }

    // Illinois false position on t = ln ν; the hi side stays feasible.
    let (mut g_lo, mut g_hi) = (f_lo, f_hi);
    let mut side = 0i8;
    for _ in 0..200 {
        if f_hi > -1e-15 || t_hi - t_lo <= 1e-15 * t_hi.abs().max(1.0) {
            break;
        }
        let t = (t_lo * g_hi - t_hi * g_lo) / (g_hi - g_lo);
        let t = if t > t_lo && t < t_hi {
            t
        } else {
            0.5 * (t_lo + t_hi)
        };
        let f = excess(terms, t.exp());
        if f > 0.0 {
            t_lo = t;
            g_lo = f;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            t_hi = t;
            f_hi = f;
            g_hi = f;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
    }
    let nu = t_hi.exp();
    Ok((shares(terms, nu), nu))
}

fn solve(terms: Vec<Term>, budget: f64, tol: f64) -> Result<Allocation, LbcdError> {
    if terms.is_empty() {
        return Ok(Allocation {
            amounts: vec![],
            multiplier: 0.0,
            residual: 0.0,
        });
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(LbcdError::Infeasible(format!(
            "{} camera(s) share a budget of {budget}",
            terms.len()
        )));
    }
    let (z, nu) = water_fill(&terms).map_err(|required| {
        LbcdError::Infeasible(format!(
            "FCFS stability floors need {:.6} of the budget",
            required
        ))
    })?;
    let res = residual(&terms, &z);
    if !(res <= tol) {
        return Err(LbcdError::NotConverged { residual: res });
    }
    Ok(Allocation {
        amounts: z.iter().map(|v| v * budget).collect(),
        multiplier: nu,
        residual: res,
    })
}

fn check_lengths(cameras: &[usize], configs: &[VideoConfig], other: &[f64]) -> Result<(), LbcdError> {
    if configs.len() != cameras.len() || other.len() != cameras.len() {
        return Err(ModelError::DimensionMismatch {
            what: "per-camera inputs",
            got: configs.len().min(other.len()),
            expected: cameras.len(),
        }
        .into());
    }
    Ok(())
}

/// Splits `budget` Hz among `cameras` with configs and compute fixed,
/// minimizing the sum of closed-form AoPI. FCFS cameras keep
/// λ ≤ (1 − ε)μ.
pub fn optimize_bandwidth(
    ctx: &SlotContext,
    cameras: &[usize],
    configs: &[VideoConfig],
    compute: &[f64],
    budget: f64,
    epsilon: f64,
    tol: f64,
) -> Result<Allocation, LbcdError> {
    check_lengths(cameras, configs, compute)?;
    let mut terms = Vec::with_capacity(cameras.len());
    for ((&n, cfg), &c) in cameras.iter().zip(configs).zip(compute) {
        let unit = ctx.rates(n, cfg, 1.0, c)?;
        if !(unit.accuracy > 0.0) {
            return Err(LbcdError::DegenerateAccuracy { camera: n });
        }
        if !(unit.mu > 0.0) {
            return Err(LbcdError::Infeasible(format!("camera {n} has no compute")));
        }
        let k = unit.lambda * budget;
        let w = 1.0 + 1.0 / unit.accuracy;
        terms.push(match cfg.policy {
            Policy::Lcfsp => Term::Reciprocal { a: w / k },
            Policy::Fcfs => Term::FcfsBandwidth {
                k,
                mu: unit.mu,
                w,
                rho_cap: 1.0 - epsilon,
            },
        });
    }
    solve(terms, budget, tol)
}

/// Splits `budget` FLOPS among `cameras` with configs and bandwidth fixed.
/// FCFS cameras get at least the compute that keeps μ ≥ λ / (1 − ε).
pub fn optimize_compute(
    ctx: &SlotContext,
    cameras: &[usize],
    configs: &[VideoConfig],
    bandwidth: &[f64],
    budget: f64,
    epsilon: f64,
    tol: f64,
) -> Result<Allocation, LbcdError> {
    check_lengths(cameras, configs, bandwidth)?;
    let mut terms = Vec::with_capacity(cameras.len());
    for ((&n, cfg), &b) in cameras.iter().zip(configs).zip(bandwidth) {
        let unit = ctx.rates(n, cfg, b, 1.0)?;
        if !(unit.accuracy > 0.0) {
            return Err(LbcdError::DegenerateAccuracy { camera: n });
        }
        if !(unit.lambda > 0.0) {
            return Err(LbcdError::Infeasible(format!("camera {n} has no bandwidth")));
        }
        // μ = c / ξ, so with z = c / budget, μ = z / ξ' where ξ' = ξ / budget.
        let xi = 1.0 / (unit.mu * budget);
        terms.push(match cfg.policy {
            Policy::Lcfsp => Term::Reciprocal {
                a: xi / unit.accuracy,
            },
            Policy::Fcfs => Term::FcfsCompute {
                xi,
                lambda: unit.lambda,
                rho_cap: 1.0 - epsilon,
            },
        });
    }
    solve(terms, budget, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_identity_inside() {
        let p = project_capped_simplex(&[0.2, 0.3], &[0.0, 0.0], &[1.0, 1.0]);
        assert_eq!(p, vec![0.2, 0.3]);
    }

    #[test]
    fn projection_onto_simplex_face() {
        let p = project_capped_simplex(&[1.0, 1.0], &[0.0, 0.0], &[f64::INFINITY; 2]);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        let p = project_capped_simplex(&[2.0, 0.0], &[0.0, 0.1], &[0.6, 1.0]);
        assert!((p[0] - 0.6).abs() < 1e-12);
        assert!((p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reciprocal_terms_split_by_square_root() {
        let terms = vec![Term::Reciprocal { a: 1.0 }, Term::Reciprocal { a: 4.0 }];
        let (z, nu) = water_fill(&terms).unwrap();
        assert!((z[0] - 1.0 / 3.0).abs() < 1e-12, "{z:?}");
        assert!((z[1] - 2.0 / 3.0).abs() < 1e-12);
        assert!((nu - 9.0).abs() < 1e-9);
        assert!(residual(&terms, &z) < 1e-12);
    }

    #[test]
    fn fcfs_bandwidth_stops_at_interior_minimum() {
        // Tiny μ relative to budget: the optimum sits at the unconstrained
        // argmin, below both the cap and the budget.
        let t = Term::FcfsBandwidth {
            k: 100.0,
            mu: 1.0,
            w: 2.0,
            rho_cap: 0.99,
        };
        let z = t.minimizer(0.0);
        assert!(z < 0.99 / 100.0);
        assert!(t.slope(z).abs() < 1e-6);
        let (zs, nu) = water_fill(&[t]).unwrap();
        assert_eq!(nu, 0.0);
        assert_eq!(zs[0], z);
    }

    #[test]
    fn fcfs_compute_respects_floor() {
        let t = Term::FcfsCompute {
            xi: 0.5,
            lambda: 1.0,
            rho_cap: 0.99,
        };
        assert!((t.lower() - 0.5 / 0.99).abs() < 1e-15);
        assert!(water_fill(&[t, t]).is_err());
        let ok = Term::FcfsCompute {
            xi: 0.1,
            lambda: 1.0,
            rho_cap: 0.99,
        };
        let (z, _) = water_fill(&[ok, ok]).unwrap();
        assert!((z[0] - 0.5).abs() < 1e-12 && (z[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slopes_match_finite_differences() {
        let terms = [
            Term::Reciprocal { a: 2.0 },
            Term::FcfsBandwidth {
                k: 10.0,
                mu: 4.0,
                w: 2.5,
                rho_cap: 0.99,
            },
            Term::FcfsCompute {
                xi: 0.05,
                lambda: 3.0,
                rho_cap: 0.99,
            },
        ];
        let value = |t: &Term, z: f64| match *t {
            Term::Reciprocal { a } => a / z,
            Term::FcfsBandwidth { k, mu, w, .. } => {
                let l = k * z;
                w / l + fcfs_load_factor(l / mu) / mu
            }
            Term::FcfsCompute { xi, lambda, .. } => {
                let mu = z / xi;
                fcfs_load_factor(lambda / mu) / mu
            }
        };
        for (t, z) in terms.iter().zip([0.3, 0.2, 0.4]) {
            let h = 1e-6;
            let fd = (value(t, z + h) - value(t, z - h)) / (2.0 * h);
            assert!((fd - t.slope(z)).abs() < 1e-5 * fd.abs().max(1.0), "{t:?}");
        }
    }
}
