mod common;

use aopi_core::model::{Policy, SlotContext, VideoConfig};
use aopi_lbcd::alloc::{optimize_bandwidth, optimize_compute};
use aopi_lbcd::LbcdError;
use common::*;
use proptest::prelude::*;

const EPS: f64 = 0.01;
const TOL: f64 = 1e-6;

/// Two cameras at r = r₀ = 100 with α·r² = 1 bit, so λ = SE·b.
fn toy(alphas: [f64; 2], kappas: &[f64], budget: (f64, f64)) -> SlotContext {
    context(
        &[100],
        100.0,
        kappas,
        &[1.0, 1.0],
        &[
            camera(1.0, alphas[0] * 1e-4, 1.2),
            camera(1.0, alphas[1] * 1e-4, 1.2),
        ],
        &[budget],
    )
}

fn total_aopi(ctx: &SlotContext, cfgs: &[VideoConfig], b: &[f64], c: &[f64]) -> f64 {
    (0..2)
        .map(|n| {
            if stable(ctx, n, &cfgs[n], b[n], c[n], EPS) {
                aopi_of(ctx, n, &cfgs[n], b[n], c[n])
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Minimum over the grid {(i, j)·X/K : i + j ≤ K} of ~10⁴ points.
fn simplex_grid_min(budget: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let k = 140;
    let mut best = f64::INFINITY;
    for i in 0..=k {
        for j in 0..=(k - i) {
            let x = budget * i as f64 / k as f64;
            let y = budget * j as f64 / k as f64;
            best = best.min(f(x, y));
        }
    }
    best
}

fn assert_matches_grid(solver: f64, grid: f64) {
    assert!(solver <= grid * (1.0 + 1e-9), "solver {solver} worse than grid {grid}");
    assert!(grid <= solver * 1.005, "grid {grid} not within 0.5% of solver {solver}");
}

#[test]
fn bandwidth_doubled_frame_matches_grid() {
    let ctx = toy([1.0, 2.0], &[1.0], (10.0, 10.0));
    let cfgs = [cfg(&ctx, 0, Policy::Lcfsp, 0); 2];
    let c = [5.0, 5.0];
    let a = optimize_bandwidth(&ctx, &[0, 1], &cfgs, &c, 10.0, EPS, TOL).unwrap();
    assert!(a.residual <= TOL);
    let solver = total_aopi(&ctx, &cfgs, &a.amounts, &c);
    let grid = simplex_grid_min(10.0, |x, y| total_aopi(&ctx, &cfgs, &[x, y], &c));
    assert_matches_grid(solver, grid);
    // Bigger frames get more bandwidth, by √2 under LCFSP.
    assert!((a.amounts[1] / a.amounts[0] - 2f64.sqrt()).abs() < 1e-6);
}

#[test]
fn bandwidth_mixed_policies_match_grid() {
    for (b, mu) in [(10.0, 5.0), (4.0, 8.0), (30.0, 3.0)] {
        let ctx = toy([1.0, 1.5], &[1.0], (b, 2.0 * mu));
        let cfgs = [
            cfg(&ctx, 0, Policy::Fcfs, 0),
            cfg(&ctx, 0, Policy::Lcfsp, 0),
        ];
        let c = [mu, mu];
        let a = optimize_bandwidth(&ctx, &[0, 1], &cfgs, &c, b, EPS, TOL).unwrap();
        assert!(a.residual <= TOL);
        assert!(a.amounts.iter().sum::<f64>() <= b * (1.0 + 1e-12));
        let solver = total_aopi(&ctx, &cfgs, &a.amounts, &c);
        let grid = simplex_grid_min(b, |x, y| total_aopi(&ctx, &cfgs, &[x, y], &c));
        assert_matches_grid(solver, grid);
    }
}

#[test]
fn bandwidth_two_fcfs_cameras_may_leave_slack() {
    // Huge budget: each FCFS camera stops at its own AoPI minimum.
    let ctx = toy([1.0, 1.0], &[1.0], (1000.0, 10.0));
    let cfgs = [cfg(&ctx, 0, Policy::Fcfs, 0); 2];
    let c = [5.0, 5.0];
    let a = optimize_bandwidth(&ctx, &[0, 1], &cfgs, &c, 1000.0, EPS, TOL).unwrap();
    assert_eq!(a.multiplier, 0.0);
    assert!(a.amounts.iter().sum::<f64>() < 1000.0);
    let best = aopi_core::analytics::optimal_lambda_fcfs(5.0, accuracy_of(&ctx, 0, &cfgs[0])).unwrap();
    assert!((a.amounts[0] - best).abs() / best < 1e-6, "{} vs {best}", a.amounts[0]);
}

#[test]
fn bandwidth_single_camera_cases() {
    let ctx = toy([1.0, 1.0], &[1.0], (10.0, 10.0));
    let lcfsp = [cfg(&ctx, 0, Policy::Lcfsp, 0)];
    let a = optimize_bandwidth(&ctx, &[0], &lcfsp, &[5.0], 10.0, EPS, TOL).unwrap();
    assert!((a.amounts[0] - 10.0).abs() < 1e-9);
    // FCFS with μ = 5: the cap λ = 4.95 binds before the budget of 10.
    let fcfs = [cfg(&ctx, 0, Policy::Fcfs, 0)];
    let a = optimize_bandwidth(&ctx, &[0], &fcfs, &[5.0], 10.0, EPS, TOL).unwrap();
    let interior = aopi_core::analytics::optimal_lambda_fcfs(5.0, accuracy_of(&ctx, 0, &fcfs[0])).unwrap();
    let expected = interior.min((1.0 - EPS) * 5.0).min(10.0);
    assert!((a.amounts[0] - expected).abs() < 1e-6 * expected);
}

#[test]
fn symmetric_cameras_split_evenly() {
    let ctx = toy([1.0, 1.0], &[1.0], (10.0, 10.0));
    for policy in Policy::ALL {
        let cfgs = [cfg(&ctx, 0, policy, 0); 2];
        let b = optimize_bandwidth(&ctx, &[0, 1], &cfgs, &[20.0, 20.0], 10.0, EPS, TOL).unwrap();
        assert!((b.amounts[0] - b.amounts[1]).abs() < 1e-9 * b.amounts[0]);
        let c = optimize_compute(&ctx, &[0, 1], &cfgs, &[3.0, 3.0], 10.0, EPS, TOL).unwrap();
        assert!((c.amounts[0] - 5.0).abs() < 1e-9);
        assert!((c.amounts[1] - 5.0).abs() < 1e-9);
    }
}

#[test]
fn compute_single_camera_takes_everything() {
    let ctx = toy([1.0, 1.0], &[1.0], (10.0, 10.0));
    for policy in Policy::ALL {
        let cfgs = [cfg(&ctx, 0, policy, 0)];
        let c = optimize_compute(&ctx, &[0], &cfgs, &[3.0], 7.0, EPS, TOL).unwrap();
        assert!((c.amounts[0] - 7.0).abs() < 1e-9, "{policy}");
    }
}

#[test]
fn compute_asymmetric_complexity_matches_grid() {
    let ctx = toy([1.0, 1.0], &[1.0, 2.0], (10.0, 12.0));
    for policies in [
        [Policy::Lcfsp, Policy::Lcfsp],
        [Policy::Fcfs, Policy::Lcfsp],
        [Policy::Fcfs, Policy::Fcfs],
    ] {
        let cfgs = [
            cfg(&ctx, 0, policies[0], 0),
            cfg(&ctx, 0, policies[1], 1),
        ];
        let b = [2.0, 2.0];
        let a = optimize_compute(&ctx, &[0, 1], &cfgs, &b, 12.0, EPS, TOL).unwrap();
        assert!(a.residual <= TOL);
        let solver = total_aopi(&ctx, &cfgs, &b, &a.amounts);
        let grid = simplex_grid_min(12.0, |x, y| total_aopi(&ctx, &cfgs, &b, &[x, y]));
        assert_matches_grid(solver, grid);
    }
}

#[test]
fn compute_floors_beyond_budget_are_infeasible() {
    let ctx = toy([1.0, 1.0], &[1.0], (10.0, 10.0));
    let cfgs = [cfg(&ctx, 0, Policy::Fcfs, 0); 2];
    // Each FCFS camera needs μ ≥ 6/0.99, i.e. more than 12 FLOPS in total.
    let err = optimize_compute(&ctx, &[0, 1], &cfgs, &[6.0, 6.0], 12.0, EPS, TOL).unwrap_err();
    assert!(matches!(err, LbcdError::Infeasible(_)));
}

#[test]
fn zero_budget_with_cameras_is_infeasible() {
    let ctx = toy([1.0, 1.0], &[1.0], (0.0, 10.0));
    let cfgs = [cfg(&ctx, 0, Policy::Lcfsp, 0)];
    assert!(matches!(
        optimize_bandwidth(&ctx, &[0], &cfgs, &[5.0], 0.0, EPS, TOL),
        Err(LbcdError::Infeasible(_))
    ));
    assert!(optimize_bandwidth(&ctx, &[], &[], &[], 0.0, EPS, TOL)
        .unwrap()
        .amounts
        .is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn allocations_are_stationary_and_feasible(
        alphas in prop::array::uniform2(0.2f64..5.0),
        mus in prop::array::uniform2(1.0f64..30.0),
        fcfs in prop::array::uniform2(any::<bool>()),
        budget in 1.0f64..50.0,
    ) {
        let ctx = toy(alphas, &[1.0], (budget, budget));
        let cfgs: Vec<VideoConfig> = fcfs
            .iter()
            .map(|&f| cfg(&ctx, 0, if f { Policy::Fcfs } else { Policy::Lcfsp }, 0))
            .collect();
        let a = optimize_bandwidth(&ctx, &[0, 1], &cfgs, &mus, budget, EPS, TOL).unwrap();
        prop_assert!(a.residual <= TOL);
        prop_assert!(a.amounts.iter().sum::<f64>() <= budget * (1.0 + 1e-12));
        for n in 0..2 {
            prop_assert!(a.amounts[n] > 0.0);
            prop_assert!(stable(&ctx, n, &cfgs[n], a.amounts[n], mus[n], EPS * (1.0 - 1e-9)));
        }
        let solver = total_aopi(&ctx, &cfgs, &a.amounts, &mus);
        // No feasible perturbation along the budget line does better.
        for t in [-1e-3, 1e-3] {
            let moved = [a.amounts[0] * (1.0 + t), a.amounts[1] - a.amounts[0] * t];
            let other = total_aopi(&ctx, &cfgs, &moved, &mus);
            prop_assert!(other >= solver * (1.0 - 1e-9));
        }
    }
}
