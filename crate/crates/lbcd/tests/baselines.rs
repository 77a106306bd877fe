mod common;

use aopi_core::model::{check_feasible, Policy, SlotContext};
use aopi_lbcd::baselines::{jcab_allocate, Dos, Jcab, DEFAULT_JCAB_BUDGET};
use aopi_lbcd::{LbcdParams, Strategy};
use common::{accuracy_of, aopi_of, camera, cfg, context, representative};

fn latency(ctx: &SlotContext, n: usize, c: &aopi_core::model::VideoConfig, b: f64, f: f64) -> f64 {
    let r = ctx.rates(n, c, b, f).unwrap();
    1.0 / r.lambda + 1.0 / r.mu
}

/// One camera whose frames take seconds to ship: every step up in
/// resolution or model costs far more AoPI than it gains in accuracy.
fn latency_dominated() -> SlotContext {
    context(
        &[384, 512, 640, 768],
        640.0,
        &[1e12, 3e12, 8e12],
        &[0.80, 0.84, 0.86],
        &[camera(2.0, 4.0, 3.0)],
        &[(1e6, 2e12)],
    )
}

#[test]
fn dos_falls_back_to_cheapest_configuration_when_latency_dominates() {
    let ctx = latency_dominated();
    let out = Dos::new(LbcdParams::default(), 0.7).step(0, &ctx);
    let c = out.decision.configs[0];
    assert_eq!(c.resolution, ctx.resolutions[0]);
    assert_eq!(c.model.0, 0);
}

#[test]
fn dos_single_configuration_is_forced() {
    let ctx = context(&[640], 640.0, &[0.2e12], &[0.8], &[camera(5.0, 2.0, 3.0)], &[(5e6, 5e12)]);
    let out = Dos::new(LbcdParams::default(), 0.7).step(0, &ctx);
    assert_eq!(out.decision.configs[0].resolution, ctx.resolutions[0]);
    assert_eq!(out.decision.configs[0].model.0, 0);
    assert_eq!(out.decision.bandwidth[0], 5e6);
    assert_eq!(out.decision.compute[0], 5e12);
}

#[test]
fn dos_matches_enumeration_on_two_configurations() {
    // A single camera keeps the whole server, so enumerating resolution and
    // policy at full resources gives the exact optimum of p − A.
    for (b, c) in [(2e6, 2e12), (10e6, 1e12), (0.5e6, 10e12), (5e6, 0.3e12)] {
        let ctx = context(&[384, 768], 640.0, &[0.1e12], &[0.9], &[camera(5.0, 2.0, 2.5)], &[(b, c)]);
        let eps = LbcdParams::default().epsilon_stability;
        let mut best = f64::NEG_INFINITY;
        for res in 0..2 {
            for policy in Policy::ALL {
                let k = cfg(&ctx, res, policy, 0);
                if !common::stable(&ctx, 0, &k, b, c, eps) {
                    continue;
                }
                best = best.max(accuracy_of(&ctx, 0, &k) - aopi_of(&ctx, 0, &k, b, c));
            }
        }
        let out = Dos::new(LbcdParams::default(), 0.7).step(0, &ctx);
        let d = &out.decision;
        let got = accuracy_of(&ctx, 0, &d.configs[0]) - aopi_of(&ctx, 0, &d.configs[0], d.bandwidth[0], d.compute[0]);
        assert!((got - best).abs() <= 1e-9 * best.abs().max(1.0), "b={b} c={c}: {got} vs {best}");
    }
}

#[test]
fn dos_decisions_are_feasible() {
    let ctx = representative(9, 3);
    let out = Dos::new(LbcdParams::default(), 0.7).step(0, &ctx);
    assert!(out.metrics.fallback.is_none());
    assert!(check_feasible(&out.decision, &ctx).unwrap().is_feasible());
}

#[test]
fn jcab_unbounded_budget_takes_most_accurate_configuration() {
    let ctx = representative(6, 2);
    let out = Jcab::new(LbcdParams::default(), 0.7, f64::INFINITY).step(0, &ctx);
    let top_res = *ctx.resolutions.last().unwrap();
    let top_model = ctx.model_count() - 1;
    for c in &out.decision.configs {
        assert_eq!((c.resolution, c.model.0), (top_res, top_model));
    }
    assert!(out.metrics.flagged.is_empty());
}

#[test]
fn jcab_tight_budget_costs_accuracy() {
    let ctx = representative(9, 3);
    let mut last = f64::INFINITY;
    for budget in [DEFAULT_JCAB_BUDGET, 0.3, 0.2, 0.1] {
        let acc = Jcab::new(LbcdParams::default(), 0.7, budget).step(0, &ctx).metrics.mean_accuracy;
        assert!(acc <= last + 1e-12, "budget {budget}: {acc} > {last}");
        last = acc;
    }
    let loose = Jcab::new(LbcdParams::default(), 0.7, DEFAULT_JCAB_BUDGET).step(0, &ctx);
    let tight = Jcab::new(LbcdParams::default(), 0.7, 0.1).step(0, &ctx);
    assert!(tight.metrics.mean_accuracy < loose.metrics.mean_accuracy - 0.02);
    let mean_res = |o: &aopi_lbcd::StepOutcome| {
        o.decision.configs.iter().map(|c| c.resolution.pixels() as f64).sum::<f64>()
    };
    assert!(mean_res(&tight) < mean_res(&loose));
}

#[test]
fn jcab_meets_budget_unless_flagged() {
    for budget in [0.5, 0.2, 0.05] {
        let ctx = representative(9, 3);
        let out = Jcab::new(LbcdParams::default(), 0.7, budget).step(0, &ctx);
        assert!(check_feasible(&out.decision, &ctx).unwrap().is_feasible());
        let d = &out.decision;
        for n in 0..ctx.cameras.len() {
            if out.metrics.flagged.contains(&n) {
                continue;
            }
            let lat = latency(&ctx, n, &d.configs[n], d.bandwidth[n], d.compute[n]);
            assert!(lat <= budget * (1.0 + 1e-12), "budget {budget}, camera {n}: {lat}");
        }
    }
}

#[test]
fn jcab_flags_cameras_no_configuration_can_serve() {
    let ctx = latency_dominated();
    let out = Jcab::new(LbcdParams::default(), 0.7, 0.01).step(0, &ctx);
    assert_eq!(out.metrics.flagged, vec![0]);
    // The flagged camera runs its fastest configuration.
    assert_eq!(out.decision.configs[0].resolution, ctx.resolutions[0]);
    assert_eq!(out.decision.configs[0].model.0, 0);
}

#[test]
fn jcab_splits_compute_in_proportion_to_complexity() {
    // Two models, the second with twice the FLOPs and a higher ceiling.
    let ctx = context(
        &[640],
        640.0,
        &[0.1e12, 0.2e12],
        &[0.8, 0.9],
        &[camera(5.0, 2.0, 3.0), camera(5.0, 2.0, 3.0)],
        &[(10e6, 10e12)],
    );
    let out = jcab_allocate(&ctx, &[0, 1], 10e6, 10e12, f64::INFINITY, &LbcdParams::default()).unwrap();
    assert_eq!(out.configs[0].model.0, 1);
    assert_eq!(out.configs[1].model.0, 1);
    assert!((out.compute[0] - 5e12).abs() < 1.0);

    // Whatever each budget selects, compute follows per-frame FLOPs.
    let light = cfg(&ctx, 0, Policy::Lcfsp, 0);
    let heavy = cfg(&ctx, 0, Policy::Lcfsp, 1);
    let xi = |c: &aopi_core::model::VideoConfig| ctx.complexity.flops(c.resolution, c.model).unwrap();
    assert!((xi(&heavy) / xi(&light) - 2.0).abs() < 1e-12);
    let camera_split = |configs: &[aopi_core::model::VideoConfig], compute: &[f64]| {
        (compute[0] / compute[1], xi(&configs[0]) / xi(&configs[1]))
    };
    for budget in [0.05, 0.08, 0.1, 0.15, 0.3] {
        let out = jcab_allocate(&ctx, &[0, 1], 10e6, 10e12, budget, &LbcdParams::default()).unwrap();
        let (got, want) = camera_split(&out.configs, &out.compute);
        assert!((got / want - 1.0).abs() < 1e-12, "budget {budget}: {got} vs {want}");
        assert!((out.compute.iter().sum::<f64>() / 10e12 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn jcab_two_to_one_complexity_gives_two_to_one_compute() {
    // Camera 1's slow link eats most of its latency budget, so at some
    // budgets only camera 0 can afford the model with twice the FLOPs.
    let ctx = context(
        &[640],
        640.0,
        &[0.05e12, 0.1e12],
        &[0.8, 0.9],
        &[camera(6.0, 2.0, 3.0), camera(1.0, 2.0, 3.0)],
        &[(40e6, 2e12)],
    );
    let mixed = (1..2000)
        .map(|k| k as f64 * 0.001)
        .find_map(|budget| {
            let out = jcab_allocate(&ctx, &[0, 1], 40e6, 2e12, budget, &LbcdParams::default()).unwrap();
            (out.flagged.is_empty() && out.configs[0].model.0 == 1 && out.configs[1].model.0 == 0)
                .then_some(out)
        })
        .expect("some budget separates the cameras");
    let ratio = mixed.compute[0] / mixed.compute[1];
    assert!((ratio - 2.0).abs() < 1e-9, "{ratio}");
}
