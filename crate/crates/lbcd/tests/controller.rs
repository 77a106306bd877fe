mod common;

use aopi_core::model::{check_feasible, SlotContext};
use aopi_lbcd::baselines::Min;
use aopi_lbcd::bound::{long_run_bound_report, BoundConstants};
use aopi_lbcd::{Lbcd, LbcdParams, SlotMetrics, Strategy};
use common::representative;
use proptest::prelude::*;

/// Capacities of `representative(cameras, servers)` rescaled per slot by a
/// deterministic wobble, so consecutive slots differ.
fn slot_context(cameras: usize, servers: usize, slot: usize) -> SlotContext {
    let mut ctx = representative(cameras, servers);
    for (s, cap) in ctx.servers.iter_mut().enumerate() {
        let phase = slot as f64 * 0.7 + s as f64;
        cap.bandwidth *= 1.0 + 0.3 * phase.sin();
        cap.compute *= 1.0 + 0.3 * (1.3 * phase).cos();
    }
    ctx
}

fn run(strategy: &mut dyn Strategy, cameras: usize, servers: usize, slots: usize) -> Vec<SlotMetrics> {
    (0..slots)
        .map(|t| strategy.step(t, &slot_context(cameras, servers, t)).metrics)
        .collect()
}

fn params(v: f64) -> LbcdParams {
    LbcdParams {
        v,
        ..LbcdParams::default()
    }
}

#[test]
fn identical_inputs_give_identical_metrics() {
    let a = run(&mut Lbcd::new(params(10.0), 0.7), 6, 2, 15);
    let b = run(&mut Lbcd::new(params(10.0), 0.7), 6, 2, 15);
    assert_eq!(a, b);
}

#[test]
fn drift_inequality_holds_every_slot() {
    for (v, p_min) in [(1.0, 0.7), (10.0, 0.7), (10.0, 0.9), (100.0, 0.5)] {
        for m in run(&mut Lbcd::new(params(v), p_min), 6, 2, 30) {
            let lhs = 0.5 * (m.q_after * m.q_after - m.q_before * m.q_before);
            let rhs = 0.5 + m.q_before * (p_min - m.mean_accuracy);
            assert!(lhs <= rhs + 1e-12, "slot {}: {lhs} > {rhs}", m.slot);
        }
    }
}

#[test]
fn decisions_are_feasible_and_traces_descend() {
    let mut lbcd = Lbcd::new(params(10.0), 0.7);
    for t in 0..20 {
        let ctx = slot_context(9, 3, t);
        let out = lbcd.step(t, &ctx);
        assert!(out.metrics.fallback.is_none(), "{:?}", out.metrics.fallback);
        assert!(check_feasible(&out.decision, &ctx).unwrap().is_feasible());
        for trace in &out.metrics.bcd_traces {
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{trace:?}");
            }
        }
    }
}

#[test]
fn queue_stays_empty_when_requirement_is_slack() {
    for m in run(&mut Lbcd::new(params(10.0), 0.1), 6, 2, 20) {
        assert_eq!(m.q_after, 0.0);
    }
}

#[test]
fn queue_grows_under_unreachable_requirement() {
    let metrics = run(&mut Lbcd::new(params(10.0), 0.99), 6, 2, 20);
    for w in metrics.windows(2) {
        assert!(w[1].q_after > w[0].q_after);
    }
}

#[test]
fn larger_queue_buys_accuracy() {
    // Drift-plus-penalty at q = 0 minimizes AoPI; a long backlog pushes the
    // controller to the most accurate configurations it can afford.
    let metrics = run(&mut Lbcd::new(params(10.0), 0.99), 6, 2, 60);
    let first = metrics[0].mean_accuracy;
    let last = metrics.last().unwrap().mean_accuracy;
    assert!(last > first + 0.05, "{first} -> {last}");
    assert!(metrics.last().unwrap().mean_aopi > metrics[0].mean_aopi);
}

#[test]
fn min_lower_bounds_lbcd_every_slot() {
    for (cameras, servers) in [(6, 2), (9, 3)] {
        let lbcd = run(&mut Lbcd::new(params(10.0), 0.7), cameras, servers, 25);
        let min = run(&mut Min::new(params(10.0), 0.7), cameras, servers, 25);
        for (l, m) in lbcd.iter().zip(&min) {
            assert!(
                m.mean_aopi <= l.mean_aopi * (1.0 + 1e-9),
                "slot {}: min {} > lbcd {}",
                l.slot,
                m.mean_aopi,
                l.mean_aopi
            );
        }
    }
}

#[test]
fn one_server_min_equals_lbcd_at_empty_queue() {
    let ctx = representative(5, 1);
    let l = Lbcd::new(params(10.0), 0.7).step(0, &ctx).metrics;
    let m = Min::new(params(10.0), 0.7).step(0, &ctx).metrics;
    assert_eq!(l.q_before, 0.0);
    assert!((l.mean_aopi - m.mean_aopi).abs() <= 1e-9 * m.mean_aopi);
    assert_eq!(
        l.cameras.iter().map(|c| c.config).collect::<Vec<_>>(),
        m.cameras.iter().map(|c| c.config).collect::<Vec<_>>()
    );
}

#[test]
fn min_improves_with_pooled_bandwidth() {
    let base = representative(6, 2);
    let mut last = f64::INFINITY;
    for k in 1..=8 {
        let mut ctx = base.clone();
        for cap in &mut ctx.servers {
            cap.bandwidth *= 0.25 * k as f64;
        }
        let a = Min::new(params(10.0), 0.7).step(0, &ctx).metrics.mean_aopi;
        assert!(a <= last * (1.0 + 1e-6), "scale {k}: {a} > {last}");
        last = a;
    }
}

#[test]
fn long_run_bounds_hold_on_a_short_run() {
    let slots = 40;
    let p_min = 0.7;
    let v = 10.0;
    let lbcd = run(&mut Lbcd::new(params(v), p_min), 6, 2, slots);
    let min = run(&mut Min::new(params(v), p_min), 6, 2, slots);
    let aopi: Vec<f64> = lbcd.iter().map(|m| m.mean_aopi).collect();
    let accuracy: Vec<f64> = lbcd.iter().map(|m| m.mean_accuracy).collect();
    let constants = BoundConstants {
        a_opt_estimate: Some(min.iter().map(|m| m.mean_aopi).sum::<f64>() / slots as f64),
        a_max: aopi.iter().copied().reduce(f64::max),
        phi_max: Some(
            lbcd.iter()
                .map(|m| (m.objective.drift_penalty - m.bcd_traces[0].last().unwrap()).max(0.0))
                .fold(0.0, f64::max),
        ),
        epsilon: Some(0.1),
    };
    let report = long_run_bound_report(&aopi, &accuracy, &constants, v, p_min);
    assert!(!report.partial);
    assert!(!report.aopi_violated, "{report:?}");
    assert!(!report.accuracy_violated, "{report:?}");
}

#[test]
fn running_average_accuracy_approaches_requirement() {
    let metrics = run(&mut Lbcd::new(params(1.0), 0.7), 6, 2, 150);
    let mean = metrics.iter().map(|m| m.mean_accuracy).sum::<f64>() / metrics.len() as f64;
    // The time average falls short by at most q(T)/T.
    let q = metrics.last().unwrap().q_after;
    assert!(mean >= 0.7 - q / 150.0 - 1e-12, "{mean}, q {q}");
    assert!(mean >= 0.68, "{mean}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn drift_inequality_for_any_requirement(p_min in 0.05..0.99f64, v in 0.5..200.0f64) {
        for m in run(&mut Lbcd::new(params(v), p_min), 3, 1, 6) {
            let lhs = 0.5 * (m.q_after * m.q_after - m.q_before * m.q_before);
            let rhs = 0.5 + m.q_before * (p_min - m.mean_accuracy);
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
