use aopi_core::analytics::{aopi_fcfs, aopi_lcfsp};
use aopi_core::model::{
    AccuracyProfile, AopiInputs, CameraSlot, ComplexityProfile, EdgeServerCapacity, LinkParams,
    ModelId, Policy, Resolution, SlotContext, SlotDecision, VideoConfig,
};
use aopi_core::sim::{
    diagnostics_check, simulate_log, simulate_single, simulate_slot, summarize, AopiPath,
    FrameRecord, SimConfig, SlotSimOptions,
};
use proptest::prelude::*;

fn config(lambda: f64, mu: f64, p: f64, policy: Policy, frames: usize, seed: u64) -> SimConfig {
    SimConfig::new(
        AopiInputs {
            lambda,
            mu,
            accuracy: p,
            policy,
        },
        frames,
        seed,
    )
}

/// Area under the AoPI path over [0, end], accumulated per inter-departure
/// interval: the plain age-of-information trapezoid referenced to the
/// departing frame, plus a parallelogram for every inaccurate frame since
/// the last accurate one (its inter-generation gap times the interval).
fn area_by_departures(log: &[FrameRecord], end: f64) -> f64 {
    let mut departures: Vec<(f64, f64, bool)> = vec![(0.0, 0.0, true)];
    departures.extend(
        log.iter()
            .filter_map(|r| r.complete_time.map(|c| (c, r.gen_time, r.accurate))),
    );
    departures.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut area = 0.0;
    let mut last_accurate_gen = 0.0;
    for (k, &(c, g, accurate)) in departures.iter().enumerate() {
        if c > end {
            break;
        }
        if accurate {
            last_accurate_gen = g;
        }
        let next = departures.get(k + 1).map_or(end, |d| d.0.min(end));
        let trapezoid = 0.5 * ((next - g).powi(2) - (c - g).powi(2));
        let stale = g - last_accurate_gen;
        area += trapezoid + stale * (next - c);
    }
    area
}

#[test]
fn direct_integral_matches_departure_decomposition() {
    for (policy, lambda, mu, p) in [
        (Policy::Fcfs, 2.0, 4.0, 1.0),
        (Policy::Fcfs, 3.0, 4.0, 0.4),
        (Policy::Lcfsp, 2.0, 4.0, 0.5),
        (Policy::Lcfsp, 8.0, 4.0, 0.7),
    ] {
        for seed in 0..5 {
            let log = simulate_log(&config(lambda, mu, p, policy, 20_000, seed)).unwrap();
            let end = log.last().unwrap().arrive_time;
            let direct = AopiPath::from_log(&log).area(0.0, end);
            let oracle = area_by_departures(&log, end);
            assert!(
                ((direct - oracle) / oracle).abs() < 1e-9,
                "{policy} seed {seed}: {direct} vs {oracle}"
            );
        }
    }
}

#[test]
fn path_is_sawtooth_with_unit_slope() {
    let log = simulate_log(&config(3.0, 4.0, 0.6, Policy::Lcfsp, 5000, 2)).unwrap();
    let path = AopiPath::from_log(&log);
    for w in path.jumps.windows(2) {
        let (t0, g0) = w[0];
        let (t1, g1) = w[1];
        assert!(t1 >= t0);
        // The reference only moves forward: newer accurate frames.
        assert!(g1 >= g0);
        let mid = 0.5 * (t0 + t1);
        assert!((path.age_at(mid) - (mid - g0)).abs() < 1e-12);
        assert!((path.age_at(t1) - (t1 - g1)).abs() < 1e-12);
    }
}

#[test]
fn closed_forms_inside_confidence_interval() {
    let cases = [
        (Policy::Fcfs, 2.0, 4.0, 1.0, aopi_fcfs(2.0, 4.0, 1.0).unwrap().seconds()),
        (Policy::Lcfsp, 2.0, 4.0, 0.5, aopi_lcfsp(2.0, 4.0, 0.5).unwrap().seconds()),
    ];
    for (policy, l, m, p, exact) in cases {
        let r = simulate_single(&config(l, m, p, policy, 500_000, 17)).unwrap();
        // Allow a little slack over the nominal 95% half-width.
        assert!(
            (r.mean_aopi - exact).abs() <= 1.5 * r.aopi_ci95,
            "{policy}: sim {} ± {} vs {exact}",
            r.mean_aopi,
            r.aopi_ci95
        );
        assert!((r.mean_aopi - exact).abs() / exact < 0.02);
    }
}

#[test]
fn preemption_ratio_matches_race() {
    let (l, m) = (20.0, 4.0);
    let r = simulate_single(&config(l, m, 1.0, Policy::Lcfsp, 200_000, 3)).unwrap();
    let ratio = r.frames_preempted as f64 / r.frames_generated as f64;
    assert!((ratio - l / (l + m)).abs() < 0.01, "{ratio}");
    assert!(r.frames_completed + r.frames_preempted <= r.frames_generated);
}

#[test]
fn moment_diagnostics_agree() {
    let fcfs = config(2.0, 4.0, 1.0, Policy::Fcfs, 400_000, 8);
    let report = diagnostics_check(&simulate_single(&fcfs).unwrap(), &fcfs.inputs).unwrap();
    assert!(report.get("tx_wait_product").unwrap().rel_error < 0.03);
    assert!(report.get("mean_transmission").unwrap().rel_error < 0.01);
    assert!(report.get("mean_service").unwrap().rel_error < 0.01);

    let lcfsp = config(2.0, 4.0, 1.0, Policy::Lcfsp, 400_000, 8);
    let report = diagnostics_check(&simulate_single(&lcfsp).unwrap(), &lcfsp.inputs).unwrap();
    assert!(report.get("effective_rate").unwrap().rel_error < 0.01);
    assert!(report.get("interdeparture_mean").unwrap().rel_error < 0.01);
    assert!(report.get("interdeparture_second_moment").unwrap().rel_error < 0.03);
}

#[test]
fn empirical_accuracy_tracks_profile() {
    let r = simulate_single(&config(2.0, 4.0, 0.7, Policy::Fcfs, 200_000, 4)).unwrap();
    let n = r.window_completions as f64;
    let se = (0.7 * 0.3 / n).sqrt();
    assert!((r.empirical_accuracy - 0.7).abs() < 4.0 * se);
}

fn slot_ctx(cameras: usize) -> SlotContext {
    SlotContext {
        resolutions: vec![Resolution::new(512).unwrap()],
        complexity: ComplexityProfile::Quadratic {
            ref_resolution: 512.0,
            flops_at_ref: vec![1e9],
        },
        cameras: (0..cameras)
            .map(|_| CameraSlot {
                link: LinkParams {
                    tx_power: 1.0,
                    channel_gain: 1.0,
                    noise_power: 1.0 / 3.0,
                    bits_per_pixel_sq: 1.0,
                },
                accuracy: AccuracyProfile::Saturating {
                    ref_resolution: 512.0,
                    ceilings: vec![0.9],
                    difficulty: 2.0,
                },
            })
            .collect(),
        servers: vec![EdgeServerCapacity {
            bandwidth: 1e7,
            compute: 1e11,
        }],
    }
}

fn slot_decision(cameras: usize, policy: Policy) -> SlotDecision {
    // 2 bit/s/Hz, 512² bits per frame: λ = 2·b/512².
    let lambda = 4.0;
    SlotDecision {
        assignment: vec![0; cameras],
        configs: vec![
            VideoConfig {
                resolution: Resolution::new(512).unwrap(),
                policy,
                model: ModelId(0),
            };
            cameras
        ],
        bandwidth: vec![lambda * 512.0 * 512.0 / 2.0; cameras],
        compute: vec![8.0 * 1e9; cameras],
    }
}

#[test]
fn slot_simulation_tracks_closed_forms() {
    let ctx = slot_ctx(4);
    let opts = SlotSimOptions {
        horizon_frames: 200_000,
        warmup_fraction: 0.1,
        seed: 99,
    };
    for policy in Policy::ALL {
        let decision = slot_decision(4, policy);
        let results = simulate_slot(&decision, &ctx, &opts).unwrap();
        assert_eq!(results.len(), 4);
        let sim = results.iter().map(|r| r.mean_aopi).sum::<f64>() / 4.0;
        let exact = (0..4)
            .map(|n| {
                let i = ctx.rates(n, &decision.configs[n], decision.bandwidth[n], decision.compute[n]).unwrap();
                aopi_core::analytics::aopi(&i).unwrap().seconds()
            })
            .sum::<f64>()
            / 4.0;
        assert!((sim - exact).abs() / exact < 0.02, "{policy}: {sim} vs {exact}");
    }
}

#[test]
fn slot_simulation_is_deterministic_and_total() {
    let ctx = slot_ctx(3);
    let opts = SlotSimOptions {
        horizon_frames: 5000,
        warmup_fraction: 0.1,
        seed: 5,
    };
    let d = slot_decision(3, Policy::Lcfsp);
    assert_eq!(
        simulate_slot(&d, &ctx, &opts).unwrap(),
        simulate_slot(&d, &ctx, &opts).unwrap()
    );
    let empty = SlotDecision {
        assignment: vec![],
        configs: vec![],
        bandwidth: vec![],
        compute: vec![],
    };
    assert!(simulate_slot(&empty, &slot_ctx(0), &opts).unwrap().is_empty());

    // Identical per-camera seeds give identical results.
    let a = simulate_single(&config(4.0, 8.0, 0.9, Policy::Fcfs, 5000, 1)).unwrap();
    let b = simulate_single(&config(4.0, 8.0, 0.9, Policy::Fcfs, 5000, 1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn slot_simulation_reports_camera_index() {
    let ctx = slot_ctx(2);
    let mut d = slot_decision(2, Policy::Fcfs);
    d.compute[1] = 1e9; // μ = 1 < λ
    let err = simulate_slot(
        &d,
        &ctx,
        &SlotSimOptions {
            horizon_frames: 2000,
            warmup_fraction: 0.1,
            seed: 0,
        },
    )
    .unwrap_err();
    assert!(err.to_string().starts_with("camera 1"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sample_path_areas_agree(
        lambda in 0.5f64..20.0,
        ratio in 0.1f64..0.95,
        p in 0.05f64..=1.0,
        fcfs in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let policy = if fcfs { Policy::Fcfs } else { Policy::Lcfsp };
        let mu = lambda / ratio;
        let log = simulate_log(&config(lambda, mu, p, policy, 3000, seed)).unwrap();
        let end = log.last().unwrap().arrive_time;
        let direct = AopiPath::from_log(&log).area(0.0, end);
        let oracle = area_by_departures(&log, end);
        prop_assert!(((direct - oracle) / oracle).abs() < 1e-9);

        let r = summarize(&log, 0.1, policy);
        prop_assert!(r.frames_completed + r.frames_preempted <= r.frames_generated);
        let in_flight = r.frames_generated - r.frames_completed - r.frames_preempted;
        if policy == Policy::Lcfsp {
            prop_assert!(in_flight <= 1);
        } else {
            prop_assert_eq!(r.frames_preempted, 0);
        }
    }
}
