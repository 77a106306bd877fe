#![allow(dead_code)]

use aopi_core::analytics::aopi_or_infinite;
use aopi_core::model::{
    AccuracyProfile, CameraSlot, ComplexityProfile, EdgeServerCapacity, LinkParams, ModelId,
    Policy, Resolution, SlotContext, VideoConfig,
};

/// A link with the given spectral efficiency (bit/s/Hz) and frame-size
/// constant α.
pub fn link(spectral_efficiency: f64, alpha: f64) -> LinkParams {
    LinkParams {
        tx_power: 1.0,
        channel_gain: 1.0,
        noise_power: 1.0 / (2f64.powf(spectral_efficiency) - 1.0),
        bits_per_pixel_sq: alpha,
    }
}

pub struct Camera {
    pub se: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn camera(se: f64, alpha: f64, beta: f64) -> Camera {
    Camera { se, alpha, beta }
}

pub fn context(
    resolutions: &[u32],
    ref_resolution: f64,
    kappas: &[f64],
    ceilings: &[f64],
    cameras: &[Camera],
    servers: &[(f64, f64)],
) -> SlotContext {
    SlotContext {
        resolutions: resolutions.iter().map(|&r| Resolution::new(r).unwrap()).collect(),
        complexity: ComplexityProfile::Quadratic {
            ref_resolution,
            flops_at_ref: kappas.to_vec(),
        },
        cameras: cameras
            .iter()
            .map(|c| CameraSlot {
                link: link(c.se, c.alpha),
                accuracy: AccuracyProfile::Saturating {
                    ref_resolution,
                    ceilings: ceilings.to_vec(),
                    difficulty: c.beta,
                },
            })
            .collect(),
        servers: servers
            .iter()
            .map(|&(b, c)| EdgeServerCapacity {
                bandwidth: b,
                compute: c,
            })
            .collect(),
    }
}

/// A scaled-down version of the default experiment: YOLO-like catalog,
/// 30 MHz / 50 TFLOPS servers, heterogeneous cameras.
pub fn representative(cameras: usize, servers: usize) -> SlotContext {
    let cams: Vec<Camera> = (0..cameras)
        .map(|i| {
            let f = i as f64 / cameras.max(1) as f64;
            camera(4.0 + 2.0 * f, 1.5 + (i % 3) as f64 * 0.25, 2.2 + 1.6 * ((i * 7 % 5) as f64 / 4.0))
        })
        .collect();
    let caps: Vec<(f64, f64)> = (0..servers)
        .map(|s| (30e6 * (1.0 + 0.2 * s as f64) * cameras as f64 / 30.0 * 3.0 / servers as f64,
                  50e12 * (1.2 - 0.2 * s as f64) * cameras as f64 / 30.0 * 3.0 / servers as f64))
        .collect();
    context(
        &[384, 512, 640, 768, 896, 1024],
        640.0,
        &[0.05e12, 0.15e12, 0.4e12, 0.9e12, 1.7e12],
        &[0.70, 0.80, 0.87, 0.91, 0.93],
        &cams,
        &caps,
    )
}

pub fn cfg(ctx: &SlotContext, res: usize, policy: Policy, model: usize) -> VideoConfig {
    VideoConfig {
        resolution: ctx.resolutions[res],
        policy,
        model: ModelId(model),
    }
}

/// Closed-form AoPI of camera `n`, infinite when unstable or starved.
pub fn aopi_of(ctx: &SlotContext, n: usize, cfg: &VideoConfig, b: f64, c: f64) -> f64 {
    let r = ctx.rates(n, cfg, b, c).unwrap();
    if r.lambda <= 0.0 || r.mu <= 0.0 {
        return f64::INFINITY;
    }
    aopi_or_infinite(cfg.policy, r.lambda, r.mu, r.accuracy)
}

pub fn accuracy_of(ctx: &SlotContext, n: usize, cfg: &VideoConfig) -> f64 {
    ctx.rates(n, cfg, 0.0, 0.0).unwrap().accuracy
}

pub fn stable(ctx: &SlotContext, n: usize, cfg: &VideoConfig, b: f64, c: f64, eps: f64) -> bool {
    let r = ctx.rates(n, cfg, b, c).unwrap();
    cfg.policy == Policy::Lcfsp || r.lambda <= (1.0 - eps) * r.mu
}
