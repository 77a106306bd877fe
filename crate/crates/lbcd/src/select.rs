//! Camera-to-server assignment by first-fit decreasing on two resources.

use aopi_core::model::{EdgeServerCapacity, SlotContext};

use crate::bcd::bcd_solve;
use crate::objective::Weights;
use crate::{BcdOutcome, LbcdError, LbcdParams};

/// Relative slack when testing whether a demand fits a server's remainder.
const FIT_SLACK: f64 = 1e-9;

/// Ideal demands from a pooled solve and the assignment derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub assignment: Vec<usize>,
    /// (bandwidth, compute) each camera asked for on the pooled server.
    pub demands: Vec<(f64, f64)>,
    pub pooled: BcdOutcome,
}

fn ratio(x: f64, total: f64) -> f64 {
    if total > 0.0 {
        x / total
    } else {
        0.0
    }
}

/// Sorts cameras by normalized size b̂/ΣB + ĉ/ΣC and servers by normalized
/// volume B/ΣB + C/ΣC, both descending with ties to the lower index, then
/// puts each camera on the first server whose remaining bandwidth and
/// compute both cover its demand. A camera that fits nowhere goes to the
/// server with the largest normalized remainder.
pub fn first_fit_decreasing(
    demands: &[(f64, f64)],
    servers: &[EdgeServerCapacity],
) -> Vec<usize> {
    if servers.is_empty() {
        return vec![];
    }
    let total_b: f64 = servers.iter().map(|s| s.bandwidth).sum();
    let total_c: f64 = servers.iter().map(|s| s.compute).sum();
    let size = |&(b, c): &(f64, f64)| ratio(b, total_b) + ratio(c, total_c);

    let mut cameras: Vec<usize> = (0..demands.len()).collect();
    cameras.sort_by(|&a, &b| size(&demands[b]).total_cmp(&size(&demands[a])));
    let mut order: Vec<usize> = (0..servers.len()).collect();
    order.sort_by(|&a, &b| {
        let v = |s: &EdgeServerCapacity| ratio(s.bandwidth, total_b) + ratio(s.compute, total_c);
        v(&servers[b]).total_cmp(&v(&servers[a]))
    });

    let mut remaining: Vec<(f64, f64)> = servers.iter().map(|s| (s.bandwidth, s.compute)).collect();
    let mut assignment = vec![0; demands.len()];
    for n in cameras {
        let (b, c) = demands[n];
        let fits = |s: usize| {
            let (rb, rc) = remaining[s];
            b <= rb + FIT_SLACK * servers[s].bandwidth && c <= rc + FIT_SLACK * servers[s].compute
        };
        let server = order.iter().copied().find(|&s| fits(s)).unwrap_or_else(|| {
            let mut best = 0;
            for s in 1..servers.len() {
                let left = |s: usize| ratio(remaining[s].0, total_b) + ratio(remaining[s].1, total_c);
                if left(s) > left(best) {
                    best = s;
                }
            }
            best
        });
        remaining[server].0 -= b;
        remaining[server].1 -= c;
        assignment[n] = server;
    }
    assignment
}

/// Solves the slot on one virtual server holding every server's capacity,
/// then packs the resulting demands with [`first_fit_decreasing`].
pub fn select_servers(
    ctx: &SlotContext,
    weights: Weights,
    params: &LbcdParams,
) -> Result<Selection, LbcdError> {
    let pooled_ctx = ctx.pooled();
    let cameras: Vec<usize> = (0..ctx.cameras.len()).collect();
    let pooled = bcd_solve(&pooled_ctx, 0, &cameras, weights, params)?;
    let demands: Vec<(f64, f64)> = pooled
        .bandwidth
        .iter()
        .copied()
        .zip(pooled.compute.iter().copied())
        .collect();
    Ok(Selection {
        assignment: first_fit_decreasing(&demands, &ctx.servers),
        demands,
        pooled,
    })
}
