//! Per-slot server capacity traces: CSV I/O and synthetic generation.

use std::io::{Read, Write};

use aopi_core::model::EdgeServerCapacity;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_HEADER: [&str; 4] = ["slot", "server", "bandwidth_hz", "compute_flops"];

/// Generated values never fall below this fraction of the mean.
pub const CLIP_FRACTION: f64 = 0.05;

const BANDWIDTH_STREAM: u64 = 1;
const COMPUTE_STREAM: u64 = 2;

/// Capacities indexed `[slot][server]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSeries {
    pub rows: Vec<Vec<EdgeServerCapacity>>,
}

impl TraceSeries {
    pub fn slots(&self) -> usize {
        self.rows.len()
    }

    pub fn servers(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceParams {
    pub servers: usize,
    pub slots: usize,
    pub bandwidth_mean: f64,
    pub compute_mean: f64,
    /// Coefficient of variation shared by both series.
    pub cv: f64,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("header must be `{expected}`, got `{0}`", expected = TRACE_HEADER.join(","))]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: String },
    #[error("slot {slot}, server {server}: {field} is {value}, must be non-negative and finite")]
    Negative {
        slot: usize,
        server: usize,
        field: &'static str,
        value: f64,
    },
    #[error("slot {slot}, server {server}: missing")]
    Missing { slot: usize, server: usize },
    #[error("slot {slot}, server {server}: listed twice")]
    Duplicate { slot: usize, server: usize },
    #[error("trace is empty")]
    Empty,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    slot: usize,
    server: usize,
    bandwidth_hz: f64,
    compute_flops: f64,
}

/// Reads a trace CSV. Every (slot, server) pair in 0..T × 0..S must appear
/// exactly once, in any order.
pub fn read_trace<R: Read>(reader: R) -> Result<TraceSeries, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut cells: Vec<Vec<Option<EdgeServerCapacity>>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let row: TraceRow = record.deserialize(Some(&header)).map_err(|e| TraceError::Row {
            line,
            reason: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        for (field, value) in [("bandwidth_hz", row.bandwidth_hz), ("compute_flops", row.compute_flops)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(TraceError::Negative {
                    slot: row.slot,
                    server: row.server,
                    field,
                    value,
                });
            }
        }
        // Bound the table so a hostile index cannot allocate without limit.
        if row.slot > 10_000_000 || row.server > 100_000 {
            return Err(TraceError::Row {
                line,
                reason: format!("index out of range: slot {}, server {}", row.slot, row.server),
            });
        }
        if cells.len() <= row.slot {
            cells.resize(row.slot + 1, Vec::new());
        }
        let slot = &mut cells[row.slot];
        if slot.len() <= row.server {
            slot.resize(row.server + 1, None);
        }
        if slot[row.server].is_some() {
            return Err(TraceError::Duplicate {
                slot: row.slot,
                server: row.server,
            });
        }
        slot[row.server] = Some(EdgeServerCapacity {
            bandwidth: row.bandwidth_hz,
            compute: row.compute_flops,
        });
    }
    let servers = cells.iter().map(Vec::len).max().ok_or(TraceError::Empty)?;
    let rows = cells
        .into_iter()
        .enumerate()
        .map(|(slot, row)| {
            (0..servers)
                .map(|server| {
                    row.get(server)
                        .copied()
                        .flatten()
                        .ok_or(TraceError::Missing { slot, server })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<_>>, _>>()?;
    Ok(TraceSeries { rows })
}

pub fn write_trace<W: Write>(writer: W, trace: &TraceSeries) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for (slot, row) in trace.rows.iter().enumerate() {
        for (server, cap) in row.iter().enumerate() {
            w.write_record([
                slot.to_string(),
                server.to_string(),
                cap.bandwidth.to_string(),
                cap.compute.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Log-normal series with the given mean and coefficient of variation,
/// clipped below at 5% of the mean. Bandwidth and compute use separate
/// random streams so each is reproducible on its own.
fn series(mean: f64, cv: f64, count: usize, seed: u64, stream: u64) -> Vec<f64> {
    if cv == 0.0 {
        return vec![mean; count];
    }
    let sigma2 = (1.0 + cv * cv).ln();
    let dist = LogNormal::new(mean.ln() - 0.5 * sigma2, sigma2.sqrt()).expect("finite parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..count)
        .map(|_| dist.sample(&mut rng).max(CLIP_FRACTION * mean))
        .collect()
}

pub fn gen_traces(params: &TraceParams, seed: u64) -> TraceSeries {
    let count = params.slots * params.servers;
    let b = series(params.bandwidth_mean, params.cv, count, seed, BANDWIDTH_STREAM);
    let c = series(params.compute_mean, params.cv, count, seed, COMPUTE_STREAM);
    let rows = (0..params.slots)
        .map(|t| {
            (0..params.servers)
                .map(|s| EdgeServerCapacity {
                    bandwidth: b[t * params.servers + s],
                    compute: c[t * params.servers + s],
                })
                .collect()
        })
        .collect();
    TraceSeries { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(cv: f64, slots: usize) -> TraceParams {
        TraceParams {
            servers: 2,
            slots,
            bandwidth_mean: 30e6,
            compute_mean: 50e12,
            cv,
        }
    }

    #[test]
    fn zero_cv_is_constant() {
        let t = gen_traces(&params(0.0, 5), 1);
        assert!(t.rows.iter().flatten().all(|c| c.bandwidth == 30e6 && c.compute == 50e12));
    }

    #[test]
    fn sample_mean_matches_target() {
        let t = gen_traces(&params(0.3, 10_000), 4);
        for s in 0..2 {
            let mb = t.rows.iter().map(|r| r[s].bandwidth).sum::<f64>() / 1e4;
            let mc = t.rows.iter().map(|r| r[s].compute).sum::<f64>() / 1e4;
            assert!((mb / 30e6 - 1.0).abs() < 0.02, "{mb}");
            assert!((mc / 50e12 - 1.0).abs() < 0.02, "{mc}");
        }
    }

    #[test]
    fn same_seed_same_series() {
        assert_eq!(gen_traces(&params(0.5, 50), 3), gen_traces(&params(0.5, 50), 3));
        assert_ne!(gen_traces(&params(0.5, 50), 3), gen_traces(&params(0.5, 50), 4));
    }

    #[test]
    fn heavy_tails_are_clipped() {
        let t = gen_traces(&params(5.0, 2000), 8);
        assert!(t.rows.iter().flatten().all(|c| c.bandwidth >= 0.05 * 30e6));
        assert!(t.rows.iter().flatten().any(|c| c.bandwidth == 0.05 * 30e6));
    }

    #[test]
    fn round_trip() {
        let t = gen_traces(&params(0.4, 7), 2);
        let mut buf = Vec::new();
        write_trace(&mut buf, &t).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn negative_bandwidth_names_slot_and_server() {
        let csv = "slot,server,bandwidth_hz,compute_flops\n0,0,1,1\n0,1,2,2\n1,0,3,3\n1,1,-4,4\n";
        match read_trace(csv.as_bytes()).unwrap_err() {
            TraceError::Negative { slot, server, field, .. } => {
                assert_eq!((slot, server, field), (1, 1, "bandwidth_hz"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn gaps_and_duplicates_are_reported() {
        let gap = "slot,server,bandwidth_hz,compute_flops\n0,0,1,1\n0,1,2,2\n1,0,3,3\n";
        assert!(matches!(
            read_trace(gap.as_bytes()),
            Err(TraceError::Missing { slot: 1, server: 1 })
        ));
        let dup = "slot,server,bandwidth_hz,compute_flops\n0,0,1,1\n0,0,2,2\n";
        assert!(matches!(
            read_trace(dup.as_bytes()),
            Err(TraceError::Duplicate { slot: 0, server: 0 })
        ));
        let header = "slot,server,bw,compute_flops\n0,0,1,1\n";
        assert!(matches!(read_trace(header.as_bytes()), Err(TraceError::Header(_))));
        let bad = "slot,server,bandwidth_hz,compute_flops\n0,0,x,1\n";
        assert!(matches!(read_trace(bad.as_bytes()), Err(TraceError::Row { line: 2, .. })));
        let empty = "slot,server,bandwidth_hz,compute_flops\n";
        assert!(matches!(read_trace(empty.as_bytes()), Err(TraceError::Empty)));
    }
}
