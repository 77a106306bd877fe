//! Experiment driver: scenario and trace ingestion, the slot loop across
//! strategies and seeds, and result emission.

pub mod error;
pub mod output;
pub mod run;
pub mod scenario;
pub mod trace;
pub mod validate;

use std::path::Path;

pub use error::HarnessError;
pub use output::{emit_results, read_slots_csv, write_slots_csv, SlotRow, SLOTS_HEADER};
pub use run::{run_experiment, summarize, Mode, RunOutput, StrategyKind, Summary};
pub use scenario::{load_scenario, parse_scenario, ScenarioSpec, SpecError};
pub use trace::{gen_traces, read_trace, write_trace, TraceError, TraceParams, TraceSeries};

pub fn load_trace(path: &Path) -> Result<TraceSeries, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_trace(std::io::BufReader::new(file)).map_err(|source| HarnessError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

/// The trace named by the spec, if any.
pub fn spec_trace(spec: &ScenarioSpec) -> Result<Option<TraceSeries>, HarnessError> {
    spec.traces.file.as_deref().map(load_trace).transpose()
}
