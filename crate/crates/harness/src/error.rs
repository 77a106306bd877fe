use std::path::PathBuf;

use thiserror::Error;

use crate::output::SlotsCsvError;
use crate::scenario::SpecError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("trace {path}: {source}")]
    Trace {
        path: PathBuf,
        #[source]
        source: TraceError,
    },
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    SlotsCsv {
        path: PathBuf,
        #[source]
        source: SlotsCsvError,
    },
    #[error("{0}")]
    Usage(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 3 for an infeasible scenario,
    /// 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Spec(_) | Self::Trace { .. } | Self::SlotsCsv { .. } | Self::Usage(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Io { .. } => 4,
        }
    }
}
