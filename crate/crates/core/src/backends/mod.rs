//! Evaluation backends. An [`Experiment`] turns a configuration and a
//! workload into service-level indicators; it returns only once the
//! measurement is complete.

mod external;
mod replay;
mod synthetic;

use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

use crate::space::{Configuration, SearchSpace};
use crate::utility::WorkloadSpec;

pub use external::{ExternalBackend, ExternalRequest};
pub use replay::ReplayBackend;
pub use synthetic::{ServiceModelSpec, ServiceSpec, SyntheticBackend};

pub const P99_LATENCY: &str = "p99_latency_ms";
pub const THROUGHPUT: &str = "throughput_rps";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("service model: {0}")]
    Model(String),
    #[error("configuration {0} is not in the dataset")]
    Missing(String),
    #[error("cannot start `{program}`: {source}")]
    Spawn { program: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Measured indicators for one configuration. When `failed` is set the
/// numeric fields carry no meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct SliResult {
    pub p99_latency_ms: f64,
    pub throughput_rps: f64,
    pub failed: bool,
    pub failure_reason: Option<String>,
    /// Further metrics reported by the backend.
    pub extra: BTreeMap<String, f64>,
}

impl SliResult {
    pub fn ok(p99_latency_ms: f64, throughput_rps: f64) -> Self {
        Self { p99_latency_ms, throughput_rps, failed: false, failure_reason: None, extra: BTreeMap::new() }
    }

    /// Metric fields are zero; consumers go through `failed`.
    pub fn failure(reason: impl Into<String>) -> Self {
        Self {
            p99_latency_ms: 0.0,
            throughput_rps: 0.0,
            failed: true,
            failure_reason: Some(reason.into()),
            extra: BTreeMap::new(),
        }
    }

    /// Value of a named metric; `None` for failed results.
    pub fn metric(&self, name: &str) -> Option<f64> {
        if self.failed {
            return None;
        }
        match name {
            P99_LATENCY => Some(self.p99_latency_ms),
            THROUGHPUT => Some(self.throughput_rps),
            other => self.extra.get(other).copied(),
        }
    }

    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if !self.failed {
            out.insert(P99_LATENCY.to_string(), self.p99_latency_ms);
            out.insert(THROUGHPUT.to_string(), self.throughput_rps);
            out.extend(self.extra.iter().map(|(k, v)| (k.clone(), *v)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub space: &'a SearchSpace,
    pub config: &'a Configuration,
    pub workload: &'a WorkloadSpec,
}

pub trait Experiment: Send + Sync {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<SliResult, BackendError>;

    /// Upper bound on concurrent `evaluate` calls; `None` is unbounded.
    fn max_parallelism(&self) -> Option<usize> {
        None
    }
}
