//! SLOs, workloads and utility scoring.
//!
//! The default utility maps an SLO-violating configuration to
//! `1 + (sli - slo)` and a satisfying one to its normalized resource cost,
//! so every satisfying configuration ranks ahead of every violating one and
//! satisfying configurations are ranked by cost alone. Lower is better.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, SearchSpace};

pub const DEFAULT_METRIC: &str = "p99_latency_ms";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("unknown utility function `{name}` (known: {known})")]
    UnknownFunction { name: String, known: String },
    #[error("SLO threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("workload needs at least one tenant")]
    NoTenants,
    #[error("cost weights: {0}")]
    Weights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadPattern {
    #[default]
    Stable,
    Bursty,
    Monotonic,
    Seasonal,
}

impl FromStr for WorkloadPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stable" => Ok(Self::Stable),
            "bursty" => Ok(Self::Bursty),
            "monotonic" => Ok(Self::Monotonic),
            "seasonal" => Ok(Self::Seasonal),
            other => Err(format!("unknown workload pattern `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    tenants: u32,
    rate_per_tenant: Option<f64>,
    #[serde(default)]
    pattern: WorkloadPattern,
}

impl WorkloadSpec {
    pub fn new(tenants: u32, rate_per_tenant: Option<f64>, pattern: WorkloadPattern) -> Result<Self, UtilityError> {
        if tenants == 0 {
            return Err(UtilityError::NoTenants);
        }
        Ok(Self { tenants, rate_per_tenant, pattern })
    }

    pub fn tenants(&self) -> u32 {
        self.tenants
    }

    pub fn rate_per_tenant(&self) -> Option<f64> {
        self.rate_per_tenant
    }

    pub fn pattern(&self) -> WorkloadPattern {
        self.pattern
    }
}

/// An upper-bound objective on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloSpec {
    metric: String,
    threshold: f64,
}

impl SloSpec {
    pub fn new(metric: impl Into<String>, threshold: f64) -> Result<Self, UtilityError> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(UtilityError::NonPositiveThreshold(threshold));
        }
        Ok(Self { metric: metric.into(), threshold })
    }

    pub fn latency_ms(threshold: f64) -> Result<Self, UtilityError> {
        Self::new(DEFAULT_METRIC, threshold)
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Per-parameter weights of the resource cost, normalized to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights(Vec<f64>);

impl CostWeights {
    pub fn uniform(dims: usize) -> Self {
        assert!(dims > 0);
        Self(vec![1.0 / dims as f64; dims])
    }

    pub fn new(raw: Vec<f64>) -> Result<Self, UtilityError> {
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(UtilityError::Weights(format!("weights must be finite and non-negative: {raw:?}")));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(UtilityError::Weights("at least one weight must be positive".into()));
        }
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalized resource cost in `[0, 1]`, measured against each parameter's
/// reference (pre-reduction) bounds.
pub fn norm_p(config: &Configuration, space: &SearchSpace, weights: &CostWeights) -> f64 {
    debug_assert_eq!(config.len(), space.dims());
    debug_assert_eq!(weights.0.len(), space.dims());
    space
        .parameters()
        .iter()
        .zip(config.settings())
        .zip(&weights.0)
        .map(|((p, &v), w)| {
            let (lo, hi) = p.reference();
            w * (v - lo) as f64 / (hi - lo) as f64
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// `1 + (sli - slo)` when the SLO is violated, the resource cost otherwise.
pub fn teastore_utility(sli: f64, slo: f64, normp: f64) -> f64 {
    if sli > slo {
        1.0 + (sli - slo)
    } else {
        normp
    }
}

/// Same as [`teastore_utility`] with the violation measured relative to the SLO.
pub fn relative_violation_utility(sli: f64, slo: f64, normp: f64) -> f64 {
    if sli > slo {
        1.0 + (sli - slo) / slo
    } else {
        normp
    }
}

pub fn distance_to_optimal(found: f64, optimum: f64) -> f64 {
    (found - optimum).abs()
}

/// Utility functions selectable through the `utilFunc` key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UtilityFunction {
    /// `teastore`: raw-millisecond violation term.
    Teastore,
    /// `teastore-relative`: violation term divided by the SLO.
    TeastoreRelative,
}

impl UtilityFunction {
    pub const NAMES: [&'static str; 2] = ["teastore", "teastore-relative"];

    pub fn name(self) -> &'static str {
        match self {
            Self::Teastore => "teastore",
            Self::TeastoreRelative => "teastore-relative",
        }
    }
}

impl fmt::Display for UtilityFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UtilityFunction {
    type Err = UtilityError;

    fn from_str(s: &str) -> Result<Self, UtilityError> {
        match s {
            "teastore" => Ok(Self::Teastore),
            "teastore-relative" => Ok(Self::TeastoreRelative),
            other => Err(UtilityError::UnknownFunction { name: other.to_string(), known: Self::NAMES.join(", ") }),
        }
    }
}

/// Outcome of scoring one measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub utility: f64,
    pub feasible: bool,
}

/// Binds a utility function to an SLO and cost weights.
#[derive(Debug, Clone)]
pub struct Scorer {
    function: UtilityFunction,
    slo: SloSpec,
    weights: CostWeights,
}

impl Scorer {
    pub fn new(function: UtilityFunction, slo: SloSpec, weights: CostWeights) -> Self {
        Self { function, slo, weights }
    }

    pub fn function(&self) -> UtilityFunction {
        self.function
    }

    pub fn slo(&self) -> &SloSpec {
        &self.slo
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    /// SLI stand-in for failed evaluations: ten SLOs past the threshold.
    pub fn failure_sli(&self) -> f64 {
        11.0 * self.slo.threshold
    }

    /// Utility assigned to failed evaluations (`1 + 10 * SLO` for the
    /// default function).
    pub fn failure_utility(&self) -> f64 {
        self.apply(self.failure_sli(), 0.0)
    }

    fn apply(&self, sli: f64, normp: f64) -> f64 {
        match self.function {
            UtilityFunction::Teastore => teastore_utility(sli, self.slo.threshold, normp),
            UtilityFunction::TeastoreRelative => relative_violation_utility(sli, self.slo.threshold, normp),
        }
    }

    /// `sli` is `None` for a failed evaluation.
    pub fn score(&self, space: &SearchSpace, config: &Configuration, sli: Option<f64>) -> Score {
        match sli {
            None => Score { utility: self.failure_utility(), feasible: false },
            Some(sli) => {
                let normp = norm_p(config, space, &self.weights);
                Score { utility: self.apply(sli, normp), feasible: sli <= self.slo.threshold }
            }
        }
    }
}
