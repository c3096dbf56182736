//! Queueing-style stand-in for a deployed microservice application.
//!
//! Each service on the request chain is an M/M/1-like station whose
//! utilization is `tenants * cpu_demand / cpu`. Memory below the working
//! set inflates latency, and below half the working set the service fails.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::{BackendError, EvalRequest, Experiment, SliResult};
use crate::space::{Configuration, SearchSpace};

/// Utilization at which a service is treated as saturated.
pub const SATURATION: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceSpec {
    pub name: String,
    pub base_ms: f64,
    pub cpu_demand_mc: f64,
    pub mem_working_set_mi: f64,
    /// Parameter holding this service's CPU in millicores; defaults to
    /// `<name>Cpu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_param: Option<String>,
    /// Parameter holding this service's memory in Mi; defaults to
    /// `<name>Memory`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_param: Option<String>,
}

impl ServiceSpec {
    pub fn cpu_param(&self) -> String {
        self.cpu_param.clone().unwrap_or_else(|| format!("{}Cpu", self.name))
    }

    pub fn memory_param(&self) -> String {
        self.memory_param.clone().unwrap_or_else(|| format!("{}Memory", self.name))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ServiceModelSpec {
    pub services: Vec<ServiceSpec>,
    /// Services visited by one request, in order.
    pub chain: Vec<String>,
    #[serde(rename = "p99Factor")]
    pub p99_factor: f64,
    pub mem_penalty: f64,
    #[serde(default)]
    pub noise_sigma: f64,
}

impl ServiceModelSpec {
    pub fn from_yaml(text: &str) -> Result<Self, BackendError> {
        let spec: Self = serde_yaml::from_str(text).map_err(|e| BackendError::Model(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Model(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |msg: String| Err(BackendError::Model(msg));
        if self.chain.is_empty() {
            return bad("chain is empty".into());
        }
        if !(self.p99_factor >= 1.0) {
            return bad(format!("p99Factor must be at least 1, got {}", self.p99_factor));
        }
        if !(self.mem_penalty >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("memPenalty and noiseSigma must be non-negative".into());
        }
        for s in &self.services {
            if !(s.base_ms > 0.0 && s.cpu_demand_mc > 0.0 && s.mem_working_set_mi > 0.0) {
                return bad(format!("service `{}`: baseMs, cpuDemandMc and memWorkingSetMi must be positive", s.name));
            }
            if self.services.iter().filter(|t| t.name == s.name).count() > 1 {
                return bad(format!("service `{}` declared twice", s.name));
            }
        }
        for name in &self.chain {
            if !self.services.iter().any(|s| &s.name == name) {
                return bad(format!("chain names unknown service `{name}`"));
            }
        }
        Ok(())
    }

    fn service(&self, name: &str) -> &ServiceSpec {
        self.services.iter().find(|s| s.name == name).expect("validated chain")
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    model: ServiceModelSpec,
    seed: u64,
}

impl SyntheticBackend {
    pub fn new(model: ServiceModelSpec, seed: u64) -> Result<Self, BackendError> {
        model.validate()?;
        Ok(Self { model, seed })
    }

    pub fn model(&self) -> &ServiceModelSpec {
        &self.model
    }

    /// Checks that every service's parameters exist in `space`.
    pub fn check_space(&self, space: &SearchSpace) -> Result<(), BackendError> {
        for s in &self.model.services {
            for p in [s.cpu_param(), s.memory_param()] {
                if space.position(&p).is_none() {
                    return Err(BackendError::Model(format!("service `{}` needs parameter `{p}`", s.name)));
                }
            }
        }
        Ok(())
    }

    fn setting(space: &SearchSpace, config: &Configuration, name: &str) -> Result<f64, BackendError> {
        space
            .position(name)
            .map(|i| config.settings()[i] as f64)
            .ok_or_else(|| BackendError::Model(format!("configuration has no parameter `{name}`")))
    }

    fn noise(&self, key: &str) -> f64 {
        if self.model.noise_sigma == 0.0 {
            return 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(key.as_bytes()));
        LogNormal::new(0.0, self.model.noise_sigma).expect("sigma validated").sample(&mut rng)
    }
}

impl Experiment for SyntheticBackend {
    fn evaluate(&self, request: &EvalRequest<'_>) -> Result<SliResult, BackendError> {
        let EvalRequest { space, config, workload } = *request;
        space.check(config).map_err(|e| BackendError::Model(e.to_string()))?;
        let tenants = workload.tenants() as f64;
        let base_total: f64 = self.model.chain.iter().map(|n| self.model.service(n).base_ms).sum();

        let mut mean = 0.0;
        for name in &self.model.chain {
            let s = self.model.service(name);
            let cpu = Self::setting(space, config, &s.cpu_param())?;
            let mem = Self::setting(space, config, &s.memory_param())?;
            if mem < 0.5 * s.mem_working_set_mi {
                return Ok(SliResult::failure(format!("{name}: out of memory ({mem} Mi)")));
            }
            let rho = tenants * s.cpu_demand_mc / cpu;
            let mut latency = if rho >= SATURATION {
                // never below the last unsaturated value, so latency stays
                // monotone in the allocation
                (10.0 * base_total).max(s.base_ms / (1.0 - SATURATION))
            } else {
                s.base_ms / (1.0 - rho)
            };
            if mem < s.mem_working_set_mi {
                latency *= 1.0 + self.model.mem_penalty * (s.mem_working_set_mi / mem - 1.0);
            }
            mean += latency;
        }
        let p99 = self.model.p99_factor * mean * self.noise(&space.config_key(config));
        Ok(SliResult::ok(p99, tenants * 1000.0 / mean))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}
