//! Optimizer configuration files.
//!
//! The key set follows the upstream optimizer's YAML layout (`nbOfIterations`,
//! `slas[].parameters[].searchspace`, `99th` latency SLO, ...). Extension keys:
//! `backend`, `seed`, `screening`, per-parameter `original` and `weight`, and
//! per-SLA `ratePerTenant` and `workloadPattern`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use confopt::backends::{Experiment, ExternalBackend, ServiceModelSpec, SyntheticBackend};
use confopt::harness::Dataset;
use confopt::optim::OptimizerKind;
use confopt::screening::ScreeningSettings;
use confopt::space::{ParameterSpec, SearchSpace};
use confopt::utility::{CostWeights, Scorer, SloSpec, UtilityFunction, WorkloadPattern, WorkloadSpec};

/// Environment variable overriding `outputDir`.
pub const OUTPUT_ENV: &str = "CONFOPT_OUT";

/// A problem with the user's input: exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RawConfig {
    pub nb_of_iterations: usize,
    pub nb_of_samples_per_iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charts: Option<serde_yaml::Value>,
    pub slas: Vec<RawSla>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub namespace_strategy: Option<String>,
    pub optimizer: String,
    #[serde(default = "default_util_func")]
    pub util_func: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub backend: RawBackend,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<RawScreening>,
}

fn default_util_func() -> String {
    "teastore".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RawSla {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_name: Option<String>,
    pub slos: RawSlos,
    pub nb_of_tenants: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_per_tenant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload_pattern: Option<WorkloadPattern>,
    pub parameters: Vec<RawParameter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSlos {
    /// Parsed and kept; no utility function uses it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throughput: Option<f64>,
    #[serde(rename = "99th")]
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParameter {
    pub name: String,
    pub searchspace: RawRange,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub suffix: String,
    /// Bounds before a reduction; normalized cost is measured against them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original: Option<RawBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawRange {
    pub min: i64,
    pub max: i64,
    pub granularity: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawBounds {
    pub min: i64,
    pub max: i64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RawScreening {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxed_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strict_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RawBackend {
    Synthetic {
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Replay {
        dataset: String,
    },
    External {
        command: Vec<String>,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_timeout", rename = "timeoutS")]
        timeout_s: u64,
        #[serde(default = "default_parallelism")]
        parallelism: usize,
    },
}

fn default_retries() -> u32 {
    2
}

fn default_timeout() -> u64 {
    600
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Synthetic { model: PathBuf, seed: u64 },
    Replay { dataset: PathBuf },
    External { command: Vec<String>, retries: u32, timeout: Duration, parallelism: usize },
}

/// A backend ready to evaluate, plus the dataset when replaying one.
pub struct LoadedBackend {
    pub experiment: Box<dyn Experiment>,
    pub dataset: Option<Dataset>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: RawConfig,
    /// Directory of the config file; relative input paths resolve against it.
    pub base_dir: PathBuf,
    pub iterations: usize,
    pub samples_per_iteration: usize,
    pub sla_name: String,
    pub slo: SloSpec,
    pub workload: WorkloadSpec,
    pub space: SearchSpace,
    pub weights: CostWeights,
    pub optimizer: OptimizerKind,
    pub utility: UtilityFunction,
    pub output_dir: PathBuf,
    pub backend: BackendConfig,
    pub seed: u64,
    pub screening: ScreeningSettings,
}

/// Blanks full-line comments. Some published configs indent them with
/// tabs, which YAML rejects even in comments.
fn strip_comment_lines(text: &str) -> String {
    text.lines().map(|l| if l.trim_start().starts_with('#') { "" } else { l }).collect::<Vec<_>>().join("\n")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Parses a document; unknown keys are logged and skipped.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let (raw, ignored) = parse_raw(text)?;
        for key in ignored {
            log::warn!("ignoring unknown configuration key `{key}`");
        }
        Self::from_raw(raw, base_dir)
    }

    pub fn from_raw(raw: RawConfig, base_dir: &Path) -> Result<Self, ConfigError> {
        if raw.charts.is_some() {
            log::warn!("`charts` is ignored: deployment is delegated to the configured backend");
        }
        if let Some(ns) = &raw.namespace_strategy {
            log::warn!("`namespaceStrategy: {ns}` is ignored: a single SLA is optimized at a time");
        }
        if raw.nb_of_iterations == 0 || raw.nb_of_samples_per_iteration == 0 {
            return Err(invalid("nbOfIterations and nbOfSamplesPerIteration must be positive"));
        }
        let sla = match raw.slas.as_slice() {
            [sla] => sla,
            [] => return Err(invalid("slas: exactly one SLA is required, found none")),
            many => {
                return Err(invalid(format!(
                    "slas: exactly one SLA is supported, found {} ({})",
                    many.len(),
                    many.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
                )))
            }
        };
        let optimizer: OptimizerKind = raw.optimizer.parse().map_err(|e| invalid(format!("optimizer: {e}")))?;
        let utility: UtilityFunction = raw.util_func.parse().map_err(|e| invalid(format!("utilFunc: {e}")))?;
        let slo = SloSpec::latency_ms(sla.slos.p99).map_err(|e| invalid(format!("slas[0].slos.99th: {e}")))?;
        let workload =
            WorkloadSpec::new(sla.nb_of_tenants, sla.rate_per_tenant, sla.workload_pattern.unwrap_or_default())
                .map_err(|e| invalid(format!("slas[0]: {e}")))?;

        if sla.parameters.is_empty() {
            return Err(invalid("slas[0].parameters: at least one parameter is required"));
        }
        let mut specs = Vec::with_capacity(sla.parameters.len());
        for p in &sla.parameters {
            let s = &p.searchspace;
            let spec = match p.original {
                Some(o) => ParameterSpec::derived(&p.name, s.min, s.max, s.granularity, &p.suffix, (o.min, o.max)),
                None => ParameterSpec::new(&p.name, s.min, s.max, s.granularity, &p.suffix),
            };
            specs.push(spec.map_err(|e| invalid(format!("parameter `{}`: {e}", p.name)))?);
        }
        let space = SearchSpace::new(specs).map_err(|e| invalid(e.to_string()))?;
        let weights = if sla.parameters.iter().any(|p| p.weight.is_some()) {
            CostWeights::new(sla.parameters.iter().map(|p| p.weight.unwrap_or(1.0)).collect())
                .map_err(|e| invalid(e.to_string()))?
        } else {
            CostWeights::uniform(space.dims())
        };

        let defaults = ScreeningSettings::default();
        let scr = raw.screening.clone().unwrap_or_default();
        let screening = ScreeningSettings {
            r: scr.r.unwrap_or(defaults.r),
            p: scr.p.or(defaults.p),
            relaxed_factor: scr.relaxed_factor.unwrap_or(defaults.relaxed_factor),
            strict_factor: scr.strict_factor.unwrap_or(defaults.strict_factor),
            metric: scr.metric.unwrap_or(defaults.metric),
        };

        let resolve = |p: &str| base_dir.join(p);
        let backend = match &raw.backend {
            RawBackend::Synthetic { model, seed } => {
                BackendConfig::Synthetic { model: resolve(model), seed: seed.unwrap_or(0) }
            }
            RawBackend::Replay { dataset } => BackendConfig::Replay { dataset: resolve(dataset) },
            RawBackend::External { command, retries, timeout_s, parallelism } => {
                let mut command = command.clone();
                let Some(program) = command.first_mut() else {
                    return Err(invalid("backend.command must not be empty"));
                };
                // paths like ./runner.sh are relative to the config file
                if program.contains('/') && Path::new(program.as_str()).is_relative() {
                    *program = resolve(program).to_string_lossy().into_owned();
                }
                if *timeout_s == 0 || *parallelism == 0 {
                    return Err(invalid("backend.timeoutS and backend.parallelism must be positive"));
                }
                BackendConfig::External {
                    command,
                    retries: *retries,
                    timeout: Duration::from_secs(*timeout_s),
                    parallelism: *parallelism,
                }
            }
        };

        let output_dir = match std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
            Some(dir) => PathBuf::from(dir),
            None => PathBuf::from(raw.output_dir.as_deref().unwrap_or("confopt-out")),
        };

        Ok(Self {
            iterations: raw.nb_of_iterations,
            samples_per_iteration: raw.nb_of_samples_per_iteration,
            sla_name: sla.name.clone(),
            slo,
            workload,
            space,
            weights,
            optimizer,
            utility,
            output_dir,
            backend,
            seed: raw.seed,
            screening,
            base_dir: base_dir.to_path_buf(),
            raw,
        })
    }

    /// Total evaluations of one optimization run.
    pub fn budget(&self) -> usize {
        self.iterations * self.samples_per_iteration
    }

    pub fn scorer(&self) -> Scorer {
        Scorer::new(self.utility, self.slo.clone(), self.weights.clone())
    }

    pub fn load_backend(&self) -> Result<LoadedBackend, ConfigError> {
        match &self.backend {
            BackendConfig::Synthetic { model, seed } => {
                let spec = ServiceModelSpec::load(model).map_err(|e| invalid(e.to_string()))?;
                let backend = SyntheticBackend::new(spec, *seed).map_err(|e| invalid(e.to_string()))?;
                backend.check_space(&self.space).map_err(|e| invalid(e.to_string()))?;
                Ok(LoadedBackend { experiment: Box::new(backend), dataset: None })
            }
            BackendConfig::Replay { dataset } => {
                let ds = Dataset::read(dataset).map_err(|e| invalid(format!("{}: {e}", dataset.display())))?;
                if ds.space().parameters().iter().map(|p| (p.name(), p.min(), p.max(), p.granularity())).ne(self
                    .space
                    .parameters()
                    .iter()
                    .map(|p| (p.name(), p.min(), p.max(), p.granularity())))
                {
                    return Err(invalid(format!(
                        "{}: dataset grid {} differs from the configured search space {}",
                        dataset.display(),
                        ds.space(),
                        self.space
                    )));
                }
                Ok(LoadedBackend { experiment: Box::new(ds.replay_backend()), dataset: Some(ds) })
            }
            BackendConfig::External { command, retries, timeout, parallelism } => {
                let backend = ExternalBackend::new(command, *retries, *timeout)
                    .map_err(|e| invalid(e.to_string()))?
                    .with_parallelism(*parallelism);
                Ok(LoadedBackend { experiment: Box::new(backend), dataset: None })
            }
        }
    }

    /// This configuration restricted to `reduced`, with each parameter's
    /// original bounds recorded and input paths made absolute so the file
    /// can live anywhere.
    pub fn reduced_document(&self, reduced: &SearchSpace) -> Result<String, ConfigError> {
        let mut raw = self.raw.clone();
        let sla = &mut raw.slas[0];
        for p in &mut sla.parameters {
            let spec = reduced
                .position(&p.name)
                .map(|i| &reduced.parameters()[i])
                .ok_or_else(|| invalid(format!("reduced space lacks parameter `{}`", p.name)))?;
            p.searchspace.min = spec.min();
            p.searchspace.max = spec.max();
            let (min, max) = spec.reference();
            p.original = Some(RawBounds { min, max });
        }
        let absolute =
            |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).to_string_lossy().into_owned();
        match (&mut raw.backend, &self.backend) {
            (RawBackend::Synthetic { model, .. }, BackendConfig::Synthetic { model: resolved, .. }) => {
                *model = absolute(resolved)
            }
            (RawBackend::Replay { dataset }, BackendConfig::Replay { dataset: resolved }) => {
                *dataset = absolute(resolved)
            }
            (RawBackend::External { command, .. }, BackendConfig::External { command: resolved, .. }) => {
                if resolved[0].contains('/') {
                    command[0] = absolute(Path::new(&resolved[0]));
                }
            }
            _ => unreachable!("backend kinds match"),
        }
        serde_yaml::to_string(&raw).map_err(|e| invalid(e.to_string()))
    }
}

/// Strict structural parse. Returns the document and the paths of keys
/// that were not recognized.
pub fn parse_raw(text: &str) -> Result<(RawConfig, Vec<String>), ConfigError> {
    let text = strip_comment_lines(text);
    let mut ignored = Vec::new();
    let de = serde_yaml::Deserializer::from_str(&text);
    let mut track = |path: serde_ignored::Path<'_>| ignored.push(path.to_string());
    let de = serde_ignored::Deserializer::new(de, &mut track);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            invalid(e.inner().to_string())
        } else {
            invalid(format!("{path}: {}", e.inner()))
        }
    })?;
    Ok((raw, ignored))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = "nbOfIterations: 10
nbOfSamplesPerIteration: 6
charts:
  - name: teastore
    chartdir: charts/teastore-helm
slas:
  - name: silver
    chartName: teastore
    slos:
      throughput: 0.5
      99th: 1000.0
    nbOfTenants: 10
    parameters:
      - name: persistenceCpu
        searchspace:
          min: 500
          max: 1125
          granularity: 125
        suffix: m
      - name: persistenceMemory
        searchspace:
          min: 512
          max: 1152
          granularity: 128
        suffix: Mi
\t\t  #similar settings for other resource parameters

namespaceStrategy: NSPSLA
optimizer: bestconfig
utilFunc: teastore
outputDir: teastore-bestconfig
backend:
  kind: synthetic
  model: model.yaml
";

    #[test]
    fn published_layout_parses() {
        let (raw, ignored) = parse_raw(LISTING).unwrap();
        assert!(ignored.is_empty(), "{ignored:?}");
        let cfg = RunConfig::from_raw(raw, Path::new("/cfg")).unwrap();
        assert_eq!((cfg.iterations, cfg.samples_per_iteration, cfg.budget()), (10, 6, 60));
        assert_eq!(cfg.slo.threshold(), 1000.0);
        assert_eq!(cfg.workload.tenants(), 10);
        assert_eq!(cfg.raw.slas[0].slos.throughput, Some(0.5));
        assert_eq!(cfg.optimizer, OptimizerKind::BestConfig);
        let cpu = &cfg.space.parameters()[0];
        assert_eq!(
            (cpu.min(), cpu.max(), cpu.granularity(), cpu.suffix(), cpu.level_count()),
            (500, 1125, 125, "m", 6)
        );
        assert_eq!(cfg.backend, BackendConfig::Synthetic { model: PathBuf::from("/cfg/model.yaml"), seed: 0 });
    }

    #[test]
    fn unknown_keys_are_reported_not_fatal() {
        let text = LISTING.replace("optimizer: bestconfig", "optimizer: bestconfig\nfoo: 1");
        let (_, ignored) = parse_raw(&text).unwrap();
        assert_eq!(ignored, vec!["foo".to_string()]);
    }

    #[test]
    fn errors_name_the_key_or_parameter() {
        let err = parse_raw(&LISTING.replace("      99th: 1000.0\n", "")).unwrap_err();
        assert!(err.0.contains("slas[0].slos") && err.0.contains("99th"), "{err}");

        let (raw, _) = parse_raw(&LISTING.replace("granularity: 128", "granularity: 0")).unwrap();
        let err = RunConfig::from_raw(raw, Path::new(".")).unwrap_err();
        assert!(err.0.contains("persistenceMemory") && err.0.contains("granularity"), "{err}");

        let (raw, _) = parse_raw(&LISTING.replace("optimizer: bestconfig", "optimizer: simplex")).unwrap();
        let err = RunConfig::from_raw(raw, Path::new(".")).unwrap_err();
        assert!(err.0.contains("simplex") && err.0.contains("bayesian-ei") && err.0.contains("randominc"), "{err}");
    }

    #[test]
    fn more_than_one_sla_is_rejected() {
        let (mut raw, _) = parse_raw(LISTING).unwrap();
        let mut gold = raw.slas[0].clone();
        gold.name = "gold".into();
        raw.slas.push(gold);
        let err = RunConfig::from_raw(raw, Path::new(".")).unwrap_err();
        assert!(err.0.contains("exactly one SLA") && err.0.contains("silver, gold"), "{err}");
    }

    #[test]
    fn reduced_document_round_trips() {
        let (raw, _) = parse_raw(LISTING).unwrap();
        let cfg = RunConfig::from_raw(raw, Path::new("/cfg")).unwrap();
        let p = cfg.space.parameters();
        let reduced =
            SearchSpace::new(vec![p[0].narrowed(625, 875).unwrap(), p[1].narrowed(1024, 1024).unwrap()]).unwrap();
        let text = cfg.reduced_document(&reduced).unwrap();
        let again = RunConfig::parse(&text, Path::new("/elsewhere")).unwrap();
        assert_eq!(again.space, reduced);
        assert_eq!(again.space.parameters()[1].reference(), (512, 1152));
        assert_eq!(again.backend, cfg.backend);
        assert_eq!(again.budget(), cfg.budget());
    }

    #[test]
    fn backend_defaults() {
        let text = LISTING
            .replace("  kind: synthetic\n  model: model.yaml\n", "  kind: external\n  command: [./run.sh, fast]\n");
        let cfg = RunConfig::parse(&text, Path::new("/cfg")).unwrap();
        assert_eq!(
            cfg.backend,
            BackendConfig::External {
                command: vec!["/cfg/./run.sh".into(), "fast".into()],
                retries: 2,
                timeout: Duration::from_secs(600),
                parallelism: 1
            }
        );
        let bad = LISTING.replace("model: model.yaml", "model: model.yaml\n  modle: x");
        assert!(RunConfig::parse(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn weights_and_screening_settings() {
        let text = LISTING
            .replace("        suffix: m\n", "        suffix: m\n        weight: 3\n")
            .replace("outputDir: teastore-bestconfig", "outputDir: out\nscreening:\n  r: 4\n  strictFactor: 0.5");
        let cfg = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.weights.as_slice(), &[0.75, 0.25]);
        assert_eq!((cfg.screening.r, cfg.screening.strict_factor, cfg.screening.relaxed_factor), (4, 0.5, 1.25));
    }
}
