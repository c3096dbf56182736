//! Optimization loop, exhaustive collection, offline comparison and
//! report files.

mod compare;
mod dataset;
pub mod report;
mod study;

use std::collections::HashMap;
use std::io;

use rayon::prelude::*;
use thiserror::Error;

use crate::backends::{BackendError, EvalRequest, Experiment, SliResult};
use crate::optim::{Observation, OptimError, OptimizerSession};
use crate::screening::ScreeningError;
use crate::space::{Configuration, SearchSpace, SpaceError};
use crate::utility::{Scorer, WorkloadSpec};

pub use compare::{compare, nearest_rank, ComparisonReport, OptimizerCurves};
pub use dataset::{collect_exhaustive, meta_path, CollectOptions, Dataset, DatasetMeta, DatasetRow};
pub use study::{
    brute_force_optimum, run_screening, screening_vs_standalone, Repetition, ScreeningOutcome, StudyOptions,
    StudyReport,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Screening(#[from] ScreeningError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("backend reported no `{metric}` for {config}")]
    MissingMetric { metric: String, config: String },
    #[error("search space has {size} configurations, above the exhaustive cap of {cap}; screen the space first")]
    TooLarge { size: String, cap: u64 },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("run aborted after {} evaluations: {source}", trace.observations.len())]
    Aborted { trace: Box<RunTrace>, source: Box<HarnessError> },
}

/// Turns configurations into scored observations.
pub trait BatchEvaluator: Sync {
    fn space(&self) -> &SearchSpace;

    /// Results in input order. On error, the observations completed before
    /// the first failing configuration are returned alongside it.
    fn evaluate_batch(&self, configs: &[Configuration]) -> Result<Vec<Observation>, (Vec<Observation>, HarnessError)>;
}

/// Evaluates through a backend and scores with a utility function.
pub struct LiveEvaluator<'a> {
    space: &'a SearchSpace,
    backend: &'a dyn Experiment,
    scorer: &'a Scorer,
    workload: &'a WorkloadSpec,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> LiveEvaluator<'a> {
    pub fn new(
        space: &'a SearchSpace,
        backend: &'a dyn Experiment,
        scorer: &'a Scorer,
        workload: &'a WorkloadSpec,
    ) -> Self {
        let pool = backend
            .max_parallelism()
            .filter(|&n| n > 1)
            .and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok());
        Self { space, backend, scorer, workload, pool }
    }

    pub fn scorer(&self) -> &Scorer {
        self.scorer
    }

    pub fn workload(&self) -> &WorkloadSpec {
        self.workload
    }

    /// Same evaluator over another space, e.g. a reduced one.
    pub fn with_space<'b>(&self, space: &'b SearchSpace) -> LiveEvaluator<'b>
    where
        'a: 'b,
    {
        LiveEvaluator::new(space, self.backend, self.scorer, self.workload)
    }

    pub fn evaluate(&self, config: &Configuration) -> Result<Observation, HarnessError> {
        let sli = self.backend.evaluate(&EvalRequest { space: self.space, config, workload: self.workload })?;
        self.observation(config.clone(), sli)
    }

    fn observation(&self, config: Configuration, sli: SliResult) -> Result<Observation, HarnessError> {
        let metric = self.scorer.slo().metric();
        let value = if sli.failed {
            None
        } else {
            Some(sli.metric(metric).ok_or_else(|| HarnessError::MissingMetric {
                metric: metric.to_string(),
                config: self.space.config_key(&config),
            })?)
        };
        let score = self.scorer.score(self.space, &config, value);
        Ok(Observation::new(config, sli.metrics(), score.utility, score.feasible, sli.failed))
    }
}

impl BatchEvaluator for LiveEvaluator<'_> {
    fn space(&self) -> &SearchSpace {
        self.space
    }

    fn evaluate_batch(&self, configs: &[Configuration]) -> Result<Vec<Observation>, (Vec<Observation>, HarnessError)> {
        let results: Vec<Result<Observation, HarnessError>> = match (&self.pool, self.backend.max_parallelism()) {
            (_, Some(1)) => configs.iter().map(|c| self.evaluate(c)).collect(),
            (Some(pool), _) => pool.install(|| configs.par_iter().map(|c| self.evaluate(c)).collect()),
            (None, _) => configs.par_iter().map(|c| self.evaluate(c)).collect(),
        };
        let mut done = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(obs) => done.push(obs),
                Err(e) => return Err((done, e)),
            }
        }
        Ok(done)
    }
}

/// Evaluates by looking up stored observations.
pub struct DatasetEvaluator<'a> {
    dataset: &'a Dataset,
    index: HashMap<&'a Configuration, usize>,
}

impl<'a> DatasetEvaluator<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        let index = dataset.rows().iter().enumerate().map(|(i, r)| (&r.config, i)).collect();
        Self { dataset, index }
    }
}

impl BatchEvaluator for DatasetEvaluator<'_> {
    fn space(&self) -> &SearchSpace {
        self.dataset.space()
    }

    fn evaluate_batch(&self, configs: &[Configuration]) -> Result<Vec<Observation>, (Vec<Observation>, HarnessError)> {
        let mut out = Vec::with_capacity(configs.len());
        for c in configs {
            match self.index.get(c) {
                Some(&i) => out.push(self.dataset.rows()[i].observation()),
                None => {
                    let key = self.dataset.space().config_key(c);
                    return Err((out, BackendError::Missing(key).into()));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub optimizer: String,
    pub seed: u64,
    pub observations: Vec<Observation>,
    /// Best utility after each sample.
    pub best_so_far: Vec<f64>,
    /// Index of the first sample whose configuration is the known optimum.
    pub found_optimal_at: Option<usize>,
}

impl RunTrace {
    fn new(optimizer: &str, seed: u64) -> Self {
        Self {
            optimizer: optimizer.to_string(),
            seed,
            observations: Vec::new(),
            best_so_far: Vec::new(),
            found_optimal_at: None,
        }
    }

    /// Trace of observations gathered outside an optimizer session, such
    /// as screening samples.
    pub fn from_observations(
        optimizer: &str,
        seed: u64,
        observations: impl IntoIterator<Item = Observation>,
        optimum: Option<&Configuration>,
    ) -> Self {
        let mut trace = Self::new(optimizer, seed);
        for obs in observations {
            trace.push(obs, optimum);
        }
        trace
    }

    fn push(&mut self, mut obs: Observation, optimum: Option<&Configuration>) {
        obs.eval_index = self.observations.len();
        let best = self.best_so_far.last().map_or(obs.utility, |&b| b.min(obs.utility));
        if self.found_optimal_at.is_none() && optimum == Some(&obs.config) {
            self.found_optimal_at = Some(self.observations.len());
        }
        self.best_so_far.push(best);
        self.observations.push(obs);
    }

    /// First observation with the lowest utility.
    pub fn best(&self) -> Option<&Observation> {
        self.observations.iter().fold(None, |acc: Option<&Observation>, o| match acc {
            Some(b) if b.utility <= o.utility => Some(b),
            _ => Some(o),
        })
    }
}

/// Runs ask, evaluate, tell until the budget is spent or the optimizer has
/// nothing left to propose.
pub fn run_optimization(
    session: &mut OptimizerSession,
    evaluator: &dyn BatchEvaluator,
    optimum: Option<&Configuration>,
) -> Result<RunTrace, HarnessError> {
    let mut trace = RunTrace::new(session.name(), session.seed());
    loop {
        let batch = match session.ask() {
            Ok(batch) => batch,
            Err(OptimError::BudgetExhausted | OptimError::Exhausted(_)) => return Ok(trace),
            Err(e) => return Err(HarnessError::Aborted { trace: Box::new(trace), source: Box::new(e.into()) }),
        };
        let (observations, error) = match evaluator.evaluate_batch(&batch) {
            Ok(obs) => (obs, None),
            Err((obs, e)) => (obs, Some(e)),
        };
        for obs in &observations {
            trace.push(obs.clone(), optimum);
        }
        let told = session.tell(observations);
        if let Some(e) = error.or(told.err().map(HarnessError::from)) {
            return Err(HarnessError::Aborted { trace: Box::new(trace), source: Box::new(e) });
        }
    }
}
