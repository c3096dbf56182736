//! Screening runs and the screening-then-BO versus standalone-BO study.

use std::collections::HashMap;

use super::{run_optimization, BatchEvaluator, HarnessError, LiveEvaluator, RunTrace};
use crate::optim::{Observation, OptimError, OptimizerKind, OptimizerSession, StrategyOptions};
use crate::screening::{
    analyze, generate_trajectories, planned_evaluations, reduce_bounds, BoundReductionReport, ScreeningSample,
    ScreeningSettings, ScreeningStats,
};
use crate::space::{Configuration, SearchSpace};

#[derive(Debug, Clone)]
pub struct ScreeningOutcome {
    /// `r * (k + 1)` planned trajectory points.
    pub planned: usize,
    /// Distinct configurations evaluated, in first-visit order.
    pub observations: Vec<Observation>,
    pub stats: ScreeningStats,
    pub reduction: BoundReductionReport,
}

/// Plans trajectories, evaluates every distinct point, computes the
/// elementary-effect statistics and reduces the bounds.
pub fn run_screening(
    evaluator: &LiveEvaluator<'_>,
    settings: &ScreeningSettings,
    seed: u64,
) -> Result<ScreeningOutcome, HarnessError> {
    let space = evaluator.space();
    let p = settings.resolve_levels(space)?;
    let plans = generate_trajectories(space, settings.r, p, seed)?;
    let planned = planned_evaluations(&plans);

    let mut unique: Vec<Configuration> = Vec::with_capacity(planned);
    let mut index: HashMap<Configuration, usize> = HashMap::with_capacity(planned);
    for plan in &plans {
        for point in &plan.points {
            let c = space.from_normalized(point)?;
            if !index.contains_key(&c) {
                index.insert(c.clone(), unique.len());
                unique.push(c);
            }
        }
    }
    let observations = evaluator.evaluate_batch(&unique).map_err(|(_, e)| e)?;
    log::info!("screening: {planned} planned points, {} distinct configurations evaluated", unique.len());

    let metric = &settings.metric;
    let failure = evaluator.scorer().failure_sli();
    let mut missing = None;
    let response = |c: &Configuration| {
        let obs = &observations[index[c]];
        if obs.failed {
            return Some(failure);
        }
        let v = obs.slis.get(metric).copied();
        if v.is_none() {
            missing = Some(space.config_key(c));
        }
        v
    };
    let stats = analyze(space, &plans, response);
    if let Some(config) = missing {
        return Err(HarnessError::MissingMetric { metric: metric.clone(), config });
    }
    let stats = stats?;

    let samples: Vec<ScreeningSample> = observations
        .iter()
        .map(|o| ScreeningSample {
            config: o.config.clone(),
            sli: if o.failed { None } else { o.slis.get(metric).copied() },
        })
        .collect();
    let reduction = reduce_bounds(
        space,
        &stats,
        &samples,
        evaluator.scorer().slo().threshold(),
        settings.relaxed_factor,
        settings.strict_factor,
    )?;
    for w in &reduction.warnings {
        log::warn!("{w}");
    }
    Ok(ScreeningOutcome { planned, observations, stats, reduction })
}

/// Exhaustive minimum of the utility, first in enumeration order among
/// equals. Evaluates without storing rows.
pub fn brute_force_optimum(evaluator: &LiveEvaluator<'_>, cap: u64) -> Result<Option<Observation>, HarnessError> {
    let space = evaluator.space();
    if space.size_u64().is_none_or(|s| s > cap) {
        return Ok(None);
    }
    const CHUNK: usize = 4096;
    let mut best: Option<Observation> = None;
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut configs = space.enumerate();
    loop {
        chunk.clear();
        chunk.extend(configs.by_ref().take(CHUNK));
        if chunk.is_empty() {
            return Ok(best);
        }
        for obs in evaluator.evaluate_batch(&chunk).map_err(|(_, e)| e)? {
            if best.as_ref().is_none_or(|b| obs.utility < b.utility) {
                best = Some(obs);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub screening: ScreeningSettings,
    /// Samples given to each arm. Standalone BO spends all of them on the
    /// full space; the screened arm spends the planned screening cost and
    /// the remainder on BO inside the reduced space.
    pub budget: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    /// Largest space searched exhaustively for reference optima.
    pub exhaustive_cap: u64,
    pub strategy: StrategyOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            screening: ScreeningSettings::default(),
            budget: 150,
            batch_size: 6,
            repetitions: 20,
            base_seed: 0,
            exhaustive_cap: 10_000_000,
            strategy: StrategyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Repetition {
    pub seed: u64,
    /// Planned screening points, repeats included.
    pub screening_cost: usize,
    pub reduced_budget: usize,
    pub reduced_size: u64,
    pub reduced_optimum: f64,
    pub screened_best: Observation,
    pub screened_found_optimum: bool,
    pub standalone_best: Observation,
    pub standalone_found_optimum: Option<bool>,
    /// Whether the standalone best lies inside the reduced bounds.
    pub standalone_in_reduced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    /// Global optimum over the full space, when it was small enough to search.
    pub global_optimum: Option<Observation>,
    pub repetitions: Vec<Repetition>,
}

impl StudyReport {
    pub fn screened_hits(&self) -> usize {
        self.repetitions.iter().filter(|r| r.screened_found_optimum).count()
    }

    pub fn standalone_hits(&self) -> usize {
        self.repetitions.iter().filter(|r| r.standalone_found_optimum == Some(true)).count()
    }

    pub fn standalone_feasible(&self) -> usize {
        self.repetitions.iter().filter(|r| r.standalone_best.feasible).count()
    }
}

/// For each repetition: screen, run BO in the reduced space, and run BO on
/// the full space with the same total number of samples.
pub fn screening_vs_standalone(
    evaluator: &LiveEvaluator<'_>,
    options: &StudyOptions,
) -> Result<StudyReport, HarnessError> {
    let full = evaluator.space();
    let global_optimum = brute_force_optimum(evaluator, options.exhaustive_cap)?;
    let mut repetitions = Vec::with_capacity(options.repetitions);
    for i in 0..options.repetitions {
        let seed = options.base_seed.wrapping_add(i as u64);
        let screening = run_screening(evaluator, &options.screening, seed)?;
        let reduced_budget = options.budget.checked_sub(screening.planned).filter(|&b| b > 0).ok_or_else(|| {
            OptimError::InvalidSettings(format!(
                "budget {} leaves nothing for BO after {} screening samples",
                options.budget, screening.planned
            ))
        })?;
        let reduced = screening.reduction.reduced_space.clone();
        let reduced_eval = evaluator.with_space(&reduced);
        let reduced_optimum = brute_force_optimum(&reduced_eval, options.exhaustive_cap)?
            .ok_or_else(|| HarnessError::TooLarge { size: reduced.size().to_string(), cap: options.exhaustive_cap })?;

        let screened = bo(&reduced, &reduced_eval, reduced_budget, options, seed, Some(&reduced_optimum.config))?;
        let screened_best = screened.best().expect("positive budget").clone();

        let standalone =
            bo(full, evaluator, options.budget, options, seed, global_optimum.as_ref().map(|o| &o.config))?;
        let standalone_best = standalone.best().expect("positive budget").clone();

        repetitions.push(Repetition {
            seed,
            screening_cost: screening.planned,
            reduced_budget,
            reduced_size: reduced.size_u64().unwrap_or(u64::MAX),
            reduced_optimum: reduced_optimum.utility,
            screened_found_optimum: screened.found_optimal_at.is_some(),
            screened_best,
            standalone_found_optimum: global_optimum.as_ref().map(|_| standalone.found_optimal_at.is_some()),
            standalone_in_reduced: within(&reduced, full, &standalone_best.config),
            standalone_best,
        });
    }
    Ok(StudyReport { global_optimum, repetitions })
}

fn bo(
    space: &SearchSpace,
    evaluator: &dyn BatchEvaluator,
    budget: usize,
    options: &StudyOptions,
    seed: u64,
    optimum: Option<&Configuration>,
) -> Result<RunTrace, HarnessError> {
    let mut session = OptimizerSession::new(
        space.clone(),
        OptimizerKind::BayesianEi,
        budget,
        options.batch_size,
        seed,
        &options.strategy,
    )?;
    run_optimization(&mut session, evaluator, optimum)
}

/// Membership in the reduced box by parameter name.
fn within(reduced: &SearchSpace, full: &SearchSpace, config: &Configuration) -> bool {
    full.parameters().iter().zip(config.settings()).all(|(p, &v)| {
        reduced.position(p.name()).is_some_and(|i| {
            let q = &reduced.parameters()[i];
            (q.min()..=q.max()).contains(&v)
        })
    })
}
