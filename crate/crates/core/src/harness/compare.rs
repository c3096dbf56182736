//! Repeated seeded runs of several optimizers against one dataset.

use rayon::prelude::*;

use super::{run_optimization, Dataset, DatasetEvaluator, HarnessError, RunTrace};
use crate::optim::{OptimError, OptimizerKind, OptimizerSession, StrategyOptions};
use crate::utility::distance_to_optimal;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerCurves {
    pub name: String,
    pub runs: usize,
    /// Entry `n - 1`: share of runs that sampled the optimum within `n` samples.
    pub fraction_found_optimal: Vec<f64>,
    /// Entry `n - 1`: nearest-rank 99th percentile over runs of the distance
    /// between the best utility after `n` samples and the optimum.
    pub distance_q99: Vec<f64>,
}

impl OptimizerCurves {
    pub fn from_traces(name: &str, traces: &[RunTrace], optimum_utility: f64, budget: usize) -> Self {
        let runs = traces.len();
        let mut fraction = Vec::with_capacity(budget);
        let mut q99 = Vec::with_capacity(budget);
        let mut distances = vec![0.0; runs];
        for n in 1..=budget {
            let found = traces.iter().filter(|t| t.found_optimal_at.is_some_and(|i| i < n)).count();
            fraction.push(found as f64 / runs as f64);
            for (d, t) in distances.iter_mut().zip(traces) {
                // a run that stopped early keeps its final best
                let best = t.best_so_far[n.min(t.best_so_far.len()) - 1];
                *d = distance_to_optimal(best, optimum_utility);
            }
            q99.push(nearest_rank(&mut distances, 0.99));
        }
        Self { name: name.to_string(), runs, fraction_found_optimal: fraction, distance_q99: q99 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub budget: usize,
    pub optimum_utility: f64,
    /// Distance from the optimum to utility 1, where the SLO stops being met.
    pub slo_line: f64,
    pub optimizers: Vec<OptimizerCurves>,
}

/// Nearest-rank percentile: the `ceil(q * n)`-th smallest value.
pub fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(f64::total_cmp);
    let rank = (q * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Runs every optimizer `runs` times with seeds `base_seed + i`, replaying
/// `dataset`. Runs execute in parallel and are merged in seed order.
pub fn compare(
    dataset: &Dataset,
    kinds: &[OptimizerKind],
    runs: usize,
    budget: usize,
    batch_size: usize,
    base_seed: u64,
    options: &StrategyOptions,
) -> Result<ComparisonReport, HarnessError> {
    if runs == 0 || budget == 0 {
        return Err(OptimError::InvalidSettings("runs and budget must be positive".into()).into());
    }
    let evaluator = DatasetEvaluator::new(dataset);
    let optimum = dataset.optimum();
    let mut optimizers = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let traces = (0..runs)
            .into_par_iter()
            .map(|i| {
                let seed = base_seed.wrapping_add(i as u64);
                let mut session =
                    OptimizerSession::new(dataset.space().clone(), kind, budget, batch_size, seed, options)?;
                run_optimization(&mut session, &evaluator, Some(&optimum.config))
            })
            .collect::<Result<Vec<_>, _>>()?;
        optimizers.push(OptimizerCurves::from_traces(kind.name(), &traces, optimum.utility, budget));
    }
    Ok(ComparisonReport {
        budget,
        optimum_utility: optimum.utility,
        slo_line: (1.0 - optimum.utility).abs(),
        optimizers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::SliResult;
    use crate::harness::DatasetRow;
    use crate::space::{Configuration, ParameterSpec, SearchSpace};

    #[test]
    fn nearest_rank_convention() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 0.99), 99.0);
        let mut v: Vec<f64> = (1..=1000).rev().map(f64::from).collect();
        assert_eq!(nearest_rank(&mut v, 0.99), 990.0);
        assert_eq!(nearest_rank(&mut [7.0], 0.99), 7.0);
        let mut v = [3.0, 1.0, 2.0];
        assert_eq!(nearest_rank(&mut v, 0.99), 3.0);
    }

    fn dataset() -> Dataset {
        let space = SearchSpace::new(vec![
            ParameterSpec::new("a", 0, 7, 1, "").unwrap(),
            ParameterSpec::new("b", 0, 7, 1, "").unwrap(),
        ])
        .unwrap();
        let rows = space
            .enumerate()
            .map(|c: Configuration| {
                let (a, b) = (c.settings()[0] as f64, c.settings()[1] as f64);
                let u = if a + b < 5.0 { 1.0 + 100.0 * (5.0 - a - b) } else { (a + 2.0 * b) / 21.0 };
                DatasetRow { config: c, sli: SliResult::ok(u, 1.0), utility: u, feasible: u < 1.0 }
            })
            .collect();
        Dataset::new(space, rows, None).unwrap()
    }

    #[test]
    fn curves_are_monotone_and_exhaustive_reaches_one() {
        let ds = dataset();
        let kinds =
            [OptimizerKind::Random, OptimizerKind::Exhaustive, OptimizerKind::BestConfig, OptimizerKind::BayesianEi];
        let report = compare(&ds, &kinds, 40, 64, 6, 0, &StrategyOptions::default()).unwrap();
        for c in &report.optimizers {
            assert!(c.fraction_found_optimal.windows(2).all(|w| w[0] <= w[1]), "{}", c.name);
            assert!(c.distance_q99.windows(2).all(|w| w[0] >= w[1]), "{}", c.name);
        }
        assert_eq!(report.optimizers[1].fraction_found_optimal[63], 1.0);
        assert_eq!(report.optimizers[1].distance_q99[63], 0.0);
        assert!((report.slo_line - (1.0 - 5.0 / 21.0)).abs() < 1e-12);
    }

    #[test]
    fn reproducible() {
        let ds = dataset();
        let kinds = [OptimizerKind::BayesianEi, OptimizerKind::RandomInc];
        let a = compare(&ds, &kinds, 16, 30, 6, 5, &StrategyOptions::default()).unwrap();
        let b = compare(&ds, &kinds, 16, 30, 6, 5, &StrategyOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
