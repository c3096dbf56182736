//! Morris one-at-a-time screening and search-space reduction.
//!
//! A trajectory is a walk of `k + 1` points on a `p`-level grid of the unit
//! cube in which each dimension moves exactly once by `delta = p / (2(p-1))`.
//! The finite difference along each move is an elementary effect; `r`
//! trajectories give `r` effects per parameter, summarized as mean (`mu`),
//! mean of absolute values (`mu_star`) and sample standard deviation.
//!
//! The reduction step keeps, per parameter, the settings that met a relaxed
//! or strict variant of the SLO during screening and scales the upper bound
//! by the parameter's relative `mu_star`.

use std::collections::BTreeSet;
use std::io;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numfmt::sig6;
use crate::space::{Configuration, NormalizedPoint, SearchSpace, SpaceError};

#[derive(Debug, Error)]
pub enum ScreeningError {
    #[error("invalid screening settings: {0}")]
    Settings(String),
    #[error("elementary effect with zero perturbation")]
    ZeroDelta,
    #[error("parameter `{0}` has fewer than 2 elementary effects; sigma is undefined")]
    TooFewSamples(String),
    #[error("parameter `{0}` has no elementary effects")]
    NoSamples(String),
    #[error("no response recorded for configuration {0}")]
    MissingResponse(String),
    #[error("bound reduction needs at least one evaluation")]
    NoEvaluations,
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("screening report: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningSettings {
    /// Number of trajectories.
    pub r: usize,
    /// Grid levels per dimension; `None` takes the parameters' own level
    /// count when they all agree.
    pub p: Option<usize>,
    pub relaxed_factor: f64,
    pub strict_factor: f64,
    pub metric: String,
}

impl Default for ScreeningSettings {
    fn default() -> Self {
        Self {
            r: 10,
            p: None,
            relaxed_factor: 1.25,
            strict_factor: 0.75,
            metric: crate::utility::DEFAULT_METRIC.to_string(),
        }
    }
}

impl ScreeningSettings {
    /// Validates the settings against `space` and returns the level count to use.
    pub fn resolve_levels(&self, space: &SearchSpace) -> Result<usize, ScreeningError> {
        if self.r == 0 {
            return Err(ScreeningError::Settings("r must be at least 1".into()));
        }
        if !(self.relaxed_factor > 1.0 && self.strict_factor < 1.0 && self.strict_factor > 0.0) {
            return Err(ScreeningError::Settings(format!(
                "factors must satisfy relaxed > 1 > strict > 0 (got {} and {})",
                self.relaxed_factor, self.strict_factor
            )));
        }
        if let Some(p) = space.parameters().iter().find(|p| p.is_pinned()) {
            return Err(ScreeningError::Settings(format!("parameter `{}` is pinned to one level", p.name())));
        }
        let p = match self.p {
            Some(p) => p,
            None => {
                let counts: BTreeSet<usize> = space.parameters().iter().map(|p| p.level_count()).collect();
                if counts.len() != 1 {
                    return Err(ScreeningError::Settings(
                        "parameters have different level counts; choose p explicitly".into(),
                    ));
                }
                *counts.iter().next().unwrap()
            }
        };
        check_levels(p)?;
        Ok(p)
    }
}

fn check_levels(p: usize) -> Result<(), ScreeningError> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(ScreeningError::Settings(format!("p must be even and at least 2, got {p}")));
    }
    Ok(())
}

/// Step size `p / (2(p-1))`.
pub fn moat_delta(p: usize) -> f64 {
    p as f64 / (2.0 * (p as f64 - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub points: Vec<NormalizedPoint>,
    /// `perturbed[j]` is the dimension that changes between points `j` and `j+1`.
    pub perturbed: Vec<usize>,
    pub delta: f64,
}

/// Plans `r` random trajectories over a `p`-level grid.
pub fn generate_trajectories(
    space: &SearchSpace,
    r: usize,
    p: usize,
    seed: u64,
) -> Result<Vec<TrajectoryPlan>, ScreeningError> {
    check_levels(p)?;
    if r == 0 {
        return Err(ScreeningError::Settings("r must be at least 1".into()));
    }
    let k = space.dims();
    let half = p / 2;
    let top = (p - 1) as f64;
    let delta = moat_delta(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let plans = (0..r)
        .map(|_| {
            let mut levels: Vec<usize> = (0..k).map(|_| rng.random_range(0..p)).collect();
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            let to_point = |levels: &[usize]| NormalizedPoint::new(levels.iter().map(|&l| l as f64 / top).collect());
            let mut points = Vec::with_capacity(k + 1);
            points.push(to_point(&levels));
            for &dim in &order {
                // delta spans exactly p/2 levels, so the lower half moves up
                // and the upper half moves down
                if levels[dim] < half {
                    levels[dim] += half;
                } else {
                    levels[dim] -= half;
                }
                points.push(to_point(&levels));
            }
            TrajectoryPlan { points, perturbed: order, delta }
        })
        .collect();
    Ok(plans)
}

/// Planned number of evaluations, `r * (k + 1)`.
pub fn planned_evaluations(plans: &[TrajectoryPlan]) -> usize {
    plans.iter().map(|t| t.points.len()).sum()
}

pub fn elementary_effect(y_after: f64, y_before: f64, delta_signed: f64) -> Result<f64, ScreeningError> {
    if delta_signed == 0.0 {
        return Err(ScreeningError::ZeroDelta);
    }
    Ok((y_after - y_before) / delta_signed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEffects {
    pub name: String,
    pub mu: f64,
    pub mu_star: f64,
    /// `None` with a single sample.
    pub sigma: Option<f64>,
    pub samples: Vec<f64>,
}

impl ParameterEffects {
    pub fn from_samples(name: impl Into<String>, samples: Vec<f64>) -> Result<Self, ScreeningError> {
        let name = name.into();
        if samples.is_empty() {
            return Err(ScreeningError::NoSamples(name));
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let mu_star = samples.iter().map(|e| e.abs()).sum::<f64>() / n;
        let sigma =
            (samples.len() >= 2).then(|| (samples.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Ok(Self { name, mu, mu_star, sigma, samples })
    }

    pub fn sigma(&self) -> Result<f64, ScreeningError> {
        self.sigma.ok_or_else(|| ScreeningError::TooFewSamples(self.name.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningStats {
    pub parameters: Vec<ParameterEffects>,
}

impl ScreeningStats {
    pub fn compute(names: &[String], samples: Vec<Vec<f64>>) -> Result<Self, ScreeningError> {
        let r = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != r) {
            return Err(ScreeningError::Settings("unequal number of effects per parameter".into()));
        }
        let parameters = names
            .iter()
            .zip(samples)
            .map(|(name, s)| ParameterEffects::from_samples(name.clone(), s))
            .collect::<Result<_, _>>()?;
        Ok(Self { parameters })
    }

    pub fn mu_star(&self) -> Vec<f64> {
        self.parameters.iter().map(|p| p.mu_star).collect()
    }
}

/// Computes elementary effects from the responses observed at each
/// trajectory point. Points are snapped to the parameter grids; the
/// effective step is the snapped configurations' normalized difference.
pub fn analyze<F>(
    space: &SearchSpace,
    plans: &[TrajectoryPlan],
    mut response: F,
) -> Result<ScreeningStats, ScreeningError>
where
    F: FnMut(&Configuration) -> Option<f64>,
{
    let mut samples = vec![Vec::with_capacity(plans.len()); space.dims()];
    for plan in plans {
        let configs = plan.points.iter().map(|p| space.from_normalized(p)).collect::<Result<Vec<_>, _>>()?;
        let mut ys = Vec::with_capacity(configs.len());
        for c in &configs {
            ys.push(response(c).ok_or_else(|| ScreeningError::MissingResponse(space.config_key(c)))?);
        }
        for (step, &dim) in plan.perturbed.iter().enumerate() {
            let param = &space.parameters()[dim];
            let before = configs[step].settings()[dim];
            let after = configs[step + 1].settings()[dim];
            let delta = param.normalize(after) - param.normalize(before);
            samples[dim].push(elementary_effect(ys[step + 1], ys[step], delta)?);
        }
    }
    let names: Vec<String> = space.parameters().iter().map(|p| p.name().to_string()).collect();
    ScreeningStats::compute(&names, samples)
}

/// One screening evaluation; `sli` is `None` when the evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningSample {
    pub config: Configuration,
    pub sli: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterReduction {
    pub name: String,
    pub rho: f64,
    pub old_min: i64,
    pub old_max: i64,
    pub min_bound: i64,
    pub max_bound: i64,
}

#[derive(Debug, Clone)]
pub struct BoundReductionReport {
    pub reduced_space: SearchSpace,
    pub parameters: Vec<ParameterReduction>,
    pub relaxed_slo: f64,
    pub strict_slo: f64,
    /// All `mu_star` equal; upper bounds come from the strict minimum.
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

/// Min-max scaling of `mu_star`; `None` when all values coincide.
pub fn rho_scaling(mu_star: &[f64]) -> Option<Vec<f64>> {
    let lo = mu_star.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu_star.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(1.0)) {
        return None;
    }
    Some(mu_star.iter().map(|m| ((m - lo) / span).clamp(0.0, 1.0)).collect())
}

pub fn reduce_bounds(
    space: &SearchSpace,
    stats: &ScreeningStats,
    evaluations: &[ScreeningSample],
    slo: f64,
    relaxed_factor: f64,
    strict_factor: f64,
) -> Result<BoundReductionReport, ScreeningError> {
    if evaluations.is_empty() {
        return Err(ScreeningError::NoEvaluations);
    }
    if !(relaxed_factor > 1.0 && strict_factor < 1.0 && strict_factor > 0.0) {
        return Err(ScreeningError::Settings(format!(
            "factors must satisfy relaxed > 1 > strict > 0 (got {relaxed_factor} and {strict_factor})"
        )));
    }
    if stats.parameters.len() != space.dims() {
        return Err(SpaceError::DimensionMismatch { expected: space.dims(), got: stats.parameters.len() }.into());
    }
    let relaxed_slo = relaxed_factor * slo;
    let strict_slo = strict_factor * slo;
    let scaling = rho_scaling(&stats.mu_star());
    let mut warnings = Vec::new();
    let mut reduced = Vec::with_capacity(space.dims());
    let mut parameters = Vec::with_capacity(space.dims());

    for (i, param) in space.parameters().iter().enumerate() {
        let satisfied = |threshold: f64| -> BTreeSet<i64> {
            evaluations
                .iter()
                .filter(|e| e.sli.is_some_and(|s| s <= threshold))
                .map(|e| e.config.settings()[i])
                .collect()
        };
        let relaxed = satisfied(relaxed_slo);
        let strict = satisfied(strict_slo);
        let rho = scaling.as_ref().map_or(0.0, |s| s[i]);

        let (min_bound, mut max_bound) = match relaxed.first() {
            None => {
                warnings.push(format!(
                    "{}: no tested setting met the relaxed SLO ({relaxed_slo}); keeping [{}, {}]",
                    param.name(),
                    param.min(),
                    param.max()
                ));
                (param.min(), param.max())
            }
            Some(&min_bound) => {
                let max_bound = match (strict.first(), strict.last()) {
                    (Some(&strict_min), Some(&strict_max)) => match scaling {
                        None => strict_min,
                        Some(_) => {
                            let raw = min_bound as f64 + (strict_max - min_bound) as f64 * rho;
                            snap_up(param.min(), param.granularity(), param.max(), raw)
                        }
                    },
                    _ => param.max(),
                };
                (min_bound, max_bound)
            }
        };
        if max_bound < min_bound {
            warnings.push(format!(
                "{}: upper bound {max_bound} fell below lower bound {min_bound}; pinning to a single level",
                param.name()
            ));
            max_bound = min_bound;
        }
        reduced.push(param.narrowed(min_bound, max_bound)?);
        parameters.push(ParameterReduction {
            name: param.name().to_string(),
            rho,
            old_min: param.min(),
            old_max: param.max(),
            min_bound,
            max_bound,
        });
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(BoundReductionReport {
        reduced_space: SearchSpace::new(reduced)?,
        parameters,
        relaxed_slo,
        strict_slo,
        degenerate: scaling.is_none(),
        warnings,
    })
}

/// Smallest grid level `>= value`, clamped to the grid.
fn snap_up(min: i64, granularity: i64, max: i64, value: f64) -> i64 {
    let steps = ((value - min as f64) / granularity as f64 - 1e-9).ceil().max(0.0) as i64;
    (min + steps * granularity).min(max)
}

/// One row of the screening report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub mu: f64,
    pub mu_star: f64,
    pub sigma: Option<f64>,
    pub old_min: i64,
    pub old_max: i64,
    pub new_min: i64,
    pub new_max: i64,
    pub rho: f64,
}

pub const REPORT_HEADER: [&str; 9] =
    ["parameter", "mu", "mu_star", "sigma", "old_min", "old_max", "new_min", "new_max", "rho"];

/// Rows sorted by `mu_star`, largest first.
pub fn report_rows(stats: &ScreeningStats, reduction: &BoundReductionReport) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = stats
        .parameters
        .iter()
        .zip(&reduction.parameters)
        .map(|(e, b)| ReportRow {
            parameter: e.name.clone(),
            mu: e.mu,
            mu_star: e.mu_star,
            sigma: e.sigma,
            old_min: b.old_min,
            old_max: b.old_max,
            new_min: b.min_bound,
            new_max: b.max_bound,
            rho: b.rho,
        })
        .collect();
    rows.sort_by(|a, b| b.mu_star.total_cmp(&a.mu_star));
    rows
}

pub fn write_report<W: io::Write>(rows: &[ReportRow], out: W) -> Result<(), ScreeningError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| ScreeningError::Report(e.to_string());
    w.write_record(REPORT_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.parameter.clone(),
            sig6(r.mu),
            sig6(r.mu_star),
            r.sigma.map(sig6).unwrap_or_default(),
            r.old_min.to_string(),
            r.old_max.to_string(),
            r.new_min.to_string(),
            r.new_max.to_string(),
            sig6(r.rho),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report<R: io::Read>(input: R) -> Result<Vec<ReportRow>, ScreeningError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| ScreeningError::Report(e.to_string()))?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(ScreeningError::Report(format!("unexpected header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(|e| ScreeningError::Report(e.to_string()))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::ParameterSpec;

    fn grid(k: usize, levels: i64) -> SearchSpace {
        SearchSpace::new(
            (0..k).map(|i| ParameterSpec::new(format!("x{}", i + 1), 0, levels - 1, 1, "").unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn delta_for_six_levels() {
        assert!((moat_delta(6) - 0.6).abs() < 1e-15);
        assert_eq!(moat_delta(2), 1.0);
    }

    #[test]
    fn odd_or_tiny_p_rejected() {
        let s = grid(2, 5);
        assert!(generate_trajectories(&s, 1, 5, 0).is_err());
        assert!(generate_trajectories(&s, 1, 0, 0).is_err());
        assert!(generate_trajectories(&s, 0, 4, 0).is_err());
    }

    #[test]
    fn budget_is_r_times_k_plus_one() {
        let s = grid(14, 6);
        let plans = generate_trajectories(&s, 10, 6, 7).unwrap();
        assert_eq!(planned_evaluations(&plans), 150);
    }

    #[test]
    fn single_dimension_single_trajectory() {
        let s = grid(1, 6);
        let plans = generate_trajectories(&s, 1, 6, 3).unwrap();
        let pts = &plans[0].points;
        assert_eq!(pts.len(), 2);
        assert!(((pts[1].coords()[0] - pts[0].coords()[0]).abs() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn trajectories_are_well_formed() {
        let s = grid(5, 6);
        for seed in 0..50 {
            for plan in generate_trajectories(&s, 4, 6, seed).unwrap() {
                let mut dims = plan.perturbed.clone();
                dims.sort_unstable();
                assert_eq!(dims, (0..5).collect::<Vec<_>>());
                for (j, w) in plan.points.windows(2).enumerate() {
                    let changed: Vec<usize> =
                        (0..5).filter(|&d| (w[0].coords()[d] - w[1].coords()[d]).abs() > 1e-12).collect();
                    assert_eq!(changed, vec![plan.perturbed[j]]);
                    let d = changed[0];
                    assert!(((w[1].coords()[d] - w[0].coords()[d]).abs() - plan.delta).abs() < 1e-12);
                }
                for p in &plan.points {
                    for &c in p.coords() {
                        let level = c * 5.0;
                        assert!((level - level.round()).abs() < 1e-12 && (0.0..=1.0).contains(&c));
                    }
                }
            }
        }
    }

    #[test]
    fn trajectories_are_seeded() {
        let s = grid(4, 6);
        assert_eq!(generate_trajectories(&s, 3, 6, 11).unwrap(), generate_trajectories(&s, 3, 6, 11).unwrap());
        assert_ne!(generate_trajectories(&s, 3, 6, 11).unwrap(), generate_trajectories(&s, 3, 6, 12).unwrap());
    }

    #[test]
    fn elementary_effect_examples() {
        assert_eq!(elementary_effect(1250.0, 650.0, 0.6).unwrap(), 1000.0);
        assert_eq!(elementary_effect(4.0, 4.0, -0.6).unwrap(), 0.0);
        assert!(matches!(elementary_effect(1.0, 0.0, 0.0), Err(ScreeningError::ZeroDelta)));
        let lin = |x: f64| 3.0 * x;
        assert!((elementary_effect(lin(0.8), lin(0.2), 0.6).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stats_examples() {
        let e = ParameterEffects::from_samples("a", vec![2.0, -2.0]).unwrap();
        assert_eq!(e.mu, 0.0);
        assert_eq!(e.mu_star, 2.0);
        assert!((e.sigma().unwrap() - 8f64.sqrt()).abs() < 1e-12);

        let one = ParameterEffects::from_samples("b", vec![5.0]).unwrap();
        assert_eq!((one.mu, one.mu_star), (5.0, 5.0));
        assert!(matches!(one.sigma(), Err(ScreeningError::TooFewSamples(_))));

        let flat = ParameterEffects::from_samples("c", vec![1.5; 3]).unwrap();
        assert_eq!(flat.sigma().unwrap(), 0.0);
        assert!(ParameterEffects::from_samples("d", vec![]).is_err());
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho_scaling(&[1.0, 3.0, 5.0]).unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(rho_scaling(&[2.0, 2.0, 2.0]).is_none());
        assert!(rho_scaling(&[7.0]).is_none());
    }

    fn stats_with(mu_star: &[f64]) -> ScreeningStats {
        ScreeningStats {
            parameters: mu_star
                .iter()
                .enumerate()
                .map(|(i, &m)| ParameterEffects::from_samples(format!("x{}", i + 1), vec![m, m]).unwrap())
                .collect(),
        }
    }

    fn cpu_space(k: usize) -> SearchSpace {
        SearchSpace::new(
            (0..k).map(|i| ParameterSpec::new(format!("x{}", i + 1), 500, 1125, 125, "m").unwrap()).collect(),
        )
        .unwrap()
    }

    fn sample(settings: Vec<i64>, sli: f64) -> ScreeningSample {
        ScreeningSample { config: Configuration::new(settings), sli: Some(sli) }
    }

    #[test]
    fn reduction_follows_the_bound_formulas() {
        let space = cpu_space(3);
        let evals = vec![
            sample(vec![625, 750, 1000], 1200.0),  // relaxed only
            sample(vec![1000, 1125, 1125], 700.0), // strict
            sample(vec![1125, 500, 500], 1500.0),
        ];
        let rep = reduce_bounds(&space, &stats_with(&[1.0, 3.0, 5.0]), &evals, 1000.0, 1.25, 0.75).unwrap();
        assert!(!rep.degenerate);
        let b: Vec<(i64, i64)> = rep.parameters.iter().map(|p| (p.min_bound, p.max_bound)).collect();
        // x1: min 625, strict max 1000, rho 0 -> 625
        // x2: min 750, strict max 1125, rho 0.5 -> 937.5 snapped up to 1000
        // x3: min 1000, strict max 1125, rho 1 -> 1125
        assert_eq!(b, vec![(625, 625), (750, 1000), (1000, 1125)]);
        assert_eq!(rep.reduced_space.size_u64(), Some(6));
        assert_eq!(rep.relaxed_slo, 1250.0);
        assert_eq!(rep.strict_slo, 750.0);
    }

    #[test]
    fn equal_mu_star_uses_strict_minimum() {
        let space = cpu_space(2);
        let evals =
            vec![sample(vec![500, 625], 1100.0), sample(vec![750, 1000], 600.0), sample(vec![1000, 1125], 500.0)];
        let rep = reduce_bounds(&space, &stats_with(&[4.0, 4.0]), &evals, 1000.0, 1.25, 0.75).unwrap();
        assert!(rep.degenerate);
        let b: Vec<(i64, i64)> = rep.parameters.iter().map(|p| (p.min_bound, p.max_bound)).collect();
        assert_eq!(b, vec![(500, 750), (625, 1000)]);
    }

    #[test]
    fn empty_sets_fail_open() {
        let space = cpu_space(2);
        let evals = vec![sample(vec![750, 625], 1100.0), sample(vec![1125, 1125], 5000.0)];
        let rep = reduce_bounds(&space, &stats_with(&[1.0, 2.0]), &evals, 1000.0, 1.25, 0.75).unwrap();
        // nothing strict: upper bound stays at the original max
        assert_eq!((rep.parameters[0].min_bound, rep.parameters[0].max_bound), (750, 1125));
        assert_eq!((rep.parameters[1].min_bound, rep.parameters[1].max_bound), (625, 1125));

        let none = vec![sample(vec![750, 625], 3000.0)];
        let rep = reduce_bounds(&space, &stats_with(&[1.0, 2.0]), &none, 1000.0, 1.25, 0.75).unwrap();
        assert_eq!((rep.parameters[0].min_bound, rep.parameters[0].max_bound), (500, 1125));
        assert_eq!(rep.warnings.len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn reduced_bounds_stay_on_the_original_grid(
                evals in proptest::collection::vec((proptest::collection::vec(0usize..6, 3), 0.0f64..2000.0), 1..40),
                mu_star in proptest::collection::vec(0.0f64..10.0, 3),
            ) {
                let space = cpu_space(3);
                let samples: Vec<_> = evals
                    .iter()
                    .map(|(levels, sli)| ScreeningSample { config: space.from_level_indices(levels), sli: Some(*sli) })
                    .collect();
                let rep = reduce_bounds(&space, &stats_with(&mu_star), &samples, 1000.0, 1.25, 0.75).unwrap();
                for (p, b) in space.parameters().iter().zip(&rep.parameters) {
                    prop_assert!(p.index_of(b.min_bound).is_some() && p.index_of(b.max_bound).is_some());
                    prop_assert!(b.min_bound <= b.max_bound);
                    prop_assert!((0.0..=1.0).contains(&b.rho));
                }
                for c in rep.reduced_space.enumerate().take(50) {
                    prop_assert!(space.contains(&c));
                }
            }
        }
    }

    #[test]
    fn failed_samples_never_satisfy() {
        let space = cpu_space(1);
        let evals =
            vec![ScreeningSample { config: Configuration::new(vec![500]), sli: None }, sample(vec![750], 900.0)];
        let rep = reduce_bounds(&space, &stats_with(&[1.0]), &evals, 1000.0, 1.25, 0.75).unwrap();
        assert_eq!(rep.parameters[0].min_bound, 750);
    }

    #[test]
    fn bad_inputs() {
        let space = cpu_space(1);
        assert!(matches!(
            reduce_bounds(&space, &stats_with(&[1.0]), &[], 1000.0, 1.25, 0.75),
            Err(ScreeningError::NoEvaluations)
        ));
        let evals = vec![sample(vec![500], 1.0)];
        assert!(reduce_bounds(&space, &stats_with(&[1.0]), &evals, 1000.0, 0.9, 0.75).is_err());
    }

    #[test]
    fn report_sorted_and_parses_back() {
        let space = cpu_space(3);
        let stats = stats_with(&[1.0, 5.0, 3.0]);
        let evals = vec![sample(vec![625, 750, 1000], 700.0)];
        let rep = reduce_bounds(&space, &stats, &evals, 1000.0, 1.25, 0.75).unwrap();
        let rows = report_rows(&stats, &rep);
        assert_eq!(rows.iter().map(|r| r.parameter.as_str()).collect::<Vec<_>>(), vec!["x2", "x3", "x1"]);
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("parameter,mu,mu_star,sigma,old_min,old_max,new_min,new_max,rho\n"));
        assert_eq!(read_report(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn linear_response_gives_exact_effects() {
        let space = grid(4, 6);
        let a = [5.0, 1.0, 0.0, 3.0];
        let plans = generate_trajectories(&space, 8, 6, 1).unwrap();
        let stats = analyze(&space, &plans, |c| {
            let x = space.to_normalized(c).unwrap();
            Some(x.coords().iter().zip(a).map(|(x, a)| x * a).sum())
        })
        .unwrap();
        for (p, a) in stats.parameters.iter().zip(a) {
            assert!(p.samples.iter().all(|e| (e - a).abs() < 1e-9));
        }
    }
}
