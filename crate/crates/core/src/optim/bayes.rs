//! Bayesian optimization with a GP surrogate and expected improvement.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gp::{expected_improvement, GaussianProcess, GpParams, GridPosterior, Prediction, Standardizer};
use super::{random_configuration, random_unevaluated, Context, OptimError, Strategy, StrategyOptions};
use crate::space::{Configuration, SearchSpace};

pub struct BayesianEi {
    rng: ChaCha8Rng,
    params: GpParams,
    random_candidates: usize,
    grid: Option<FullGrid>,
}

/// Posterior over every configuration, indexed by odometer ordinal.
struct FullGrid {
    posterior: GridPosterior,
    added: usize,
}

impl BayesianEi {
    pub fn new(space: &SearchSpace, seed: u64, options: &StrategyOptions) -> Result<Self, OptimError> {
        if options.random_candidates == 0 {
            return Err(OptimError::InvalidSettings("random candidate count must be positive".into()));
        }
        let grid = space.size_u64().filter(|&n| n <= options.full_grid_cap).map(|n| {
            let mut flat = Vec::with_capacity(n as usize * space.dims());
            for c in space.enumerate() {
                flat.extend_from_slice(space.to_normalized(&c).expect("enumerated from the space").coords());
            }
            FullGrid { posterior: GridPosterior::new(options.gp, space.dims(), flat), added: 0 }
        });
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params: options.gp,
            random_candidates: options.random_candidates,
            grid,
        })
    }

    fn random_batch(&mut self, ctx: &Context<'_>, count: usize, mut out: Vec<Configuration>) -> Vec<Configuration> {
        let mut taken = ctx.evaluated.clone();
        taken.extend(out.iter().cloned());
        while out.len() < count {
            let Some(c) = random_unevaluated(ctx.space, &taken, &mut self.rng) else { break };
            taken.insert(c.clone());
            out.push(c);
        }
        out
    }

    fn scored_full_grid(&mut self, ctx: &Context<'_>) -> Result<Vec<(f64, Configuration)>, OptimError> {
        let grid = self.grid.as_mut().expect("full grid mode");
        for obs in &ctx.history[grid.added..] {
            grid.posterior.add(ctx.space.ordinal(&obs.config)? as usize)?;
            grid.added += 1;
        }
        let utilities: Vec<f64> = ctx.history.iter().map(|o| o.utility).collect();
        let scaler = Standardizer::fit(&utilities);
        let z: Vec<f64> = utilities.iter().map(|&u| scaler.apply(u)).collect();
        let best = z.iter().copied().fold(f64::INFINITY, f64::min);
        let trained: HashSet<usize> = grid.posterior.training().iter().copied().collect();
        let predictions = grid.posterior.predict_all(&z);
        let mut scored: Vec<(f64, usize)> = predictions
            .iter()
            .enumerate()
            .filter(|(j, _)| !trained.contains(j))
            .map(|(j, p)| (ei(p, best), j))
            .collect();
        rank(&mut scored);
        Ok(scored.into_iter().map(|(e, j)| (e, ctx.space.at_ordinal(j as u64))).collect())
    }

    fn scored_sampled(&mut self, ctx: &Context<'_>) -> Result<Vec<(f64, Configuration)>, OptimError> {
        let space = ctx.space;
        let mut seen: HashSet<Configuration> = ctx.evaluated.clone();
        let mut candidates = Vec::new();
        for _ in 0..self.random_candidates {
            let c = random_configuration(space, &mut self.rng);
            if seen.insert(c.clone()) {
                candidates.push(c);
            }
        }
        for obs in ctx.history {
            let levels = space.level_indices(&obs.config)?;
            for (d, p) in space.parameters().iter().enumerate() {
                for step in [-1i64, 1] {
                    let l = levels[d] as i64 + step;
                    if l < 0 || l >= p.level_count() as i64 {
                        continue;
                    }
                    let mut next = levels.clone();
                    next[d] = l as usize;
                    let c = space.from_level_indices(&next);
                    if seen.insert(c.clone()) {
                        candidates.push(c);
                    }
                }
            }
        }
        let inputs: Vec<Vec<f64>> = ctx
            .history
            .iter()
            .map(|o| space.to_normalized(&o.config).map(|p| p.coords().to_vec()))
            .collect::<Result<_, _>>()?;
        let utilities: Vec<f64> = ctx.history.iter().map(|o| o.utility).collect();
        let gp = GaussianProcess::fit(&inputs, &utilities, self.params)?;
        let best = gp.standardized_targets().iter().copied().fold(f64::INFINITY, f64::min);
        let mut scored: Vec<(f64, usize)> = Vec::with_capacity(candidates.len());
        for (j, c) in candidates.iter().enumerate() {
            let x = space.to_normalized(c)?;
            scored.push((ei(&gp.predict(x.coords()), best), j));
        }
        rank(&mut scored);
        Ok(scored.into_iter().map(|(e, j)| (e, candidates[j].clone())).collect())
    }
}

fn ei(p: &Prediction, best: f64) -> f64 {
    expected_improvement(p.mean, p.stddev(), best)
}

/// Highest EI first; equal scores keep generation order.
fn rank(scored: &mut [(f64, usize)]) {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
}

impl Strategy for BayesianEi {
    fn name(&self) -> &'static str {
        "bayesian-ei"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        if ctx.history.len() < ctx.batch_size {
            return Ok(self.random_batch(ctx, count, Vec::new()));
        }
        let scored = if self.grid.is_some() { self.scored_full_grid(ctx)? } else { self.scored_sampled(ctx)? };
        let picked: Vec<Configuration> =
            scored.into_iter().map(|(_, c)| c).filter(|c| !ctx.evaluated.contains(c)).take(count).collect();
        Ok(self.random_batch(ctx, count, picked))
    }
}
