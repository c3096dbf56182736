//! Divide-and-diverge sampling with recursive bound-and-search.
//!
//! Every batch is a Latin-hypercube style sample of the current bounds:
//! each dimension's range is cut into `n` equal intervals and every sample
//! gets a distinct interval per dimension. After an improving batch the
//! bounds shrink to the best sample's interval plus one neighbour on each
//! side; otherwise they reset to the whole space.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_unevaluated, Context, Observation, OptimError, Strategy};
use crate::space::{Configuration, SearchSpace};

/// Inclusive range of level indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelRange {
    pub lo: usize,
    pub hi: usize,
}

impl LevelRange {
    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    /// Interval (out of `n`) that contains the start of `level`.
    pub fn interval_of(&self, level: usize, n: usize) -> usize {
        let level = level.clamp(self.lo, self.hi);
        ((level - self.lo) * n / self.width()).min(n - 1)
    }

    fn draw(&self, interval: usize, n: usize, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let x = (interval as f64 + u) * self.width() as f64 / n as f64;
        (self.lo + x.floor() as usize).min(self.hi)
    }
}

/// One DDS sample: level index and assigned interval per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdsSample {
    pub levels: Vec<usize>,
    pub intervals: Vec<usize>,
}

/// Draws `n` stratified samples inside `bounds`.
pub fn dds_levels(bounds: &[LevelRange], n: usize, rng: &mut ChaCha8Rng) -> Vec<DdsSample> {
    assert!(n >= 2, "divide-and-diverge needs n >= 2");
    let mut samples = vec![DdsSample { levels: Vec::new(), intervals: Vec::new() }; n];
    for range in bounds {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        for (sample, &interval) in samples.iter_mut().zip(&perm) {
            sample.levels.push(range.draw(interval, n, rng));
            sample.intervals.push(interval);
        }
    }
    samples
}

/// Bounds for the next batch. `best_intervals` are the DDS intervals of the
/// best sample of the batch just evaluated.
pub fn rbs_bounds(
    current: &[LevelRange],
    full: &[LevelRange],
    best_intervals: &[usize],
    n: usize,
    improved: bool,
) -> Vec<LevelRange> {
    if !improved {
        return full.to_vec();
    }
    current
        .iter()
        .zip(best_intervals)
        .map(|(r, &j)| {
            let m = r.width();
            let lo = r.lo + j.saturating_sub(1) * m / n;
            let hi = r.lo + ((j + 2) * m).div_ceil(n) - 1;
            LevelRange { lo: lo.max(r.lo), hi: hi.min(r.hi) }
        })
        .collect()
}

pub struct BestConfig {
    rng: ChaCha8Rng,
    full: Vec<LevelRange>,
    bounds: Vec<LevelRange>,
    n: usize,
    batch: Vec<(Configuration, Vec<usize>)>,
    unobserved: usize,
    best_before: f64,
    batch_best: Option<(f64, usize)>,
}

/// Redraws inside the assigned intervals before widening the search.
const INTERVAL_REDRAWS: usize = 8;
const BOUNDED_REDRAWS: usize = 32;

impl BestConfig {
    pub fn new(space: &SearchSpace, seed: u64) -> Self {
        let full: Vec<LevelRange> =
            space.parameters().iter().map(|p| LevelRange { lo: 0, hi: p.level_count() - 1 }).collect();
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            bounds: full.clone(),
            full,
            n: 2,
            batch: Vec::new(),
            unobserved: 0,
            best_before: f64::INFINITY,
            batch_best: None,
        }
    }

    pub fn bounds(&self) -> &[LevelRange] {
        &self.bounds
    }

    fn place(
        &mut self,
        space: &SearchSpace,
        sample: DdsSample,
        taken: &HashSet<Configuration>,
    ) -> Option<(Configuration, Vec<usize>)> {
        let config = space.from_level_indices(&sample.levels);
        if !taken.contains(&config) {
            return Some((config, sample.intervals));
        }
        for _ in 0..INTERVAL_REDRAWS {
            let levels: Vec<usize> =
                self.bounds.iter().zip(&sample.intervals).map(|(r, &i)| r.draw(i, self.n, &mut self.rng)).collect();
            let config = space.from_level_indices(&levels);
            if !taken.contains(&config) {
                return Some((config, sample.intervals));
            }
        }
        for _ in 0..BOUNDED_REDRAWS {
            let levels: Vec<usize> = self.bounds.iter().map(|r| self.rng.random_range(r.lo..=r.hi)).collect();
            let config = space.from_level_indices(&levels);
            if !taken.contains(&config) {
                let intervals = self.intervals_of(&levels);
                return Some((config, intervals));
            }
        }
        let config = random_unevaluated(space, taken, &mut self.rng)?;
        let levels = space.level_indices(&config).expect("drawn from the space");
        let intervals = self.intervals_of(&levels);
        Some((config, intervals))
    }

    fn intervals_of(&self, levels: &[usize]) -> Vec<usize> {
        self.bounds.iter().zip(levels).map(|(r, &l)| r.interval_of(l, self.n)).collect()
    }
}

impl Strategy for BestConfig {
    fn name(&self) -> &'static str {
        "bestconfig"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        self.n = count.max(2);
        self.best_before = ctx.best.map_or(f64::INFINITY, |b| b.utility);
        let samples = dds_levels(&self.bounds, self.n, &mut self.rng);
        let mut taken = ctx.evaluated.clone();
        self.batch.clear();
        for sample in samples.into_iter().take(count) {
            let Some((config, intervals)) = self.place(ctx.space, sample, &taken) else { break };
            taken.insert(config.clone());
            self.batch.push((config, intervals));
        }
        self.unobserved = self.batch.len();
        self.batch_best = None;
        Ok(self.batch.iter().map(|(c, _)| c.clone()).collect())
    }

    fn observe(&mut self, _space: &SearchSpace, observations: &[Observation]) {
        for obs in observations {
            let Some(i) = self.batch.iter().position(|(c, _)| *c == obs.config) else { continue };
            self.unobserved -= 1;
            if self.batch_best.is_none_or(|(u, _)| obs.utility < u) {
                self.batch_best = Some((obs.utility, i));
            }
        }
        if self.unobserved == 0 {
            if let Some((utility, i)) = self.batch_best.take() {
                let improved = utility < self.best_before;
                self.bounds = rbs_bounds(&self.bounds, &self.full, &self.batch[i].1, self.n, improved);
            }
        }
    }
}
