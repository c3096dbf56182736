//! Model-free strategies: random, incremental random, exhaustive and the
//! Morris trajectory design.

use std::collections::{HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{random_unevaluated, Context, OptimError, Strategy, StrategyOptions};
use crate::screening::generate_trajectories;
use crate::space::{Configuration, OdometerCursor, SearchSpace};

pub struct RandomSearch {
    rng: ChaCha8Rng,
}

impl RandomSearch {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Strategy for RandomSearch {
    fn name(&self) -> &'static str {
        "random"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        let mut taken = ctx.evaluated.clone();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let Some(c) = random_unevaluated(ctx.space, &taken, &mut self.rng) else { break };
            taken.insert(c.clone());
            out.push(c);
        }
        Ok(out)
    }
}

/// Odometer over a seeded permutation of the dimensions, starting at the
/// all-minimum configuration. The first parameter of the permutation
/// varies fastest.
pub struct RandomInc {
    cursor: OdometerCursor,
}

impl RandomInc {
    pub fn new(space: &SearchSpace, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..space.dims()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self::with_order(order)
    }

    pub fn with_order(order: Vec<usize>) -> Self {
        Self { cursor: OdometerCursor::new(order) }
    }

    pub fn order(&self) -> &[usize] {
        self.cursor.order()
    }
}

impl Strategy for RandomInc {
    fn name(&self) -> &'static str {
        "randominc"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        Ok(take_unseen(&mut self.cursor, ctx, count))
    }
}

/// Plain odometer order, last parameter fastest.
pub struct Exhaustive {
    cursor: OdometerCursor,
}

impl Exhaustive {
    pub fn new(space: &SearchSpace) -> Self {
        Self { cursor: OdometerCursor::new((0..space.dims()).rev().collect()) }
    }
}

impl Strategy for Exhaustive {
    fn name(&self) -> &'static str {
        "exhaustive"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        Ok(take_unseen(&mut self.cursor, ctx, count))
    }
}

fn take_unseen(cursor: &mut OdometerCursor, ctx: &Context<'_>, count: usize) -> Vec<Configuration> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        match cursor.next_in(ctx.space) {
            Some(c) if !ctx.evaluated.contains(&c) => out.push(c),
            Some(_) => {}
            None => break,
        }
    }
    out
}

/// Visits the points of Morris trajectories in plan order, skipping
/// configurations already evaluated. A fresh set of `r` trajectories is
/// planned whenever the current one runs out.
pub struct Moat {
    seed: u64,
    round: u64,
    r: usize,
    p: usize,
    queue: VecDeque<Configuration>,
}

/// Consecutive trajectory rounds without a new configuration before the
/// strategy gives up.
const IDLE_ROUNDS: usize = 16;

impl Moat {
    pub fn new(space: &SearchSpace, seed: u64, options: &StrategyOptions) -> Result<Self, OptimError> {
        let p = match options.moat_p {
            Some(p) => p,
            None => {
                let most = space.parameters().iter().map(|p| p.level_count()).max().unwrap_or(2);
                (most + most % 2).max(2)
            }
        };
        if options.moat_r == 0 || p < 2 || !p.is_multiple_of(2) {
            return Err(OptimError::InvalidSettings(format!(
                "moat needs r >= 1 and an even p >= 2 (got r={}, p={p})",
                options.moat_r
            )));
        }
        Ok(Self { seed, round: 0, r: options.moat_r, p, queue: VecDeque::new() })
    }

    fn refill(&mut self, space: &SearchSpace) -> Result<(), OptimError> {
        let plans = generate_trajectories(space, self.r, self.p, self.seed.wrapping_add(self.round))?;
        self.round += 1;
        for plan in plans {
            for point in &plan.points {
                self.queue.push_back(space.from_normalized(point)?);
            }
        }
        Ok(())
    }
}

impl Strategy for Moat {
    fn name(&self) -> &'static str {
        "moat"
    }

    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError> {
        let mut out = Vec::with_capacity(count);
        let mut batch = HashSet::new();
        let mut idle = 0;
        while out.len() < count && idle < IDLE_ROUNDS {
            let Some(c) = self.queue.pop_front() else {
                self.refill(ctx.space)?;
                idle += 1;
                continue;
            };
            if !ctx.evaluated.contains(&c) && batch.insert(c.clone()) {
                out.push(c);
                idle = 0;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashSet};

    use super::super::tests::grid;
    use super::super::{Observation, OptimizerKind, OptimizerSession};
    use super::*;

    fn drain(mut s: OptimizerSession) -> Vec<Configuration> {
        while let Ok(batch) = s.ask() {
            s.tell(batch.into_iter().map(|c| Observation::new(c, BTreeMap::new(), 0.5, true, false)).collect())
                .unwrap();
        }
        s.history().iter().map(|o| o.config.clone()).collect()
    }

    fn session(space: SearchSpace, kind: OptimizerKind, budget: usize, batch: usize, seed: u64) -> OptimizerSession {
        OptimizerSession::new(space, kind, budget, batch, seed, &StrategyOptions::default()).unwrap()
    }

    #[test]
    fn exhaustive_small_space_in_odometer_order() {
        let seen = drain(session(grid(&[2, 2]), OptimizerKind::Exhaustive, 100, 6, 0));
        let expect: Vec<Configuration> =
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]].into_iter().map(Configuration::new).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn randominc_identity_order_moves_first_dimension_fastest() {
        let space = grid(&[2, 2]);
        let s = OptimizerSession::with_strategy(space, Box::new(RandomInc::with_order(vec![0, 1])), 4, 6, 0).unwrap();
        let seen = drain(s);
        let expect: Vec<Configuration> =
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]].into_iter().map(Configuration::new).collect();
        assert_eq!(seen, expect);
    }

    #[test]
    fn randominc_budget_takes_stream_prefix() {
        let space = grid(&[8, 16, 16]);
        let stream = drain(session(space.clone(), OptimizerKind::RandomInc, 2048, 6, 11));
        let prefix = drain(session(space, OptimizerKind::RandomInc, 100, 6, 11));
        assert_eq!(prefix.len(), 100);
        assert_eq!(&stream[..100], &prefix[..]);
        assert_eq!(stream[0], Configuration::new(vec![0, 0, 0]));
    }

    #[test]
    fn randominc_completes_the_space() {
        let space = grid(&[3, 4, 5]);
        let seen = drain(session(space, OptimizerKind::RandomInc, 60, 7, 5));
        assert_eq!(seen.len(), 60);
        assert_eq!(seen.iter().collect::<HashSet<_>>().len(), 60);
    }

    #[test]
    fn random_is_reproducible_per_seed() {
        let a = drain(session(grid(&[6, 6, 6, 6]), OptimizerKind::Random, 50, 6, 42));
        let b = drain(session(grid(&[6, 6, 6, 6]), OptimizerKind::Random, 50, 6, 42));
        let c = drain(session(grid(&[6, 6, 6, 6]), OptimizerKind::Random, 50, 6, 43));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn moat_follows_trajectories_without_repeats() {
        let space = grid(&[6, 6, 6]);
        let seen = drain(session(space.clone(), OptimizerKind::Moat, 40, 4, 1));
        assert_eq!(seen.len(), 40);
        assert_eq!(seen.iter().collect::<HashSet<_>>().len(), 40);
        let plans = generate_trajectories(&space, 10, 6, 1).unwrap();
        assert_eq!(seen[0], space.from_normalized(&plans[0].points[0]).unwrap());
    }

    #[test]
    fn moat_stops_when_space_is_used_up() {
        let seen = drain(session(grid(&[2, 2]), OptimizerKind::Moat, 100, 3, 0));
        assert_eq!(seen.len(), 4);
    }
}
