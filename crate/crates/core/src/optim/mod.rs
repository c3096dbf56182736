//! Ask/tell optimization over a discrete search space.
//!
//! An [`OptimizerSession`] owns the history and budget and delegates the
//! choice of the next batch to a [`Strategy`]. All strategies minimize the
//! utility and are deterministic given the seed and the observed responses.

mod bayes;
mod bestconfig;
pub mod gp;
mod search;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::screening::ScreeningError;
use crate::space::{Configuration, SearchSpace, SpaceError};

pub use bayes::BayesianEi;
pub use bestconfig::{dds_levels, rbs_bounds, BestConfig, LevelRange};
pub use gp::{expected_improvement, GaussianProcess, GpError, GpParams, GridPosterior, Prediction, Standardizer};
pub use search::{Exhaustive, Moat, RandomInc, RandomSearch};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("sample budget exhausted")]
    BudgetExhausted,
    #[error("no unevaluated configurations left: {0}")]
    Exhausted(String),
    #[error("configuration {0} was not asked for")]
    UnknownConfiguration(String),
    #[error("{0} asked configurations have not been told yet")]
    Pending(usize),
    #[error("unknown optimizer `{name}`; valid names: {known}")]
    UnknownOptimizer { name: String, known: String },
    #[error("invalid optimizer settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Screening(#[from] ScreeningError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// One evaluated configuration as recorded by a session.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub config: Configuration,
    pub slis: BTreeMap<String, f64>,
    pub utility: f64,
    pub feasible: bool,
    pub failed: bool,
    /// Position in the session history; assigned by [`OptimizerSession::tell`].
    pub eval_index: usize,
}

impl Observation {
    pub fn new(config: Configuration, slis: BTreeMap<String, f64>, utility: f64, feasible: bool, failed: bool) -> Self {
        Self { config, slis, utility, feasible, failed, eval_index: 0 }
    }
}

/// Read-only view handed to a strategy when it proposes.
pub struct Context<'a> {
    pub space: &'a SearchSpace,
    pub history: &'a [Observation],
    /// Told and pending configurations.
    pub evaluated: &'a HashSet<Configuration>,
    pub batch_size: usize,
    pub best: Option<&'a Observation>,
}

pub trait Strategy: Send {
    fn name(&self) -> &'static str;

    /// Up to `count` configurations not in `ctx.evaluated`, without
    /// repeats. An empty result means the strategy has nothing left.
    fn propose(&mut self, ctx: &Context<'_>, count: usize) -> Result<Vec<Configuration>, OptimError>;

    /// Called with each newly told slice of the history.
    fn observe(&mut self, _space: &SearchSpace, _observations: &[Observation]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizerKind {
    Random,
    RandomInc,
    Exhaustive,
    BestConfig,
    BayesianEi,
    Moat,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 6] = [
        OptimizerKind::Random,
        OptimizerKind::RandomInc,
        OptimizerKind::Exhaustive,
        OptimizerKind::BestConfig,
        OptimizerKind::BayesianEi,
        OptimizerKind::Moat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Random => "random",
            OptimizerKind::RandomInc => "randominc",
            OptimizerKind::Exhaustive => "exhaustive",
            OptimizerKind::BestConfig => "bestconfig",
            OptimizerKind::BayesianEi => "bayesian-ei",
            OptimizerKind::Moat => "moat",
        }
    }

    pub fn known_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }

    pub fn build(
        self,
        space: &SearchSpace,
        seed: u64,
        options: &StrategyOptions,
    ) -> Result<Box<dyn Strategy>, OptimError> {
        Ok(match self {
            OptimizerKind::Random => Box::new(RandomSearch::new(seed)),
            OptimizerKind::RandomInc => Box::new(RandomInc::new(space, seed)),
            OptimizerKind::Exhaustive => Box::new(Exhaustive::new(space)),
            OptimizerKind::BestConfig => Box::new(BestConfig::new(space, seed)),
            OptimizerKind::BayesianEi => Box::new(BayesianEi::new(space, seed, options)?),
            OptimizerKind::Moat => Box::new(Moat::new(space, seed, options)?),
        })
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self, OptimError> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| OptimError::UnknownOptimizer { name: s.to_string(), known: Self::known_names() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOptions {
    pub gp: GpParams,
    /// Spaces up to this size are scored exhaustively by the acquisition.
    pub full_grid_cap: u64,
    /// Random candidates drawn per acquisition on larger spaces.
    pub random_candidates: usize,
    pub moat_r: usize,
    pub moat_p: Option<usize>,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        Self { gp: GpParams::default(), full_grid_cap: 100_000, random_candidates: 4096, moat_r: 10, moat_p: None }
    }
}

pub struct OptimizerSession {
    space: SearchSpace,
    budget: usize,
    batch_size: usize,
    seed: u64,
    strategy: Box<dyn Strategy>,
    history: Vec<Observation>,
    evaluated: HashSet<Configuration>,
    pending: Vec<Configuration>,
    best: Option<usize>,
}

impl fmt::Debug for OptimizerSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OptimizerSession")
            .field("strategy", &self.strategy.name())
            .field("budget", &self.budget)
            .field("batch_size", &self.batch_size)
            .field("seed", &self.seed)
            .field("history", &self.history.len())
            .field("pending", &self.pending.len())
            .finish()
    }
}

impl OptimizerSession {
    pub fn new(
        space: SearchSpace,
        kind: OptimizerKind,
        budget: usize,
        batch_size: usize,
        seed: u64,
        options: &StrategyOptions,
    ) -> Result<Self, OptimError> {
        let strategy = kind.build(&space, seed, options)?;
        Self::with_strategy(space, strategy, budget, batch_size, seed)
    }

    pub fn with_strategy(
        space: SearchSpace,
        strategy: Box<dyn Strategy>,
        budget: usize,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self, OptimError> {
        if batch_size == 0 {
            return Err(OptimError::InvalidSettings("batch size must be at least 1".into()));
        }
        Ok(Self {
            space,
            budget,
            batch_size,
            seed,
            strategy,
            history: Vec::new(),
            evaluated: HashSet::new(),
            pending: Vec::new(),
            best: None,
        })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn name(&self) -> &'static str {
        self.strategy.name()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn history(&self) -> &[Observation] {
        &self.history
    }

    pub fn best(&self) -> Option<&Observation> {
        self.best.map(|i| &self.history[i])
    }

    pub fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.history.len() + self.pending.len())
    }

    /// Next batch of at most `batch_size` configurations.
    pub fn ask(&mut self) -> Result<Vec<Configuration>, OptimError> {
        if !self.pending.is_empty() {
            return Err(OptimError::Pending(self.pending.len()));
        }
        let count = self.batch_size.min(self.remaining());
        if count == 0 {
            return Err(OptimError::BudgetExhausted);
        }
        let ctx = Context {
            space: &self.space,
            history: &self.history,
            evaluated: &self.evaluated,
            batch_size: self.batch_size,
            best: self.best.map(|i| &self.history[i]),
        };
        let proposals = self.strategy.propose(&ctx, count)?;
        if proposals.is_empty() {
            return Err(OptimError::Exhausted(format!("{} has no configurations left", self.strategy.name())));
        }
        for config in &proposals {
            self.space.check(config)?;
            assert!(
                self.evaluated.insert(config.clone()),
                "{} proposed {} twice",
                self.strategy.name(),
                self.space.config_key(config)
            );
        }
        assert!(proposals.len() <= count);
        self.pending = proposals.clone();
        Ok(proposals)
    }

    /// Records results for previously asked configurations, in order.
    pub fn tell(&mut self, observations: Vec<Observation>) -> Result<(), OptimError> {
        for obs in &observations {
            if !self.pending.contains(&obs.config) {
                return Err(OptimError::UnknownConfiguration(self.space.config_key(&obs.config)));
            }
        }
        let start = self.history.len();
        for mut obs in observations {
            let at = self.pending.iter().position(|c| *c == obs.config).expect("checked above");
            self.pending.remove(at);
            obs.eval_index = self.history.len();
            if self.best().is_none_or(|b| obs.utility < b.utility) {
                self.best = Some(self.history.len());
            }
            self.history.push(obs);
        }
        self.strategy.observe(&self.space, &self.history[start..]);
        Ok(())
    }
}

/// A uniformly random configuration not in `taken`. Falls back to
/// enumerating the remainder when rejection sampling keeps hitting taken
/// points.
pub(crate) fn random_unevaluated(
    space: &SearchSpace,
    taken: &HashSet<Configuration>,
    rng: &mut ChaCha8Rng,
) -> Option<Configuration> {
    const TRIES: usize = 64;
    const ENUMERATION_CAP: u64 = 1_000_000;
    for _ in 0..TRIES {
        let c = random_configuration(space, rng);
        if !taken.contains(&c) {
            return Some(c);
        }
    }
    let size = space.size_u64().filter(|&s| s <= ENUMERATION_CAP)?;
    let free = size as usize - taken.len().min(size as usize);
    if free == 0 {
        return None;
    }
    let pick = rng.random_range(0..free);
    space.enumerate().filter(|c| !taken.contains(c)).nth(pick)
}

pub(crate) fn random_configuration(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Configuration {
    let indices: Vec<usize> = space.parameters().iter().map(|p| rng.random_range(0..p.level_count())).collect();
    space.from_level_indices(&indices)
}
