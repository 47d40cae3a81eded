//! Batch black-box solvers proposing dye ratios from evaluation history.
//!
//! Both solvers are pure functions of `(history, config)`: the random stream
//! for a call is derived from the configured seed and the history length, so
//! replaying a run reproduces every batch bit for bit.

mod bayes;
mod ga;
pub mod gp;
pub mod simplex;

pub use bayes::{bayes_next_batch, bayes_posterior};
pub use ga::{composition, ga_next_generation, Composition};

use crate::color::{ColorRgb, RatioVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("history is empty")]
    EmptyHistory,
    #[error(
        "simplex grid at resolution {resolution} has {available} points but the batch needs {needed}; \
         increase grid_resolution"
    )]
    GridTooSmall {
        resolution: u32,
        available: usize,
        needed: usize,
    },
    #[error("kernel matrix is singular even with jitter {jitter:e}")]
    SingularKernel { jitter: f64 },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
}

/// One scored well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ratios: RatioVector,
    pub measured: ColorRgb,
    pub score: f64,
    /// Generation (solver call) that produced the proposal.
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Genetic,
    Bayesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BayesConfig {
    /// Squared-exponential length scale in ratio units.
    pub length_scale: f64,
    /// Observation noise variance on standardized scores.
    pub noise: f64,
    /// Size of the random simplex sample scored by expected improvement.
    pub candidates: usize,
    /// Exploration margin in standardized score units.
    pub xi: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            length_scale: 0.2,
            noise: 1e-6,
            candidates: 2048,
            xi: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub mutation_width: f64,
    pub grid_resolution: u32,
    pub elite_count: usize,
    pub bayes: BayesConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverKind::Genetic,
            batch_size: 1,
            rng_seed: 0,
            mutation_width: 0.06,
            grid_resolution: 4,
            elite_count: 1,
            bayes: BayesConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.mutation_width > 0.0) {
            return bad("mutation_width must be positive");
        }
        if self.grid_resolution == 0 {
            return bad("grid_resolution must be at least 1");
        }
        if self.bayes.length_scale <= 0.0 || self.bayes.noise < 0.0 || self.bayes.candidates == 0 {
            return bad("bayes: length_scale > 0, noise >= 0 and candidates >= 1 required");
        }
        Ok(())
    }

    /// Seeds the random stream for a solver call made after `history_len`
    /// evaluations.
    pub(crate) fn rng_for(&self, history_len: usize, salt: u64) -> ChaCha8Rng {
        let mix = (history_len as u64)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        ChaCha8Rng::seed_from_u64(self.rng_seed ^ mix)
    }
}

/// Why a proposal is in its batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Initial,
    Elite,
    Crossover,
    Mutation,
    Random,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub ratios: RatioVector,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProposalBatch {
    pub proposals: Vec<Proposal>,
}

impl ProposalBatch {
    pub fn len(&self) -> usize {
        self.proposals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proposals.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.proposals.iter().filter(|p| p.provenance == provenance).count()
    }

    pub fn truncate(&mut self, n: usize) {
        self.proposals.truncate(n);
    }
}

/// First `batch_size` points of a seeded shuffle of the simplex lattice.
pub fn initial_population(config: &SolverConfig) -> Result<ProposalBatch, SolverError> {
    let mut grid = simplex::lattice(config.grid_resolution);
    if grid.len() < config.batch_size {
        return Err(SolverError::GridTooSmall {
            resolution: config.grid_resolution,
            available: grid.len(),
            needed: config.batch_size,
        });
    }
    let mut rng = config.rng_for(0, 0);
    grid.shuffle(&mut rng);
    let proposals = grid
        .into_iter()
        .take(config.batch_size)
        .map(|ratios| Proposal { ratios, provenance: Provenance::Initial })
        .collect();
    Ok(ProposalBatch { proposals })
}

/// Dispatches to the configured solver; an empty history yields the initial
/// population.
pub fn propose(history: &[Evaluation], config: &SolverConfig) -> Result<ProposalBatch, SolverError> {
    config.validate()?;
    if history.is_empty() {
        return initial_population(config);
    }
    match config.kind {
        SolverKind::Genetic => ga_next_generation(history, config),
        SolverKind::Bayesian => bayes_next_batch(history, config),
    }
}

/// Total order used for ranking: score, then iteration, then position.
fn rank(a: (usize, &Evaluation), b: (usize, &Evaluation)) -> Ordering {
    a.1.score
        .total_cmp(&b.1.score)
        .then(a.1.iteration.cmp(&b.1.iteration))
        .then(a.0.cmp(&b.0))
}

/// The lowest-scoring evaluation; ties go to the earliest iteration, then
/// the lowest index.
pub fn best_so_far(history: &[Evaluation]) -> Result<&Evaluation, SolverError> {
    history
        .iter()
        .enumerate()
        .min_by(|a, b| rank(*a, *b))
        .map(|(_, e)| e)
        .ok_or(SolverError::EmptyHistory)
}

/// The `n` best evaluations with pairwise distinct ratios, best first.
pub(crate) fn top_distinct(history: &[Evaluation], n: usize) -> Vec<&Evaluation> {
    let mut ranked: Vec<(usize, &Evaluation)> = history.iter().enumerate().collect();
    ranked.sort_by(|a, b| rank(*a, *b));
    let mut out: Vec<&Evaluation> = Vec::with_capacity(n);
    for (_, e) in ranked {
        if out.len() == n {
            break;
        }
        let key = e.ratios.as_array().map(f64::to_bits);
        if out.iter().any(|o| o.ratios.as_array().map(f64::to_bits) == key) {
            continue;
        }
        out.push(e);
    }
    out
}
