//! Elitist genetic algorithm.
//!
//! A generation of `B` proposals holds the elite (best evaluation so far),
//! then splits the remaining `m` slots into crossover `ceil(m/3)`, mutation
//! `ceil((m - crossover)/2)` and fresh random samples. Parents are drawn from
//! the parent pool: the `B` best distinct mixes evaluated so far.
//!
//! With `B = 1` there is no room for offspring next to the elite, so the
//! single slot is a mutation of the elite; the elite itself is carried by the
//! history.

use super::{simplex, top_distinct, Evaluation, Proposal, ProposalBatch, Provenance, SolverConfig, SolverError};
use crate::color::{RatioVector, DYE_COUNT};
use rand::Rng;

/// Slot counts of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Composition {
    pub elite: usize,
    pub crossover: usize,
    pub mutation: usize,
    pub random: usize,
}

impl Composition {
    pub fn total(&self) -> usize {
        self.elite + self.crossover + self.mutation + self.random
    }
}

pub fn composition(batch_size: usize, elite_count: usize) -> Composition {
    if batch_size <= 1 {
        return Composition { elite: 0, crossover: 0, mutation: batch_size, random: 0 };
    }
    let elite = elite_count.clamp(1, batch_size);
    let m = batch_size - elite;
    let crossover = m.div_ceil(3);
    let mutation = (m - crossover).div_ceil(2);
    Composition { elite, crossover, mutation, random: m - crossover - mutation }
}

fn mutate<R: Rng>(parent: &RatioVector, width: f64, rng: &mut R) -> RatioVector {
    let base = parent.as_array();
    let shifted: [f64; DYE_COUNT] = std::array::from_fn(|i| base[i] + rng.gen_range(-width..=width));
    RatioVector::clamped(shifted)
}

pub fn ga_next_generation(history: &[Evaluation], config: &SolverConfig) -> Result<ProposalBatch, SolverError> {
    if history.is_empty() {
        return Err(SolverError::EmptyHistory);
    }
    let b = config.batch_size;
    let plan = composition(b, config.elite_count);
    let pool = top_distinct(history, b.max(plan.elite));
    let mut rng = config.rng_for(history.len(), 1);
    let mut proposals = Vec::with_capacity(b);
    let mut push = |ratios, provenance| proposals.push(Proposal { ratios, provenance });

    for elite in pool.iter().take(plan.elite) {
        push(elite.ratios, Provenance::Elite);
    }
    for _ in 0..plan.crossover {
        let (i, j) = if pool.len() >= 2 {
            let i = rng.gen_range(0..pool.len());
            let mut j = rng.gen_range(0..pool.len() - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        } else {
            (0, 0)
        };
        push(pool[i].ratios.midpoint(&pool[j].ratios), Provenance::Crossover);
    }
    for _ in 0..plan.mutation {
        // a lone slot always refines the elite
        let parent = if b == 1 { pool[0] } else { pool[rng.gen_range(0..pool.len())] };
        push(mutate(&parent.ratios, config.mutation_width, &mut rng), Provenance::Mutation);
    }
    for _ in 0..plan.random {
        push(simplex::sample_uniform(&mut rng), Provenance::Random);
    }
    Ok(ProposalBatch { proposals })
}
