//! Gaussian-process Bayesian optimization with batched expected improvement.
//!
//! Scores are minimized. A batch is built with the constant-liar heuristic:
//! after each pick the point is appended to the training set with the best
//! observed score as its fake outcome, the GP is refit, and the next pick is
//! made from the same candidate pool.

use super::gp::GaussianProcess;
use super::{simplex, Evaluation, Proposal, ProposalBatch, Provenance, SolverConfig, SolverError};
use crate::color::RatioVector;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` for a minimization problem, all in
/// standardized units.
pub(crate) fn expected_improvement(mean: f64, var: f64, best: f64, xi: f64) -> f64 {
    let improvement = best - mean - xi;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return improvement.max(0.0);
    }
    let z = improvement / sd;
    improvement * normal_cdf(z) + sd * normal_pdf(z)
}

/// The surrogate fitted to `history` before any batch point is chosen.
pub fn bayes_posterior(history: &[Evaluation], config: &SolverConfig) -> Result<GaussianProcess, SolverError> {
    let xs: Vec<Vec<f64>> = history.iter().map(|e| e.ratios.as_array().to_vec()).collect();
    let ys: Vec<f64> = history.iter().map(|e| e.score).collect();
    GaussianProcess::fit(&xs, &ys, config.bayes.length_scale, config.bayes.noise)
}

pub fn bayes_next_batch(history: &[Evaluation], config: &SolverConfig) -> Result<ProposalBatch, SolverError> {
    if history.is_empty() {
        return Err(SolverError::EmptyHistory);
    }
    let params = &config.bayes;
    let mut rng = config.rng_for(history.len(), 2);
    let candidates: Vec<RatioVector> = (0..params.candidates).map(|_| simplex::sample_uniform(&mut rng)).collect();
    let mut taken = vec![false; candidates.len()];

    let mut xs: Vec<Vec<f64>> = history.iter().map(|e| e.ratios.as_array().to_vec()).collect();
    let mut ys: Vec<f64> = history.iter().map(|e| e.score).collect();
    let lie = ys.iter().copied().fold(f64::INFINITY, f64::min);

    let mut proposals = Vec::with_capacity(config.batch_size);
    let mut gp = bayes_posterior(history, config)?;
    for k in 0..config.batch_size {
        if k > 0 {
            gp = GaussianProcess::fit(&xs, &ys, params.length_scale, params.noise)?;
        }
        let best = gp.standardize(lie);
        let mut pick: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let (m, v) = gp.predict_standardized(&c.as_array());
            let ei = expected_improvement(m, v, best, params.xi);
            if pick.map_or(true, |(_, e)| ei > e) {
                pick = Some((i, ei));
            }
        }
        // the pool is exhausted only when it is smaller than the batch
        let (i, _) = pick.unwrap_or((0, 0.0));
        taken[i] = true;
        let chosen = candidates[i];
        xs.push(chosen.as_array().to_vec());
        ys.push(lie);
        proposals.push(Proposal { ratios: chosen, provenance: Provenance::Acquisition });
    }
    Ok(ProposalBatch { proposals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::ColorRgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_history(seed: u64, n: usize) -> Vec<Evaluation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| Evaluation {
                ratios: simplex::sample_uniform(&mut rng),
                measured: ColorRgb::WHITE,
                score: rng.gen_range(0.0..200.0),
                iteration: i,
            })
            .collect()
    }

    #[test]
    fn ei_vanishes_at_noise_free_training_point() {
        assert_eq!(expected_improvement(0.5, 0.0, 0.5, 0.01), 0.0);
        assert!(expected_improvement(0.5, 0.04, 0.5, 0.01) > 0.0);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn single_point_history_moves_away() {
        let h = random_history(5, 1);
        let cfg = SolverConfig {
            kind: super::super::SolverKind::Bayesian,
            batch_size: 3,
            ..Default::default()
        };
        let batch = bayes_next_batch(&h, &cfg).unwrap();
        assert_eq!(batch.len(), 3);
        for p in &batch.proposals {
            assert_ne!(p.ratios, h[0].ratios);
            assert_eq!(p.provenance, Provenance::Acquisition);
        }
    }

    #[test]
    fn deterministic_for_same_history_and_seed() {
        let h = random_history(9, 10);
        let cfg = SolverConfig { batch_size: 4, rng_seed: 77, ..Default::default() };
        let a = bayes_next_batch(&h, &cfg).unwrap();
        assert_eq!(a, bayes_next_batch(&h, &cfg).unwrap());
        let other = SolverConfig { rng_seed: 78, ..cfg };
        assert_ne!(a, bayes_next_batch(&h, &other).unwrap());
    }

    #[test]
    fn batch_points_are_distinct() {
        let h = random_history(2, 6);
        let cfg = SolverConfig { batch_size: 8, ..Default::default() };
        let batch = bayes_next_batch(&h, &cfg).unwrap();
        for (i, a) in batch.proposals.iter().enumerate() {
            for b in &batch.proposals[i + 1..] {
                assert_ne!(a.ratios, b.ratios);
            }
        }
    }
}
