//! The genetic and Bayesian solvers closing the loop against the exact mixing
//! model instead of the simulated lab.

use colorpicker::color::{dist_euclidean, mix, ColorRgb, DyeSet};
use colorpicker::optimizer::{best_so_far, propose, Evaluation, SolverConfig, SolverKind};

fn optimize(kind: SolverKind, batch_size: usize, budget: usize) -> f64 {
    let dyes = DyeSet::default();
    let target = ColorRgb { r: 120, g: 120, b: 120 };
    let config = SolverConfig { kind, batch_size, rng_seed: 7, ..Default::default() };
    let mut history: Vec<Evaluation> = Vec::new();
    while history.len() < budget {
        let batch = propose(&history, &config).expect("proposal");
        let iteration = history.len() / batch_size;
        for p in batch.proposals.into_iter().take(budget - history.len()) {
            let measured = mix(&p.ratios, &dyes);
            history.push(Evaluation { ratios: p.ratios, measured, score: dist_euclidean(&measured, &target), iteration });
        }
    }
    let best = best_so_far(&history).unwrap();
    println!("{kind:?} B={batch_size:<2} best {:.2} at {:?} -> {:?}", best.score, best.ratios.as_array(), best.measured);
    best.score
}

fn main() {
    for b in [1, 8, 32] {
        optimize(SolverKind::Genetic, b, 128);
    }
    optimize(SolverKind::Bayesian, 4, 48);
}
