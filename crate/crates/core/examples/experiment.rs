//! One closed-loop color-matching run from an experiment file.
//!
//! `cargo run --example experiment -- path/to/experiment.yaml`; the bundled
//! portal run is used when no path is given.

use colorpicker::app::{load_experiment, run_experiment};
use colorpicker::fixtures;
use colorpicker::metrics::report_table;

fn main() {
    let cfg = match std::env::args().nth(1) {
        Some(path) => load_experiment(std::path::Path::new(&path)).unwrap_or_else(|e| panic!("{e}")),
        None => fixtures::portal_run(),
    };
    let out = run_experiment(&cfg).expect("run starts");
    println!("{}", out.termination);
    for t in &out.trace {
        println!("batch {:>3} t={:>8.1}s samples={:>4} best={:?}", t.batch, t.sim_time_s, t.samples, t.best_score);
    }
    for (wf, n) in out.workflow_counts() {
        println!("{wf}: {n}");
    }
    if let Some(m) = &out.metrics {
        println!("{}", report_table(m));
    }
}
