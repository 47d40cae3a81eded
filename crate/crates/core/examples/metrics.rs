//! Timing metrics recomputed from a published run directory.

use colorpicker::app::{run_experiment, ExperimentConfig, Paths, Termination};
use colorpicker::metrics::{compute, expected_command_count, report_table};
use colorpicker::store::load_run;

fn main() {
    let root = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        total_samples: 48,
        batch_size: 4,
        seed: 5,
        termination: Termination { epsilon: None, max_samples: None },
        paths: Paths { runs: Some(root.path().to_path_buf()), ..Default::default() },
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap();
    let dir = out.run_dir.unwrap();
    let m = compute(&dir, &load_run(&dir).unwrap()).unwrap();
    println!("{}", report_table(&m));
    println!("expected command count {}", expected_command_count(48, 4, out.refills));
}
