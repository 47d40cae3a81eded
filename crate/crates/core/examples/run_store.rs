//! Publishing runs into a store and querying them back.

use colorpicker::app::{run_experiment, Paths};
use colorpicker::fixtures;
use colorpicker::store::RunStore;

fn main() {
    let root = tempfile::tempdir().unwrap();
    for seed in 1..=3 {
        let mut cfg = fixtures::portal_run();
        cfg.seed = seed;
        cfg.paths = Paths { runs: Some(root.path().to_path_buf()), ..cfg.paths };
        run_experiment(&cfg).unwrap();
    }
    let store = RunStore::open(root.path()).unwrap();
    let entries = store.list().unwrap();
    for e in &entries {
        println!("{}", serde_json::to_string(e).unwrap());
    }
    let experiment = fixtures::portal_run().experiment_id;
    let summary = store.query_summary(&experiment).unwrap();
    println!("{}: {} runs, {} samples", summary.experiment_id, summary.runs.len(), summary.total_samples);

    let record = store.query_run("run-0002").unwrap();
    let best = record.samples.iter().filter_map(|s| s.score).fold(f64::INFINITY, f64::min);
    println!("run-0002 has {} samples, best {best:.2}", record.samples.len());

    // the index is derived data; rebuilding it from the run directories agrees
    assert_eq!(store.rebuild_index().unwrap(), entries);
}
