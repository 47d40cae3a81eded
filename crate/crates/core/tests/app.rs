use colorpicker::app::{run_experiment, sweep, ExperimentConfig, RunOutcome, SweepConfig, TerminationReason, Termination};
use colorpicker::color::mix;
use colorpicker::fixtures;
use colorpicker::metrics::expected_command_count;
use colorpicker::store::{read_samples, RunStore, LEDGER_FILE, METRICS_FILE, SAMPLES_FILE, STEPS_DIR};
use std::collections::BTreeSet;
use std::path::Path;

fn config(n: usize, b: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        total_samples: n,
        batch_size: b,
        seed,
        termination: Termination { epsilon: None, max_samples: None },
        ..Default::default()
    }
}

fn run(cfg: &ExperimentConfig) -> RunOutcome {
    let out = run_experiment(cfg).expect("run starts");
    assert!(out.termination.by_criteria(), "run aborted: {}", out.termination);
    out
}

fn counts(out: &RunOutcome) -> (usize, usize, usize) {
    let c = out.workflow_counts();
    let get = |k: &str| c.get(k).copied().unwrap_or(0);
    (get("cp_wf_newplate"), get("cp_wf_mix_colors"), get("cp_wf_trashplate"))
}

#[test]
fn fifteen_sample_portal_run() {
    let out = run(&fixtures::portal_run());
    assert_eq!(counts(&out), (1, 1, 1));
    assert_eq!(out.samples.len(), 15);
    assert_eq!(out.publish_events, 1);
    let m = out.metrics.unwrap();
    assert_eq!(m.ccwh, 9);
    assert_eq!(m.ccwh, expected_command_count(15, 15, 0));
}

#[test]
fn closed_loop_consistency_without_camera_noise() {
    let cfg = ExperimentConfig { camera_noise_sigma: Some(0.0), ..config(40, 8, 11) };
    let out = run(&cfg);
    let dyes = fixtures::workcell().dyes;
    assert_eq!(out.history.len(), 40);
    for s in &out.samples {
        assert!(s.valid, "sample {} invalid: {:?}", s.sample, s.error);
        assert_eq!(s.measured, Some(mix(&s.ratios, &dyes)), "sample {}", s.sample);
    }
}

#[test]
fn samples_are_conserved_and_wells_never_reused() {
    for (n, b) in [(30, 7), (100, 32), (128, 1)] {
        let out = run(&config(n, b, 5));
        let wells: BTreeSet<(String, String)> = out.samples.iter().map(|s| (s.plate_id.clone(), s.well.clone())).collect();
        assert_eq!(wells.len(), out.samples.len(), "a well was used twice");
        let valid = out.samples.iter().filter(|s| s.valid).count();
        assert_eq!(valid, n);
        assert_eq!(out.history.len(), n);
        let plates: BTreeSet<&str> = out.samples.iter().map(|s| s.plate_id.as_str()).collect();
        assert_eq!(plates.len(), out.samples.len().div_ceil(96));
    }
}

#[test]
fn default_runs_never_hit_an_empty_reservoir() {
    for seed in 1..=6 {
        for b in [4, 16, 64] {
            let out = run(&config(128, b, seed));
            assert_eq!(out.ledger.iter().filter(|e| !e.succeeded()).count(), 0, "B={b} seed={seed}");
            assert!(out.samples.iter().all(|s| s.error.is_none()));
            assert_eq!(out.metrics.unwrap().ccwh, expected_command_count(128, b, out.refills));
        }
    }
}

#[test]
fn small_reservoirs_trigger_replenish_before_they_run_dry() {
    let dir = tempfile::tempdir().unwrap();
    let cell = dir.path().join("workcell.yaml");
    std::fs::write(&cell, fixtures::WORKCELL.replace("25000.0", "1500.0")).unwrap();
    let mut cfg = config(96, 8, 2);
    cfg.paths.workcell = Some(cell);
    let out = run(&cfg);
    assert!(out.refills > 0);
    assert_eq!(out.workflow_counts()["cp_wf_replenish"], out.refills);
    assert!(out.ledger.iter().all(|e| e.succeeded()));
    assert_eq!(out.metrics.unwrap().ccwh, expected_command_count(96, 8, out.refills));
}

#[test]
fn any_color_within_epsilon_stops_after_the_first_batch() {
    let cfg = ExperimentConfig { termination: Termination { epsilon: Some(500.0), max_samples: None }, ..config(128, 4, 1) };
    let out = run(&cfg);
    assert!(matches!(out.termination, TerminationReason::TargetReached { .. }));
    assert_eq!(out.samples.len(), 4);
    assert_eq!(counts(&out), (1, 1, 1));
}

#[test]
fn max_samples_caps_the_budget() {
    let cfg = ExperimentConfig { termination: Termination { epsilon: None, max_samples: Some(10) }, ..config(128, 4, 1) };
    let out = run(&cfg);
    assert_eq!(out.termination, TerminationReason::SamplesExhausted);
    assert_eq!(out.history.len(), 10);
}

#[test]
fn batch_spanning_two_plates_is_split() {
    // two batches of 47 leave the cursor at 94; the third batch takes H11, H12
    // and then 45 wells of a second plate
    let out = run(&config(141, 47, 3));
    assert_eq!(counts(&out), (2, 4, 2));
    assert_eq!(out.publish_events, 3);
    let third: Vec<_> = out.samples.iter().filter(|s| s.batch == 2).collect();
    assert_eq!(third.len(), 47);
    assert_eq!((third[0].well.as_str(), third[1].well.as_str(), third[2].well.as_str()), ("H11", "H12", "A1"));
    assert_ne!(third[1].plate_id, third[2].plate_id);
    assert_eq!(out.metrics.unwrap().ccwh, expected_command_count(141, 47, 0));
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn published_runs_replay_byte_for_byte() {
    let root = tempfile::tempdir().unwrap();
    let dirs: Vec<_> = ["a", "b"]
        .iter()
        .map(|id| {
            let mut cfg = config(24, 6, 9);
            cfg.run_id = Some(id.to_string());
            cfg.paths.runs = Some(root.path().to_path_buf());
            run(&cfg).run_dir.unwrap()
        })
        .collect();
    for f in [SAMPLES_FILE, LEDGER_FILE, METRICS_FILE] {
        assert_eq!(std::fs::read(dirs[0].join(f)).unwrap(), std::fs::read(dirs[1].join(f)).unwrap(), "{f}");
    }
    assert_eq!(files_under(&dirs[0].join(STEPS_DIR)), files_under(&dirs[1].join(STEPS_DIR)));
    let store = RunStore::open(root.path()).unwrap();
    let rec = store.query_run("a").unwrap();
    assert_eq!(rec.samples, read_samples(&dirs[0].join(SAMPLES_FILE), None).unwrap());
}

#[test]
fn single_seed_sweep_reports_that_runs_trace() {
    let cfg = SweepConfig { base: config(32, 8, 0), batch_sizes: vec![8], seeds: vec![4], ..Default::default() };
    let report = sweep(&cfg);
    let direct = run(&ExperimentConfig { seed: 4, ..config(32, 8, 0) });
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.runs[0].trace, direct.trace);
    assert_eq!(report.summary[0].median_final_best, direct.best_score());
    let again = sweep(&cfg);
    assert_eq!(serde_json::to_vec(&report).unwrap(), serde_json::to_vec(&again).unwrap());
    assert_eq!(report.traces_csv(), again.traces_csv());
}

#[test]
fn sweep_records_failures_and_continues() {
    // B = 96 exceeds the default initial lattice, so that run cannot start
    let cfg = SweepConfig { base: config(96, 8, 0), batch_sizes: vec![96, 8], seeds: vec![1], ..Default::default() };
    let report = sweep(&cfg);
    assert_eq!(report.runs.len(), 2);
    assert!(!report.runs[0].completed && report.runs[0].error.is_some());
    assert!(report.runs[1].completed);
}
