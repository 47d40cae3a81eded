//! Self-driving-lab metrics computed from a run's ledger and step records.

use crate::devices::DeviceKind;
use crate::store::{self, RunRecord, StoreError};
use crate::workflow::{read_ledger, LedgerEntry, StepRecord, StepStatus, WorkflowRun};
use crate::scene::WELL_COUNT;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("the command ledger is empty")]
    EmptyLedger,
    #[error("step records reference module `{0}`, which has no known type")]
    UnknownModule(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Time without human input: simulated run length, in seconds.
    pub twh_s: f64,
    /// Commands completed without human input.
    pub ccwh: usize,
    pub colors: usize,
    pub time_per_color_s: f64,
    /// Time spent in liquid-handler actions.
    pub synthesis_s: f64,
    /// Time spent moving, fetching and photographing plates.
    pub transfer_s: f64,
    pub synthesis_fraction: f64,
    pub attempts: usize,
    pub busy: usize,
    pub failed: usize,
}

/// Metrics of one run. `twh_s` is the final simulated clock minus the start.
pub fn compute_from(
    ledger: &[LedgerEntry],
    steps: &[StepRecord],
    modules: &BTreeMap<String, DeviceKind>,
    colors: usize,
    twh_s: f64,
) -> Result<RunMetrics, MetricsError> {
    if ledger.is_empty() {
        return Err(MetricsError::EmptyLedger);
    }
    let (mut synthesis_s, mut transfer_s) = (0.0, 0.0);
    for s in steps.iter().filter(|s| s.status == StepStatus::Succeeded) {
        let kind = modules.get(&s.module).ok_or_else(|| MetricsError::UnknownModule(s.module.clone()))?;
        match kind {
            DeviceKind::Ot2 => synthesis_s += s.duration,
            DeviceKind::Pf400 | DeviceKind::Sciclops | DeviceKind::Camera => transfer_s += s.duration,
            DeviceKind::Barty => {}
        }
    }
    let count = |o: &str| ledger.iter().filter(|e| e.outcome == o).count();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(RunMetrics {
        twh_s,
        ccwh: count("succeeded"),
        colors,
        time_per_color_s: ratio(twh_s, colors as f64),
        synthesis_s,
        transfer_s,
        synthesis_fraction: ratio(synthesis_s, twh_s),
        attempts: ledger.len(),
        busy: count("busy"),
        failed: count("failed") + count("transport_error"),
    })
}

/// Step records of every workflow invocation in a run directory, in
/// invocation order.
pub fn load_step_records(run_dir: &Path) -> Result<Vec<WorkflowRun>, StoreError> {
    let dir = run_dir.join(store::STEPS_DIR);
    let mut runs = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|source| StoreError::Io { path: dir.clone(), source })? {
        let path = entry.map_err(|source| StoreError::Io { path: dir.clone(), source })?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let bytes = std::fs::read(&path).map_err(|source| StoreError::Io { path: path.clone(), source })?;
            let run: WorkflowRun = serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() })?;
            runs.push(run);
        }
    }
    runs.sort_by_key(|r| r.seq);
    Ok(runs)
}

/// Metrics of a published run, from the files in its directory.
pub fn compute(run_dir: &Path, record: &RunRecord) -> Result<RunMetrics, MetricsError> {
    let ledger_path = run_dir.join(&record.manifest.ledger);
    let ledger = read_ledger(&ledger_path).map_err(|source| StoreError::Io { path: ledger_path, source })?;
    let steps: Vec<StepRecord> = load_step_records(run_dir)?.into_iter().flat_map(|r| r.steps).collect();
    let colors = record.samples.iter().filter(|s| s.valid).count();
    let m = &record.manifest;
    compute_from(&ledger, &steps, &m.modules, colors, m.sim_end_s - m.sim_start_s)
}

/// Mix workflows that cross a plate boundary when `n` samples go out in
/// batches of `b`, filling plates in order.
pub fn plate_spanning_splits(n: usize, b: usize) -> usize {
    if b == 0 {
        return 0;
    }
    (0..n.div_ceil(b))
        .filter(|k| {
            let first = k * b;
            let last = (first + b).min(n) - 1;
            first / WELL_COUNT != last / WELL_COUNT
        })
        .count()
}

/// Instrument commands of a fault-free run of the standard workflows that
/// evaluates `n` samples in batches of `b` with `refills` extra reservoir
/// replenishments.
pub fn expected_command_count(n: usize, b: usize, refills: usize) -> usize {
    if n == 0 || b == 0 {
        return 0;
    }
    let plates = n.div_ceil(WELL_COUNT);
    let mix = 4 * (n.div_ceil(b) + plate_spanning_splits(n, b));
    mix + 3 * plates + 2 * plates + 2 * refills
}

fn hms(seconds: f64) -> String {
    let total = seconds.round() as u64;
    let (h, m, s) = (total / 3600, total / 60 % 60, total % 60);
    if h > 0 {
        format!("{h}h {m:02}m {s:02}s")
    } else {
        format!("{m}m {s:02}s")
    }
}

/// Two-column Metric / Value table.
pub fn report_table(m: &RunMetrics) -> String {
    let rows = [
        ("Time without human input (TWH)", format!("{} ({:.1} s)", hms(m.twh_s), m.twh_s)),
        ("Commands completed without human input (CCWH)", m.ccwh.to_string()),
        ("Colors mixed", m.colors.to_string()),
        ("Time per color", format!("{} ({:.1} s)", hms(m.time_per_color_s), m.time_per_color_s)),
        ("Synthesis time", format!("{} ({:.1} s)", hms(m.synthesis_s), m.synthesis_s)),
        ("Transfer time", format!("{} ({:.1} s)", hms(m.transfer_s), m.transfer_s)),
        ("Synthesis fraction", format!("{:.1}%", 100.0 * m.synthesis_fraction)),
    ];
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let mut out = format!("{:width$}  Value\n{}\n", "Metric", "-".repeat(width + 24));
    for (k, v) in rows {
        let _ = writeln!(out, "{k:width$}  {v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(outcome: &str) -> LedgerEntry {
        LedgerEntry {
            seq: 0,
            command_id: "c".into(),
            workflow: "w".into(),
            step: "s".into(),
            module: "ot2".into(),
            action: "run_protocol".into(),
            attempt: 1,
            outcome: outcome.into(),
            sim_time_s: 0.0,
            error: None,
        }
    }

    fn step(module: &str, duration: f64, status: StepStatus) -> StepRecord {
        StepRecord {
            step_name: "s".into(),
            module: module.into(),
            action: "a".into(),
            start: 0.0,
            end: duration,
            duration,
            status,
            attempts: 1,
            error: None,
        }
    }

    fn kinds() -> BTreeMap<String, DeviceKind> {
        use DeviceKind::*;
        [Sciclops, Pf400, Ot2, Barty, Camera].into_iter().map(|k| (k.as_str().to_string(), k)).collect()
    }

    #[test]
    fn ccwh_counts_only_successes() {
        let mut ledger: Vec<LedgerEntry> = (0..10).map(|_| entry("succeeded")).collect();
        ledger.extend([entry("busy"), entry("busy"), entry("failed")]);
        let m = compute_from(&ledger, &[], &kinds(), 1, 10.0).unwrap();
        assert_eq!((m.ccwh, m.busy, m.failed, m.attempts), (10, 2, 1, 13));
    }

    #[test]
    fn durations_are_partitioned_by_instrument() {
        let steps = [
            step("ot2", 145.0, StepStatus::Succeeded),
            step("pf400", 35.0, StepStatus::Succeeded),
            step("camera", 10.0, StepStatus::Succeeded),
            step("sciclops", 45.0, StepStatus::Succeeded),
            step("barty", 250.0, StepStatus::Succeeded),
            step("ot2", 0.0, StepStatus::Failed),
        ];
        let m = compute_from(&[entry("succeeded")], &steps, &kinds(), 2, 485.0).unwrap();
        assert_eq!(m.synthesis_s, 145.0);
        assert_eq!(m.transfer_s, 90.0);
        assert_eq!(m.time_per_color_s, 242.5);
        assert!(m.synthesis_s + m.transfer_s <= m.twh_s);
        assert!(matches!(compute_from(&[], &steps, &kinds(), 2, 1.0), Err(MetricsError::EmptyLedger)));
    }

    #[test]
    fn eight_hour_run_time_per_color() {
        // 8 h 12 min over 128 colors
        let twh = (8 * 3600 + 12 * 60) as f64;
        let m = compute_from(&[entry("succeeded")], &[], &kinds(), 128, twh).unwrap();
        assert!((m.time_per_color_s - 230.625).abs() < 1e-9);
    }

    #[test]
    fn expected_counts() {
        assert_eq!(expected_command_count(128, 1, 0), 522);
        assert_eq!(expected_command_count(15, 15, 0), 9);
        assert_eq!(expected_command_count(0, 1, 0), 0);
        // batches of 64 cover wells 64..127, which straddle the first plate's end
        assert_eq!(plate_spanning_splits(128, 64), 1);
        assert_eq!(expected_command_count(128, 64, 0), 4 * 3 + 10);
        assert_eq!(plate_spanning_splits(128, 8), 0);
        assert_eq!(plate_spanning_splits(100, 5), 1);
        assert_eq!(plate_spanning_splits(98, 4), 0);
    }

    #[test]
    fn table_has_every_metric() {
        let m = compute_from(&[entry("succeeded")], &[], &kinds(), 128, 30_028.0).unwrap();
        let t = report_table(&m);
        assert!(t.contains("8h 20m 28s"), "{t}");
        assert_eq!(t.lines().count(), 9);
    }
}
