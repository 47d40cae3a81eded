//! Batch-size sweeps: many runs, one best-so-far trace each.

use super::{run_experiment, ExperimentConfig, SweepConfig, TerminationReason};
use crate::store::TracePoint;
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub batch_size: usize,
    pub seed: u64,
    pub completed: bool,
    pub final_best: Option<f64>,
    pub twh_s: f64,
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_size: usize,
    pub runs: usize,
    pub completed: usize,
    pub median_final_best: Option<f64>,
    pub median_twh_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SweepRun>,
    pub summary: Vec<BatchSummary>,
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Runs every (batch size, seed) pair in order. A failed run is recorded and
/// the sweep goes on.
pub fn sweep(cfg: &SweepConfig) -> SweepReport {
    sweep_with(cfg, |_| {})
}

/// As [`sweep`], calling `progress` after each run.
pub fn sweep_with(cfg: &SweepConfig, mut progress: impl FnMut(&SweepRun)) -> SweepReport {
    let mut runs = Vec::new();
    for &b in &cfg.batch_sizes {
        for seed in cfg.seed_list() {
            let run_cfg = ExperimentConfig {
                batch_size: b,
                seed,
                run_id: cfg.base.paths.runs.as_ref().map(|_| format!("b{b:02}-s{seed:03}")),
                ..cfg.base.clone()
            };
            let run = match run_experiment(&run_cfg) {
                Ok(out) => SweepRun {
                    batch_size: b,
                    seed,
                    completed: out.termination.by_criteria(),
                    final_best: out.best_score(),
                    twh_s: out.sim_end_s,
                    trace: out.trace,
                    error: match out.termination {
                        TerminationReason::Aborted { error } => Some(error),
                        _ => None,
                    },
                },
                Err(e) => SweepRun {
                    batch_size: b,
                    seed,
                    completed: false,
                    final_best: None,
                    twh_s: 0.0,
                    trace: Vec::new(),
                    error: Some(e.to_string()),
                },
            };
            progress(&run);
            runs.push(run);
        }
    }
    let summary = cfg
        .batch_sizes
        .iter()
        .map(|&b| {
            let of_b: Vec<&SweepRun> = runs.iter().filter(|r| r.batch_size == b && r.completed).collect();
            let best: Vec<f64> = of_b.iter().filter_map(|r| r.final_best).collect();
            let twh: Vec<f64> = of_b.iter().map(|r| r.twh_s).collect();
            BatchSummary {
                batch_size: b,
                runs: runs.iter().filter(|r| r.batch_size == b).count(),
                completed: of_b.len(),
                median_final_best: median(&best),
                median_twh_s: median(&twh),
            }
        })
        .collect();
    SweepReport { runs, summary }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl SweepReport {
    /// One row per trace point.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("batch_size,seed,batch,sim_time_s,samples,best_score\n");
        for r in &self.runs {
            for t in &r.trace {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.batch_size,
                    r.seed,
                    t.batch,
                    t.sim_time_s,
                    t.samples,
                    opt(t.best_score)
                );
            }
        }
        out
    }

    /// Vega-Lite spec of best score against simulated time, colored by batch size.
    pub fn vega_lite(&self) -> serde_json::Value {
        let values: Vec<serde_json::Value> = self
            .runs
            .iter()
            .flat_map(|r| {
                r.trace.iter().map(move |t| {
                    json!({
                        "batch_size": r.batch_size,
                        "seed": r.seed,
                        "sim_time_h": t.sim_time_s / 3600.0,
                        "best_score": t.best_score,
                    })
                })
            })
            .collect();
        json!({
            "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
            "description": "Best color distance so far against simulated time",
            "data": {"values": values},
            "mark": {"type": "point", "filled": true, "size": 12},
            "encoding": {
                "x": {"field": "sim_time_h", "type": "quantitative", "title": "Simulated time (h)"},
                "y": {"field": "best_score", "type": "quantitative", "title": "Best distance to target"},
                "color": {"field": "batch_size", "type": "ordinal", "title": "B"},
                "detail": {"field": "seed", "type": "nominal"}
            }
        })
    }

    pub fn summary_table(&self) -> String {
        let mut out = String::from("    B  runs  completed  median best  median TWH (h)\n");
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{:>5}  {:>4}  {:>9}  {:>11}  {:>14}",
                s.batch_size,
                s.runs,
                s.completed,
                s.median_final_best.map_or("-".into(), |v| format!("{v:.2}")),
                s.median_twh_s.map_or("-".into(), |v| format!("{:.2}", v / 3600.0)),
            );
        }
        out
    }
}

/// Writes `traces.csv`, `traces.vl.json` and `report.json` into `dir`.
pub fn write_sweep_outputs(report: &SweepReport, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("traces.csv"), report.traces_csv())?;
    let pretty = |v: &serde_json::Value| serde_json::to_vec_pretty(v).expect("json serializes");
    std::fs::write(dir.join("traces.vl.json"), pretty(&report.vega_lite()))?;
    std::fs::write(dir.join("report.json"), pretty(&serde_json::to_value(report).expect("report serializes")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
