//! Workflow engine: binds declarative workflows to module servers and runs
//! them step by step on a simulated clock.
//!
//! Every command attempt lands in the [`CommandLedger`]; every workflow
//! invocation yields a [`WorkflowRun`] whose step records may be written to
//! `<steps_dir>/<workflow>_<seq>.json`.

mod clock;
mod config;
mod ledger;

pub use clock::{ClockMode, SimClock};
pub use config::{
    check_modules, load_workcell, load_workflow, parse_yaml, read_yaml, ConfigError, ModuleEntry, PlaceholderError,
    StepSpec, ValidationIssue, WorkcellConfig, WorkflowSet, WorkflowSpec,
};
pub use ledger::{read_ledger, CommandLedger, LedgerEntry};

use crate::devices::SimulatedWorkcell;
use crate::protocol::{
    meta, send_command, About, Args, AttemptOutcome, AttemptSink, Command, InProcessClient, RetryPolicy, Status,
    TcpClient, Transport,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step_name: String,
    pub module: String,
    pub action: String,
    pub start: f64,
    pub end: f64,
    /// Always `end - start`.
    pub duration: f64,
    pub status: StepStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StepRecord {
    fn new(step: &StepSpec, start: f64, end: f64, status: StepStatus, attempts: u32, error: Option<String>) -> Self {
        Self {
            step_name: step.name.clone(),
            module: step.module.clone(),
            action: step.action.clone(),
            start,
            end,
            duration: end - start,
            status,
            attempts,
            error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Succeeded,
    Failed,
}

/// One invocation of a workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowRun {
    pub workflow: String,
    pub seq: u64,
    pub start: f64,
    pub end: f64,
    pub status: RunStatus,
    pub steps: Vec<StepRecord>,
    /// Resolved arguments of every step, aligned with `steps`.
    #[serde(skip)]
    pub args: Vec<Args>,
    /// Response data of succeeded steps, aligned with `steps`.
    #[serde(skip)]
    pub outputs: Vec<Option<Args>>,
}

impl WorkflowRun {
    pub fn succeeded(&self) -> bool {
        self.status == RunStatus::Succeeded
    }

    pub fn failed_step(&self) -> Option<&StepRecord> {
        self.steps.iter().find(|s| s.status == StepStatus::Failed)
    }

    /// Output of the first succeeded step with this action.
    pub fn output_of(&self, action: &str) -> Option<&Args> {
        self.steps
            .iter()
            .zip(&self.outputs)
            .find(|(s, o)| s.action == action && o.is_some())
            .and_then(|(_, o)| o.as_ref())
    }

    /// File name of the step record file.
    pub fn file_name(&self) -> String {
        format!("{}_{:04}.json", self.workflow, self.seq)
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("step `{step}`: {source}")]
    Placeholder { step: String, source: PlaceholderError },
    #[error("step `{step}`: module `{module}` is not bound")]
    UnboundModule { step: String, module: String },
    #[error("module `{0}` has no endpoint")]
    MissingEndpoint(String),
    #[error("simulated workcell has no module `{0}`")]
    MissingSimulatedModule(String),
    #[error("writing records: {0}")]
    Io(#[from] std::io::Error),
}

/// Routes ledger entries and retry waits into the engine state.
struct StepSink<'a> {
    ledger: &'a mut CommandLedger,
    clock: &'a mut SimClock,
    workflow: &'a str,
    step: &'a str,
    attempts: u32,
    io_error: Option<std::io::Error>,
}

impl AttemptSink for StepSink<'_> {
    fn attempt(&mut self, cmd: &Command, attempt: u32, outcome: &AttemptOutcome) {
        self.attempts = attempt;
        let (mut time, error) = (self.clock.now_s(), None);
        let error = match outcome {
            AttemptOutcome::Response(r) => {
                if r.status == Status::Succeeded {
                    time += round_us(r.sim_duration_s());
                }
                r.error.clone()
            }
            AttemptOutcome::TransportError(e) => Some(e.clone()).or(error),
        };
        let entry = LedgerEntry {
            seq: 0,
            command_id: cmd.id.clone(),
            workflow: self.workflow.to_string(),
            step: self.step.to_string(),
            module: cmd.module.clone(),
            action: cmd.action.clone(),
            attempt,
            outcome: outcome.label().to_string(),
            sim_time_s: time,
            error,
        };
        if let Err(e) = self.ledger.push(entry) {
            self.io_error.get_or_insert(e);
        }
    }

    fn backoff(&mut self, seconds: f64) {
        self.clock.advance(seconds);
    }
}

fn round_us(seconds: f64) -> f64 {
    if seconds.is_finite() && seconds > 0.0 {
        (seconds * 1e6).round() / 1e6
    } else {
        0.0
    }
}

/// Executes workflows against bound modules. One workflow runs at a time;
/// the engine owns the clock.
pub struct Engine {
    workcell: WorkcellConfig,
    transports: BTreeMap<String, Box<dyn Transport>>,
    clock: SimClock,
    ledger: CommandLedger,
    retry: RetryPolicy,
    steps_dir: Option<PathBuf>,
    next_seq: u64,
    next_command: u64,
}

impl Engine {
    pub fn new(workcell: WorkcellConfig, transports: BTreeMap<String, Box<dyn Transport>>, clock: SimClock) -> Self {
        Self {
            workcell,
            transports,
            clock,
            ledger: CommandLedger::new(),
            retry: RetryPolicy::default(),
            steps_dir: None,
            next_seq: 1,
            next_command: 1,
        }
    }

    /// Binds every workcell module to the simulated module of the same name.
    pub fn in_process(workcell: WorkcellConfig, sim: &SimulatedWorkcell, clock: SimClock) -> Result<Self, EngineError> {
        let mut transports: BTreeMap<String, Box<dyn Transport>> = BTreeMap::new();
        for m in &workcell.modules {
            let server = sim.module(&m.name).ok_or_else(|| EngineError::MissingSimulatedModule(m.name.clone()))?;
            transports.insert(m.name.clone(), Box::new(InProcessClient::new(server.clone())));
        }
        Ok(Self::new(workcell, transports, clock))
    }

    /// Binds every workcell module to its TCP endpoint.
    pub fn tcp(workcell: WorkcellConfig, clock: SimClock) -> Result<Self, EngineError> {
        let mut transports: BTreeMap<String, Box<dyn Transport>> = BTreeMap::new();
        for m in &workcell.modules {
            let endpoint = m.endpoint.clone().ok_or_else(|| EngineError::MissingEndpoint(m.name.clone()))?;
            transports.insert(m.name.clone(), Box::new(TcpClient::new(endpoint)));
        }
        Ok(Self::new(workcell, transports, clock))
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_ledger(mut self, ledger: CommandLedger) -> Self {
        self.ledger = ledger;
        self
    }

    /// Step record files go to `dir`, which is created if needed.
    pub fn with_steps_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        self.steps_dir = Some(dir);
        Ok(self)
    }

    pub fn workcell(&self) -> &WorkcellConfig {
        &self.workcell
    }

    pub fn ledger(&self) -> &CommandLedger {
        &self.ledger
    }

    pub fn clock(&self) -> &SimClock {
        &self.clock
    }

    pub fn now(&self) -> f64 {
        self.clock.now_s()
    }

    pub fn steps_dir(&self) -> Option<&Path> {
        self.steps_dir.as_deref()
    }

    /// Asks a module what it can do. Meta-actions are not ledgered.
    pub fn about(&self, module: &str) -> Result<About, String> {
        let transport = self.transports.get(module).ok_or_else(|| format!("module `{module}` is not bound"))?;
        let response = transport.request(&Command::new("about", module, meta::ABOUT)).map_err(|e| e.to_string())?;
        let about = response.data.get("about").cloned().ok_or("response to `about` has no `about` field")?;
        serde_json::from_value(about).map_err(|e| e.to_string())
    }

    /// Checks that every step's module is in the workcell and advertises the
    /// step's action.
    pub fn validate(&self, workflow: &WorkflowSpec) -> Result<(), Vec<ValidationIssue>> {
        let mut issues = check_modules(workflow, &self.workcell);
        let mut abouts: BTreeMap<&str, Result<About, String>> = BTreeMap::new();
        for step in &workflow.flowdef {
            if self.workcell.module(&step.module).is_none() {
                continue;
            }
            let about = abouts.entry(step.module.as_str()).or_insert_with(|| self.about(&step.module));
            let reason = match about {
                Ok(a) if a.supports(&step.action) => continue,
                Ok(a) => format!("unsupported action `{}` on module `{}` (offers: {})", step.action, a.name, a.actions.join(", ")),
                Err(e) => format!("module `{}` did not answer `about`: {e}", step.module),
            };
            issues.push(ValidationIssue { step: step.name.clone(), reason });
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    /// Runs the steps in order. A failed step aborts the workflow and the
    /// remaining steps are recorded as skipped; that is reported through
    /// [`WorkflowRun::status`], not as an error.
    pub fn run_workflow(&mut self, workflow: &WorkflowSpec, payload: &Args) -> Result<WorkflowRun, EngineError> {
        let mut resolved = Vec::with_capacity(workflow.flowdef.len());
        for step in &workflow.flowdef {
            if !self.transports.contains_key(&step.module) {
                return Err(EngineError::UnboundModule { step: step.name.clone(), module: step.module.clone() });
            }
            let args =
                step.resolve(payload).map_err(|source| EngineError::Placeholder { step: step.name.clone(), source })?;
            resolved.push(args);
        }

        let seq = self.next_seq;
        self.next_seq += 1;
        let start = self.clock.now_s();
        let mut steps = Vec::with_capacity(resolved.len());
        let mut outputs = Vec::with_capacity(resolved.len());
        let mut failed = false;
        for (step, args) in workflow.flowdef.iter().zip(&resolved) {
            let t0 = self.clock.now_s();
            if failed {
                steps.push(StepRecord::new(step, t0, t0, StepStatus::Skipped, 0, None));
                outputs.push(None);
                continue;
            }
            let cmd = Command::new(format!("cmd-{:06}", self.next_command), &step.module, &step.action)
                .with_args(args.clone());
            self.next_command += 1;
            let transport = self.transports[&step.module].as_ref();
            let mut sink = StepSink {
                ledger: &mut self.ledger,
                clock: &mut self.clock,
                workflow: &workflow.name,
                step: &step.name,
                attempts: 0,
                io_error: None,
            };
            let result = send_command(transport, &cmd, &self.retry, &mut sink);
            let attempts = sink.attempts;
            if let Some(e) = sink.io_error {
                return Err(e.into());
            }
            let (status, error, output) = match result {
                Ok(r) if r.status == Status::Succeeded => {
                    self.clock.advance(r.sim_duration_s());
                    (StepStatus::Succeeded, None, Some(r.data))
                }
                Ok(r) => (StepStatus::Failed, Some(r.error.unwrap_or_else(|| "failed without message".into())), None),
                Err(e) => (StepStatus::Failed, Some(e.to_string()), None),
            };
            failed = status == StepStatus::Failed;
            steps.push(StepRecord::new(step, t0, self.clock.now_s(), status, attempts, error));
            outputs.push(output);
        }
        let run = WorkflowRun {
            workflow: workflow.name.clone(),
            seq,
            start,
            end: self.clock.now_s(),
            status: if failed { RunStatus::Failed } else { RunStatus::Succeeded },
            steps,
            args: resolved,
            outputs,
        };
        if let Some(dir) = &self.steps_dir {
            let mut bytes = serde_json::to_vec_pretty(&run).map_err(std::io::Error::other)?;
            bytes.push(b'\n');
            std::fs::write(dir.join(run.file_name()), bytes)?;
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{FaultKind, FaultPlan, ModuleFaults, ScriptedFault, SimulationConfig};
    use serde_json::json;

    const CELL: &str = "\
name: test
modules:
  - {name: sciclops, type: sciclops}
  - {name: pf400, type: pf400}
  - {name: ot2, type: ot2}
  - {name: barty, type: barty}
  - {name: camera, type: camera, config: {noise_sigma: 0.0}}
";

    const MIX: &str = "\
name: cp_wf_mix_colors
flowdef:
  - {name: move to ot2, module: pf400, action: transfer, args: {source: camera_nest, target: ot2_deck}}
  - {name: mix colors, module: ot2, action: run_protocol, args: {protocol: '${protocol}'}}
  - {name: move to camera, module: pf400, action: transfer, args: {source: ot2_deck, target: camera_nest}}
  - {name: photograph plate, module: camera, action: capture}
";

    fn cell() -> WorkcellConfig {
        WorkcellConfig::from_yaml(CELL, Path::new("cell.yaml")).unwrap()
    }

    fn mix() -> WorkflowSpec {
        WorkflowSpec::from_yaml(MIX, Path::new("mix.yaml")).unwrap()
    }

    fn payload() -> Args {
        json!({"protocol": [{"well": "A1", "ratios": [0.1, 0.1, 0.1, 0.1]}]}).as_object().unwrap().clone()
    }

    /// Engine over a workcell with a plate already in the camera nest and
    /// full reservoirs.
    fn engine(faults: FaultPlan) -> (Engine, SimulatedWorkcell) {
        let cell = cell();
        let sim_cfg = SimulationConfig { reservoirs_start_full: true, ..cell.simulation(faults) };
        let sim = SimulatedWorkcell::standard(&sim_cfg);
        let mut engine = Engine::in_process(cell, &sim, SimClock::virtual_clock()).unwrap();
        let prep = WorkflowSpec {
            name: "prep".into(),
            description: None,
            flowdef: vec![
                StepSpec::new("get", "sciclops", "get_plate", json!({})),
                StepSpec::new("place", "pf400", "transfer", json!({"source": "exchange", "target": "camera_nest"})),
            ],
        };
        assert!(engine.run_workflow(&prep, &Args::new()).unwrap().succeeded());
        (engine, sim)
    }

    fn script(module: &str, faults: &[(u64, FaultKind)]) -> FaultPlan {
        let mut plan = FaultPlan::default();
        plan.modules.insert(
            module.into(),
            ModuleFaults { script: faults.iter().map(|&(at, fault)| ScriptedFault { at, fault }).collect(), ..Default::default() },
        );
        plan
    }

    #[test]
    fn mix_workflow_durations() {
        let (mut engine, _sim) = engine(FaultPlan::default());
        let t0 = engine.now();
        let run = engine.run_workflow(&mix(), &payload()).unwrap();
        assert!(run.succeeded());
        let d: Vec<f64> = run.steps.iter().map(|s| s.duration).collect();
        assert_eq!(d, [35.0, 145.0, 35.0, 10.0]);
        assert_eq!(run.start, t0);
        assert_eq!(run.end, t0 + 225.0);
        assert!(run.output_of("capture").unwrap().contains_key("image"));
        for s in &run.steps {
            assert_eq!(s.duration, s.end - s.start);
            assert_eq!(s.attempts, 1);
        }
    }

    #[test]
    fn failure_skips_remaining_steps() {
        let (mut engine, _sim) = engine(script("ot2", &[(1, FaultKind::Fail)]));
        let run = engine.run_workflow(&mix(), &payload()).unwrap();
        assert_eq!(run.status, RunStatus::Failed);
        let st: Vec<StepStatus> = run.steps.iter().map(|s| s.status).collect();
        assert_eq!(st, [StepStatus::Succeeded, StepStatus::Failed, StepStatus::Skipped, StepStatus::Skipped]);
        assert_eq!(run.failed_step().unwrap().step_name, "mix colors");
        assert_eq!(run.steps[3].attempts, 0);
        assert!(run.steps.iter().map(|s| s.duration).sum::<f64>() <= run.end - run.start);
    }

    #[test]
    fn one_busy_retry_adds_one_ledger_entry() {
        let (mut engine, _sim) = engine(script("camera", &[(1, FaultKind::Busy)]));
        let before = engine.ledger().entries().len();
        let t0 = engine.now();
        let run = engine.run_workflow(&mix(), &payload()).unwrap();
        assert!(run.succeeded());
        let entries = &engine.ledger().entries()[before..];
        assert_eq!(entries.len(), 5);
        assert_eq!(entries.iter().filter(|e| e.succeeded()).count(), 4);
        assert_eq!(entries.iter().filter(|e| e.outcome == "busy").count(), 1);
        assert_eq!(run.steps[3].attempts, 2);
        // the 5 s backoff lands on the capture step
        assert_eq!(run.steps[3].duration, 15.0);
        assert_eq!(run.end - t0, 230.0);
        for w in engine.ledger().entries().windows(2) {
            assert!(w[0].sim_time_s <= w[1].sim_time_s);
            assert!(w[0].seq < w[1].seq);
        }
    }

    #[test]
    fn validation_uses_about() {
        let (engine, _sim) = engine(FaultPlan::default());
        assert_eq!(engine.validate(&mix()), Ok(()));
        let mut typo = mix();
        typo.flowdef[1].action = "run_protocl".into();
        let issues = engine.validate(&typo).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert!(issues[0].reason.contains("unsupported action `run_protocl`"), "{}", issues[0].reason);
    }

    #[test]
    fn validation_against_workcell_without_camera() {
        let cell = cell().without_module("camera");
        let sim = SimulatedWorkcell::standard(&cell.simulation(FaultPlan::default()));
        let engine = Engine::in_process(cell, &sim, SimClock::virtual_clock()).unwrap();
        let issues = engine.validate(&mix()).unwrap_err();
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].step, "photograph plate");
    }

    #[test]
    fn unresolved_placeholder_runs_nothing() {
        let (mut engine, _sim) = engine(FaultPlan::default());
        let before = engine.ledger().entries().len();
        let err = engine.run_workflow(&mix(), &Args::new()).unwrap_err();
        assert!(matches!(err, EngineError::Placeholder { .. }), "{err}");
        assert_eq!(engine.ledger().entries().len(), before);
    }

    #[test]
    fn step_files_are_written_and_replayable() {
        let record = |dir: &Path| {
            let (engine, _sim) = engine(FaultPlan::default());
            let mut engine = engine.with_steps_dir(dir.join("steps")).unwrap();
            let run = engine.run_workflow(&mix(), &payload()).unwrap();
            let bytes = std::fs::read(dir.join("steps").join(run.file_name())).unwrap();
            (bytes, serde_json::to_vec(engine.ledger().entries()).unwrap())
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let first = record(a.path());
        assert_eq!(first, record(b.path()));
        let parsed: serde_json::Value = serde_json::from_slice(&first.0).unwrap();
        assert_eq!(parsed["workflow"], "cp_wf_mix_colors");
        assert_eq!(parsed["steps"][1]["duration"], 145.0);
    }
}
