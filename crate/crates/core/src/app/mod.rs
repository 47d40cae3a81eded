//! The autonomous color-picker application.
//!
//! One run repeats: load a plate when needed, mix a batch, photograph it,
//! read and score the wells, publish, ask the solver for the next batch,
//! discard full plates, and refill reservoirs that could not cover the next
//! batch. It stops when the best score reaches epsilon or the sample budget
//! is spent.

mod config;
mod cursor;
mod sweep;

pub use config::{load_experiment, load_sweep, ExperimentConfig, Paths, SweepConfig, Termination, TransportMode};
pub use cursor::{assign_wells, PlateCursor, Segment};
pub use sweep::{median, sweep, sweep_with, write_sweep_outputs, BatchSummary, SweepReport, SweepRun};

use crate::color::{ColorRgb, Metric, DYE_COUNT};
use crate::devices::{
    decode_image, locations, ul_to_nl, well_volumes_nl, DeviceKind, ProtocolEntry, SimulatedWorkcell,
};
use crate::fixtures;
use crate::metrics::{compute_from, RunMetrics};
use crate::optimizer::{best_so_far, propose, Evaluation, Proposal, SolverError};
use crate::protocol::{serve, Args, ServerHandle, TcpClient, Transport};
use crate::scene::{well_name, SceneConfig};
use crate::store::{BatchPublication, RunManifest, RunState, RunStore, RunWriter, SampleRecord, StoreError, TracePoint};
use crate::vision::analyze;
use crate::workflow::{
    load_workcell, load_workflow, ConfigError, Engine, EngineError, LedgerEntry, SimClock, StepSpec, ValidationIssue,
    WorkcellConfig, WorkflowRun, WorkflowSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use thiserror::Error;

pub const NEWPLATE: &str = "cp_wf_newplate";
pub const MIX: &str = "cp_wf_mix_colors";
pub const TRASHPLATE: &str = "cp_wf_trashplate";
pub const REPLENISH: &str = "cp_wf_replenish";
pub const RECOVER: &str = "cp_recover";

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    File(#[from] ConfigError),
    #[error("workflow `{workflow}` does not fit the workcell: {}", join(.issues))]
    Validation { workflow: String, issues: Vec<ValidationIssue> },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("starting module servers: {0}")]
    Io(#[from] std::io::Error),
}

fn join(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// The four workflows the app drives.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardWorkflows {
    pub newplate: WorkflowSpec,
    pub mix: WorkflowSpec,
    pub trashplate: WorkflowSpec,
    pub replenish: WorkflowSpec,
}

impl StandardWorkflows {
    pub fn load(dir: &std::path::Path) -> Result<Self, ConfigError> {
        let f = |name: &str| load_workflow(dir.join(format!("{name}.yaml")));
        Ok(Self { newplate: f(NEWPLATE)?, mix: f(MIX)?, trashplate: f(TRASHPLATE)?, replenish: f(REPLENISH)? })
    }

    pub fn all(&self) -> [&WorkflowSpec; 4] {
        [&self.newplate, &self.mix, &self.trashplate, &self.replenish]
    }
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum TerminationReason {
    TargetReached { best_score: f64 },
    SamplesExhausted,
    Aborted { error: String },
}

impl TerminationReason {
    /// Whether the run stopped on its own criteria rather than a failure.
    pub fn by_criteria(&self) -> bool {
        !matches!(self, TerminationReason::Aborted { .. })
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationReason::TargetReached { best_score } => write!(f, "target reached (best score {best_score:.3})"),
            TerminationReason::SamplesExhausted => write!(f, "sample budget exhausted"),
            TerminationReason::Aborted { error } => write!(f, "aborted: {error}"),
        }
    }
}

/// Everything a finished (or aborted) run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub termination: TerminationReason,
    pub samples: Vec<SampleRecord>,
    pub history: Vec<Evaluation>,
    pub trace: Vec<TracePoint>,
    pub metrics: Option<RunMetrics>,
    /// Every workflow invocation, without response payloads.
    pub workflow_runs: Vec<WorkflowRun>,
    pub ledger: Vec<LedgerEntry>,
    pub publish_events: usize,
    pub refills: usize,
    pub sim_end_s: f64,
    pub run_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn best_score(&self) -> Option<f64> {
        best_so_far(&self.history).ok().map(|e| e.score)
    }

    /// Invocations per workflow name, failed ones included.
    pub fn workflow_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.workflow_runs {
            *out.entry(r.workflow.clone()).or_default() += 1;
        }
        out
    }

    pub fn valid_samples(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }
}

/// Scores measured colors; `None` marks a well that could not be read.
pub fn score_batch(
    proposals: &[Proposal],
    colors: &[Option<ColorRgb>],
    target: &ColorRgb,
    metric: Metric,
    iteration: usize,
) -> Vec<Option<Evaluation>> {
    proposals
        .iter()
        .zip(colors)
        .map(|(p, c)| {
            c.map(|measured| Evaluation { ratios: p.ratios, measured, score: metric.distance(&measured, target), iteration })
        })
        .collect()
}

/// A run failed in a way the app does not retry.
struct Abort(String);

impl<E: std::error::Error> From<E> for Abort {
    fn from(e: E) -> Self {
        Abort(e.to_string())
    }
}

/// Where the current plate is, as far as the app knows.
#[derive(Debug, Clone, PartialEq)]
struct PlateTrack {
    id: String,
    location: String,
}

/// Result of one successful mix workflow.
struct MixedSegment {
    wells: std::ops::Range<usize>,
    plate_id: String,
    colors: Vec<Option<ColorRgb>>,
    vision_error: Option<String>,
    image_ppm: Vec<u8>,
    time: f64,
}

struct Session<'a> {
    cfg: &'a ExperimentConfig,
    engine: Engine,
    workflows: StandardWorkflows,
    scene: SceneConfig,
    well_volume_ul: f64,
    capacity_nl: u64,
    levels_nl: [u64; DYE_COUNT],
    cursor: PlateCursor,
    plate: Option<PlateTrack>,
    writer: Option<RunWriter>,
    runs: Vec<WorkflowRun>,
    unpublished_steps: Vec<String>,
    samples: Vec<SampleRecord>,
    history: Vec<Evaluation>,
    trace: Vec<TracePoint>,
    publish_events: usize,
    refills: usize,
}

/// Live instruments behind the engine; dropped after the run.
struct Instruments {
    _sim: Option<SimulatedWorkcell>,
    _servers: Vec<ServerHandle>,
}

fn connect(cfg: &ExperimentConfig, workcell: &WorkcellConfig) -> Result<(Engine, Instruments), AppError> {
    let clock = SimClock::new(cfg.clock);
    let mut sim_cfg = workcell.simulation(cfg.faults.clone());
    sim_cfg.camera.seed = cfg.seed;
    if let Some(s) = cfg.camera_noise_sigma {
        sim_cfg.camera.noise_sigma = s;
    }
    let modules = || workcell.modules.iter().map(|m| (m.name.as_str(), m.kind));
    Ok(match cfg.transport {
        TransportMode::InProcess => {
            let sim = SimulatedWorkcell::build(modules(), &sim_cfg);
            let engine = Engine::in_process(workcell.clone(), &sim, clock)?;
            (engine, Instruments { _sim: Some(sim), _servers: Vec::new() })
        }
        TransportMode::TcpLoopback => {
            let sim = SimulatedWorkcell::build(modules(), &sim_cfg);
            let mut transports: BTreeMap<String, Box<dyn Transport>> = BTreeMap::new();
            let mut servers = Vec::new();
            for (name, module) in &sim.modules {
                let handle = serve(module.clone(), "127.0.0.1:0")?;
                transports.insert(name.clone(), Box::new(TcpClient::from_addr(handle.addr())));
                servers.push(handle);
            }
            let engine = Engine::new(workcell.clone(), transports, clock);
            (engine, Instruments { _sim: Some(sim), _servers: servers })
        }
        TransportMode::Remote => {
            (Engine::tcp(workcell.clone(), clock)?, Instruments { _sim: None, _servers: Vec::new() })
        }
    })
}

/// Runs one experiment to completion. Workflow failures that survive the
/// configured retries end the run with [`TerminationReason::Aborted`] and a
/// partial record; only setup problems are returned as errors.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, AppError> {
    cfg.validate().map_err(AppError::Config)?;
    let workcell = match &cfg.paths.workcell {
        Some(p) => load_workcell(p)?,
        None => fixtures::workcell(),
    };
    let workflows = match &cfg.paths.workflows {
        Some(dir) => StandardWorkflows::load(dir)?,
        None => fixtures::workflows(),
    };
    let (engine, _instruments) = connect(cfg, &workcell)?;
    let mut engine = engine.with_retry_policy(cfg.retry.clone());
    for wf in workflows.all() {
        engine.validate(wf).map_err(|issues| AppError::Validation { workflow: wf.name.clone(), issues })?;
    }

    let writer = match &cfg.paths.runs {
        Some(root) => {
            let store = RunStore::open(root)?;
            let run_id = cfg.run_id.clone().unwrap_or_else(|| store.next_run_id(&cfg.experiment_id));
            let snapshot = serde_json::to_value(cfg).expect("config serializes");
            let manifest = RunManifest::new(&cfg.experiment_id, &run_id, snapshot, cfg.total_samples, cfg.batch_size);
            let mut writer = store.create_run(manifest)?;
            writer.set_modules(workcell.modules.iter().map(|m| (m.name.clone(), m.kind)).collect())?;
            engine = engine
                .with_ledger(crate::workflow::CommandLedger::with_file(writer.ledger_path())?)
                .with_steps_dir(writer.steps_dir())?;
            Some(writer)
        }
        None => None,
    };

    let sim = workcell.simulation(Default::default());
    let mut session = Session {
        cfg,
        engine,
        workflows,
        scene: sim.camera.scene.clone(),
        well_volume_ul: sim.ot2.well_volume_ul,
        capacity_nl: ul_to_nl(sim.ot2.reservoir_capacity_ul),
        levels_nl: [0; DYE_COUNT],
        cursor: PlateCursor::default(),
        plate: None,
        writer,
        runs: Vec::new(),
        unpublished_steps: Vec::new(),
        samples: Vec::new(),
        history: Vec::new(),
        trace: Vec::new(),
        publish_events: 0,
        refills: 0,
    };
    let termination = match session.run() {
        Ok(reason) => reason,
        Err(Abort(error)) => TerminationReason::Aborted { error },
    };
    session.finish(termination)
}

impl Session<'_> {
    fn run(&mut self) -> Result<TerminationReason, Abort> {
        let limit = self.cfg.sample_limit();
        let solver = self.cfg.solver_config();
        let mut batch_index = 0;
        let reason = loop {
            let evaluated = self.history.len();
            if evaluated >= limit {
                break TerminationReason::SamplesExhausted;
            }
            let mut batch = propose(&self.history, &solver)?;
            batch.truncate(limit - evaluated);
            self.run_batch(batch_index, &batch.proposals)?;
            batch_index += 1;
            if let Some(best) = self.best() {
                if self.cfg.termination.epsilon.is_some_and(|eps| best <= eps) {
                    break TerminationReason::TargetReached { best_score: best };
                }
            }
            if self.cursor.is_full() {
                self.trash_plate()?;
            }
        };
        if self.plate.is_some() {
            self.trash_plate()?;
        }
        Ok(reason)
    }

    fn best(&self) -> Option<f64> {
        best_so_far(&self.history).ok().map(|e| e.score)
    }

    /// Mixes, reads, scores and publishes one batch.
    fn run_batch(&mut self, batch: usize, proposals: &[Proposal]) -> Result<(), Abort> {
        let mut new_samples = Vec::new();
        let mut images = Vec::new();
        let mut done = 0;
        while done < proposals.len() {
            let seg = self.mix_segment(batch, &proposals[done..], &mut new_samples)?;
            let n = seg.wells.len();
            let part = &proposals[done..done + n];
            let scores = score_batch(part, &seg.colors, &self.cfg.target, self.cfg.metric, batch);
            for ((p, (well, eval)), color) in part.iter().zip(seg.wells.clone().zip(scores)).zip(&seg.colors) {
                if let Some(e) = &eval {
                    self.history.push(e.clone());
                }
                let error = match (&eval, &seg.vision_error) {
                    (Some(_), _) => None,
                    (None, Some(e)) => Some(format!("vision: {e}")),
                    (None, None) => Some("vision: well could not be read".into()),
                };
                new_samples.push(self.sample_record(batch, &seg.plate_id, well, p, *color, eval.map(|e| e.score), error, seg.time));
            }
            images.push(seg.image_ppm);
            done += n;
        }
        self.publish(batch, new_samples, images)
    }

    #[allow(clippy::too_many_arguments)]
    fn sample_record(
        &self,
        batch: usize,
        plate_id: &str,
        well: usize,
        p: &Proposal,
        measured: Option<ColorRgb>,
        score: Option<f64>,
        error: Option<String>,
        time: f64,
    ) -> SampleRecord {
        SampleRecord {
            sample: 0,
            batch,
            plate_id: plate_id.to_string(),
            well: well_name(well),
            ratios: p.ratios,
            provenance: p.provenance,
            measured,
            score,
            best_so_far: self.best(),
            valid: score.is_some(),
            sim_time_s: time,
            error,
        }
    }

    fn publish(&mut self, batch: usize, mut samples: Vec<SampleRecord>, images: Vec<Vec<u8>>) -> Result<(), Abort> {
        let first = self.samples.len();
        for (i, s) in samples.iter_mut().enumerate() {
            s.sample = first + i;
        }
        let now = self.engine.now();
        let best = self.best();
        let step_files = std::mem::take(&mut self.unpublished_steps);
        self.samples.extend(samples.iter().cloned());
        self.trace.push(TracePoint { batch, sim_time_s: now, samples: self.history.len(), best_score: best });
        self.publish_events += 1;
        if let Some(w) = &mut self.writer {
            let images = if self.cfg.publish_images { images } else { Vec::new() };
            w.publish_batch(&BatchPublication { batch, samples, step_files, images, best_score: best, sim_time_s: now })?;
        }
        Ok(())
    }

    /// Runs a workflow and folds its effects into the app's view of the bench.
    fn invoke(&mut self, wf: &WorkflowSpec, payload: &Args) -> Result<WorkflowRun, Abort> {
        let run = self.engine.run_workflow(wf, payload)?;
        for ((step, args), out) in run.steps.iter().zip(&run.args).zip(&run.outputs) {
            let Some(out) = out else { continue };
            match step.action.as_str() {
                "get_plate" => {
                    let id = out.get("plate_id").and_then(|v| v.as_str()).unwrap_or_default().to_string();
                    self.plate = Some(PlateTrack { id, location: locations::EXCHANGE.into() });
                }
                "transfer" => {
                    let target = args.get("target").and_then(|v| v.as_str()).unwrap_or_default();
                    if target == locations::TRASH {
                        self.plate = None;
                        self.cursor.unload();
                    } else if let Some(p) = &mut self.plate {
                        p.location = target.to_string();
                    }
                }
                "fill" => self.levels_nl = [self.capacity_nl; DYE_COUNT],
                "drain" => self.levels_nl = [0; DYE_COUNT],
                "run_protocol" => {
                    if let Some(ul) = out.get("dispensed_ul").and_then(|v| v.as_array()) {
                        for (level, v) in self.levels_nl.iter_mut().zip(ul) {
                            *level = level.saturating_sub(ul_to_nl(v.as_f64().unwrap_or(0.0)));
                        }
                    }
                }
                _ => {}
            }
        }
        if self.engine.steps_dir().is_some() {
            self.unpublished_steps.push(run.file_name());
        }
        self.runs.push(WorkflowRun {
            workflow: run.workflow.clone(),
            seq: run.seq,
            start: run.start,
            end: run.end,
            status: run.status,
            steps: run.steps.clone(),
            args: Vec::new(),
            outputs: Vec::new(),
        });
        Ok(run)
    }

    /// Runs a workflow, rerunning it after a failure as configured.
    /// `recover` restores the workflow's starting state before each rerun.
    fn invoke_with_retry(
        &mut self,
        wf: &WorkflowSpec,
        payload: &Args,
        recover: fn(&mut Self) -> Result<(), Abort>,
    ) -> Result<WorkflowRun, Abort> {
        let mut retries = self.cfg.workflow_retries;
        loop {
            let run = self.invoke(wf, payload)?;
            if run.succeeded() {
                return Ok(run);
            }
            let why = run.failed_step().and_then(|s| s.error.clone()).unwrap_or_default();
            if retries == 0 {
                return Err(Abort(format!("workflow {} failed: {why}", wf.name)));
            }
            retries -= 1;
            recover(self)?;
        }
    }

    fn move_plate(&mut self, target: &str) -> Result<(), Abort> {
        let Some(source) = self.plate.as_ref().map(|p| p.location.clone()) else { return Ok(()) };
        if source == target {
            return Ok(());
        }
        let wf = WorkflowSpec {
            name: RECOVER.into(),
            description: None,
            flowdef: vec![StepSpec::new("return plate", "pf400", "transfer", json!({"source": source, "target": target}))],
        };
        let run = self.invoke(&wf, &Args::new())?;
        if run.succeeded() {
            Ok(())
        } else {
            Err(Abort(format!("recovery transfer {source} -> {target} failed")))
        }
    }

    fn ensure_plate(&mut self) -> Result<(), Abort> {
        if !self.cursor.needs_plate() {
            return Ok(());
        }
        if self.plate.is_some() {
            self.trash_plate()?;
        }
        let wf = self.workflows.newplate.clone();
        // a plate left behind by a failed attempt is discarded
        self.invoke_with_retry(&wf, &Args::new(), |s| s.move_plate(locations::TRASH))?;
        let id = self.plate.as_ref().map(|p| p.id.clone()).ok_or_else(|| Abort("new plate workflow produced no plate".into()))?;
        self.cursor.load(id);
        Ok(())
    }

    fn trash_plate(&mut self) -> Result<(), Abort> {
        let wf = self.workflows.trashplate.clone();
        self.invoke_with_retry(&wf, &Args::new(), |s| s.move_plate(locations::CAMERA_NEST))?;
        self.cursor.unload();
        Ok(())
    }

    /// Refills the reservoirs when they cannot cover `proposals`.
    fn ensure_reservoirs(&mut self, proposals: &[Proposal]) -> Result<(), Abort> {
        let mut need = [0u64; DYE_COUNT];
        for p in proposals {
            for (n, v) in need.iter_mut().zip(well_volumes_nl(&p.ratios, self.well_volume_ul)) {
                *n += v;
            }
        }
        if need.iter().zip(&self.levels_nl).all(|(n, l)| n <= l) {
            return Ok(());
        }
        if need.iter().any(|&n| n > self.capacity_nl) {
            return Err(Abort("one plate segment needs more dye than a reservoir holds".into()));
        }
        let wf = self.workflows.replenish.clone();
        self.invoke_with_retry(&wf, &Args::new(), |_| Ok(()))?;
        self.refills += 1;
        Ok(())
    }

    /// Mixes as many of `proposals` as fit on the current plate. Wells
    /// dispensed by a failed attempt stay consumed and are logged as invalid
    /// samples in `wasted`.
    fn mix_segment(
        &mut self,
        batch: usize,
        proposals: &[Proposal],
        wasted: &mut Vec<SampleRecord>,
    ) -> Result<MixedSegment, Abort> {
        let mut retries = self.cfg.workflow_retries;
        loop {
            self.ensure_plate()?;
            let wells = self.cursor.peek(proposals.len());
            let part = &proposals[..wells.len()];
            self.ensure_reservoirs(part)?;
            let protocol: Vec<ProtocolEntry> =
                wells.clone().zip(part).map(|(w, p)| ProtocolEntry::new(w, p.ratios)).collect();
            let mut payload = Args::new();
            payload.insert("protocol".into(), serde_json::to_value(&protocol).expect("protocol serializes"));
            let wf = self.workflows.mix.clone();
            let run = self.invoke(&wf, &payload)?;
            let plate_id = self.plate.as_ref().map(|p| p.id.clone()).unwrap_or_default();
            let dispensed = run.output_of("run_protocol").is_some();
            if dispensed {
                self.cursor.consume(wells.len());
            }
            if run.succeeded() {
                let capture = run.output_of("capture").ok_or_else(|| Abort("capture returned no data".into()))?;
                let (colors, vision_error, image_ppm) = match decode_image(capture) {
                    Ok((image, ppm)) => match analyze(&image, &self.scene) {
                        Ok(a) => (wells.clone().map(|w| a.wells[w].color).collect(), None, ppm),
                        Err(e) => (vec![None; wells.len()], Some(e.to_string()), ppm),
                    },
                    Err(e) => (vec![None; wells.len()], Some(e.to_string()), Vec::new()),
                };
                let time = run.steps.last().map_or(run.end, |s| s.end);
                return Ok(MixedSegment { wells, plate_id, colors, vision_error, image_ppm, time });
            }
            let why = run.failed_step().and_then(|s| s.error.clone()).unwrap_or_default();
            if dispensed {
                for (w, p) in wells.clone().zip(part) {
                    let error = Some(format!("workflow {} failed after dispensing: {why}", wf.name));
                    wasted.push(self.sample_record(batch, &plate_id, w, p, None, None, error, run.end));
                }
            }
            if retries == 0 {
                return Err(Abort(format!("workflow {} failed: {why}", wf.name)));
            }
            retries -= 1;
            self.move_plate(locations::CAMERA_NEST)?;
        }
    }

    fn finish(mut self, termination: TerminationReason) -> Result<RunOutcome, AppError> {
        let sim_end_s = self.engine.now();
        let ledger = self.engine.ledger().entries().to_vec();
        let kinds: BTreeMap<String, DeviceKind> =
            self.engine.workcell().modules.iter().map(|m| (m.name.clone(), m.kind)).collect();
        let steps: Vec<_> = self.runs.iter().flat_map(|r| r.steps.iter().cloned()).collect();
        let colors = self.samples.iter().filter(|s| s.valid).count();
        let metrics = compute_from(&ledger, &steps, &kinds, colors, sim_end_s).ok();
        let run_dir = self.writer.as_ref().map(|w| w.dir().to_path_buf());
        if let Some(w) = &mut self.writer {
            let state = if termination.by_criteria() { RunState::Completed } else { RunState::Aborted };
            let metrics_json = metrics.as_ref().map(|m| serde_json::to_value(m).expect("metrics serialize"));
            w.finish(state, &termination.to_string(), sim_end_s, metrics_json.as_ref())?;
        }
        Ok(RunOutcome {
            termination,
            samples: self.samples,
            history: self.history,
            trace: self.trace,
            metrics,
            workflow_runs: self.runs,
            ledger,
            publish_events: self.publish_events,
            refills: self.refills,
            sim_end_s,
            run_dir,
        })
    }
}
