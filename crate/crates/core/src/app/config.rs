//! Experiment and sweep configuration files.

use crate::color::{ColorRgb, Metric};
use crate::devices::FaultPlan;
use crate::optimizer::{initial_population, SolverConfig};
use crate::protocol::RetryPolicy;
use crate::scene::WELL_COUNT;
use crate::workflow::{read_yaml, ClockMode, ConfigError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Termination {
    /// Stop once the best score is at or below this; `null` disables it.
    pub epsilon: Option<f64>,
    /// Cap on evaluated samples below `total_samples`.
    pub max_samples: Option<usize>,
}

impl Default for Termination {
    fn default() -> Self {
        Self { epsilon: Some(5.0), max_samples: None }
    }
}

/// How the app reaches the instruments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    /// Simulated modules called directly.
    #[default]
    InProcess,
    /// Simulated modules served on ephemeral loopback ports.
    TcpLoopback,
    /// Already running servers at the workcell file's endpoints.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Workcell file; the bundled one when absent.
    pub workcell: Option<PathBuf>,
    /// Directory holding the four workflow files; the bundled ones when absent.
    pub workflows: Option<PathBuf>,
    /// Run store root; nothing is written when absent.
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_id: String,
    /// Defaults to the next free `run-NNNN`.
    pub run_id: Option<String>,
    pub target: ColorRgb,
    pub total_samples: usize,
    pub batch_size: usize,
    /// `batch_size` and `rng_seed` here are overridden by the fields above.
    pub solver: SolverConfig,
    pub metric: Metric,
    pub termination: Termination,
    /// Seeds the solver and the camera.
    pub seed: u64,
    /// Overrides the workcell's camera noise.
    pub camera_noise_sigma: Option<f64>,
    pub faults: FaultPlan,
    /// Busy handling for single commands.
    pub retry: RetryPolicy,
    /// Reruns of a failed workflow before the run aborts.
    pub workflow_retries: u32,
    pub publish_images: bool,
    pub transport: TransportMode,
    pub clock: ClockMode,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment_id: "colorpicker".into(),
            run_id: None,
            target: ColorRgb::new(120, 120, 120),
            total_samples: 128,
            batch_size: 1,
            solver: SolverConfig::default(),
            metric: Metric::Euclidean,
            termination: Termination::default(),
            seed: 0,
            camera_noise_sigma: None,
            faults: FaultPlan::default(),
            retry: RetryPolicy::default(),
            workflow_retries: 1,
            publish_images: true,
            transport: TransportMode::InProcess,
            clock: ClockMode::Virtual,
            paths: Paths::default(),
        }
    }
}

impl ExperimentConfig {
    /// The solver settings actually used.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig { batch_size: self.batch_size, rng_seed: self.seed, ..self.solver.clone() }
    }

    /// Samples to evaluate before stopping.
    pub fn sample_limit(&self) -> usize {
        self.termination.max_samples.map_or(self.total_samples, |m| m.min(self.total_samples))
    }

    pub fn validate(&self) -> Result<(), String> {
        let b = self.batch_size;
        if !(1..=WELL_COUNT).contains(&b) {
            return Err(format!("batch_size must be between 1 and {WELL_COUNT}, got {b}"));
        }
        if self.total_samples < b {
            return Err(format!("total_samples ({}) must be at least batch_size ({b})", self.total_samples));
        }
        if let Some(e) = self.termination.epsilon {
            if !(e >= 0.0) {
                return Err(format!("termination.epsilon must be non-negative, got {e}"));
            }
        }
        if let Some(s) = self.camera_noise_sigma {
            if !(s >= 0.0) {
                return Err(format!("camera_noise_sigma must be non-negative, got {s}"));
            }
        }
        if let ClockMode::Realtime { scale } = self.clock {
            if !(scale > 0.0) {
                return Err(format!("realtime scale must be positive, got {scale}"));
            }
        }
        self.faults.validate()?;
        initial_population(&self.solver_config()).map_err(|e| format!("solver: {e}"))?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.workcell, &mut self.paths.workflows, &mut self.paths.runs].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Loads an experiment file. Relative paths inside it are taken relative
/// to the file's directory.
pub fn load_experiment(path: impl AsRef<Path>) -> Result<ExperimentConfig, ConfigError> {
    let path = path.as_ref();
    let mut cfg: ExperimentConfig = read_yaml(path)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.validate().map_err(|message| ConfigError::Schema { path: path.to_path_buf(), message })?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub batch_sizes: Vec<usize>,
    /// Explicit seeds; when empty, `repeats` consecutive seeds from `first_seed`.
    pub seeds: Vec<u64>,
    pub repeats: usize,
    pub first_seed: u64,
    /// Directory for the trace CSV, chart spec and report.
    pub output: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            base: ExperimentConfig { termination: Termination { epsilon: None, max_samples: None }, ..Default::default() },
            batch_sizes: vec![1, 2, 4, 8, 16, 32, 64],
            seeds: Vec::new(),
            repeats: 20,
            first_seed: 1,
            output: None,
        }
    }
}

impl SweepConfig {
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.repeats as u64).map(|i| self.first_seed + i).collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_sizes.is_empty() || self.seed_list().is_empty() {
            return Err("a sweep needs at least one batch size and one seed".into());
        }
        for &b in &self.batch_sizes {
            ExperimentConfig { batch_size: b, ..self.base.clone() }.validate().map_err(|e| format!("B={b}: {e}"))?;
        }
        Ok(())
    }
}

pub fn load_sweep(path: impl AsRef<Path>) -> Result<SweepConfig, ConfigError> {
    let path = path.as_ref();
    let mut cfg: SweepConfig = read_yaml(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cfg.base.resolve_paths(base);
    if let Some(o) = &mut cfg.output {
        if o.is_relative() {
            *o = base.join(&*o);
        }
    }
    cfg.validate().map_err(|message| ConfigError::Schema { path: path.to_path_buf(), message })?;
    Ok(cfg)
}
