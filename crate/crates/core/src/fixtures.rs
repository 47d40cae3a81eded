//! Bundled workcell, workflow and experiment files, and the synthetic
//! vision corpus generator.

use crate::app::{ExperimentConfig, StandardWorkflows, SweepConfig};
use crate::color::{mix, ColorRgb, DyeSet};
use crate::devices::render::{render_plate, GroundTruth};
use crate::optimizer::simplex::sample_uniform;
use crate::scene::{Perturbation, SceneConfig, WELL_COUNT};
use crate::workflow::{parse_yaml, WorkcellConfig, WorkflowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const WORKCELL: &str = include_str!("../fixtures/workcell.yaml");
pub const NEWPLATE: &str = include_str!("../fixtures/workflows/cp_wf_newplate.yaml");
pub const MIX_COLORS: &str = include_str!("../fixtures/workflows/cp_wf_mix_colors.yaml");
pub const TRASHPLATE: &str = include_str!("../fixtures/workflows/cp_wf_trashplate.yaml");
pub const REPLENISH: &str = include_str!("../fixtures/workflows/cp_wf_replenish.yaml");
pub const PORTAL_RUN: &str = include_str!("../fixtures/experiments/portal_run.yaml");
pub const BATCH_SWEEP: &str = include_str!("../fixtures/experiments/batch_sweep.yaml");
pub const FLAGSHIP_RUN: &str = include_str!("../fixtures/experiments/flagship_run.yaml");

/// The `fixtures/` directory of the source tree.
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn workcell() -> WorkcellConfig {
    WorkcellConfig::from_yaml(WORKCELL, Path::new("fixtures/workcell.yaml")).expect("bundled workcell is valid")
}

fn workflow(text: &str, name: &str) -> WorkflowSpec {
    WorkflowSpec::from_yaml(text, Path::new(name)).expect("bundled workflow is valid")
}

pub fn workflows() -> StandardWorkflows {
    StandardWorkflows {
        newplate: workflow(NEWPLATE, "cp_wf_newplate.yaml"),
        mix: workflow(MIX_COLORS, "cp_wf_mix_colors.yaml"),
        trashplate: workflow(TRASHPLATE, "cp_wf_trashplate.yaml"),
        replenish: workflow(REPLENISH, "cp_wf_replenish.yaml"),
    }
}

/// One run of the 15-sample portal experiment.
pub fn portal_run() -> ExperimentConfig {
    parse_yaml(PORTAL_RUN, Path::new("portal_run.yaml")).expect("bundled experiment is valid")
}

/// The batch-size sweep: N = 128, B from 1 to 64, 20 seeds.
pub fn batch_sweep() -> SweepConfig {
    parse_yaml(BATCH_SWEEP, Path::new("batch_sweep.yaml")).expect("bundled sweep is valid")
}

/// The flagship single run: N = 128, B = 1.
pub fn flagship_run() -> ExperimentConfig {
    parse_yaml(FLAGSHIP_RUN, Path::new("flagship_run.yaml")).expect("bundled experiment is valid")
}

/// Ground truth stored next to each corpus image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub seed: u64,
    pub noise_sigma: f64,
    /// Color of every well, `null` for empty wells.
    pub wells: Vec<Option<ColorRgb>>,
    pub render: GroundTruth,
}

/// Settings of the synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub scene: SceneConfig,
    pub dyes: DyeSet,
    pub fill_probability: f64,
    pub max_shift_px: f64,
    pub max_rotation_deg: f64,
    pub noise_sigma: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            dyes: DyeSet::default(),
            fill_probability: 0.6,
            max_shift_px: 5.0,
            max_rotation_deg: 2.0,
            noise_sigma: 2.0,
        }
    }
}

/// The `index`-th corpus item: random fills, pose and noise, all derived
/// from `seed` and `index`.
pub fn corpus_item(spec: &CorpusSpec, seed: u64, index: u64) -> (crate::imaging::RgbImage, CorpusTruth) {
    let item_seed = seed ^ index.wrapping_mul(0xD134_2543_DE82_EF95).wrapping_add(index);
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
    let wells: Vec<Option<ColorRgb>> = (0..WELL_COUNT)
        .map(|_| rng.gen_bool(spec.fill_probability).then(|| mix(&sample_uniform(&mut rng), &spec.dyes)))
        .collect();
    let p = Perturbation {
        dx: rng.gen_range(-spec.max_shift_px..=spec.max_shift_px),
        dy: rng.gen_range(-spec.max_shift_px..=spec.max_shift_px),
        angle_deg: rng.gen_range(-spec.max_rotation_deg..=spec.max_rotation_deg),
    };
    let rendered = render_plate(&wells, &spec.scene, p, spec.noise_sigma, rng.gen());
    let truth = CorpusTruth { seed: item_seed, noise_sigma: spec.noise_sigma, wells, render: rendered.truth };
    (rendered.image, truth)
}

/// Writes `count` image / ground-truth pairs, `plate_NNNN.ppm` and
/// `plate_NNNN.json`, into `dir`. The same seed gives the same files.
pub fn generate_vision_corpus(dir: &Path, count: usize, seed: u64) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let spec = CorpusSpec::default();
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let (image, truth) = corpus_item(&spec, seed, i as u64);
        let stem = dir.join(format!("plate_{i:04}"));
        let ppm = stem.with_extension("ppm");
        std::fs::write(&ppm, image.to_ppm())?;
        std::fs::write(stem.with_extension("json"), serde_json::to_vec_pretty(&truth).map_err(std::io::Error::other)?)?;
        images.push(ppm);
    }
    Ok(images)
}
