//! Local run store: one directory per run plus a JSONL index.
//!
//! ```text
//! <root>/index.jsonl
//! <root>/<experiment>/<run>/manifest.json
//!                          /samples.jsonl
//!                          /ledger.jsonl
//!                          /metrics.json
//!                          /steps/<workflow>_<seq>.json
//!                          /images/batch_<k>.ppm
//! ```
//!
//! `manifest.json` and `index.jsonl` are only ever replaced by rename, so a
//! reader sees either the previous or the next version. `samples.jsonl` is
//! append-only; the manifest records how many of its bytes are committed.

use crate::color::{ColorRgb, RatioVector};
use crate::devices::DeviceKind;
use crate::optimizer::Provenance;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const INDEX_FILE: &str = "index.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const STEPS_DIR: &str = "steps";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("run id `{0}` exists in several experiments; use <experiment>/<run>")]
    Ambiguous(String),
    #[error("run {0} already exists")]
    AlreadyExists(String),
    #[error("batch {batch} was already published with different content")]
    Conflict { batch: usize },
    #[error("batch {got} published out of order; expected {expected}")]
    OutOfOrder { expected: usize, got: usize },
    #[error("invalid id `{0}`: use letters, digits, `-`, `_` or `.`")]
    InvalidId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// One well's worth of published data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    /// Position among all wells consumed by the run.
    pub sample: usize,
    pub batch: usize,
    pub plate_id: String,
    pub well: String,
    pub ratios: RatioVector,
    pub provenance: Provenance,
    pub measured: Option<ColorRgb>,
    pub score: Option<f64>,
    /// Best valid score of the run up to and including this sample.
    pub best_so_far: Option<f64>,
    pub valid: bool,
    /// Simulated time of the capture that measured the well.
    pub sim_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub batch: usize,
    pub sim_time_s: f64,
    /// Valid samples so far.
    pub samples: usize,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRef {
    pub batch: usize,
    pub samples: usize,
    pub images: Vec<String>,
    pub steps: Vec<String>,
    pub best_score: Option<f64>,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment_id: String,
    pub run_id: String,
    pub created_unix_s: u64,
    pub status: RunState,
    #[serde(default)]
    pub termination: Option<String>,
    pub config: serde_json::Value,
    /// Module name to instrument type, for classifying step durations.
    pub modules: BTreeMap<String, DeviceKind>,
    pub total_samples: usize,
    pub batch_size: usize,
    pub sample_count: usize,
    /// Committed length of `samples.jsonl`.
    pub samples_bytes: u64,
    pub batches: Vec<BatchRef>,
    pub trace: Vec<TracePoint>,
    pub best_score: Option<f64>,
    pub sim_start_s: f64,
    pub sim_end_s: f64,
    pub ledger: String,
    #[serde(default)]
    pub metrics: Option<String>,
}

impl RunManifest {
    pub fn new(experiment_id: &str, run_id: &str, config: serde_json::Value, total_samples: usize, batch_size: usize) -> Self {
        Self {
            experiment_id: experiment_id.into(),
            run_id: run_id.into(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            status: RunState::Running,
            termination: None,
            config,
            modules: BTreeMap::new(),
            total_samples,
            batch_size,
            sample_count: 0,
            samples_bytes: 0,
            batches: Vec::new(),
            trace: Vec::new(),
            best_score: None,
            sim_start_s: 0.0,
            sim_end_s: 0.0,
            ledger: LEDGER_FILE.into(),
            metrics: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub run_id: String,
    pub experiment_id: String,
    pub timestamp: u64,
    pub n: usize,
    pub b: usize,
    pub samples: usize,
    pub best_score: Option<f64>,
    pub status: RunState,
}

impl IndexEntry {
    fn of(m: &RunManifest) -> Self {
        Self {
            run_id: m.run_id.clone(),
            experiment_id: m.experiment_id.clone(),
            timestamp: m.created_unix_s,
            n: m.total_samples,
            b: m.batch_size,
            samples: m.sample_count,
            best_score: m.best_score,
            status: m.status,
        }
    }
}

/// Full detail of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub manifest: RunManifest,
    pub samples: Vec<SampleRecord>,
}

/// Experiment-level view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: String,
    pub runs: Vec<IndexEntry>,
    pub total_samples: usize,
}

/// Data of one batch, ready to publish.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPublication {
    pub batch: usize,
    pub samples: Vec<SampleRecord>,
    pub step_files: Vec<String>,
    /// Binary PPM bytes of each capture of the batch.
    pub images: Vec<Vec<u8>>,
    pub best_score: Option<f64>,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PublishOutcome {
    Appended,
    AlreadyPublished,
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("records serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StoreError::NotFound(path.display().to_string()),
        _ => StoreError::Io { path: path.to_path_buf(), source: e },
    })?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

fn sample_lines(samples: &[SampleRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in samples {
        serde_json::to_writer(&mut out, s).expect("samples serialize");
        out.push(b'\n');
    }
    out
}

pub fn read_samples(path: &Path, committed_bytes: Option<u64>) -> Result<Vec<SampleRecord>, StoreError> {
    let mut bytes = fs::read(path).map_err(io_err(path))?;
    if let Some(n) = committed_bytes {
        bytes.truncate(n as usize);
    }
    let text = String::from_utf8(bytes).map_err(|e| StoreError::Corrupt { path: path.into(), message: e.to_string() })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Corrupt { path: path.into(), message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, experiment_id: &str, run_id: &str) -> PathBuf {
        self.root.join(experiment_id).join(run_id)
    }

    /// First unused `run-NNNN` id of an experiment.
    pub fn next_run_id(&self, experiment_id: &str) -> String {
        (1..)
            .map(|i| format!("run-{i:04}"))
            .find(|id| !self.run_dir(experiment_id, id).exists())
            .expect("unbounded")
    }

    pub fn create_run(&self, manifest: RunManifest) -> Result<RunWriter, StoreError> {
        check_id(&manifest.experiment_id)?;
        check_id(&manifest.run_id)?;
        let dir = self.run_dir(&manifest.experiment_id, &manifest.run_id);
        if dir.exists() {
            return Err(StoreError::AlreadyExists(format!("{}/{}", manifest.experiment_id, manifest.run_id)));
        }
        for sub in [STEPS_DIR, IMAGES_DIR] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let samples = dir.join(SAMPLES_FILE);
        fs::write(&samples, b"").map_err(io_err(&samples))?;
        let writer = RunWriter { store: self.clone(), dir, manifest };
        writer.commit()?;
        Ok(writer)
    }

    pub fn list(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let path = self.root.join(INDEX_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Corrupt { path: path.clone(), message: e.to_string() }))
            .collect()
    }

    fn write_index(&self, entries: &[IndexEntry]) -> Result<(), StoreError> {
        let mut bytes = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut bytes, e).expect("index serializes");
            bytes.push(b'\n');
        }
        write_atomic(&self.root.join(INDEX_FILE), &bytes)
    }

    /// Replaces (or inserts) the entry of one run, keeping the index sorted
    /// by experiment, then run id.
    fn upsert_index(&self, entry: IndexEntry) -> Result<(), StoreError> {
        let mut entries = self.list()?;
        entries.retain(|e| !(e.experiment_id == entry.experiment_id && e.run_id == entry.run_id));
        entries.push(entry);
        entries.sort_by(|a, b| (&a.experiment_id, &a.run_id).cmp(&(&b.experiment_id, &b.run_id)));
        self.write_index(&entries)
    }

    /// Rebuilds the index from the manifests on disk.
    pub fn rebuild_index(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let mut entries = Vec::new();
        let mut experiments: Vec<PathBuf> = dir_entries(&self.root)?;
        experiments.sort();
        for exp in experiments {
            let mut runs = dir_entries(&exp)?;
            runs.sort();
            for run in runs {
                let path = run.join(MANIFEST_FILE);
                if path.exists() {
                    entries.push(IndexEntry::of(&read_json::<RunManifest>(&path)?));
                }
            }
        }
        entries.sort_by(|a, b| (&a.experiment_id, &a.run_id).cmp(&(&b.experiment_id, &b.run_id)));
        self.write_index(&entries)?;
        Ok(entries)
    }

    pub fn query_summary(&self, experiment_id: &str) -> Result<ExperimentSummary, StoreError> {
        let runs: Vec<IndexEntry> = self.list()?.into_iter().filter(|e| e.experiment_id == experiment_id).collect();
        if runs.is_empty() {
            return Err(StoreError::NotFound(format!("experiment {experiment_id}")));
        }
        let total_samples = runs.iter().map(|r| r.samples).sum();
        Ok(ExperimentSummary { experiment_id: experiment_id.into(), runs, total_samples })
    }

    /// Resolves `run` or `experiment/run` to a run directory.
    pub fn locate(&self, id: &str) -> Result<PathBuf, StoreError> {
        if let Some((exp, run)) = id.split_once('/') {
            let dir = self.run_dir(exp, run);
            return if dir.join(MANIFEST_FILE).exists() { Ok(dir) } else { Err(StoreError::NotFound(format!("run {id}"))) };
        }
        let matches: Vec<IndexEntry> = self.list()?.into_iter().filter(|e| e.run_id == id).collect();
        match matches.as_slice() {
            [] => Err(StoreError::NotFound(format!("run {id}"))),
            [e] => Ok(self.run_dir(&e.experiment_id, &e.run_id)),
            _ => Err(StoreError::Ambiguous(id.to_string())),
        }
    }

    /// The manifest plus every committed sample.
    pub fn query_run(&self, id: &str) -> Result<RunRecord, StoreError> {
        let dir = self.locate(id)?;
        load_run(&dir)
    }
}

pub fn load_run(dir: &Path) -> Result<RunRecord, StoreError> {
    let manifest: RunManifest = read_json(&dir.join(MANIFEST_FILE))?;
    let samples = read_samples(&dir.join(SAMPLES_FILE), Some(manifest.samples_bytes))?;
    Ok(RunRecord { manifest, samples })
}

fn dir_entries(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if entry.file_type().map_err(io_err(dir))?.is_dir() {
            out.push(entry.path());
        }
    }
    Ok(out)
}

/// Single writer of one run directory.
pub struct RunWriter {
    store: RunStore,
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn steps_dir(&self) -> PathBuf {
        self.dir.join(STEPS_DIR)
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.dir.join(LEDGER_FILE)
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Replaces the manifest, then the run's index entry.
    fn commit(&self) -> Result<(), StoreError> {
        write_json_atomic(&self.dir.join(MANIFEST_FILE), &self.manifest)?;
        self.store.upsert_index(IndexEntry::of(&self.manifest))
    }

    pub fn set_modules(&mut self, modules: BTreeMap<String, DeviceKind>) -> Result<(), StoreError> {
        self.manifest.modules = modules;
        self.commit()
    }

    /// Publishes batch `k`, which must be the next batch or an identical
    /// copy of one already published.
    pub fn publish_batch(&mut self, p: &BatchPublication) -> Result<PublishOutcome, StoreError> {
        let expected = self.manifest.batches.len();
        let images: Vec<String> = (0..p.images.len())
            .map(|j| if j == 0 { format!("{IMAGES_DIR}/batch_{}.ppm", p.batch) } else { format!("{IMAGES_DIR}/batch_{}_{j}.ppm", p.batch) })
            .collect();
        let reference = BatchRef {
            batch: p.batch,
            samples: p.samples.len(),
            images: images.clone(),
            steps: p.step_files.iter().map(|f| format!("{STEPS_DIR}/{f}")).collect(),
            best_score: p.best_score,
            sim_time_s: p.sim_time_s,
        };
        if p.batch < expected {
            return if self.manifest.batches[p.batch] == reference {
                Ok(PublishOutcome::AlreadyPublished)
            } else {
                Err(StoreError::Conflict { batch: p.batch })
            };
        }
        if p.batch > expected {
            return Err(StoreError::OutOfOrder { expected, got: p.batch });
        }
        for (name, bytes) in images.iter().zip(&p.images) {
            write_atomic(&self.dir.join(name), bytes)?;
        }
        for f in &reference.steps {
            let path = self.dir.join(f);
            if !path.exists() {
                return Err(StoreError::NotFound(path.display().to_string()));
            }
        }

        let lines = sample_lines(&p.samples);
        let path = self.dir.join(SAMPLES_FILE);
        let on_disk = fs::metadata(&path).map_err(io_err(&path))?.len();
        let committed = self.manifest.samples_bytes;
        if on_disk == committed {
            let mut f = OpenOptions::new().append(true).open(&path).map_err(io_err(&path))?;
            f.write_all(&lines).map_err(io_err(&path))?;
            f.sync_data().map_err(io_err(&path))?;
        } else {
            // lines written by an attempt whose manifest never landed
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if bytes.len() as u64 != committed + lines.len() as u64 || bytes[committed as usize..] != lines[..] {
                return Err(StoreError::Corrupt {
                    path,
                    message: format!("{on_disk} bytes on disk but {committed} committed"),
                });
            }
        }

        let m = &mut self.manifest;
        m.samples_bytes = committed + lines.len() as u64;
        m.sample_count += p.samples.len();
        m.trace.push(TracePoint {
            batch: p.batch,
            sim_time_s: p.sim_time_s,
            samples: m.trace.last().map_or(0, |t| t.samples) + p.samples.iter().filter(|s| s.valid).count(),
            best_score: p.best_score,
        });
        m.best_score = p.best_score;
        m.sim_end_s = p.sim_time_s;
        m.batches.push(reference);
        self.commit()?;
        Ok(PublishOutcome::Appended)
    }

    /// Marks the run finished and records where its metrics live.
    pub fn finish(
        &mut self,
        status: RunState,
        termination: &str,
        sim_end_s: f64,
        metrics: Option<&serde_json::Value>,
    ) -> Result<(), StoreError> {
        if let Some(m) = metrics {
            write_json_atomic(&self.dir.join(METRICS_FILE), m)?;
            self.manifest.metrics = Some(METRICS_FILE.into());
        }
        self.manifest.status = status;
        self.manifest.termination = Some(termination.into());
        self.manifest.sim_end_s = sim_end_s;
        self.commit()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: usize, batch: usize) -> SampleRecord {
        SampleRecord {
            sample: i,
            batch,
            plate_id: "plate-0001".into(),
            well: crate::scene::well_name(i),
            ratios: RatioVector::new(0.1, 0.2, 0.0, 0.3).unwrap(),
            provenance: Provenance::Initial,
            measured: Some(ColorRgb::new(120, 121, 122)),
            score: Some(3.0),
            best_so_far: Some(3.0),
            valid: true,
            sim_time_s: 100.0 * batch as f64,
            error: None,
        }
    }

    fn publication(batch: usize, per_batch: usize, steps_dir: &Path) -> BatchPublication {
        let step = format!("cp_wf_mix_colors_{batch:04}.json");
        fs::write(steps_dir.join(&step), b"{}").unwrap();
        BatchPublication {
            batch,
            samples: (0..per_batch).map(|j| sample(batch * per_batch + j, batch)).collect(),
            step_files: vec![step],
            images: vec![b"P6\n1 1\n255\n\x01\x02\x03".to_vec()],
            best_score: Some(3.0),
            sim_time_s: 100.0 * batch as f64,
        }
    }

    fn new_run(store: &RunStore, exp: &str, run: &str) -> RunWriter {
        store.create_run(RunManifest::new(exp, run, serde_json::json!({}), 15, 15)).unwrap()
    }

    #[test]
    fn publish_is_append_only_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let mut w = new_run(&store, "exp", "run-0001");
        let samples_path = w.dir().join(SAMPLES_FILE);
        let mut previous = Vec::new();
        for k in 0..4 {
            let p = publication(k, 2, &w.steps_dir());
            assert_eq!(w.publish_batch(&p).unwrap(), PublishOutcome::Appended);
            let now = fs::read(&samples_path).unwrap();
            assert!(now.starts_with(&previous));
            previous = now;
        }
        let again = publication(2, 2, &w.steps_dir());
        assert_eq!(w.publish_batch(&again).unwrap(), PublishOutcome::AlreadyPublished);
        assert_eq!(fs::read(&samples_path).unwrap(), previous);
        let mut changed = again.clone();
        changed.best_score = Some(1.0);
        assert!(matches!(w.publish_batch(&changed), Err(StoreError::Conflict { batch: 2 })));
        assert!(matches!(w.publish_batch(&publication(9, 2, &w.steps_dir())), Err(StoreError::OutOfOrder { .. })));

        let record = store.query_run("run-0001").unwrap();
        assert_eq!(record.samples.len(), 8);
        assert_eq!(record.samples.len(), record.manifest.sample_count);
        assert_eq!(record.manifest.batches.len(), 4);
        assert!(w.dir().join("images/batch_3.ppm").exists());
    }

    #[test]
    fn interrupted_publish_keeps_previous_manifest_and_recovers() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let mut w = new_run(&store, "exp", "r");
        w.publish_batch(&publication(0, 3, &w.steps_dir())).unwrap();
        let before = fs::read(w.dir().join(MANIFEST_FILE)).unwrap();

        // a crash after the samples append and the temp manifest, before the rename
        let p1 = publication(1, 3, &w.steps_dir());
        let mut f = OpenOptions::new().append(true).open(w.dir().join(SAMPLES_FILE)).unwrap();
        f.write_all(&sample_lines(&p1.samples)).unwrap();
        fs::write(w.dir().join("manifest.json.tmp"), b"{ half a manif").unwrap();
        assert_eq!(fs::read(w.dir().join(MANIFEST_FILE)).unwrap(), before);
        assert_eq!(store.query_run("exp/r").unwrap().samples.len(), 3);

        // republishing completes the batch without duplicating lines
        assert_eq!(w.publish_batch(&p1).unwrap(), PublishOutcome::Appended);
        let record = store.query_run("exp/r").unwrap();
        assert_eq!(record.samples.len(), 6);
        assert_eq!(read_samples(&w.dir().join(SAMPLES_FILE), None).unwrap().len(), 6);
    }

    #[test]
    fn summary_and_index_rebuild() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        for _ in 0..12 {
            let id = store.next_run_id("portal_demo");
            let mut w = new_run(&store, "portal_demo", &id);
            w.publish_batch(&publication(0, 15, &w.steps_dir())).unwrap();
            w.finish(RunState::Completed, "samples exhausted", 1500.0, Some(&serde_json::json!({"ccwh": 9}))).unwrap();
        }
        new_run(&store, "other", "run-0001");
        let summary = store.query_summary("portal_demo").unwrap();
        assert_eq!(summary.runs.len(), 12);
        assert_eq!(summary.total_samples, 180);
        assert!(matches!(store.query_run("run-0001"), Err(StoreError::Ambiguous(_))));
        assert!(matches!(store.query_run("nope"), Err(StoreError::NotFound(_))));
        assert!(matches!(store.query_summary("nope"), Err(StoreError::NotFound(_))));

        let incremental = fs::read(dir.path().join(INDEX_FILE)).unwrap();
        let rebuilt = store.rebuild_index().unwrap();
        assert_eq!(rebuilt.len(), 13);
        assert_eq!(fs::read(dir.path().join(INDEX_FILE)).unwrap(), incremental);
    }

    #[test]
    fn ids_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let m = RunManifest::new("../escape", "r", serde_json::json!({}), 1, 1);
        assert!(matches!(store.create_run(m), Err(StoreError::InvalidId(_))));
        new_run(&store, "e", "r");
        let m = RunManifest::new("e", "r", serde_json::json!({}), 1, 1);
        assert!(matches!(store.create_run(m), Err(StoreError::AlreadyExists(_))));
    }
}
