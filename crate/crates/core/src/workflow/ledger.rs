//! Append-only record of every command attempt.

use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    /// Position in the ledger, from 0.
    pub seq: u64,
    pub command_id: String,
    pub workflow: String,
    pub step: String,
    pub module: String,
    pub action: String,
    /// 1 for the first delivery of a command, 2 for its first retry, ...
    pub attempt: u32,
    /// `succeeded`, `failed`, `busy` or `transport_error`.
    pub outcome: String,
    /// Simulated time at which the attempt concluded.
    pub sim_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LedgerEntry {
    pub fn succeeded(&self) -> bool {
        self.outcome == "succeeded"
    }
}

/// In-memory ledger, optionally mirrored line by line to a JSONL file.
#[derive(Debug, Default)]
pub struct CommandLedger {
    entries: Vec<LedgerEntry>,
    file: Option<(PathBuf, File)>,
}

impl CommandLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mirrors every future entry to `path`, which is truncated.
    pub fn with_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(&path)?;
        Ok(Self { entries: Vec::new(), file: Some((path, file)) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Assigns the next sequence number and appends.
    pub fn push(&mut self, mut entry: LedgerEntry) -> io::Result<()> {
        entry.seq = self.entries.len() as u64;
        if let Some((_, f)) = &mut self.file {
            let mut line = serde_json::to_vec(&entry).map_err(io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn succeeded_count(&self) -> usize {
        self.entries.iter().filter(|e| e.succeeded()).count()
    }

    pub fn count_outcome(&self, outcome: &str) -> usize {
        self.entries.iter().filter(|e| e.outcome == outcome).count()
    }
}

pub fn read_ledger(path: impl AsRef<Path>) -> io::Result<Vec<LedgerEntry>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(outcome: &str, t: f64) -> LedgerEntry {
        LedgerEntry {
            seq: 99,
            command_id: "cmd-000001".into(),
            workflow: "wf".into(),
            step: "s".into(),
            module: "ot2".into(),
            action: "run_protocol".into(),
            attempt: 1,
            outcome: outcome.into(),
            sim_time_s: t,
            error: None,
        }
    }

    #[test]
    fn file_mirror_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut ledger = CommandLedger::with_file(&path).unwrap();
        ledger.push(entry("busy", 0.0)).unwrap();
        ledger.push(entry("succeeded", 5.0)).unwrap();
        let back = read_ledger(&path).unwrap();
        assert_eq!(back, ledger.entries());
        assert_eq!(back.iter().map(|e| e.seq).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(ledger.succeeded_count(), 1);
        assert_eq!(ledger.count_outcome("busy"), 1);
    }
}
