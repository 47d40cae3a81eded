//! Declarative workcell and workflow files.

use crate::color::DyeSet;
use crate::devices::{
    locations, CameraConfig, DeviceKind, Durations, FaultPlan, Ot2Config, SciclopsConfig, SimulationConfig,
};
use crate::protocol::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
}

impl ConfigError {
    fn schema(path: &Path, message: impl Into<String>) -> Self {
        ConfigError::Schema { path: path.to_path_buf(), message: message.into() }
    }
}

/// Parses YAML text; errors carry the 1-based line and column.
pub fn parse_yaml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    serde_yaml::from_str(text).map_err(|e| {
        let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
        ConfigError::Parse { path: path.to_path_buf(), line, column, message: e.to_string() }
    })
}

pub fn read_yaml<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_yaml(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleEntry {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: DeviceKind,
    /// `host:port` of the module server; required only for TCP transport.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Device settings, interpreted according to `type`.
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub config: Args,
}

fn default_locations() -> Vec<String> {
    use locations::*;
    [EXCHANGE, OT2_DECK, CAMERA_NEST, TRASH].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkcellConfig {
    pub name: String,
    pub modules: Vec<ModuleEntry>,
    #[serde(default = "default_locations")]
    pub locations: Vec<String>,
    #[serde(default)]
    pub dyes: DyeSet,
    #[serde(default)]
    pub durations: Durations,
}

impl WorkcellConfig {
    pub fn from_yaml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = parse_yaml(text, path)?;
        cfg.check(path)?;
        Ok(cfg)
    }

    fn check(&self, path: &Path) -> Result<(), ConfigError> {
        if self.modules.is_empty() {
            return Err(ConfigError::schema(path, "modules: at least one module is required"));
        }
        let mut seen = BTreeSet::new();
        for m in &self.modules {
            if !seen.insert(m.name.as_str()) {
                return Err(ConfigError::schema(path, format!("modules: duplicate module name `{}`", m.name)));
            }
            self.device_config(m).map_err(|e| ConfigError::schema(path, e))?;
        }
        let known: BTreeSet<&str> = self.locations.iter().map(String::as_str).collect();
        for required in default_locations() {
            if !known.contains(required.as_str()) {
                return Err(ConfigError::schema(path, format!("locations: missing `{required}`")));
            }
        }
        self.dyes.validate().map_err(|e| ConfigError::schema(path, format!("dyes: {e}")))?;
        Ok(())
    }

    pub fn module(&self, name: &str) -> Option<&ModuleEntry> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn without_module(&self, name: &str) -> Self {
        let mut out = self.clone();
        out.modules.retain(|m| m.name != name);
        out
    }

    /// Typed settings of one module entry.
    fn device_config(&self, m: &ModuleEntry) -> Result<DeviceSettings, String> {
        fn typed<T: DeserializeOwned>(m: &ModuleEntry) -> Result<T, String> {
            serde_json::from_value(Value::Object(m.config.clone()))
                .map_err(|e| format!("modules[{}].config: {e}", m.name))
        }
        Ok(match m.kind {
            DeviceKind::Sciclops => DeviceSettings::Sciclops(typed(m)?),
            DeviceKind::Ot2 => {
                if m.config.contains_key("dyes") {
                    return Err(format!("modules[{}].config: dyes are set at workcell level", m.name));
                }
                DeviceSettings::Ot2(typed(m)?)
            }
            DeviceKind::Camera => DeviceSettings::Camera(typed(m)?),
            DeviceKind::Pf400 | DeviceKind::Barty => {
                if let Some(key) = m.config.keys().next() {
                    return Err(format!("modules[{}].config: unknown field `{key}`", m.name));
                }
                DeviceSettings::None
            }
        })
    }

    /// Simulator settings for this workcell. When several modules share a
    /// type, the first one's settings apply to all of them.
    pub fn simulation(&self, faults: FaultPlan) -> SimulationConfig {
        let mut sim = SimulationConfig { durations: self.durations.clone(), faults, ..Default::default() };
        let mut done = BTreeSet::new();
        for m in &self.modules {
            if !done.insert(m.kind) {
                continue;
            }
            match self.device_config(m).expect("checked at load") {
                DeviceSettings::Sciclops(c) => sim.sciclops = c,
                DeviceSettings::Ot2(c) => sim.ot2 = c,
                DeviceSettings::Camera(c) => sim.camera = c,
                DeviceSettings::None => {}
            }
        }
        sim.ot2.dyes = self.dyes.clone();
        sim
    }
}

enum DeviceSettings {
    Sciclops(SciclopsConfig),
    Ot2(Ot2Config),
    Camera(CameraConfig),
    None,
}

pub fn load_workcell(path: impl AsRef<Path>) -> Result<WorkcellConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    WorkcellConfig::from_yaml(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub name: String,
    pub module: String,
    pub action: String,
    #[serde(default)]
    pub args: Args,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkflowSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub flowdef: Vec<StepSpec>,
}

/// A `${name}` reference that could not be resolved or parsed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlaceholderError {
    #[error("unterminated placeholder in `{0}`")]
    Unterminated(String),
    #[error("invalid placeholder name `{0}`")]
    BadName(String),
    #[error("payload has no value for `${{{0}}}`")]
    Missing(String),
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Splits `text` into literal and placeholder pieces.
fn pieces(text: &str) -> Result<Vec<Piece<'_>>, PlaceholderError> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        if start > 0 {
            out.push(Piece::Literal(&rest[..start]));
        }
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| PlaceholderError::Unterminated(text.to_string()))?;
        let name = &after[..end];
        if !valid_name(name) {
            return Err(PlaceholderError::BadName(name.to_string()));
        }
        out.push(Piece::Var(name));
        rest = &after[end + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Literal(rest));
    }
    Ok(out)
}

enum Piece<'a> {
    Literal(&'a str),
    Var(&'a str),
}

fn collect_names(value: &Value, out: &mut BTreeSet<String>) -> Result<(), PlaceholderError> {
    match value {
        Value::String(s) => {
            for p in pieces(s)? {
                if let Piece::Var(n) = p {
                    out.insert(n.to_string());
                }
            }
        }
        Value::Array(items) => items.iter().try_for_each(|v| collect_names(v, out))?,
        Value::Object(map) => map.values().try_for_each(|v| collect_names(v, out))?,
        _ => {}
    }
    Ok(())
}

/// A string that is exactly one placeholder takes the payload value as is,
/// of any JSON type; placeholders inside longer strings are spliced in as text.
fn substitute(value: &Value, payload: &Args) -> Result<Value, PlaceholderError> {
    Ok(match value {
        Value::String(s) => {
            let parts = pieces(s)?;
            if let [Piece::Var(name)] = parts.as_slice() {
                return payload.get(*name).cloned().ok_or_else(|| PlaceholderError::Missing(name.to_string()));
            }
            let mut text = String::new();
            for p in parts {
                match p {
                    Piece::Literal(l) => text.push_str(l),
                    Piece::Var(name) => match payload.get(name) {
                        Some(Value::String(v)) => text.push_str(v),
                        Some(v) => text.push_str(&v.to_string()),
                        None => return Err(PlaceholderError::Missing(name.to_string())),
                    },
                }
            }
            Value::String(text)
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, payload)).collect::<Result<_, _>>()?),
        Value::Object(map) => Value::Object(
            map.iter().map(|(k, v)| Ok((k.clone(), substitute(v, payload)?))).collect::<Result<_, _>>()?,
        ),
        other => other.clone(),
    })
}

impl StepSpec {
    pub fn new(name: &str, module: &str, action: &str, args: Value) -> Self {
        let args = match args {
            Value::Object(m) => m,
            _ => Args::new(),
        };
        Self { name: name.into(), module: module.into(), action: action.into(), args }
    }

    pub fn resolve(&self, payload: &Args) -> Result<Args, PlaceholderError> {
        self.args.iter().map(|(k, v)| Ok((k.clone(), substitute(v, payload)?))).collect()
    }
}

impl WorkflowSpec {
    pub fn from_yaml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let wf: Self = parse_yaml(text, path)?;
        wf.check().map_err(|m| ConfigError::schema(path, m))?;
        Ok(wf)
    }

    fn check(&self) -> Result<(), String> {
        if self.flowdef.is_empty() {
            return Err("flowdef: a workflow needs at least one step".into());
        }
        let mut seen = BTreeSet::new();
        for (i, s) in self.flowdef.iter().enumerate() {
            if !seen.insert(s.name.as_str()) {
                return Err(format!("flowdef[{i}]: duplicate step name `{}`", s.name));
            }
            for v in s.args.values() {
                collect_names(v, &mut BTreeSet::new()).map_err(|e| format!("flowdef[{i}].args: {e}"))?;
            }
        }
        Ok(())
    }

    /// Names of all placeholders, in sorted order.
    pub fn placeholders(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for s in &self.flowdef {
            for v in s.args.values() {
                let _ = collect_names(v, &mut out);
            }
        }
        out
    }

    pub fn modules(&self) -> BTreeSet<&str> {
        self.flowdef.iter().map(|s| s.module.as_str()).collect()
    }
}

pub fn load_workflow(path: impl AsRef<Path>) -> Result<WorkflowSpec, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    WorkflowSpec::from_yaml(&text, path)
}

/// Why one step of a workflow cannot run on a workcell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub step: String,
    pub reason: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step `{}`: {}", self.step, self.reason)
    }
}

/// Checks that every step names a module of the workcell. Actions are
/// checked against live modules by the engine.
pub fn check_modules(workflow: &WorkflowSpec, workcell: &WorkcellConfig) -> Vec<ValidationIssue> {
    workflow
        .flowdef
        .iter()
        .filter(|s| workcell.module(&s.module).is_none())
        .map(|s| ValidationIssue {
            step: s.name.clone(),
            reason: format!("module `{}` is not part of workcell `{}`", s.module, workcell.name),
        })
        .collect()
}

/// Workflows keyed by name.
pub type WorkflowSet = BTreeMap<String, WorkflowSpec>;
