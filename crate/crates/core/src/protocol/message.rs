use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub type Args = Map<String, Value>;

/// A request for one action on one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Command {
    pub id: String,
    pub module: String,
    pub action: String,
    #[serde(default)]
    pub args: Args,
}

impl Command {
    pub fn new(id: impl Into<String>, module: impl Into<String>, action: impl Into<String>) -> Self {
        Self { id: id.into(), module: module.into(), action: action.into(), args: Args::new() }
    }

    pub fn with_args(mut self, args: Args) -> Self {
        self.args = args;
        self
    }

    pub fn arg(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.args.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Succeeded,
    Failed,
    Busy,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Succeeded => "succeeded",
            Status::Failed => "failed",
            Status::Busy => "busy",
        }
    }
}

/// Key of the simulated action duration inside [`Response::data`].
pub const SIM_DURATION_KEY: &str = "sim_duration_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub id: String,
    pub status: Status,
    #[serde(default)]
    pub data: Args,
    #[serde(default)]
    pub error: Option<String>,
}

impl Response {
    pub fn succeeded(id: &str, mut data: Args, sim_duration_s: f64) -> Self {
        data.insert(SIM_DURATION_KEY.to_string(), Value::from(sim_duration_s));
        Self { id: id.to_string(), status: Status::Succeeded, data, error: None }
    }

    pub fn failed(id: &str, error: impl Into<String>) -> Self {
        Self { id: id.to_string(), status: Status::Failed, data: Args::new(), error: Some(error.into()) }
    }

    pub fn busy(id: &str) -> Self {
        Self { id: id.to_string(), status: Status::Busy, data: Args::new(), error: None }
    }

    pub fn sim_duration_s(&self) -> f64 {
        self.data.get(SIM_DURATION_KEY).and_then(Value::as_f64).unwrap_or(0.0)
    }

    /// Checks the status-dependent invariants.
    pub fn is_well_formed(&self) -> bool {
        match self.status {
            Status::Failed => self.error.is_some(),
            Status::Succeeded => self.sim_duration_s() >= 0.0 && self.data.contains_key(SIM_DURATION_KEY),
            Status::Busy => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModuleStatus {
    Idle,
    Busy,
    Error,
}

/// Self-description returned by the `about` meta-action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct About {
    pub name: String,
    pub model: String,
    pub actions: Vec<String>,
}

impl About {
    pub fn supports(&self, action: &str) -> bool {
        self.actions.iter().any(|a| a == action)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleState {
    pub status: ModuleStatus,
    pub about: About,
}

/// Meta-actions answered by every module server regardless of its state.
pub mod meta {
    pub const STATE: &str = "state";
    pub const ABOUT: &str = "about";
    pub const SHUTDOWN: &str = "shutdown";
}
