//! Simulated instruments of the color-picker workcell.
//!
//! Each device is a [`Device`](crate::protocol::Device) handler meant to run
//! behind its own module server. Actions complete instantly and report how
//! long the real instrument would have taken in `sim_duration_s`; durations
//! depend only on the device state and the command.

mod barty;
mod bench;
mod camera;
mod faults;
mod ot2;
mod pf400;
pub mod render;
mod sciclops;
mod workcell;

pub use barty::Barty;
pub use bench::{
    locations, nl_to_ul, ul_to_nl, well_volumes_nl, Bench, PlateState, ReservoirBank, SharedBench, WellContent,
};
pub use camera::{decode_image, Camera, CameraConfig, IMAGE_KEY};
pub use faults::{FaultInjector, FaultKind, FaultPlan, ModuleFaults, ScriptedFault};
pub use ot2::{Ot2, Ot2Config, ProtocolEntry, WellRef};
pub use pf400::Pf400;
pub use sciclops::{Sciclops, SciclopsConfig};
pub use workcell::{SimulatedWorkcell, SimulationConfig};

use crate::protocol::{ActionError, Args};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Simulated action durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Durations {
    pub sciclops_s: f64,
    pub transfer_s: f64,
    pub ot2_fixed_s: f64,
    pub ot2_per_well_s: f64,
    pub camera_s: f64,
    /// Flow rate of each of the four replenisher pumps; pumps run in parallel.
    pub pump_rate_ul_per_s: f64,
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            sciclops_s: 45.0,
            transfer_s: 35.0,
            ot2_fixed_s: 105.0,
            ot2_per_well_s: 40.0,
            camera_s: 10.0,
            pump_rate_ul_per_s: 100.0,
        }
    }
}

/// The kinds of instrument the simulator provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    Sciclops,
    Pf400,
    Ot2,
    Barty,
    Camera,
}

impl DeviceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DeviceKind::Sciclops => "sciclops",
            DeviceKind::Pf400 => "pf400",
            DeviceKind::Ot2 => "ot2",
            DeviceKind::Barty => "barty",
            DeviceKind::Camera => "camera",
        }
    }

    pub fn actions(&self) -> &'static [&'static str] {
        match self {
            DeviceKind::Sciclops => &["get_plate"],
            DeviceKind::Pf400 => &["transfer"],
            DeviceKind::Ot2 => &["run_protocol"],
            DeviceKind::Barty => &["fill", "drain"],
            DeviceKind::Camera => &["capture"],
        }
    }
}

fn unsupported(action: &str) -> ActionError {
    ActionError::new(format!("unsupported action: {action}"))
}

fn str_arg<'a>(args: &'a Args, key: &str) -> Result<&'a str, ActionError> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ActionError::new(format!("missing string argument `{key}`")))
}

/// Round to microseconds so durations serialize identically everywhere.
fn duration(seconds: f64) -> f64 {
    (seconds * 1e6).round() / 1e6
}
