//! Assembles a set of simulated instruments around one shared bench.

use super::{
    Barty, Bench, Camera, CameraConfig, DeviceKind, Durations, FaultPlan, Ot2, Ot2Config, Pf400, ReservoirBank,
    Sciclops, SciclopsConfig, SharedBench,
};
use crate::protocol::{Device, ModuleServer};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Everything needed to instantiate the simulated instruments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub durations: Durations,
    pub sciclops: SciclopsConfig,
    pub ot2: Ot2Config,
    pub camera: CameraConfig,
    /// Reservoirs start empty unless set; a fresh plate's workflow fills them.
    pub reservoirs_start_full: bool,
    pub faults: FaultPlan,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.faults.validate()?;
        self.ot2.dyes.validate().map_err(|e| e.to_string())?;
        if self.ot2.well_volume_ul <= 0.0 || self.ot2.reservoir_capacity_ul <= 0.0 {
            return Err("well volume and reservoir capacity must be positive".into());
        }
        if self.durations.pump_rate_ul_per_s <= 0.0 {
            return Err("pump rate must be positive".into());
        }
        Ok(())
    }

    pub fn initial_bench(&self) -> Bench {
        let cap = self.ot2.reservoir_capacity_ul;
        let bank = if self.reservoirs_start_full { ReservoirBank::full(cap) } else { ReservoirBank::empty(cap) };
        Bench::default_topology(bank)
    }
}

/// Module servers of one simulated workcell, in declaration order.
pub struct SimulatedWorkcell {
    pub bench: SharedBench,
    pub modules: Vec<(String, Arc<ModuleServer>)>,
}

impl SimulatedWorkcell {
    /// Instantiates one device per `(name, kind)` pair, all acting on a
    /// single fresh bench. Faults are looked up by module name.
    pub fn build<'a, I>(modules: I, config: &SimulationConfig) -> Self
    where
        I: IntoIterator<Item = (&'a str, DeviceKind)>,
    {
        let bench = SharedBench::new(config.initial_bench());
        let d = &config.durations;
        let modules = modules
            .into_iter()
            .map(|(name, kind)| {
                let device: Box<dyn Device> = match kind {
                    DeviceKind::Sciclops => Box::new(Sciclops::new(name, bench.clone(), &config.sciclops, d)),
                    DeviceKind::Pf400 => Box::new(Pf400::new(name, bench.clone(), d)),
                    DeviceKind::Ot2 => Box::new(Ot2::new(name, bench.clone(), &config.ot2, d)),
                    DeviceKind::Barty => Box::new(Barty::new(name, bench.clone(), d)),
                    DeviceKind::Camera => Box::new(Camera::new(name, bench.clone(), &config.camera, d)),
                };
                let server = match config.faults.injector_for(name) {
                    Some(inj) => ModuleServer::with_faults(device, Box::new(inj)),
                    None => ModuleServer::new(device),
                };
                (name.to_string(), server)
            })
            .collect();
        Self { bench, modules }
    }

    /// The five standard instruments under their conventional names.
    pub fn standard(config: &SimulationConfig) -> Self {
        use DeviceKind::*;
        Self::build([Sciclops, Pf400, Ot2, Barty, Camera].map(|k| (k.as_str(), k)), config)
    }

    pub fn module(&self, name: &str) -> Option<&Arc<ModuleServer>> {
        self.modules.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}
