use super::{bench::locations, unsupported, DeviceKind, Durations, PlateState, SharedBench};
use crate::protocol::{About, ActionError, Args, Device, Outcome};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SciclopsConfig {
    /// Plates in the storage towers at start-up.
    pub stock: u32,
}

impl Default for SciclopsConfig {
    fn default() -> Self {
        Self { stock: 20 }
    }
}

/// Plate storage: hands out fresh plates at the exchange location.
pub struct Sciclops {
    name: String,
    bench: SharedBench,
    stock: u32,
    issued: u32,
    duration_s: f64,
}

impl Sciclops {
    pub fn new(name: impl Into<String>, bench: SharedBench, config: &SciclopsConfig, durations: &Durations) -> Self {
        Self { name: name.into(), bench, stock: config.stock, issued: 0, duration_s: durations.sciclops_s }
    }

    fn get_plate(&mut self) -> Result<Outcome, ActionError> {
        if self.stock == 0 {
            return Err(ActionError::new("out of plates"));
        }
        let mut bench = self.bench.lock();
        if bench.plate_at(locations::EXCHANGE).is_some() {
            return Err(ActionError::new("exchange location is occupied"));
        }
        self.stock -= 1;
        self.issued += 1;
        let plate_id = format!("plate-{:04}", self.issued);
        bench.plates.insert(plate_id.clone(), PlateState::new(&plate_id, locations::EXCHANGE));
        bench.occupancy.insert(locations::EXCHANGE.to_string(), Some(plate_id.clone()));
        Ok(Outcome::new(super::duration(self.duration_s)).with("plate_id", plate_id).with("stock", self.stock))
    }
}

impl Device for Sciclops {
    fn about(&self) -> About {
        About {
            name: self.name.clone(),
            model: "Hudson SciClops microplate handler (simulated)".into(),
            actions: DeviceKind::Sciclops.actions().iter().map(|a| a.to_string()).collect(),
        }
    }

    fn handle(&mut self, action: &str, _args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "get_plate" => self.get_plate(),
            other => Err(unsupported(other)),
        }
    }

    fn snapshot(&self) -> Value {
        json!({ "stock": self.stock })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{Bench, ReservoirBank};

    fn setup(stock: u32) -> (Sciclops, SharedBench) {
        let bench = SharedBench::new(Bench::default_topology(ReservoirBank::empty(100.0)));
        let s = Sciclops::new("sciclops", bench.clone(), &SciclopsConfig { stock }, &Durations::default());
        (s, bench)
    }

    #[test]
    fn get_plate_decrements_stock() {
        let (mut s, bench) = setup(5);
        let out = s.handle("get_plate", &Args::new()).unwrap();
        assert_eq!(out.sim_duration_s, 45.0);
        assert_eq!(s.stock, 4);
        let b = bench.lock();
        let plate = b.plate_at(locations::EXCHANGE).unwrap();
        assert_eq!(plate.filled_count(), 0);
        assert_eq!(plate.plate_id, out.data["plate_id"]);
    }

    #[test]
    fn empty_tower_fails() {
        let (mut s, _) = setup(0);
        assert_eq!(s.handle("get_plate", &Args::new()).unwrap_err().0, "out of plates");
    }

    #[test]
    fn sequential_plates_are_distinct() {
        let (mut s, bench) = setup(5);
        let a = s.handle("get_plate", &Args::new()).unwrap().data["plate_id"].clone();
        // clear the exchange as the arm would
        bench.lock().occupancy.insert(locations::EXCHANGE.into(), None);
        let b = s.handle("get_plate", &Args::new()).unwrap().data["plate_id"].clone();
        assert_ne!(a, b);
    }
}
