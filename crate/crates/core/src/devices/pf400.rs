use super::{bench::locations, str_arg, unsupported, DeviceKind, Durations, SharedBench};
use crate::protocol::{About, ActionError, Args, Device, Outcome};
use serde_json::{json, Value};

/// Plate-handling arm. Moves a plate between any two known locations.
pub struct Pf400 {
    name: String,
    bench: SharedBench,
    duration_s: f64,
    moves: u64,
}

impl Pf400 {
    pub fn new(name: impl Into<String>, bench: SharedBench, durations: &Durations) -> Self {
        Self { name: name.into(), bench, duration_s: durations.transfer_s, moves: 0 }
    }

    fn transfer(&mut self, args: &Args) -> Result<Outcome, ActionError> {
        let source = str_arg(args, "source")?;
        let target = str_arg(args, "target")?;
        let mut bench = self.bench.lock();
        for loc in [source, target] {
            if !bench.is_known(loc) {
                return Err(ActionError::new(format!("unknown location: {loc}")));
            }
        }
        if source == locations::TRASH {
            return Err(ActionError::new("cannot pick from the trash"));
        }
        let plate_id = bench
            .occupancy
            .get(source)
            .cloned()
            .flatten()
            .ok_or_else(|| ActionError::new(format!("no plate at {source}")))?;
        if source == target {
            return Err(ActionError::new("source and target are the same location"));
        }
        if target != locations::TRASH && bench.occupancy.get(target).is_some_and(Option::is_some) {
            return Err(ActionError::new(format!("target occupied: {target}")));
        }
        bench.occupancy.insert(source.to_string(), None);
        if target == locations::TRASH {
            bench.plates.remove(&plate_id);
            bench.trashed.push(plate_id.clone());
        } else {
            bench.occupancy.insert(target.to_string(), Some(plate_id.clone()));
            if let Some(p) = bench.plates.get_mut(&plate_id) {
                p.location = target.to_string();
            }
        }
        self.moves += 1;
        Ok(Outcome::new(super::duration(self.duration_s)).with("plate_id", plate_id))
    }
}

impl Device for Pf400 {
    fn about(&self) -> About {
        About {
            name: self.name.clone(),
            model: "Precise Automation PF400 arm (simulated)".into(),
            actions: DeviceKind::Pf400.actions().iter().map(|a| a.to_string()).collect(),
        }
    }

    fn handle(&mut self, action: &str, args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "transfer" => self.transfer(args),
            other => Err(unsupported(other)),
        }
    }

    fn snapshot(&self) -> Value {
        let bench = self.bench.lock();
        json!({ "moves": self.moves, "occupancy": bench.occupancy })
    }
}
