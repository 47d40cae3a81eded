use super::{nl_to_ul, unsupported, DeviceKind, Durations, SharedBench};
use crate::color::DYE_COUNT;
use crate::protocol::{About, ActionError, Args, Device, Outcome};
use serde_json::Value;

/// Liquid replenisher: one pump per dye, all four running in parallel, so an
/// action lasts as long as the largest single-dye volume takes to pump.
pub struct Barty {
    name: String,
    bench: SharedBench,
    pump_rate_ul_per_s: f64,
}

impl Barty {
    pub fn new(name: impl Into<String>, bench: SharedBench, durations: &Durations) -> Self {
        Self { name: name.into(), bench, pump_rate_ul_per_s: durations.pump_rate_ul_per_s }
    }

    fn pump(&self, moved_nl: [u64; DYE_COUNT]) -> Outcome {
        let largest = moved_nl.iter().copied().max().unwrap_or(0);
        let seconds = nl_to_ul(largest) / self.pump_rate_ul_per_s;
        Outcome::new(super::duration(seconds)).with("volume_ul", moved_nl.map(nl_to_ul).to_vec())
    }

    fn fill(&mut self) -> Outcome {
        let mut bench = self.bench.lock();
        let r = &mut bench.reservoirs;
        let moved: [u64; DYE_COUNT] = std::array::from_fn(|d| r.capacity_nl[d] - r.current_nl[d]);
        r.current_nl = r.capacity_nl;
        self.pump(moved)
    }

    fn drain(&mut self) -> Outcome {
        let mut bench = self.bench.lock();
        let moved = std::mem::replace(&mut bench.reservoirs.current_nl, [0; DYE_COUNT]);
        self.pump(moved)
    }
}

impl Device for Barty {
    fn about(&self) -> About {
        About {
            name: self.name.clone(),
            model: "BARTY liquid replenisher (simulated)".into(),
            actions: DeviceKind::Barty.actions().iter().map(|a| a.to_string()).collect(),
        }
    }

    fn handle(&mut self, action: &str, _args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "fill" => Ok(self.fill()),
            "drain" => Ok(self.drain()),
            other => Err(unsupported(other)),
        }
    }

    fn snapshot(&self) -> Value {
        self.bench.lock().reservoirs.to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::{Bench, ReservoirBank};

    fn setup(bank: ReservoirBank) -> (Barty, SharedBench) {
        let bench = SharedBench::new(Bench::default_topology(bank));
        (Barty::new("barty", bench.clone(), &Durations::default()), bench)
    }

    #[test]
    fn refill_duration_is_volume_over_rate() {
        let mut bank = ReservoirBank::full(25_000.0);
        bank.current_nl[2] -= 3_000_000;
        let (mut barty, bench) = setup(bank);
        let out = barty.handle("fill", &Args::new()).unwrap();
        assert_eq!(out.sim_duration_s, 30.0);
        assert_eq!(bench.lock().reservoirs, ReservoirBank::full(25_000.0));
    }

    #[test]
    fn pumps_run_in_parallel() {
        let mut bank = ReservoirBank::full(25_000.0);
        bank.current_nl[0] -= 1_000_000;
        bank.current_nl[3] -= 2_500_000;
        let (mut barty, _) = setup(bank);
        assert_eq!(barty.handle("fill", &Args::new()).unwrap().sim_duration_s, 25.0);
    }

    #[test]
    fn fill_when_full_takes_no_time() {
        let (mut barty, _) = setup(ReservoirBank::full(25_000.0));
        assert_eq!(barty.handle("fill", &Args::new()).unwrap().sim_duration_s, 0.0);
    }

    #[test]
    fn drain_empties_everything() {
        let (mut barty, bench) = setup(ReservoirBank::full(25_000.0));
        let out = barty.handle("drain", &Args::new()).unwrap();
        assert_eq!(out.sim_duration_s, 250.0);
        assert_eq!(bench.lock().reservoirs.current_nl, [0; DYE_COUNT]);
    }
}
