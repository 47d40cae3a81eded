use super::{nl_to_ul, unsupported, well_volumes_nl, DeviceKind, Durations, SharedBench, WellContent};
use crate::color::{mix, DyeSet, RatioVector, DYE_COUNT};
use crate::protocol::{About, ActionError, Args, Device, Outcome};
use crate::scene::{parse_well_name, well_name, WELL_COUNT};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::bench::locations::OT2_DECK;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ot2Config {
    pub well_volume_ul: f64,
    pub reservoir_capacity_ul: f64,
    pub tips_per_box: u32,
    pub tip_boxes: u32,
    /// Physical dyes loaded in the reservoirs.
    pub dyes: DyeSet,
}

impl Default for Ot2Config {
    fn default() -> Self {
        Self {
            well_volume_ul: 100.0,
            reservoir_capacity_ul: 25_000.0,
            tips_per_box: 96,
            tip_boxes: 20,
            dyes: DyeSet::default(),
        }
    }
}

/// A well named `A1`..`H12` or given as a row-major index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WellRef {
    Index(usize),
    Name(String),
}

impl WellRef {
    pub fn index(&self) -> Option<usize> {
        match self {
            WellRef::Index(i) => (*i < WELL_COUNT).then_some(*i),
            WellRef::Name(n) => parse_well_name(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolEntry {
    pub well: WellRef,
    pub ratios: RatioVector,
}

impl ProtocolEntry {
    pub fn new(well: usize, ratios: RatioVector) -> Self {
        Self { well: WellRef::Name(well_name(well)), ratios }
    }
}

/// Liquid handler: dispenses dye mixes into wells of the plate on its deck.
/// A protocol either completes for every listed well or changes nothing.
pub struct Ot2 {
    name: String,
    bench: SharedBench,
    config: Ot2Config,
    durations: Durations,
    tips_left_in_box: u32,
    boxes_left: u32,
    tips_used: u64,
}

impl Ot2 {
    pub fn new(name: impl Into<String>, bench: SharedBench, config: &Ot2Config, durations: &Durations) -> Self {
        let has_box = config.tip_boxes > 0 && config.tips_per_box > 0;
        Self {
            name: name.into(),
            bench,
            config: config.clone(),
            durations: durations.clone(),
            tips_left_in_box: if has_box { config.tips_per_box } else { 0 },
            boxes_left: config.tip_boxes.saturating_sub(1),
            tips_used: 0,
        }
    }

    fn tips_available(&self) -> u64 {
        u64::from(self.tips_left_in_box) + u64::from(self.boxes_left) * u64::from(self.config.tips_per_box)
    }

    fn take_tips(&mut self, n: u32) {
        for _ in 0..n {
            if self.tips_left_in_box == 0 {
                self.boxes_left -= 1;
                self.tips_left_in_box = self.config.tips_per_box;
            }
            self.tips_left_in_box -= 1;
        }
        self.tips_used += u64::from(n);
    }

    fn run_protocol(&mut self, args: &Args) -> Result<Outcome, ActionError> {
        let raw = args.get("protocol").ok_or_else(|| ActionError::new("missing argument `protocol`"))?;
        let entries: Vec<ProtocolEntry> = serde_json::from_value(raw.clone())
            .map_err(|e| ActionError::new(format!("malformed protocol: {e}")))?;
        if entries.is_empty() {
            return Err(ActionError::new("empty protocol"));
        }
        let mut wells = Vec::with_capacity(entries.len());
        for e in &entries {
            let idx = e.well.index().ok_or_else(|| ActionError::new(format!("invalid well: {:?}", e.well)))?;
            if wells.contains(&idx) {
                return Err(ActionError::new(format!("well listed twice: {}", well_name(idx))));
            }
            wells.push(idx);
        }

        let shared = self.bench.clone();
        let mut bench = shared.lock();
        let plate = bench.plate_at(OT2_DECK).ok_or_else(|| ActionError::new("no plate on deck"))?;
        if let Some(&idx) = wells.iter().find(|&&i| plate.wells[i].is_some()) {
            return Err(ActionError::new(format!("well already filled: {}", well_name(idx))));
        }
        let plate_id = plate.plate_id.clone();

        let mut need = [0u64; DYE_COUNT];
        for e in &entries {
            for (total, v) in need.iter_mut().zip(well_volumes_nl(&e.ratios, self.config.well_volume_ul)) {
                *total += v;
            }
        }
        if let Some(dye) = bench.reservoirs.shortfall(&need) {
            return Err(ActionError::new(format!("reservoir empty: {dye}")));
        }
        let tips = need.iter().filter(|&&v| v > 0).count() as u32;
        if u64::from(tips) > self.tips_available() {
            return Err(ActionError::new("out of tips"));
        }

        // every check passed; commit
        self.take_tips(tips);
        for d in 0..DYE_COUNT {
            bench.reservoirs.current_nl[d] -= need[d];
            bench.dispensed_nl[d] += need[d];
        }
        let dyes = self.config.dyes.clone();
        let plate = bench.plate_at_mut(OT2_DECK).expect("plate checked above");
        let mut filled = Vec::with_capacity(entries.len());
        for (e, &idx) in entries.iter().zip(&wells) {
            plate.wells[idx] = Some(WellContent { ratios: e.ratios, mixed: mix(&e.ratios, &dyes) });
            filled.push(well_name(idx));
        }
        let seconds = self.durations.ot2_fixed_s + self.durations.ot2_per_well_s * entries.len() as f64;
        Ok(Outcome::new(super::duration(seconds))
            .with("plate_id", plate_id)
            .with("wells_filled", filled)
            .with("dispensed_ul", need.map(nl_to_ul).to_vec())
            .with("tips_used", tips))
    }
}

impl Device for Ot2 {
    fn about(&self) -> About {
        About {
            name: self.name.clone(),
            model: "Opentrons OT-2 liquid handler (simulated)".into(),
            actions: DeviceKind::Ot2.actions().iter().map(|a| a.to_string()).collect(),
        }
    }

    fn handle(&mut self, action: &str, args: &Args) -> Result<Outcome, ActionError> {
        match action {
            "run_protocol" => self.run_protocol(args),
            other => Err(unsupported(other)),
        }
    }

    fn snapshot(&self) -> Value {
        let bench = self.bench.lock();
        json!({
            "reservoirs": bench.reservoirs.to_json(),
            "tips_available": self.tips_available(),
            "tips_used": self.tips_used,
        })
    }
}
