//! The simulated physical world shared by the device simulators: where the
//! plates are, what is in their wells, and how full the reservoirs are.
//!
//! Devices never exchange messages; they only act on this common state, the
//! way real instruments act on the same physical plate.

use crate::color::{ColorRgb, RatioVector, DYE_COUNT, DYE_NAMES};
use crate::scene::WELL_COUNT;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

/// Location names of the default workcell topology.
pub mod locations {
    pub const TOWER: &str = "tower";
    pub const EXCHANGE: &str = "exchange";
    pub const OT2_DECK: &str = "ot2_deck";
    pub const CAMERA_NEST: &str = "camera_nest";
    pub const TRASH: &str = "trash";
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellContent {
    pub ratios: RatioVector,
    pub mixed: ColorRgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateState {
    pub plate_id: String,
    pub wells: Vec<Option<WellContent>>,
    pub location: String,
}

impl PlateState {
    pub fn new(plate_id: impl Into<String>, location: impl Into<String>) -> Self {
        Self { plate_id: plate_id.into(), wells: vec![None; WELL_COUNT], location: location.into() }
    }

    pub fn filled_count(&self) -> usize {
        self.wells.iter().filter(|w| w.is_some()).count()
    }

    /// Colors as a camera would see them: `None` for empty wells.
    pub fn well_colors(&self) -> Vec<Option<ColorRgb>> {
        self.wells.iter().map(|w| w.map(|c| c.mixed)).collect()
    }
}

/// Per-dye reservoir levels, in nanolitres so bookkeeping is exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReservoirBank {
    pub current_nl: [u64; DYE_COUNT],
    pub capacity_nl: [u64; DYE_COUNT],
}

impl ReservoirBank {
    pub fn empty(capacity_ul: f64) -> Self {
        Self { current_nl: [0; DYE_COUNT], capacity_nl: [ul_to_nl(capacity_ul); DYE_COUNT] }
    }

    pub fn full(capacity_ul: f64) -> Self {
        let cap = ul_to_nl(capacity_ul);
        Self { current_nl: [cap; DYE_COUNT], capacity_nl: [cap; DYE_COUNT] }
    }

    pub fn current_ul(&self) -> [f64; DYE_COUNT] {
        self.current_nl.map(nl_to_ul)
    }

    /// First dye whose level is below `need_nl`.
    pub fn shortfall(&self, need_nl: &[u64; DYE_COUNT]) -> Option<&'static str> {
        (0..DYE_COUNT).find(|&d| self.current_nl[d] < need_nl[d]).map(|d| DYE_NAMES[d])
    }

    pub fn to_json(&self) -> serde_json::Value {
        let levels: serde_json::Map<_, _> = DYE_NAMES
            .iter()
            .zip(self.current_ul())
            .map(|(name, ul)| (name.to_string(), serde_json::Value::from(ul)))
            .collect();
        serde_json::json!({ "current_ul": levels, "capacity_ul": nl_to_ul(self.capacity_nl[0]) })
    }
}

pub fn ul_to_nl(ul: f64) -> u64 {
    (ul * 1000.0).round().max(0.0) as u64
}

pub fn nl_to_ul(nl: u64) -> f64 {
    nl as f64 / 1000.0
}

/// Dispensed volume of each dye for one well.
pub fn well_volumes_nl(ratios: &RatioVector, well_volume_ul: f64) -> [u64; DYE_COUNT] {
    ratios.as_array().map(|r| (r * well_volume_ul * 1000.0).round() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bench {
    pub plates: BTreeMap<String, PlateState>,
    /// Occupant of every exclusive location.
    pub occupancy: BTreeMap<String, Option<String>>,
    pub reservoirs: ReservoirBank,
    pub trashed: Vec<String>,
    /// Total dye dispensed so far, per dye.
    pub dispensed_nl: [u64; DYE_COUNT],
}

impl Bench {
    /// An empty bench with the given exclusive locations. The trash is a sink
    /// and is never listed here.
    pub fn new<I, S>(locations: I, reservoirs: ReservoirBank) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            plates: BTreeMap::new(),
            occupancy: locations.into_iter().map(|l| (l.into(), None)).collect(),
            reservoirs,
            trashed: Vec::new(),
            dispensed_nl: [0; DYE_COUNT],
        }
    }

    pub fn default_topology(reservoirs: ReservoirBank) -> Self {
        use locations::*;
        Self::new([EXCHANGE, OT2_DECK, CAMERA_NEST], reservoirs)
    }

    pub fn plate_at(&self, location: &str) -> Option<&PlateState> {
        let id = self.occupancy.get(location)?.as_ref()?;
        self.plates.get(id)
    }

    pub fn plate_at_mut(&mut self, location: &str) -> Option<&mut PlateState> {
        let id = self.occupancy.get(location)?.clone()?;
        self.plates.get_mut(&id)
    }

    pub fn is_known(&self, location: &str) -> bool {
        location == locations::TRASH || self.occupancy.contains_key(location)
    }
}

/// Handle to the bench shared by all simulated devices of a workcell.
#[derive(Debug, Clone)]
pub struct SharedBench(Arc<Mutex<Bench>>);

impl SharedBench {
    pub fn new(bench: Bench) -> Self {
        Self(Arc::new(Mutex::new(bench)))
    }

    pub fn lock(&self) -> MutexGuard<'_, Bench> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }
}
