//! Well bookkeeping for the plate in use.

use crate::scene::WELL_COUNT;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlateCursor {
    pub plate_id: Option<String>,
    /// Next free well of the current plate, row-major.
    pub next_well: usize,
    /// Wells consumed over the whole run.
    pub wells_used: usize,
}

impl PlateCursor {
    /// Free wells on the current plate; zero without a plate.
    pub fn free(&self) -> usize {
        if self.plate_id.is_some() {
            WELL_COUNT - self.next_well
        } else {
            0
        }
    }

    pub fn needs_plate(&self) -> bool {
        self.free() == 0
    }

    pub fn is_full(&self) -> bool {
        self.plate_id.is_some() && self.next_well == WELL_COUNT
    }

    pub fn load(&mut self, plate_id: impl Into<String>) {
        self.plate_id = Some(plate_id.into());
        self.next_well = 0;
    }

    pub fn unload(&mut self) {
        self.plate_id = None;
        self.next_well = 0;
    }

    /// The next `n` free wells, without consuming them. Never more than the
    /// plate has left.
    pub fn peek(&self, n: usize) -> Range<usize> {
        self.next_well..self.next_well + n.min(self.free())
    }

    pub fn consume(&mut self, n: usize) {
        assert!(n <= self.free(), "consuming {n} wells with {} free", self.free());
        self.next_well += n;
        self.wells_used += n;
    }
}

/// One mix workflow's share of a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// A fresh plate must be loaded before this segment.
    pub new_plate: bool,
    pub wells: Range<usize>,
}

/// Splits `count` samples into per-plate segments of consecutive wells,
/// starting at the cursor. Rolls over to a new plate only for the overflow.
pub fn assign_wells(count: usize, cursor: &PlateCursor) -> Vec<Segment> {
    let mut out = Vec::new();
    let (mut left, mut next, mut loaded) = (count, cursor.next_well, cursor.plate_id.is_some());
    while left > 0 {
        let new_plate = !loaded || next == WELL_COUNT;
        if new_plate {
            next = 0;
            loaded = true;
        }
        let n = left.min(WELL_COUNT - next);
        out.push(Segment { new_plate, wells: next..next + n });
        next += n;
        left -= n;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(next_well: usize) -> PlateCursor {
        PlateCursor { plate_id: Some("p".into()), next_well, wells_used: 0 }
    }

    #[test]
    fn rollover_splits_the_batch() {
        assert_eq!(
            assign_wells(4, &at(94)),
            [Segment { new_plate: false, wells: 94..96 }, Segment { new_plate: true, wells: 0..2 }]
        );
    }

    #[test]
    fn fresh_and_full_plates() {
        assert_eq!(assign_wells(8, &PlateCursor::default()), [Segment { new_plate: true, wells: 0..8 }]);
        assert_eq!(assign_wells(4, &at(96)), [Segment { new_plate: true, wells: 0..4 }]);
        assert_eq!(assign_wells(0, &at(3)), []);
    }

    #[test]
    fn cursor_accounting() {
        let mut c = PlateCursor::default();
        assert!(c.needs_plate());
        c.load("plate-0001");
        assert_eq!(c.peek(200), 0..96);
        c.consume(95);
        assert_eq!(c.peek(4), 95..96);
        c.consume(1);
        assert!(c.is_full() && c.needs_plate());
        c.unload();
        assert_eq!(c.wells_used, 96);
    }

    proptest! {
        #[test]
        fn segments_are_contiguous_and_conserve_count(start in 0usize..=96, count in 0usize..300) {
            let segs = assign_wells(count, &at(start));
            prop_assert_eq!(segs.iter().map(|s| s.wells.len()).sum::<usize>(), count);
            for (i, s) in segs.iter().enumerate() {
                prop_assert!(s.wells.end <= WELL_COUNT && !s.wells.is_empty());
                prop_assert_eq!(s.new_plate, i > 0 || start == WELL_COUNT);
                if i > 0 {
                    prop_assert_eq!(s.wells.start, 0);
                }
            }
        }
    }
}
