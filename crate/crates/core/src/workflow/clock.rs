//! Simulated time owned by the workflow engine.

use serde::{Deserialize, Serialize};
use std::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClockMode {
    /// Advancing the clock returns immediately.
    #[default]
    Virtual,
    /// Advancing by `s` simulated seconds also sleeps `s / scale` wall seconds.
    Realtime { scale: f64 },
}

/// Monotone simulated clock with microsecond resolution, so sums of device
/// durations never drift between runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimClock {
    now_us: u64,
    mode: ClockMode,
}

impl SimClock {
    pub fn new(mode: ClockMode) -> Self {
        Self { now_us: 0, mode }
    }

    pub fn virtual_clock() -> Self {
        Self::new(ClockMode::Virtual)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now_s(&self) -> f64 {
        self.now_us as f64 / 1e6
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Negative and non-finite amounts are ignored.
    pub fn advance(&mut self, seconds: f64) {
        if !(seconds.is_finite() && seconds > 0.0) {
            return;
        }
        self.now_us += (seconds * 1e6).round() as u64;
        if let ClockMode::Realtime { scale } = self.mode {
            if scale > 0.0 {
                std::thread::sleep(Duration::from_secs_f64(seconds / scale));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn advances_by_durations() {
        let mut c = SimClock::virtual_clock();
        c.advance(35.0);
        c.advance(145.0);
        c.advance(0.000_000_4);
        assert_eq!(c.now_s(), 180.0);
        c.advance(-3.0);
        c.advance(f64::NAN);
        assert_eq!(c.now_us(), 180_000_000);
    }

    #[test]
    fn realtime_sleeps_scaled() {
        let mut c = SimClock::new(ClockMode::Realtime { scale: 1000.0 });
        let t = std::time::Instant::now();
        c.advance(20.0);
        assert!(t.elapsed() >= Duration::from_millis(20));
        assert_eq!(c.now_s(), 20.0);
    }

    proptest! {
        #[test]
        fn monotone(steps in proptest::collection::vec(-10.0..1000.0f64, 0..50)) {
            let mut c = SimClock::virtual_clock();
            let mut last = c.now_us();
            for s in steps {
                c.advance(s);
                prop_assert!(c.now_us() >= last);
                last = c.now_us();
            }
        }
    }
}
