use std::fmt;
use std::ops::{Add, AddAssign};
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Nanoseconds since simulation start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// Elapsed time since `earlier`, zero if `earlier` is in the future.
    pub fn saturating_since(self, earlier: SimTime) -> Duration {
        Duration::from_nanos(self.0.saturating_sub(earlier.0))
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        let ns = u64::try_from(rhs.as_nanos()).expect("duration overflows simulation clock");
        SimTime(self.0.checked_add(ns).expect("simulation clock overflow"))
    }
}

impl AddAssign<Duration> for SimTime {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Seconds to a nanosecond-tick duration, rounded to the nearest tick.
pub fn duration_from_secs(secs: f64) -> Duration {
    assert!(secs.is_finite() && secs >= 0.0, "duration must be finite and non-negative");
    Duration::from_nanos((secs * 1e9).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_to_nearest_tick() {
        assert_eq!(duration_from_secs(81.92e-9), Duration::from_nanos(82));
        assert_eq!(duration_from_secs(81.49e-9), Duration::from_nanos(81));
        assert_eq!(duration_from_secs(0.0125), Duration::from_millis(12) + Duration::from_micros(500));
    }

    #[test]
    fn add_and_since() {
        let t = SimTime::from_nanos(10) + Duration::from_nanos(5);
        assert_eq!(t.as_nanos(), 15);
        assert_eq!(t.saturating_since(SimTime::from_nanos(20)), Duration::ZERO);
        assert_eq!(t.saturating_since(SimTime::from_nanos(3)), Duration::from_nanos(12));
    }
}
