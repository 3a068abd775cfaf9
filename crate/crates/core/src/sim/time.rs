use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Simulated time in integer nanoseconds since the start of a run.
///
/// A `u64` covers roughly 584 years of simulated time, far beyond the
/// ten-minute scenarios this crate runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Applies a signed nanosecond offset, saturating at zero.
    pub fn offset(self, delta_ns: i64) -> SimTime {
        if delta_ns >= 0 {
            SimTime(self.0.saturating_add(delta_ns as u64))
        } else {
            SimTime(self.0.saturating_sub(delta_ns.unsigned_abs()))
        }
    }

    /// Largest multiple of `period` (counted from `epoch`) that is `<= self`.
    /// Times before the epoch map to the epoch.
    pub fn floor_to(self, epoch: SimTime, period: SimTime) -> SimTime {
        assert!(period.0 > 0, "period must be positive");
        if self < epoch {
            return epoch;
        }
        let k = (self.0 - epoch.0) / period.0;
        SimTime(epoch.0 + k * period.0)
    }

    /// Smallest multiple of `period` (counted from `epoch`) that is `>= self`.
    pub fn ceil_to(self, epoch: SimTime, period: SimTime) -> SimTime {
        assert!(period.0 > 0, "period must be positive");
        if self <= epoch {
            return epoch;
        }
        let k = (self.0 - epoch.0).div_ceil(period.0);
        SimTime(epoch.0 + k * period.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl Mul<u64> for SimTime {
    type Output = SimTime;
    fn mul(self, rhs: u64) -> SimTime {
        SimTime(self.0 * rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}
