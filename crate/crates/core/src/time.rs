//! Virtual time in integer picoseconds and exact cycle conversion.
//!
//! The sensor and the link run in different clock domains, so the master
//! timeline is kept in picoseconds. Every domain converts absolute cycle
//! counts on demand; nothing accumulates per-cycle increments.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("clock frequency must be positive")]
    InvalidClock,
    #[error("{cycles} cycles at {clock_hz} Hz do not fit in the picosecond timeline")]
    Overflow { cycles: u64, clock_hz: u64 },
}

/// Picoseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * PS_PER_S)
    }

    /// Rounds half up to the nearest picosecond. Negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if !(s > 0.0) {
            return SimTime::ZERO;
        }
        SimTime((s * PS_PER_S as f64 + 0.5).floor() as u64)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn as_ms_f64(self) -> f64 {
        self.0 as f64 / PS_PER_MS as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
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

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} ms", self.as_ms_f64())
    }
}

/// `round(cycles * 1e12 / clock_hz)`, rounding half up, in 128-bit intermediates.
pub fn cycles_to_ps(cycles: u64, clock_hz: u64) -> Result<SimTime, TimeError> {
    if clock_hz == 0 {
        return Err(TimeError::InvalidClock);
    }
    let ps = ratio_round(cycles as u128 * PS_PER_S as u128, clock_hz as u128);
    u64::try_from(ps)
        .map(SimTime)
        .map_err(|_| TimeError::Overflow { cycles, clock_hz })
}

/// Time taken to move `bits` at `bits_per_second`, rounded half up.
pub(crate) fn bits_to_ps(bits: u64, bits_per_second: u64) -> Result<SimTime, TimeError> {
    cycles_to_ps(bits, bits_per_second)
}

/// Number of whole clock edges needed to cover `t`, i.e. `ceil(t * clock_hz / 1e12)`.
pub fn ps_to_cycles_ceil(t: SimTime, clock_hz: u64) -> Result<u64, TimeError> {
    if clock_hz == 0 {
        return Err(TimeError::InvalidClock);
    }
    let num = t.0 as u128 * clock_hz as u128;
    let den = PS_PER_S as u128;
    let cycles = num.div_ceil(den);
    u64::try_from(cycles).map_err(|_| TimeError::Overflow {
        cycles: u64::MAX,
        clock_hz,
    })
}

fn ratio_round(num: u128, den: u128) -> u128 {
    (num + den / 2) / den
}
