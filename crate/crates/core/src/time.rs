//! Simulation time in integer picoseconds.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

pub const PS_PER_NS: i64 = 1_000;
pub const PS_PER_US: i64 = 1_000_000;
pub const PS_PER_MS: i64 = 1_000_000_000;
pub const PS_PER_S: i64 = 1_000_000_000_000;

/// A simulation timestamp or duration, counted in picoseconds.
///
/// Arithmetic is checked: an overflow is reported as [`Error::TimeOverflow`]
/// instead of wrapping. [`SimTime::MAX`] doubles as "never" in the
/// synchronization code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(i64::MAX);

    pub const fn from_ps(ps: i64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: i64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: i64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: i64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    pub const fn from_secs(s: i64) -> Self {
        SimTime(s * PS_PER_S)
    }

    pub const fn ticks(self) -> i64 {
        self.0
    }

    pub fn is_never(self) -> bool {
        self == SimTime::MAX
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_S as f64
    }

    pub fn checked_add(self, rhs: SimTime) -> Result<SimTime> {
        self.0
            .checked_add(rhs.0)
            .map(SimTime)
            .ok_or(Error::TimeOverflow { lhs: self.0, rhs: rhs.0 })
    }

    /// Addition that clamps at [`SimTime::MAX`]; only used for promises
    /// derived from an already-infinite bound.
    pub fn saturating_add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Result<SimTime> {
        self.0
            .checked_sub(rhs.0)
            .map(SimTime)
            .ok_or(Error::TimeOverflow { lhs: self.0, rhs: -rhs.0 })
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_never() {
            return f.write_str("never");
        }
        let ticks = self.0;
        let mag = ticks.unsigned_abs();
        let (unit, name) = if mag >= PS_PER_S as u64 {
            (PS_PER_S as u64, "s")
        } else if mag >= PS_PER_MS as u64 {
            (PS_PER_MS as u64, "ms")
        } else if mag >= PS_PER_US as u64 {
            (PS_PER_US as u64, "us")
        } else if mag >= PS_PER_NS as u64 {
            (PS_PER_NS as u64, "ns")
        } else {
            (1, "ps")
        };
        if ticks < 0 {
            f.write_str("-")?;
        }
        let whole = mag / unit;
        let frac = mag % unit;
        if frac == 0 {
            return write!(f, "{whole}{name}");
        }
        let mut digits = 0;
        let mut u = unit;
        while u > 1 {
            u /= 10;
            digits += 1;
        }
        let mut frac_str = alloc::format!("{frac:0digits$}");
        while frac_str.ends_with('0') {
            frac_str.pop();
        }
        write!(f, "{whole}.{frac_str}{name}")
    }
}

/// Parses a non-negative duration literal such as `10ns`, `1.6us`, `5ms`,
/// `2s` or `250ps`. Decimal fractions are converted exactly; digits finer
/// than one picosecond are rejected.
pub fn parse_duration(text: &str) -> Result<SimTime> {
    let s = text.trim();
    let bad = || Error::Parse(alloc::format!("invalid duration `{text}`"));
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let scale = match unit.trim() {
        "ps" => 1,
        "ns" => PS_PER_NS,
        "us" | "µs" => PS_PER_US,
        "ms" => PS_PER_MS,
        "s" => PS_PER_S,
        "" if num.chars().all(|c| c == '0') && !num.is_empty() => 1,
        _ => return Err(bad()),
    };
    if num.is_empty() {
        return Err(bad());
    }
    let (int_part, frac_part) = match num.split_once('.') {
        Some((i, f)) => (i, f),
        None => (num, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let whole: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let mut ticks = whole.checked_mul(scale).ok_or_else(bad)?;
    let mut place = scale;
    for c in frac_part.chars() {
        let d = c.to_digit(10).ok_or_else(bad)? as i64;
        if place % 10 != 0 {
            if d != 0 {
                return Err(Error::Parse(alloc::format!(
                    "duration `{text}` is finer than one picosecond"
                )));
            }
            continue;
        }
        place /= 10;
        ticks = ticks.checked_add(d * place).ok_or_else(bad)?;
    }
    Ok(SimTime(ticks))
}

impl FromStr for SimTime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_duration(s)
    }
}
