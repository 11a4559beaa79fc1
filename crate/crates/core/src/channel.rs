//! Unidirectional delay/datarate channels between gates.

use core::fmt;

use crate::error::{Error, Result};
use crate::kernel::ModuleId;
use crate::time::{SimTime, PS_PER_S};

/// Bits per second; zero means unlimited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Datarate(pub u64);

impl Datarate {
    pub const UNLIMITED: Datarate = Datarate(0);

    pub const fn gbps(g: u64) -> Self {
        Datarate(g * 1_000_000_000)
    }

    pub const fn mbps(m: u64) -> Self {
        Datarate(m * 1_000_000)
    }

    pub fn bps(self) -> u64 {
        self.0
    }

    pub fn is_unlimited(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Datarate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        if b == 0 {
            f.write_str("unlimited")
        } else if b % 1_000_000_000 == 0 {
            write!(f, "{}Gbps", b / 1_000_000_000)
        } else if b % 1_000_000 == 0 {
            write!(f, "{}Mbps", b / 1_000_000)
        } else if b % 1_000 == 0 {
            write!(f, "{}kbps", b / 1_000)
        } else {
            write!(f, "{b}bps")
        }
    }
}

/// One gate of one module.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GateRef {
    pub module: ModuleId,
    pub gate: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Channel {
    pub delay: SimTime,
    pub datarate: Datarate,
    pub src_gate: GateRef,
    pub dst_gate: GateRef,
}

/// `ceil(8 * bytes / datarate)` in picoseconds; zero for unlimited rates.
pub fn transmission_time(byte_length: u64, rate: Datarate) -> Result<SimTime> {
    if rate.is_unlimited() || byte_length == 0 {
        return Ok(SimTime::ZERO);
    }
    let bits = byte_length as u128 * 8;
    let num = bits * PS_PER_S as u128;
    let r = rate.0 as u128;
    let ps = num.div_ceil(r);
    i64::try_from(ps)
        .map(SimTime::from_ps)
        .map_err(|_| Error::TimeOverflow { lhs: i64::MAX, rhs: 1 })
}

impl Channel {
    pub fn new(delay: SimTime, datarate: Datarate, src_gate: GateRef, dst_gate: GateRef) -> Result<Self> {
        if delay < SimTime::ZERO {
            return Err(Error::Config(alloc::format!(
                "channel {src_gate:?} -> {dst_gate:?} has negative delay {delay}"
            )));
        }
        Ok(Channel {
            delay,
            datarate,
            src_gate,
            dst_gate,
        })
    }

    /// Arrival time of a message whose transmission starts at `now` on an
    /// idle channel.
    pub fn arrival(&self, now: SimTime, byte_length: u64) -> Result<SimTime> {
        now.checked_add(self.delay)?
            .checked_add(transmission_time(byte_length, self.datarate)?)
    }
}

/// Output side of a channel: serializes transmissions, one at a time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmitter {
    pub channel: Channel,
    busy_until: SimTime,
}

impl Transmitter {
    pub fn new(channel: Channel) -> Self {
        Transmitter {
            channel,
            busy_until: SimTime::ZERO,
        }
    }

    /// Starts transmitting at `max(now, end of previous transmission)` and
    /// returns the arrival time at the far end.
    pub fn transmit(&mut self, now: SimTime, byte_length: u64) -> Result<SimTime> {
        let start = now.max(self.busy_until);
        let end = start.checked_add(transmission_time(byte_length, self.channel.datarate)?)?;
        self.busy_until = end;
        end.checked_add(self.channel.delay)
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }
}
