//! 48-bit MAC addresses and their auto-assignment from the DMSI token.

use core::fmt;

use crate::dmsi::DmsiState;
use crate::error::{Error, Result};

/// Locally administered prefix for auto-assigned addresses.
pub const MAC_PREFIX: u64 = 0x0A_AA_00;
pub const MAC_COUNTER_KEY: &str = "macCounter";
const MAX_COUNTER: u64 = (1 << 24) - 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddress(u64);

impl MacAddress {
    pub const ZERO: MacAddress = MacAddress(0);

    pub fn from_u64(v: u64) -> Result<Self> {
        if v >> 48 != 0 {
            return Err(Error::Decode(alloc::format!("{v:#x} is wider than 48 bits")));
        }
        Ok(MacAddress(v))
    }

    pub fn to_u64(self) -> u64 {
        self.0
    }

    pub fn octets(self) -> [u8; 6] {
        let b = self.0.to_be_bytes();
        [b[2], b[3], b[4], b[5], b[6], b[7]]
    }
}

impl fmt::Display for MacAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = self.octets();
        write!(
            f,
            "{:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
            o[0], o[1], o[2], o[3], o[4], o[5]
        )
    }
}

/// Takes the next address from the counter kept in `token`.
pub fn auto_assign_mac(token: &mut DmsiState) -> Result<MacAddress> {
    let counter = token.get_u64(MAC_COUNTER_KEY)?.unwrap_or(0);
    if counter >= MAX_COUNTER {
        return Err(Error::Config(alloc::format!(
            "MAC address space exhausted after {counter} interfaces"
        )));
    }
    let next = counter + 1;
    token.put_u64(MAC_COUNTER_KEY, next);
    MacAddress::from_u64(MAC_PREFIX << 24 | next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_token_gives_first_address() {
        let mut t = DmsiState::new();
        let m = auto_assign_mac(&mut t).unwrap();
        assert_eq!(alloc::format!("{m}"), "0A:AA:00:00:00:01");
        assert_eq!(t.get_u64(MAC_COUNTER_KEY).unwrap(), Some(1));
    }

    #[test]
    fn k_assignments_are_distinct() {
        let mut t = DmsiState::new();
        let mut seen = alloc::collections::BTreeSet::new();
        for _ in 0..1000 {
            assert!(seen.insert(auto_assign_mac(&mut t).unwrap()));
        }
        assert_eq!(t.get_u64(MAC_COUNTER_KEY).unwrap(), Some(1000));
    }

    #[test]
    fn exhaustion_is_an_error() {
        let mut t = DmsiState::new();
        t.put_u64(MAC_COUNTER_KEY, MAX_COUNTER - 1);
        assert_eq!(
            alloc::format!("{}", auto_assign_mac(&mut t).unwrap()),
            "0A:AA:00:FF:FF:FF"
        );
        assert!(matches!(auto_assign_mac(&mut t), Err(Error::Config(_))));
    }

    #[test]
    fn width_is_checked() {
        assert!(MacAddress::from_u64(1 << 48).is_err());
        assert_eq!(MacAddress::from_u64(0xFFFF_FFFF_FFFF).unwrap().to_u64(), 0xFFFF_FFFF_FFFF);
    }
}
