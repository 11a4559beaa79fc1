//! Interface announcements and deterministic address assignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::net::Ipv4Addr;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::scenario::Domain;

pub const BACKBONE_SUBNET_OCTET: u8 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subnet {
    pub base: Ipv4Addr,
    pub prefix_len: u8,
}

impl Subnet {
    pub fn new(base: Ipv4Addr, prefix_len: u8) -> Result<Self> {
        if prefix_len > 32 || u32::from(base) & !mask(prefix_len) != 0 {
            return Err(Error::Config(alloc::format!("invalid subnet {base}/{prefix_len}")));
        }
        Ok(Subnet { base, prefix_len })
    }

    /// `10.j.0.0/16` for LAN `j`, `10.200.0.0/16` for the backbone.
    pub fn for_domain(d: Domain) -> Result<Self> {
        let octet = match d {
            Domain::Backbone => BACKBONE_SUBNET_OCTET,
            Domain::Lan(j) if j < BACKBONE_SUBNET_OCTET as u32 => j as u8,
            Domain::Lan(j) => {
                return Err(Error::Config(alloc::format!("no subnet for LAN {j}")));
            }
        };
        Subnet::new(Ipv4Addr::new(10, octet, 0, 0), 16)
    }

    pub fn contains(&self, a: Ipv4Addr) -> bool {
        u32::from(a) & mask(self.prefix_len) == u32::from(self.base)
    }

    /// Usable host addresses (network and broadcast excluded).
    pub fn capacity(&self) -> u64 {
        (1u64 << (32 - self.prefix_len)).saturating_sub(2)
    }

    /// The `index`-th host address, counting from `.1`.
    pub fn host(&self, index: u64) -> Result<Ipv4Addr> {
        if index >= self.capacity() {
            return Err(Error::Config(alloc::format!(
                "subnet {self} has no room for host number {}",
                index + 1
            )));
        }
        Ok(Ipv4Addr::from(u32::from(self.base) + index as u32 + 1))
    }
}

impl fmt::Display for Subnet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.base, self.prefix_len)
    }
}

pub fn mask(prefix_len: u8) -> u32 {
    if prefix_len == 0 {
        0
    } else {
        u32::MAX << (32 - prefix_len as u32)
    }
}

/// One interface that needs an address.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterfaceAnnouncement {
    pub node: String,
    pub iface: String,
    pub domain: Domain,
    pub subnet: Subnet,
}

impl InterfaceAnnouncement {
    pub fn iface_path(&self) -> String {
        alloc::format!("{}.{}", self.node, self.iface)
    }

    fn encode(&self, w: &mut Writer) {
        w.str(&self.node).str(&self.iface);
        match self.domain {
            Domain::Backbone => w.u8(0).u32(0),
            Domain::Lan(j) => w.u8(1).u32(j),
        };
        w.u32(u32::from(self.subnet.base)).u8(self.subnet.prefix_len);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let node = r.string()?;
        let iface = r.string()?;
        let domain = match (r.u8()?, r.u32()?) {
            (0, _) => Domain::Backbone,
            (1, j) => Domain::Lan(j),
            (t, _) => return Err(Error::Decode(alloc::format!("bad domain tag {t}"))),
        };
        let base = Ipv4Addr::from(r.u32()?);
        let subnet = Subnet::new(base, r.u8()?).map_err(|e| Error::Decode(alloc::format!("{e}")))?;
        Ok(InterfaceAnnouncement { node, iface, domain, subnet })
    }
}

/// Merges `more` into a list kept sorted by interface path, rejecting
/// duplicates. The result does not depend on the order announcements were
/// collected in.
pub fn merge_announcements(list: &mut Vec<InterfaceAnnouncement>, more: &[InterfaceAnnouncement]) -> Result<()> {
    list.extend_from_slice(more);
    list.sort_by(|a, b| (&a.node, &a.iface).cmp(&(&b.node, &b.iface)));
    if let Some(w) = list.windows(2).find(|w| w[0].node == w[1].node && w[0].iface == w[1].iface) {
        return Err(Error::Config(alloc::format!(
            "interface {} announced twice",
            w[0].iface_path()
        )));
    }
    Ok(())
}

pub fn encode_announcements(list: &[InterfaceAnnouncement]) -> Vec<u8> {
    let mut w = Writer::new();
    w.u32(list.len() as u32);
    for a in list {
        a.encode(&mut w);
    }
    w.finish()
}

pub fn decode_announcements(bytes: &[u8]) -> Result<Vec<InterfaceAnnouncement>> {
    let mut r = Reader::new(bytes);
    let n = r.u32()?;
    let mut v = Vec::with_capacity(n as usize);
    for _ in 0..n {
        v.push(InterfaceAnnouncement::decode(&mut r)?);
    }
    r.finish()?;
    Ok(v)
}

/// Interface path to address, for the whole network.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AddressMap {
    by_iface: BTreeMap<String, Ipv4Addr>,
    by_addr: BTreeMap<Ipv4Addr, String>,
}

impl AddressMap {
    pub fn get(&self, iface_path: &str) -> Option<Ipv4Addr> {
        self.by_iface.get(iface_path).copied()
    }

    pub fn owner(&self, a: Ipv4Addr) -> Option<&str> {
        self.by_addr.get(&a).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_iface.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_iface.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Ipv4Addr)> {
        self.by_iface.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

/// Within each subnet, interfaces get `.0.1`, `.0.2`, ... in list order.
pub fn assign_addresses(list: &[InterfaceAnnouncement]) -> Result<AddressMap> {
    let mut next: BTreeMap<Subnet, u64> = BTreeMap::new();
    let mut map = AddressMap::default();
    let mut seen = BTreeSet::new();
    for a in list {
        let path = a.iface_path();
        if !seen.insert(path.clone()) {
            return Err(Error::Config(alloc::format!("interface {path} announced twice")));
        }
        let idx = next.entry(a.subnet).or_insert(0);
        let addr = a.subnet.host(*idx)?;
        *idx += 1;
        map.by_addr.insert(addr, path.clone());
        map.by_iface.insert(path, addr);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(node: &str, iface: &str, d: Domain) -> InterfaceAnnouncement {
        InterfaceAnnouncement {
            node: String::from(node),
            iface: String::from(iface),
            domain: d,
            subnet: Subnet::for_domain(d).unwrap(),
        }
    }

    #[test]
    fn first_lan0_interface_gets_dot_one() {
        let list = [ann("net.lan0.host0", "eth0", Domain::Lan(0))];
        let m = assign_addresses(&list).unwrap();
        assert_eq!(m.get("net.lan0.host0.eth0"), Some(Ipv4Addr::new(10, 0, 0, 1)));
    }

    #[test]
    fn subnets_count_independently() {
        let list = [
            ann("net.backbone.router0", "eth0", Domain::Backbone),
            ann("net.lan3.host0", "eth0", Domain::Lan(3)),
            ann("net.lan3.host1", "eth0", Domain::Lan(3)),
        ];
        let m = assign_addresses(&list).unwrap();
        assert_eq!(m.get("net.backbone.router0.eth0"), Some(Ipv4Addr::new(10, 200, 0, 1)));
        assert_eq!(m.get("net.lan3.host1.eth0"), Some(Ipv4Addr::new(10, 3, 0, 2)));
        assert_eq!(m.owner(Ipv4Addr::new(10, 3, 0, 1)), Some("net.lan3.host0.eth0"));
    }

    #[test]
    fn host_numbering_crosses_octets() {
        let s = Subnet::for_domain(Domain::Lan(1)).unwrap();
        assert_eq!(s.host(254).unwrap(), Ipv4Addr::new(10, 1, 0, 255));
        assert_eq!(s.host(255).unwrap(), Ipv4Addr::new(10, 1, 1, 0));
        assert!(s.host(65534).is_err());
    }

    #[test]
    fn overflow_and_duplicates() {
        let tiny = Subnet::new(Ipv4Addr::new(192, 168, 0, 0), 30).unwrap();
        let mut list = Vec::new();
        for i in 0..3 {
            list.push(InterfaceAnnouncement {
                node: alloc::format!("n{i}"),
                iface: String::from("eth0"),
                domain: Domain::Lan(0),
                subnet: tiny,
            });
        }
        assert!(assign_addresses(&list[..2]).is_ok());
        assert!(assign_addresses(&list).is_err());
        let mut merged = Vec::new();
        merge_announcements(&mut merged, &list[..1]).unwrap();
        assert!(merge_announcements(&mut merged, &list[..1]).is_err());
    }

    #[test]
    fn merge_order_is_canonical() {
        let a = ann("net.lan0.host1", "eth0", Domain::Lan(0));
        let b = ann("net.lan0.host0", "eth0", Domain::Lan(0));
        let c = ann("net.backbone.router0", "eth1", Domain::Backbone);
        let mut x = Vec::new();
        merge_announcements(&mut x, &[a.clone()]).unwrap();
        merge_announcements(&mut x, &[b.clone(), c.clone()]).unwrap();
        let mut y = Vec::new();
        merge_announcements(&mut y, &[c, b]).unwrap();
        merge_announcements(&mut y, &[a]).unwrap();
        assert_eq!(x, y);
        assert_eq!(decode_announcements(&encode_announcements(&x)).unwrap(), x);
    }

    #[test]
    fn invalid_subnets() {
        assert!(Subnet::new(Ipv4Addr::new(10, 0, 0, 1), 16).is_err());
        assert!(Subnet::new(Ipv4Addr::new(10, 0, 0, 0), 33).is_err());
        assert!(Subnet::for_domain(Domain::Lan(200)).is_err());
    }
}
