//! Static routing tables with longest-prefix match.
//!
//! Hosts get a single default route. A router gets a /32 for every
//! interface address of its own domain (LAN or backbone) and one /16 per
//! other domain. Next hops follow hop-count shortest paths; among equally
//! good neighbors the one with the smallest path wins.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::net::Ipv4Addr;

use crate::error::{Error, Result};
use crate::netstack::addr::{mask, AddressMap, Subnet};
use crate::scenario::{Domain, Role, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Route {
    pub dest: Subnet,
    pub iface: u16,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoutingTable {
    // Longest prefixes first, then by base address.
    routes: Vec<Route>,
    // (prefix length, start, end) into `routes`.
    groups: Vec<(u8, usize, usize)>,
}

impl RoutingTable {
    pub fn new(mut routes: Vec<Route>) -> Result<Self> {
        routes.sort_by(|a, b| {
            b.dest
                .prefix_len
                .cmp(&a.dest.prefix_len)
                .then(a.dest.base.cmp(&b.dest.base))
        });
        if let Some(w) = routes.windows(2).find(|w| w[0].dest == w[1].dest) {
            return Err(Error::Config(alloc::format!("two routes for {}", w[0].dest)));
        }
        let mut groups: Vec<(u8, usize, usize)> = Vec::new();
        for (i, r) in routes.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if g.0 == r.dest.prefix_len => g.2 = i + 1,
                _ => groups.push((r.dest.prefix_len, i, i + 1)),
            }
        }
        Ok(RoutingTable { routes, groups })
    }

    /// Outgoing interface for `dst`, if any route matches.
    pub fn lookup(&self, dst: Ipv4Addr) -> Option<u16> {
        let d = u32::from(dst);
        for &(len, lo, hi) in &self.groups {
            let key = d & mask(len);
            if let Ok(i) = self.routes[lo..hi].binary_search_by(|r| u32::from(r.dest.base).cmp(&key)) {
                return Some(self.routes[lo + i].iface);
            }
        }
        None
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// One `<subnet> eth<k>` line per route, in table order.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.routes {
            let _ = writeln!(s, "{} eth{}", r.dest, r.iface);
        }
        s
    }
}

const UNREACHED: u32 = u32::MAX;

fn bfs(topo: &Topology, sources: &[usize], dist: &mut Vec<u32>) {
    dist.clear();
    dist.resize(topo.node_count(), UNREACHED);
    let mut q = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        q.push_back(s);
    }
    while let Some(u) = q.pop_front() {
        for f in &topo.ifaces[u] {
            if dist[f.peer] == UNREACHED {
                dist[f.peer] = dist[u] + 1;
                q.push_back(f.peer);
            }
        }
    }
}

fn next_hop(topo: &Topology, dist: &[u32], node: usize) -> Option<u16> {
    let d = dist[node];
    if d == UNREACHED || d == 0 {
        return None;
    }
    let mut best: Option<(usize, u16)> = None;
    for (k, f) in topo.ifaces[node].iter().enumerate() {
        if dist[f.peer] != d - 1 {
            continue;
        }
        let better = match best {
            None => true,
            Some((p, _)) => topo.nodes[f.peer].path < topo.nodes[p].path,
        };
        if better {
            best = Some((f.peer, k as u16));
        }
    }
    best.map(|(_, k)| k)
}

/// Routing tables for `nodes` (topology indices).
pub fn build_routes(topo: &Topology, addrs: &AddressMap, nodes: &[usize]) -> Result<BTreeMap<usize, RoutingTable>> {
    let mut members: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for (i, n) in topo.nodes.iter().enumerate() {
        members.entry(n.domain).or_default().push(i);
    }
    let mut tables: BTreeMap<usize, Vec<Route>> = BTreeMap::new();
    let mut routers: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for &n in nodes {
        let node = &topo.nodes[n];
        if node.role == Role::Host && topo.ifaces[n].len() == 1 {
            let default = Subnet::new(Ipv4Addr::UNSPECIFIED, 0)?;
            tables.insert(n, alloc::vec![Route { dest: default, iface: 0 }]);
        } else {
            routers.entry(node.domain).or_default().push(n);
            tables.insert(n, Vec::new());
        }
    }
    let mut unreachable: Vec<(usize, String)> = Vec::new();
    let mut dist = Vec::new();
    for (domain, local) in &routers {
        for &t in &members[domain] {
            bfs(topo, &[t], &mut dist);
            for &r in local {
                if r == t {
                    continue;
                }
                let Some(k) = next_hop(topo, &dist, r) else {
                    unreachable.push((r, topo.nodes[t].path.as_str().into()));
                    continue;
                };
                for i in 0..topo.ifaces[t].len() {
                    let p = topo.iface_path(t, i as u16);
                    let a = addrs
                        .get(p.as_str())
                        .ok_or_else(|| Error::Config(alloc::format!("no address for {p}")))?;
                    tables.get_mut(&r).unwrap().push(Route {
                        dest: Subnet::new(a, 32)?,
                        iface: k,
                    });
                }
            }
        }
    }
    if !routers.is_empty() {
        for (domain, sources) in &members {
            bfs(topo, sources, &mut dist);
            let subnet = Subnet::for_domain(*domain)?;
            for (d, local) in &routers {
                if d == domain {
                    continue;
                }
                for &r in local {
                    match next_hop(topo, &dist, r) {
                        Some(k) => tables.get_mut(&r).unwrap().push(Route { dest: subnet, iface: k }),
                        None => unreachable.push((r, alloc::format!("{subnet}"))),
                    }
                }
            }
        }
    }
    if !unreachable.is_empty() {
        let mut msg = alloc::format!("topology is disconnected; {} unreachable pairs:", unreachable.len());
        for (r, t) in unreachable.iter().take(10) {
            let _ = write!(msg, " {} -> {t};", topo.nodes[*r].path);
        }
        return Err(Error::Config(msg));
    }
    tables
        .into_iter()
        .map(|(n, r)| Ok((n, RoutingTable::new(r)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netstack::addr::{assign_addresses, InterfaceAnnouncement};
    use crate::path::ModulePath;
    use crate::scenario::LinkClass;

    fn sn(a: [u8; 4], len: u8) -> Subnet {
        Subnet::new(Ipv4Addr::from(a), len).unwrap()
    }

    #[test]
    fn longest_prefix_wins() {
        let t = RoutingTable::new(alloc::vec![
            Route { dest: sn([0, 0, 0, 0], 0), iface: 9 },
            Route { dest: sn([10, 1, 0, 0], 16), iface: 1 },
            Route { dest: sn([10, 1, 0, 7], 32), iface: 2 },
            Route { dest: sn([10, 2, 0, 0], 16), iface: 3 },
        ])
        .unwrap();
        assert_eq!(t.lookup(Ipv4Addr::new(10, 1, 0, 7)), Some(2));
        assert_eq!(t.lookup(Ipv4Addr::new(10, 1, 0, 8)), Some(1));
        assert_eq!(t.lookup(Ipv4Addr::new(10, 2, 3, 4)), Some(3));
        assert_eq!(t.lookup(Ipv4Addr::new(11, 0, 0, 1)), Some(9));
        assert_eq!(t.render().lines().next(), Some("10.1.0.7/32 eth2"));
    }

    #[test]
    fn no_match_and_duplicates() {
        let t = RoutingTable::new(alloc::vec![Route { dest: sn([10, 1, 0, 0], 16), iface: 1 }]).unwrap();
        assert_eq!(t.lookup(Ipv4Addr::new(10, 3, 0, 1)), None);
        assert!(RoutingTable::new(alloc::vec![
            Route { dest: sn([10, 1, 0, 0], 16), iface: 1 },
            Route { dest: sn([10, 1, 0, 0], 16), iface: 2 },
        ])
        .is_err());
    }

    fn p(s: &str) -> ModulePath {
        ModulePath::parse(s).unwrap()
    }

    fn addresses(t: &Topology) -> AddressMap {
        let mut list = Vec::new();
        for (i, n) in t.nodes.iter().enumerate() {
            for k in 0..t.ifaces[i].len() {
                list.push(InterfaceAnnouncement {
                    node: n.path.as_str().into(),
                    iface: alloc::format!("eth{k}"),
                    domain: n.domain,
                    subnet: Subnet::for_domain(n.domain).unwrap(),
                });
            }
        }
        assign_addresses(&list).unwrap()
    }

    // r.a and r.b both lead from r.src to r.dst in two hops.
    #[test]
    fn equal_cost_tie_goes_to_smaller_neighbor() {
        let mut t = Topology::default();
        let d = Domain::Lan(0);
        let src = t.add_node(p("net.lan0.src"), d, Role::Router).unwrap();
        let b = t.add_node(p("net.lan0.rb"), d, Role::Router).unwrap();
        let a = t.add_node(p("net.lan0.ra"), d, Role::Router).unwrap();
        let dst = t.add_node(p("net.lan0.dst"), d, Role::Router).unwrap();
        t.add_link(src, b, LinkClass::Campus).unwrap();
        t.add_link(src, a, LinkClass::Campus).unwrap();
        t.add_link(b, dst, LinkClass::Campus).unwrap();
        t.add_link(a, dst, LinkClass::Campus).unwrap();
        let addrs = addresses(&t);
        let tables = build_routes(&t, &addrs, &[src]).unwrap();
        let dst_addr = addrs.get("net.lan0.dst.eth0").unwrap();
        // eth1 faces net.lan0.ra
        assert_eq!(tables[&src].lookup(dst_addr), Some(1));
    }

    #[test]
    fn hosts_default_route_and_disconnection() {
        let mut t = Topology::default();
        let d = Domain::Lan(0);
        let h = t.add_node(p("net.lan0.host0"), d, Role::Host).unwrap();
        let r = t.add_node(p("net.lan0.router0"), d, Role::Router).unwrap();
        let lone = t.add_node(p("net.lan0.router1"), d, Role::Router).unwrap();
        t.add_link(h, r, LinkClass::Access).unwrap();
        let h2 = t.add_node(p("net.lan0.host1"), d, Role::Host).unwrap();
        t.add_link(h2, lone, LinkClass::Access).unwrap();
        let addrs = addresses(&t);
        let tables = build_routes(&t, &addrs, &[h]).unwrap();
        assert_eq!(tables[&h].lookup(Ipv4Addr::new(10, 9, 9, 9)), Some(0));
        let err = build_routes(&t, &addrs, &[r]).unwrap_err();
        assert!(alloc::format!("{err}").contains("net.lan0.router0 -> net.lan0.host1"));
    }
}
