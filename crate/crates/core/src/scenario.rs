//! Scenario description and topology generation.
//!
//! The network is a backbone of routers, each with one campus tree hanging
//! off it. A campus tree has a root router, three mid routers under the
//! root, three leaf routers under each mid router, three hosts at the root
//! and six hosts per leaf: 13 routers and 57 hosts.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::channel::Datarate;
use crate::error::{Error, Result};
use crate::netstack::app::TrafficParams;
use crate::path::ModulePath;
use crate::time::SimTime;

pub const CAMPUS_ROUTERS: u32 = 13;
pub const CAMPUS_HOSTS: u32 = 57;
pub const CAMPUS_NODES: u32 = CAMPUS_ROUTERS + CAMPUS_HOSTS;
const MID_ROUTERS: u32 = 3;
const LEAVES_PER_MID: u32 = 3;
const ROOT_HOSTS: u32 = 3;
const HOSTS_PER_LEAF: u32 = 6;

/// The shipped substitute backbone.
pub const DEFAULT_BACKBONE: &str = include_str!("../data/backbone57.txt");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackboneGraph {
    pub routers: u32,
    pub edges: Vec<(u32, u32)>,
}

impl BackboneGraph {
    /// Parses `routers <n>` followed by one `<a> <b>` edge per line; `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut routers = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |what: &str| Error::Parse(alloc::format!("backbone line {}: {what}", i + 1));
            let mut it = line.split_whitespace();
            let a = it.next().unwrap();
            let b = it.next().ok_or_else(|| err("expected two fields"))?;
            if it.next().is_some() {
                return Err(err("expected two fields"));
            }
            if a == "routers" {
                if routers.is_some() {
                    return Err(err("router count given twice"));
                }
                routers = Some(b.parse::<u32>().map_err(|_| err("bad router count"))?);
                continue;
            }
            let n = routers.ok_or_else(|| err("edge before `routers` line"))?;
            let a: u32 = a.parse().map_err(|_| err("bad router index"))?;
            let b: u32 = b.parse().map_err(|_| err("bad router index"))?;
            if a >= n || b >= n || a == b {
                return Err(err("edge endpoint out of range or self loop"));
            }
            let e = (a.min(b), a.max(b));
            if edges.contains(&e) {
                return Err(err("duplicate edge"));
            }
            edges.push(e);
        }
        let routers = routers.ok_or_else(|| Error::Parse(String::from("backbone file has no `routers` line")))?;
        Ok(BackboneGraph { routers, edges })
    }

    /// Edges among the first `n` routers, in file order.
    pub fn prefix_edges(&self, n: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied().filter(move |&(a, b)| a < n && b < n)
    }
}

impl Default for BackboneGraph {
    fn default() -> Self {
        BackboneGraph::parse(DEFAULT_BACKBONE).expect("shipped backbone parses")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkParams {
    pub delay: SimTime,
    pub datarate: Datarate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkClass {
    /// Host to its campus router.
    Access,
    /// Router to router inside a campus tree.
    Campus,
    /// Campus root to its backbone router.
    Uplink,
    Backbone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkTable {
    pub access: LinkParams,
    pub campus: LinkParams,
    pub uplink: LinkParams,
    pub backbone: LinkParams,
}

impl LinkTable {
    pub fn with_gateway_delay(gateway_delay: SimTime) -> Self {
        let lan = SimTime::from_us(100);
        LinkTable {
            access: LinkParams { delay: lan, datarate: Datarate::gbps(1) },
            campus: LinkParams { delay: lan, datarate: Datarate::gbps(10) },
            uplink: LinkParams { delay: gateway_delay, datarate: Datarate::gbps(10) },
            backbone: LinkParams { delay: lan, datarate: Datarate::gbps(100) },
        }
    }

    pub fn get(&self, class: LinkClass) -> LinkParams {
        match class {
            LinkClass::Access => self.access,
            LinkClass::Campus => self.campus,
            LinkClass::Uplink => self.uplink,
            LinkClass::Backbone => self.backbone,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub n_lans: u32,
    pub backbone: BackboneGraph,
    pub links: LinkTable,
    pub traffic: TrafficParams,
    pub sim_time: SimTime,
    pub seed: u64,
}

impl Scenario {
    pub fn new(n_lans: u32, gateway_delay: SimTime) -> Self {
        Scenario {
            n_lans,
            backbone: BackboneGraph::default(),
            links: LinkTable::with_gateway_delay(gateway_delay),
            traffic: TrafficParams::default(),
            sim_time: SimTime::from_ms(10),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lans == 0 {
            return Err(Error::Config(String::from("n_lans must be at least 1")));
        }
        if self.n_lans > self.backbone.routers {
            return Err(Error::Config(alloc::format!(
                "n_lans = {} exceeds the {} backbone routers",
                self.n_lans,
                self.backbone.routers
            )));
        }
        for class in [LinkClass::Access, LinkClass::Campus, LinkClass::Uplink, LinkClass::Backbone] {
            if self.links.get(class).delay <= SimTime::ZERO {
                return Err(Error::Config(alloc::format!("{class:?} link delay must be positive")));
            }
        }
        if self.sim_time < SimTime::ZERO {
            return Err(Error::Config(String::from("sim_time must not be negative")));
        }
        self.traffic.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Backbone,
    Lan(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Host,
    Router,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopoNode {
    pub path: ModulePath,
    pub domain: Domain,
    pub role: Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopoIface {
    pub peer: usize,
    pub peer_iface: u16,
    pub class: LinkClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopoLink {
    pub a: usize,
    pub a_iface: u16,
    pub b: usize,
    pub b_iface: u16,
    pub class: LinkClass,
}

/// The node graph. Node indices are generation order; interfaces are
/// numbered per node in link-creation order.
#[derive(Clone, Debug, Default)]
pub struct Topology {
    pub nodes: Vec<TopoNode>,
    pub ifaces: Vec<Vec<TopoIface>>,
    pub links: Vec<TopoLink>,
    index: BTreeMap<ModulePath, usize>,
}

impl Topology {
    pub fn add_node(&mut self, path: ModulePath, domain: Domain, role: Role) -> Result<usize> {
        if self.index.contains_key(&path) {
            return Err(Error::Config(alloc::format!("node {path} defined twice")));
        }
        let i = self.nodes.len();
        self.index.insert(path.clone(), i);
        self.nodes.push(TopoNode { path, domain, role });
        self.ifaces.push(Vec::new());
        Ok(i)
    }

    pub fn add_link(&mut self, a: usize, b: usize, class: LinkClass) -> Result<()> {
        if a == b || a >= self.nodes.len() || b >= self.nodes.len() {
            return Err(Error::Config(alloc::format!("bad link {a} -- {b}")));
        }
        let ia = self.ifaces[a].len() as u16;
        let ib = self.ifaces[b].len() as u16;
        self.ifaces[a].push(TopoIface { peer: b, peer_iface: ib, class });
        self.ifaces[b].push(TopoIface { peer: a, peer_iface: ia, class });
        self.links.push(TopoLink { a, a_iface: ia, b, b_iface: ib, class });
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn find(&self, path: &ModulePath) -> Option<usize> {
        self.index.get(path).copied()
    }

    pub fn iface_path(&self, node: usize, iface: u16) -> ModulePath {
        self.nodes[node].path.child(&alloc::format!("eth{iface}"))
    }

    pub fn hosts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].role == Role::Host)
    }
}

pub fn backbone_router_path(i: u32) -> ModulePath {
    ModulePath::root("net").child("backbone").child(&alloc::format!("router{i}"))
}

pub fn lan_path(j: u32) -> ModulePath {
    ModulePath::root("net").child(&alloc::format!("lan{j}"))
}

/// Leaf router index for campus host `k` (hosts below 3 sit at the root).
pub fn campus_host_router(k: u32) -> u32 {
    if k < ROOT_HOSTS {
        0
    } else {
        1 + MID_ROUTERS + (k - ROOT_HOSTS) / HOSTS_PER_LEAF
    }
}

/// Builds the node graph of `s`: `71 n` nodes and `70 n + e(n)` links,
/// where `e(n)` counts backbone edges among the first `n` routers.
pub fn generate_topology(s: &Scenario) -> Result<Topology> {
    s.validate()?;
    let n = s.n_lans;
    let mut t = Topology::default();
    let bb: Vec<usize> = (0..n)
        .map(|i| t.add_node(backbone_router_path(i), Domain::Backbone, Role::Router))
        .collect::<Result<_>>()?;
    for (a, b) in s.backbone.prefix_edges(n) {
        t.add_link(bb[a as usize], bb[b as usize], LinkClass::Backbone)?;
    }
    for j in 0..n {
        let lan = lan_path(j);
        let routers: Vec<usize> = (0..CAMPUS_ROUTERS)
            .map(|k| t.add_node(lan.child(&alloc::format!("router{k}")), Domain::Lan(j), Role::Router))
            .collect::<Result<_>>()?;
        t.add_link(routers[0], bb[j as usize], LinkClass::Uplink)?;
        for m in 0..MID_ROUTERS {
            t.add_link(routers[0], routers[(1 + m) as usize], LinkClass::Campus)?;
        }
        for m in 0..MID_ROUTERS {
            for k in 0..LEAVES_PER_MID {
                let leaf = 1 + MID_ROUTERS + m * LEAVES_PER_MID + k;
                t.add_link(routers[(1 + m) as usize], routers[leaf as usize], LinkClass::Campus)?;
            }
        }
        for k in 0..CAMPUS_HOSTS {
            let h = t.add_node(lan.child(&alloc::format!("host{k}")), Domain::Lan(j), Role::Host)?;
            t.add_link(h, routers[campus_host_router(k) as usize], LinkClass::Access)?;
        }
    }
    Ok(t)
}
