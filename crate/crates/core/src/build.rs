//! Turns a scenario and a partition mapping into per-LP kernels.
//!
//! Every logical process derives the same global view (path table, DMSI
//! plan, cut links) from the scenario alone, then instantiates only its
//! own modules and the channels leaving them.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::channel::{Channel, GateRef};
use crate::dmsi::{Registry, StagePlan};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, ModuleId};
use crate::lp::{LpId, LpLinks, ProxyLink};
use crate::netstack::{Configurator, NetLocal, Node, CONFIGURATOR_KIND, MAC_KIND};
use crate::partition::{assign_partitions, PartitionMapping};
use crate::path::{ModulePath, PathTable};
use crate::scenario::{generate_topology, Scenario, Topology};

pub fn configurator_path(lp: LpId) -> ModulePath {
    ModulePath::root("net").child(&alloc::format!("configurator{}", lp.0))
}

#[derive(Clone, Debug, Default)]
pub struct BuildOptions {
    /// Hosts keep a record of every delivered packet.
    pub record_deliveries: bool,
    /// `(node, interface)` pairs whose outgoing channel is left unwired.
    pub dangling_gates: BTreeSet<(usize, u16)>,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub scenario: Scenario,
    pub topology: Arc<Topology>,
    pub mapping: PartitionMapping,
    pub paths: Arc<PathTable>,
    node_ids: Vec<ModuleId>,
    node_lp: Vec<LpId>,
    plan: StagePlan,
    proxy: Vec<ProxyLink>,
}

impl Model {
    pub fn new(scenario: Scenario, n_lps: u32) -> Result<Self> {
        let mapping = assign_partitions(scenario.n_lans, n_lps)?;
        Self::with_mapping(scenario, mapping)
    }

    pub fn with_mapping(scenario: Scenario, mapping: PartitionMapping) -> Result<Self> {
        let topology = Arc::new(generate_topology(&scenario)?);
        if mapping.lan_lp.len() != scenario.n_lans as usize
            || mapping.backbone_lp.0 >= mapping.n_lps
            || mapping.lan_lp.iter().any(|l| l.0 >= mapping.n_lps)
        {
            return Err(Error::Config(alloc::string::String::from(
                "partition mapping does not fit the scenario",
            )));
        }
        let mut all: Vec<ModulePath> = topology.nodes.iter().map(|n| n.path.clone()).collect();
        all.extend((0..mapping.n_lps).map(|l| configurator_path(LpId(l))));
        let paths = Arc::new(PathTable::new(all));
        let node_ids: Vec<ModuleId> = topology
            .nodes
            .iter()
            .map(|n| paths.id(&n.path).expect("node in table"))
            .collect();
        let node_lp: Vec<LpId> = topology.nodes.iter().map(|n| mapping.lp_of(n.domain)).collect();

        let mut reg = Registry::new();
        for (i, ifaces) in topology.ifaces.iter().enumerate() {
            for k in 0..ifaces.len() {
                reg.register_kind(MAC_KIND, topology.iface_path(i, k as u16), node_ids[i], k as u32, node_lp[i])?;
            }
        }
        for l in 0..mapping.n_lps {
            let p = configurator_path(LpId(l));
            let id = paths.id(&p).expect("configurator in table");
            reg.register_kind(CONFIGURATOR_KIND, p, id, 0, LpId(l))?;
        }
        let plan = reg.seal();

        let mut model = Model {
            scenario,
            topology,
            mapping,
            paths,
            node_ids,
            node_lp,
            plan,
            proxy: Vec::new(),
        };
        let mut proxy = Vec::new();
        for (c, src, dst) in model.channels() {
            if model.node_lp[src] != model.node_lp[dst] {
                proxy.push(ProxyLink::new(c?, model.node_lp[src], model.node_lp[dst])?);
            }
        }
        model.proxy = proxy;
        Ok(model)
    }

    pub fn n_lps(&self) -> u32 {
        self.mapping.n_lps
    }

    pub fn plan(&self) -> &StagePlan {
        &self.plan
    }

    pub fn node_id(&self, node: usize) -> ModuleId {
        self.node_ids[node]
    }

    pub fn node_lp(&self, node: usize) -> LpId {
        self.node_lp[node]
    }

    pub fn proxy_links(&self) -> &[ProxyLink] {
        &self.proxy
    }

    pub fn lp_links(&self, lp: LpId) -> LpLinks {
        LpLinks::for_lp(lp, &self.proxy)
    }

    /// Both directions of every topology link, with source and destination
    /// node indices.
    pub fn channels(&self) -> impl Iterator<Item = (Result<Channel>, usize, usize)> + '_ {
        self.topology.links.iter().flat_map(move |l| {
            let p = self.scenario.links.get(l.class);
            let a = GateRef { module: self.node_ids[l.a], gate: l.a_iface };
            let b = GateRef { module: self.node_ids[l.b], gate: l.b_iface };
            [
                (Channel::new(p.delay, p.datarate, a, b), l.a, l.b),
                (Channel::new(p.delay, p.datarate, b, a), l.b, l.a),
            ]
        })
    }

    /// The kernel of logical process `lp` with its modules and outgoing
    /// channels, not yet initialized.
    pub fn build_lp(&self, lp: LpId, opts: &BuildOptions) -> Result<Kernel<NetLocal>> {
        if lp.0 >= self.mapping.n_lps {
            return Err(Error::Config(alloc::format!("LP {} out of range", lp.0)));
        }
        let local_nodes: Vec<usize> = (0..self.topology.node_count()).filter(|&n| self.node_lp[n] == lp).collect();
        let mut k = Kernel::new(self.paths.clone(), lp, NetLocal::new(self.topology.clone(), local_nodes.clone()));
        for &n in &local_nodes {
            let node = &self.topology.nodes[n];
            let m = Node::new(
                n,
                node.role,
                node.domain,
                self.topology.ifaces[n].len(),
                self.scenario.traffic,
                self.scenario.seed,
            )
            .record_deliveries(opts.record_deliveries);
            k.add_module(self.node_ids[n], Box::new(m))?;
        }
        let cfg = self.paths.id(&configurator_path(lp)).expect("configurator in table");
        k.add_module(cfg, Box::new(Configurator))?;
        for (c, src, dst) in self.channels() {
            let c = c?;
            if self.node_lp[src] != lp || opts.dangling_gates.contains(&(src, c.src_gate.gate)) {
                continue;
            }
            let remote = (self.node_lp[dst] != lp).then_some(self.node_lp[dst]);
            k.connect(c, remote)?;
        }
        Ok(k)
    }
}
