//! Simplified network stack: Ethernet-like interfaces, IPv4-style
//! addressing with static routes, UDP and the benchmark traffic app.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::net::Ipv4Addr;

use crate::scenario::Topology;

pub mod addr;
pub mod app;
pub mod configurator;
pub mod mac;
pub mod node;
pub mod routing;
pub mod udp;

pub use addr::{AddressMap, InterfaceAnnouncement, Subnet};
pub use configurator::Configurator;
pub use mac::MacAddress;
pub use node::Node;
pub use routing::RoutingTable;

/// DMSI kind of Ethernet interfaces.
pub const MAC_KIND: &str = "EtherMAC";
/// DMSI kind of the per-LP address configurators.
pub const CONFIGURATOR_KIND: &str = "Ipv4Configurator";
/// Init stages of the network models.
pub const NET_INIT_STAGES: u32 = 3;

/// Logical-process-local service object shared by the network modules
/// during initialization.
#[derive(Debug, Default)]
pub struct NetLocal {
    pub topology: Arc<Topology>,
    /// Topology indices of the nodes on this LP.
    pub local_nodes: Vec<usize>,
    /// Collected from local nodes in stage 0, announced in stage 1.
    pub announcements: Vec<InterfaceAnnouncement>,
    /// Whole-network address map, known from stage 2.
    pub addresses: Option<Arc<AddressMap>>,
    /// Routing tables of local nodes, taken by the nodes in stage 2.
    pub routes: BTreeMap<usize, RoutingTable>,
    /// Host addresses per LAN, in topology order.
    pub lan_hosts: Vec<Vec<(usize, Ipv4Addr)>>,
}

impl NetLocal {
    pub fn new(topology: Arc<Topology>, local_nodes: Vec<usize>) -> Self {
        NetLocal {
            topology,
            local_nodes,
            ..NetLocal::default()
        }
    }
}
