//! Hosts and routers.
//!
//! A node owns its interfaces (gate `k` is interface `eth<k>`), its routing
//! table and, on hosts, the UDP layer and the traffic app. Each interface
//! is a DMSI instance of [`MAC_KIND`]:
//!
//! - stage 0: take a MAC from the token and publish it; settle the
//!   connection state directly when the far end is on this LP or there is
//!   no far end, otherwise enqueue an `isConnected` request to the peer;
//! - stage 1: answer requests addressed to this interface and read the
//!   peer's MAC;
//! - stage 2: consume the answer to this interface's own request.

use alloc::vec::Vec;
use core::any::Any;
use core::net::Ipv4Addr;

use crate::dmsi::{DmsiState, DmsiVisit};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::kernel::{Context, InitContext, Module};
use crate::message::{AppHeader, MacHeader, Message, MessageKind};
use crate::netstack::addr::{InterfaceAnnouncement, Subnet};
use crate::netstack::app::{AppStep, TrafficGen, TrafficParams};
use crate::netstack::mac::{auto_assign_mac, MacAddress};
use crate::netstack::routing::RoutingTable;
use crate::netstack::udp::{SocketId, UdpLayer};
use crate::netstack::{NetLocal, MAC_KIND, NET_INIT_STAGES};
use crate::path::ModulePath;
use crate::rng::derive_stream;
use crate::scenario::{Domain, Role};
use crate::time::SimTime;

pub const APP_PORT: u16 = 5000;
const APP_TIMER: u32 = 1;
const IS_CONNECTED: &str = "isConnected";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interface {
    pub mac: Option<MacAddress>,
    pub peer_mac: Option<MacAddress>,
    pub addr: Option<Ipv4Addr>,
    pub connected: Option<bool>,
    /// Stage in which `connected` became known.
    pub connected_stage: Option<u32>,
    awaiting_answer: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HostStats {
    pub sent: u64,
    pub received: u64,
    pub delay_sum: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub src: Ipv4Addr,
    pub created: SimTime,
    pub received: SimTime,
}

struct HostApp {
    gen: TrafficGen,
    socket: SocketId,
    pending: AppStep,
    seq: u64,
}

pub struct Node {
    index: usize,
    role: Role,
    domain: Domain,
    ifaces: Vec<Interface>,
    routes: RoutingTable,
    udp: UdpLayer,
    app: Option<HostApp>,
    traffic: TrafficParams,
    seed: u64,
    stats: HostStats,
    record_deliveries: bool,
    deliveries: Vec<Delivery>,
}

impl Node {
    pub fn new(index: usize, role: Role, domain: Domain, n_ifaces: usize, traffic: TrafficParams, seed: u64) -> Self {
        Node {
            index,
            role,
            domain,
            ifaces: alloc::vec![Interface::default(); n_ifaces],
            routes: RoutingTable::default(),
            udp: UdpLayer::new(),
            app: None,
            traffic,
            seed,
            stats: HostStats::default(),
            record_deliveries: false,
            deliveries: Vec::new(),
        }
    }

    /// Keeps a record of every packet delivered to this host.
    pub fn record_deliveries(mut self, on: bool) -> Self {
        self.record_deliveries = on;
        self
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.ifaces
    }

    pub fn routes(&self) -> &RoutingTable {
        &self.routes
    }

    pub fn stats(&self) -> HostStats {
        self.stats
    }

    pub fn deliveries(&self) -> &[Delivery] {
        &self.deliveries
    }

    pub fn udp_mut(&mut self) -> &mut UdpLayer {
        &mut self.udp
    }

    fn iface_path(path: &ModulePath, k: usize) -> ModulePath {
        path.child(&alloc::format!("eth{k}"))
    }

    fn mac_key(iface: &ModulePath) -> alloc::string::String {
        alloc::format!("mac/{iface}")
    }

    fn mac_visit(&mut self, k: usize, stage: u32, token: &mut DmsiState, cx: &mut InitContext<'_, NetLocal>) -> Result<()> {
        let me = Self::iface_path(cx.path(), k);
        let gate = k as u16;
        match stage {
            0 => {
                let mac = auto_assign_mac(token)?;
                token.put(&Self::mac_key(&me), mac.to_u64().to_be_bytes().to_vec());
                let iface = &mut self.ifaces[k];
                iface.mac = Some(mac);
                match cx.gate_peer(gate) {
                    None => {
                        iface.connected = Some(false);
                        iface.connected_stage = Some(0);
                    }
                    Some(peer) => match cx.gate_connected(peer) {
                        Some(c) => {
                            iface.connected = Some(c);
                            iface.connected_stage = Some(0);
                        }
                        None => {
                            let responder = Self::iface_path(cx.paths().path(peer.module), peer.gate as usize);
                            token.enqueue_request(me.as_str(), IS_CONNECTED, responder.as_str(), Vec::new())?;
                            iface.awaiting_answer = true;
                        }
                    },
                }
            }
            1 => {
                let mine = cx.gate_peer(gate).is_some();
                token.answer_requests(
                    |r| r.tag == IS_CONNECTED && r.responder == me.as_str(),
                    |_| Ok(alloc::vec![mine as u8]),
                )?;
                if let Some(peer) = cx.gate_peer(gate) {
                    let peer_path = Self::iface_path(cx.paths().path(peer.module), peer.gate as usize);
                    let raw = token.get(&Self::mac_key(&peer_path)).ok_or_else(|| {
                        Error::Dmsi(alloc::format!("{me}: peer {peer_path} published no MAC address"))
                    })?;
                    let v = u64::from_be_bytes(
                        raw.try_into()
                            .map_err(|_| Error::Decode(alloc::format!("bad MAC entry for {peer_path}")))?,
                    );
                    self.ifaces[k].peer_mac = Some(MacAddress::from_u64(v)?);
                }
            }
            2 => {
                let iface = &mut self.ifaces[k];
                if iface.awaiting_answer {
                    let answer = token.take_response(me.as_str(), IS_CONNECTED)?;
                    iface.connected = Some(answer == [1]);
                    iface.connected_stage = Some(2);
                    iface.awaiting_answer = false;
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn setup_addresses(&mut self, cx: &mut InitContext<'_, NetLocal>) -> Result<()> {
        let path = cx.path().clone();
        let local = cx.local();
        let addrs = local
            .addresses
            .clone()
            .ok_or_else(|| Error::Config(alloc::format!("{path}: no address map after configuration")))?;
        for (k, iface) in self.ifaces.iter_mut().enumerate() {
            let p = Self::iface_path(&path, k);
            iface.addr = Some(
                addrs
                    .get(p.as_str())
                    .ok_or_else(|| Error::Config(alloc::format!("{p} has no address")))?,
            );
        }
        self.routes = local
            .routes
            .remove(&self.index)
            .ok_or_else(|| Error::Config(alloc::format!("{path} has no routing table")))?;
        if self.role != Role::Host {
            return Ok(());
        }
        let Domain::Lan(j) = self.domain else {
            return Err(Error::Config(alloc::format!("host {path} outside any LAN")));
        };
        let mut near = Vec::new();
        let mut far = Vec::new();
        for (lan, hosts) in local.lan_hosts.iter().enumerate() {
            for &(n, a) in hosts {
                if lan as u32 == j {
                    if n != self.index {
                        near.push(a);
                    }
                } else {
                    far.push(a);
                }
            }
        }
        let gen = TrafficGen::new(derive_stream(self.seed, &path), self.traffic, near, far)?;
        let socket = self.udp.bind(APP_PORT)?;
        let mut app = HostApp {
            gen,
            socket,
            pending: AppStep {
                delay: SimTime::ZERO,
                target: Ipv4Addr::UNSPECIFIED,
                size: 0,
                local: false,
            },
            seq: 0,
        };
        app.pending = app.gen.step()?;
        let first = app.pending.delay;
        self.app = Some(app);
        if self.traffic.stop.is_none_or(|s| first <= s) {
            cx.schedule_at(first, Message::control(APP_TIMER))?;
        }
        Ok(())
    }

    fn is_own(&self, a: Ipv4Addr) -> bool {
        self.ifaces.iter().any(|i| i.addr == Some(a))
    }

    fn transmit(&mut self, packet: Message, cx: &mut Context<'_>) -> Result<()> {
        let dst = packet.ip().expect("packet").dst;
        let k = self
            .routes
            .lookup(dst)
            .ok_or_else(|| Error::Model(alloc::format!("no route to {dst}")))?;
        let iface = &self.ifaces[k as usize];
        if iface.connected != Some(true) {
            return Err(Error::Model(alloc::format!("route to {dst} leaves through unconnected eth{k}")));
        }
        let mac = MacHeader {
            src: iface.mac.expect("assigned in stage 0"),
            dst: iface.peer_mac.expect("resolved in stage 1"),
        };
        cx.send(k, packet.into_frame(mac)?)?;
        Ok(())
    }

    fn on_timer(&mut self, cx: &mut Context<'_>) -> Result<()> {
        let Some(app) = self.app.as_mut() else {
            return Err(Error::Model(alloc::string::String::from("timer on a node without app")));
        };
        let now = cx.now();
        let step = app.pending;
        let payload = Message::app_payload(step.size, AppHeader { seq: app.seq, created: now });
        app.seq += 1;
        let src = self.ifaces[0].addr.expect("configured");
        let packet = self.udp.send(app.socket, src, step.target, APP_PORT, payload)?;
        self.stats.sent += 1;
        self.transmit(packet, cx)?;
        let app = self.app.as_mut().unwrap();
        app.pending = app.gen.step()?;
        let next = now.checked_add(app.pending.delay)?;
        if self.traffic.stop.is_none_or(|s| next <= s) {
            cx.schedule_at(next, Message::control(APP_TIMER))?;
        }
        Ok(())
    }

    fn on_frame(&mut self, frame: Message, gate: u16, cx: &mut Context<'_>) -> Result<()> {
        let iface = self
            .ifaces
            .get(gate as usize)
            .ok_or_else(|| Error::Model(alloc::format!("frame on unknown gate {gate}")))?;
        let dst_mac = frame.mac().expect("frame").dst;
        if Some(dst_mac) != iface.mac {
            return Err(Error::Model(alloc::format!("frame for {dst_mac} arrived at eth{gate}")));
        }
        let packet = frame.into_packet_from_frame()?;
        let ip = *packet.ip().expect("packet");
        if self.is_own(ip.dst) {
            if self.role != Role::Host {
                return Err(Error::Model(alloc::format!("packet for router address {}", ip.dst)));
            }
            let created = packet.app().expect("app payload").created;
            let now = cx.now();
            self.stats.received += 1;
            self.stats.delay_sum = self.stats.delay_sum.checked_add(now.checked_sub(created)?)?;
            if self.record_deliveries {
                self.deliveries.push(Delivery { src: ip.src, created, received: now });
            }
            return Ok(());
        }
        if self.role == Role::Host {
            return Err(Error::Model(alloc::format!("host received packet for {}", ip.dst)));
        }
        self.transmit(packet, cx)
    }
}

impl Module<NetLocal> for Node {
    fn init_stages(&self) -> u32 {
        NET_INIT_STAGES
    }

    fn init(&mut self, stage: u32, cx: &mut InitContext<'_, NetLocal>) -> Result<()> {
        match stage {
            0 => {
                let subnet = Subnet::for_domain(self.domain)?;
                let node = alloc::string::String::from(cx.path().as_str());
                let domain = self.domain;
                let n = self.ifaces.len();
                let local = cx.local();
                for k in 0..n {
                    local.announcements.push(InterfaceAnnouncement {
                        node: node.clone(),
                        iface: alloc::format!("eth{k}"),
                        domain,
                        subnet,
                    });
                }
                Ok(())
            }
            2 => self.setup_addresses(cx),
            _ => Ok(()),
        }
    }

    fn dmsi_visit(&mut self, visit: &DmsiVisit<'_>, token: &mut DmsiState, cx: &mut InitContext<'_, NetLocal>) -> Result<()> {
        if visit.kind != MAC_KIND || visit.slot as usize >= self.ifaces.len() {
            return Err(Error::Dmsi(alloc::format!(
                "{} cannot serve kind `{}` slot {}",
                visit.instance,
                visit.kind,
                visit.slot
            )));
        }
        self.mac_visit(visit.slot as usize, visit.stage, token, cx)
    }

    fn handle(&mut self, event: Event, cx: &mut Context<'_>) -> Result<()> {
        match (event.payload.kind(), event.arrival_gate) {
            (MessageKind::Control, None) if event.payload.control_code() == Some(APP_TIMER) => self.on_timer(cx),
            (MessageKind::Frame, Some(g)) => self.on_frame(event.payload, g, cx),
            (k, g) => Err(Error::Model(alloc::format!("unexpected {k} on gate {g:?}"))),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
