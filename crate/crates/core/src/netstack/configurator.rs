//! Per-LP IPv4 configurator.
//!
//! One instance runs on every logical process. In stage 1 each instance
//! adds the announcements its local nodes collected in stage 0 to the
//! token; by stage 2 the token holds the whole network's list and every
//! instance computes the same address map, plus the routing tables of its
//! local nodes.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::any::Any;

use crate::dmsi::{DmsiState, DmsiVisit};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::kernel::{Context, InitContext, Module};
use crate::netstack::addr::{assign_addresses, decode_announcements, encode_announcements, merge_announcements};
use crate::netstack::routing::build_routes;
use crate::netstack::{NetLocal, CONFIGURATOR_KIND, NET_INIT_STAGES};
use crate::scenario::{Domain, Role};

pub const ANNOUNCEMENTS_KEY: &str = "announcements";

#[derive(Debug, Default)]
pub struct Configurator;

impl Configurator {
    fn announce(token: &mut DmsiState, local: &mut NetLocal) -> Result<()> {
        let mut list = match token.get(ANNOUNCEMENTS_KEY) {
            Some(b) => decode_announcements(b)?,
            None => Vec::new(),
        };
        let mine = core::mem::take(&mut local.announcements);
        merge_announcements(&mut list, &mine)?;
        token.put(ANNOUNCEMENTS_KEY, encode_announcements(&list));
        Ok(())
    }

    fn assign(token: &DmsiState, local: &mut NetLocal) -> Result<()> {
        let raw = token
            .get(ANNOUNCEMENTS_KEY)
            .ok_or_else(|| Error::Dmsi(alloc::string::String::from("no interface announcements in the token")))?;
        let list = decode_announcements(raw)?;
        let addrs = assign_addresses(&list)?;
        let topo = local.topology.clone();
        local.routes = build_routes(&topo, &addrs, &local.local_nodes)?;
        let lans = topo
            .nodes
            .iter()
            .filter_map(|n| match n.domain {
                Domain::Lan(j) => Some(j as usize + 1),
                Domain::Backbone => None,
            })
            .max()
            .unwrap_or(0);
        let mut lan_hosts = alloc::vec![Vec::new(); lans];
        for h in topo.hosts() {
            let node = &topo.nodes[h];
            if let (Domain::Lan(j), Role::Host) = (node.domain, node.role) {
                let p = topo.iface_path(h, 0);
                let a = addrs
                    .get(p.as_str())
                    .ok_or_else(|| Error::Config(alloc::format!("host interface {p} has no address")))?;
                lan_hosts[j as usize].push((h, a));
            }
        }
        local.lan_hosts = lan_hosts;
        local.addresses = Some(Arc::new(addrs));
        Ok(())
    }
}

impl Module<NetLocal> for Configurator {
    fn init_stages(&self) -> u32 {
        NET_INIT_STAGES
    }

    fn dmsi_visit(&mut self, visit: &DmsiVisit<'_>, token: &mut DmsiState, cx: &mut InitContext<'_, NetLocal>) -> Result<()> {
        if visit.kind != CONFIGURATOR_KIND {
            return Err(Error::Dmsi(alloc::format!("configurator visited for kind `{}`", visit.kind)));
        }
        match visit.stage {
            1 => Self::announce(token, cx.local()),
            2 => Self::assign(token, cx.local()),
            _ => Ok(()),
        }
    }

    fn handle(&mut self, event: Event, _cx: &mut Context<'_>) -> Result<()> {
        Err(Error::Model(alloc::format!("configurator received {}", event.payload.kind())))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
