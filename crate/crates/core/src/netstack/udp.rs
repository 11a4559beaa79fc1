//! UDP sockets with node-local identifiers.

use alloc::collections::BTreeMap;
use core::net::Ipv4Addr;

use crate::error::{Error, Result};
use crate::message::{IpHeader, Message, UdpHeader};

/// Identifier of a socket, unique within one node only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SocketId(pub u32);

#[derive(Clone, Debug, Default)]
pub struct UdpLayer {
    next_id: u32,
    bound: BTreeMap<SocketId, u16>,
}

impl UdpLayer {
    pub fn new() -> Self {
        Self::default()
    }

    /// A layer whose next socket gets `next` as identifier.
    pub fn with_next_id(next: u32) -> Self {
        UdpLayer {
            next_id: next,
            bound: BTreeMap::new(),
        }
    }

    pub fn bind(&mut self, port: u16) -> Result<SocketId> {
        let id = SocketId(self.next_id);
        self.next_id = self
            .next_id
            .checked_add(1)
            .ok_or_else(|| Error::Model(alloc::string::String::from("socket identifiers exhausted")))?;
        self.bound.insert(id, port);
        Ok(id)
    }

    pub fn port(&self, s: SocketId) -> Option<u16> {
        self.bound.get(&s).copied()
    }

    /// Wraps `payload` in UDP and IPv4 headers.
    pub fn send(&self, s: SocketId, src: Ipv4Addr, dst: Ipv4Addr, dst_port: u16, payload: Message) -> Result<Message> {
        let src_port = self
            .port(s)
            .ok_or_else(|| Error::Model(alloc::format!("send on unbound socket {}", s.0)))?;
        payload
            .into_datagram(UdpHeader { src_port, dst_port })?
            .into_packet(IpHeader { src, dst })
    }
}
