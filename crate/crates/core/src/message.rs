//! Messages carried by events, with per-layer headers.

use core::fmt;
use core::net::Ipv4Addr;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::netstack::mac::MacAddress;
use crate::time::SimTime;

pub const UDP_HEADER_BYTES: u32 = 8;
pub const IPV4_HEADER_BYTES: u32 = 20;
/// Ethernet header plus frame check sequence.
pub const ETHERNET_OVERHEAD_BYTES: u32 = 18;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageKind {
    Frame = 1,
    Packet = 2,
    Datagram = 3,
    AppPayload = 4,
    Control = 5,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Frame => "frame",
            MessageKind::Packet => "packet",
            MessageKind::Datagram => "datagram",
            MessageKind::AppPayload => "app-payload",
            MessageKind::Control => "control",
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => MessageKind::Frame,
            2 => MessageKind::Packet,
            3 => MessageKind::Datagram,
            4 => MessageKind::AppPayload,
            5 => MessageKind::Control,
            _ => return Err(Error::Decode(alloc::format!("unknown message kind {v}"))),
        })
    }

    fn depth(self) -> u8 {
        match self {
            MessageKind::Frame => 4,
            MessageKind::Packet => 3,
            MessageKind::Datagram => 2,
            MessageKind::AppPayload => 1,
            MessageKind::Control => 0,
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacHeader {
    pub src: MacAddress,
    pub dst: MacAddress,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IpHeader {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppHeader {
    pub seq: u64,
    pub created: SimTime,
}

/// A message with the headers its kind requires and nothing else.
///
/// A frame carries a packet, which carries a datagram, which carries an
/// application payload; a control message carries only a code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    kind: MessageKind,
    byte_length: u32,
    mac: Option<MacHeader>,
    ip: Option<IpHeader>,
    udp: Option<UdpHeader>,
    app: Option<AppHeader>,
    control: Option<u32>,
}

const HAS_MAC: u8 = 1;
const HAS_IP: u8 = 2;
const HAS_UDP: u8 = 4;
const HAS_APP: u8 = 8;
const HAS_CONTROL: u8 = 16;

impl Message {
    pub fn control(code: u32) -> Self {
        Message {
            kind: MessageKind::Control,
            byte_length: 0,
            mac: None,
            ip: None,
            udp: None,
            app: None,
            control: Some(code),
        }
    }

    pub fn app_payload(byte_length: u32, app: AppHeader) -> Self {
        Message {
            kind: MessageKind::AppPayload,
            byte_length,
            mac: None,
            ip: None,
            udp: None,
            app: Some(app),
            control: None,
        }
    }

    pub fn into_datagram(self, udp: UdpHeader) -> Result<Self> {
        self.wrap(MessageKind::AppPayload, UDP_HEADER_BYTES, |m| {
            m.kind = MessageKind::Datagram;
            m.udp = Some(udp);
        })
    }

    pub fn into_packet(self, ip: IpHeader) -> Result<Self> {
        self.wrap(MessageKind::Datagram, IPV4_HEADER_BYTES, |m| {
            m.kind = MessageKind::Packet;
            m.ip = Some(ip);
        })
    }

    pub fn into_frame(self, mac: MacHeader) -> Result<Self> {
        self.wrap(MessageKind::Packet, ETHERNET_OVERHEAD_BYTES, |m| {
            m.kind = MessageKind::Frame;
            m.mac = Some(mac);
        })
    }

    /// Strips the Ethernet layer.
    pub fn into_packet_from_frame(mut self) -> Result<Self> {
        if self.kind != MessageKind::Frame {
            return Err(Error::Model(alloc::format!("cannot decapsulate a {}", self.kind)));
        }
        self.kind = MessageKind::Packet;
        self.mac = None;
        self.byte_length -= ETHERNET_OVERHEAD_BYTES;
        Ok(self)
    }

    fn wrap(mut self, expect: MessageKind, overhead: u32, f: impl FnOnce(&mut Self)) -> Result<Self> {
        if self.kind != expect {
            return Err(Error::Model(alloc::format!(
                "cannot encapsulate a {} (expected {})",
                self.kind,
                expect
            )));
        }
        self.byte_length = self
            .byte_length
            .checked_add(overhead)
            .ok_or_else(|| Error::Model("message length overflow".into()))?;
        f(&mut self);
        Ok(self)
    }

    pub fn kind(&self) -> MessageKind {
        self.kind
    }

    pub fn byte_length(&self) -> u32 {
        self.byte_length
    }

    pub fn mac(&self) -> Option<&MacHeader> {
        self.mac.as_ref()
    }

    pub fn mac_mut(&mut self) -> Option<&mut MacHeader> {
        self.mac.as_mut()
    }

    pub fn ip(&self) -> Option<&IpHeader> {
        self.ip.as_ref()
    }

    pub fn udp(&self) -> Option<&UdpHeader> {
        self.udp.as_ref()
    }

    pub fn app(&self) -> Option<&AppHeader> {
        self.app.as_ref()
    }

    pub fn control_code(&self) -> Option<u32> {
        self.control
    }

    fn flags(&self) -> u8 {
        let mut f = 0;
        if self.mac.is_some() {
            f |= HAS_MAC;
        }
        if self.ip.is_some() {
            f |= HAS_IP;
        }
        if self.udp.is_some() {
            f |= HAS_UDP;
        }
        if self.app.is_some() {
            f |= HAS_APP;
        }
        if self.control.is_some() {
            f |= HAS_CONTROL;
        }
        f
    }

    fn required_flags(kind: MessageKind) -> u8 {
        if kind == MessageKind::Control {
            return HAS_CONTROL;
        }
        let mut f = HAS_APP;
        let d = kind.depth();
        if d >= 2 {
            f |= HAS_UDP;
        }
        if d >= 3 {
            f |= HAS_IP;
        }
        if d >= 4 {
            f |= HAS_MAC;
        }
        f
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u8(self.kind as u8).u32(self.byte_length).u8(self.flags());
        if let Some(h) = &self.mac {
            w.u64(h.src.to_u64()).u64(h.dst.to_u64());
        }
        if let Some(h) = &self.ip {
            w.u32(h.src.to_bits()).u32(h.dst.to_bits());
        }
        if let Some(h) = &self.udp {
            w.u16(h.src_port).u16(h.dst_port);
        }
        if let Some(h) = &self.app {
            w.u64(h.seq).i64(h.created.ticks());
        }
        if let Some(c) = self.control {
            w.u32(c);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let kind = MessageKind::from_u8(r.u8()?)?;
        let byte_length = r.u32()?;
        let flags = r.u8()?;
        if flags != Self::required_flags(kind) {
            return Err(Error::Decode(alloc::format!(
                "{kind} with header flags {flags:#07b}"
            )));
        }
        let mac = if flags & HAS_MAC != 0 {
            Some(MacHeader {
                src: MacAddress::from_u64(r.u64()?)?,
                dst: MacAddress::from_u64(r.u64()?)?,
            })
        } else {
            None
        };
        let ip = if flags & HAS_IP != 0 {
            Some(IpHeader {
                src: Ipv4Addr::from_bits(r.u32()?),
                dst: Ipv4Addr::from_bits(r.u32()?),
            })
        } else {
            None
        };
        let udp = if flags & HAS_UDP != 0 {
            Some(UdpHeader {
                src_port: r.u16()?,
                dst_port: r.u16()?,
            })
        } else {
            None
        };
        let app = if flags & HAS_APP != 0 {
            Some(AppHeader {
                seq: r.u64()?,
                created: SimTime::from_ps(r.i64()?),
            })
        } else {
            None
        };
        let control = if flags & HAS_CONTROL != 0 {
            Some(r.u32()?)
        } else {
            None
        };
        Ok(Message {
            kind,
            byte_length,
            mac,
            ip,
            udp,
            app,
            control,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame() -> Message {
        Message::app_payload(
            200,
            AppHeader {
                seq: 3,
                created: SimTime::from_us(7),
            },
        )
        .into_datagram(UdpHeader {
            src_port: 1000,
            dst_port: 2000,
        })
        .unwrap()
        .into_packet(IpHeader {
            src: Ipv4Addr::new(10, 0, 0, 1),
            dst: Ipv4Addr::new(10, 3, 0, 9),
        })
        .unwrap()
        .into_frame(MacHeader {
            src: MacAddress::from_u64(0x0AAA_0000_0001).unwrap(),
            dst: MacAddress::from_u64(0x0AAA_0000_0002).unwrap(),
        })
        .unwrap()
    }

    #[test]
    fn layering_adds_header_bytes() {
        let f = frame();
        assert_eq!(f.kind(), MessageKind::Frame);
        assert_eq!(f.byte_length(), 200 + 8 + 20 + 18);
        let p = f.into_packet_from_frame().unwrap();
        assert_eq!(p.byte_length(), 228);
        assert!(p.mac().is_none());
    }

    #[test]
    fn wrong_layer_order_is_rejected() {
        let m = Message::control(1);
        assert!(m.clone().into_packet(IpHeader {
            src: Ipv4Addr::UNSPECIFIED,
            dst: Ipv4Addr::UNSPECIFIED
        })
        .is_err());
        assert!(m.into_packet_from_frame().is_err());
    }

    #[test]
    fn missing_header_fails_decode() {
        let mut w = Writer::new();
        w.u8(MessageKind::Datagram as u8).u32(10).u8(HAS_APP).u64(1).i64(0);
        let b = w.finish();
        assert!(Message::decode(&mut Reader::new(&b)).is_err());
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        (
            0u8..5,
            0u32..100_000,
            any::<u64>(),
            any::<i64>(),
            any::<(u16, u16)>(),
            any::<(u32, u32)>(),
            (0u64..(1 << 48), 0u64..(1 << 48)),
            any::<u32>(),
        )
            .prop_map(|(depth, len, seq, created, ports, ips, macs, code)| {
                if depth == 0 {
                    return Message::control(code);
                }
                let mut m = Message::app_payload(
                    len,
                    AppHeader {
                        seq,
                        created: SimTime::from_ps(created),
                    },
                );
                if depth >= 2 {
                    m = m
                        .into_datagram(UdpHeader {
                            src_port: ports.0,
                            dst_port: ports.1,
                        })
                        .unwrap();
                }
                if depth >= 3 {
                    m = m
                        .into_packet(IpHeader {
                            src: Ipv4Addr::from_bits(ips.0),
                            dst: Ipv4Addr::from_bits(ips.1),
                        })
                        .unwrap();
                }
                if depth >= 4 {
                    m = m
                        .into_frame(MacHeader {
                            src: MacAddress::from_u64(macs.0).unwrap(),
                            dst: MacAddress::from_u64(macs.1).unwrap(),
                        })
                        .unwrap();
                }
                m
            })
    }

    proptest! {
        #[test]
        fn encoding_round_trips(m in arb_message()) {
            let mut w = Writer::new();
            m.encode(&mut w);
            let b = w.finish();
            let mut r = Reader::new(&b);
            let back = Message::decode(&mut r).unwrap();
            r.finish().unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
