//! Wire envelopes and the abstract transport between logical processes.
//!
//! Envelope layout (big-endian, bit-exact across platforms):
//!
//! ```text
//! +------+-----------------+-------------------+-----------------+
//! | kind | ticks (i64, 8B) | payload len (u32) | payload bytes   |
//! +------+-----------------+-------------------+-----------------+
//! ```

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::lp::LpId;
use crate::time::SimTime;

pub const ENVELOPE_HEADER_LEN: usize = 13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EnvelopeKind {
    Event = 1,
    Null = 2,
    DmsiToken = 3,
    Barrier = 4,
}

impl EnvelopeKind {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            1 => EnvelopeKind::Event,
            2 => EnvelopeKind::Null,
            3 => EnvelopeKind::DmsiToken,
            4 => EnvelopeKind::Barrier,
            _ => return Err(Error::Decode(alloc::format!("unknown envelope kind {v}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    pub timestamp: SimTime,
    pub payload: Vec<u8>,
}

impl Envelope {
    pub fn null(timestamp: SimTime) -> Self {
        Envelope {
            kind: EnvelopeKind::Null,
            timestamp,
            payload: Vec::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::with_capacity(ENVELOPE_HEADER_LEN + self.payload.len());
        w.u8(self.kind as u8)
            .i64(self.timestamp.ticks())
            .u32(self.payload.len() as u32)
            .raw(&self.payload);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let kind = EnvelopeKind::from_u8(r.u8()?)?;
        let timestamp = SimTime::from_ps(r.i64()?);
        let len = r.u32()? as usize;
        let payload = r.raw(len)?.to_vec();
        r.finish()?;
        Ok(Envelope {
            kind,
            timestamp,
            payload,
        })
    }

    /// Payload length announced by a 13-byte header; used by stream
    /// transports to frame envelopes.
    pub fn payload_len_from_header(header: &[u8; ENVELOPE_HEADER_LEN]) -> usize {
        u32::from_be_bytes([header[9], header[10], header[11], header[12]]) as usize
    }
}

/// Byte-level, per-link FIFO delivery between logical processes.
pub trait Transport {
    fn local_lp(&self) -> LpId;

    fn lp_count(&self) -> usize;

    fn send(&mut self, to: LpId, bytes: Vec<u8>) -> Result<()>;

    /// Blocks until an envelope arrives. Implementations surface hangs as
    /// [`Error::Watchdog`].
    fn recv(&mut self) -> Result<(LpId, Vec<u8>)>;

    fn try_recv(&mut self) -> Result<Option<(LpId, Vec<u8>)>>;
}

/// Transport of a run with a single logical process. Nothing is ever
/// exchanged, so receiving is an error.
#[derive(Clone, Copy, Debug, Default)]
pub struct SoloTransport;

impl Transport for SoloTransport {
    fn local_lp(&self) -> LpId {
        LpId(0)
    }

    fn lp_count(&self) -> usize {
        1
    }

    fn send(&mut self, to: LpId, _bytes: Vec<u8>) -> Result<()> {
        Err(Error::Transport(alloc::format!("single-LP run cannot send to LP {}", to.0)))
    }

    fn recv(&mut self) -> Result<(LpId, Vec<u8>)> {
        Err(Error::Transport(alloc::string::String::from("single-LP run has nothing to receive")))
    }

    fn try_recv(&mut self) -> Result<Option<(LpId, Vec<u8>)>> {
        Ok(None)
    }
}

/// Counts of envelopes sent, by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SendCounters {
    pub events: u64,
    pub nulls: u64,
    pub tokens: u64,
    pub barriers: u64,
}

const BARRIER_ARRIVE: u8 = 0;
const BARRIER_RELEASE: u8 = 1;

/// Envelope-level view of a [`Transport`] with a stash for envelopes that
/// arrive before the protocol phase that consumes them. Stashed envelopes
/// keep their arrival order, so per-link FIFO order is preserved.
pub struct Endpoint<T> {
    transport: T,
    stash: VecDeque<(LpId, Envelope)>,
    epoch: u32,
    pub sent: SendCounters,
}

impl<T: Transport> Endpoint<T> {
    pub fn new(transport: T) -> Self {
        Endpoint {
            transport,
            stash: VecDeque::new(),
            epoch: 0,
            sent: SendCounters::default(),
        }
    }

    pub fn lp(&self) -> LpId {
        self.transport.local_lp()
    }

    pub fn lp_count(&self) -> usize {
        self.transport.lp_count()
    }

    pub fn into_inner(self) -> T {
        self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn send(&mut self, to: LpId, env: &Envelope) -> Result<()> {
        if to == self.lp() {
            return Err(Error::Protocol(alloc::format!("LP {} sending to itself", to.0)));
        }
        match env.kind {
            EnvelopeKind::Event => self.sent.events += 1,
            EnvelopeKind::Null => self.sent.nulls += 1,
            EnvelopeKind::DmsiToken => self.sent.tokens += 1,
            EnvelopeKind::Barrier => self.sent.barriers += 1,
        }
        self.transport.send(to, env.encode())
    }

    fn pull(&mut self) -> Result<(LpId, Envelope)> {
        let (from, bytes) = self.transport.recv()?;
        Ok((from, Envelope::decode(&bytes)?))
    }

    /// Next envelope in arrival order, blocking.
    pub fn next(&mut self) -> Result<(LpId, Envelope)> {
        if let Some(x) = self.stash.pop_front() {
            return Ok(x);
        }
        self.pull()
    }

    pub fn try_next(&mut self) -> Result<Option<(LpId, Envelope)>> {
        if let Some(x) = self.stash.pop_front() {
            return Ok(Some(x));
        }
        match self.transport.try_recv()? {
            Some((from, bytes)) => Ok(Some((from, Envelope::decode(&bytes)?))),
            None => Ok(None),
        }
    }

    /// First envelope satisfying `pred`; everything else is stashed.
    pub fn next_matching(&mut self, mut pred: impl FnMut(LpId, &Envelope) -> bool) -> Result<(LpId, Envelope)> {
        if let Some(i) = self.stash.iter().position(|(f, e)| pred(*f, e)) {
            return Ok(self.stash.remove(i).unwrap());
        }
        loop {
            let (from, env) = self.pull()?;
            if pred(from, &env) {
                return Ok((from, env));
            }
            self.stash.push_back((from, env));
        }
    }

    fn barrier_payload(phase: u8, epoch: u32, value: u64) -> Vec<u8> {
        let mut w = Writer::with_capacity(13);
        w.u8(phase).u32(epoch).u64(value);
        w.finish()
    }

    fn parse_barrier(env: &Envelope) -> Option<(u8, u32, u64)> {
        if env.kind != EnvelopeKind::Barrier {
            return None;
        }
        let mut r = Reader::new(&env.payload);
        Some((r.u8().ok()?, r.u32().ok()?, r.u64().ok()?))
    }

    /// Global barrier coordinated by LP 0. Returns the maximum of the values
    /// contributed by all logical processes.
    pub fn barrier(&mut self, value: u64) -> Result<u64> {
        let epoch = self.epoch;
        self.epoch += 1;
        let n = self.lp_count();
        if n == 1 {
            return Ok(value);
        }
        let me = self.lp();
        if me == LpId(0) {
            let mut max = value;
            for _ in 1..n {
                let (_, env) = self.next_matching(|_, e| {
                    matches!(Self::parse_barrier(e), Some((BARRIER_ARRIVE, ep, _)) if ep == epoch)
                })?;
                let (_, _, v) = Self::parse_barrier(&env).unwrap();
                max = max.max(v);
            }
            for to in 1..n {
                let env = Envelope {
                    kind: EnvelopeKind::Barrier,
                    timestamp: SimTime::ZERO,
                    payload: Self::barrier_payload(BARRIER_RELEASE, epoch, max),
                };
                self.send(LpId(to as u32), &env)?;
            }
            Ok(max)
        } else {
            let env = Envelope {
                kind: EnvelopeKind::Barrier,
                timestamp: SimTime::ZERO,
                payload: Self::barrier_payload(BARRIER_ARRIVE, epoch, value),
            };
            self.send(LpId(0), &env)?;
            let (_, rel) = self.next_matching(|from, e| {
                from == LpId(0)
                    && matches!(Self::parse_barrier(e), Some((BARRIER_RELEASE, ep, _)) if ep == epoch)
            })?;
            Ok(Self::parse_barrier(&rel).unwrap().2)
        }
    }

    /// Puts an envelope back for a later [`Endpoint::next_matching`].
    pub fn restash(&mut self, from: LpId, env: Envelope) {
        self.stash.push_back((from, env));
    }

    /// Drops stashed envelopes of the given kind; returns how many.
    pub fn discard_stashed(&mut self, kind: EnvelopeKind) -> usize {
        let before = self.stash.len();
        self.stash.retain(|(_, e)| e.kind != kind);
        before - self.stash.len()
    }
}
