//! Events, their partition-independent total order, and the future event
//! set.

use alloc::collections::BinaryHeap;
use core::cmp::{Ordering, Reverse};

use crate::codec::{Reader, Writer};
use crate::error::Result;
use crate::kernel::ModuleId;
use crate::message::Message;
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub target: ModuleId,
    pub sender: ModuleId,
    pub sender_seq: u64,
    /// Input gate of `target` the message arrives on; `None` for
    /// self-scheduled messages.
    pub arrival_gate: Option<u16>,
    pub payload: Message,
}

/// `(time, target, sender, sender_seq)`.
///
/// Module ids are ranks in the sorted global path table, so comparing ids is
/// the same as comparing rendered paths. The key is unique per run and does
/// not depend on how modules are spread over logical processes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderKey {
    pub time: SimTime,
    pub target: ModuleId,
    pub sender: ModuleId,
    pub sender_seq: u64,
}

impl Event {
    pub fn key(&self) -> OrderKey {
        total_order_key(self)
    }

    pub fn encode(&self, w: &mut Writer) {
        w.i64(self.time.ticks())
            .u32(self.target.0)
            .u32(self.sender.0)
            .u64(self.sender_seq)
            .u16(self.arrival_gate.map_or(u16::MAX, |g| g));
        self.payload.encode(w);
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let time = SimTime::from_ps(r.i64()?);
        let target = ModuleId(r.u32()?);
        let sender = ModuleId(r.u32()?);
        let sender_seq = r.u64()?;
        let gate = r.u16()?;
        let payload = Message::decode(r)?;
        Ok(Event {
            time,
            target,
            sender,
            sender_seq,
            arrival_gate: (gate != u16::MAX).then_some(gate),
            payload,
        })
    }
}

pub fn total_order_key(e: &Event) -> OrderKey {
    OrderKey {
        time: e.time,
        target: e.target,
        sender: e.sender,
        sender_seq: e.sender_seq,
    }
}

struct Entry(Event);

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.0.key() == other.0.key()
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.key().cmp(&other.0.key())
    }
}

/// Binary min-heap over [`OrderKey`].
#[derive(Default)]
pub struct FutureEventSet {
    heap: BinaryHeap<Reverse<Entry>>,
}

impl FutureEventSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: Event) {
        self.heap.push(Reverse(Entry(e)));
    }

    /// `None` means the set is exhausted.
    pub fn pop_min(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(Entry(e))| e)
    }

    pub fn peek(&self) -> Option<&Event> {
        self.heap.peek().map(|Reverse(Entry(e))| e)
    }

    /// Time of the earliest pending event, [`SimTime::MAX`] when empty.
    pub fn head_time(&self) -> SimTime {
        self.peek().map_or(SimTime::MAX, |e| e.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

impl core::fmt::Debug for FutureEventSet {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("FutureEventSet")
            .field("len", &self.len())
            .field("head", &self.head_time())
            .finish()
    }
}
