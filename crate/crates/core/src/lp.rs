//! Logical processes and conservative null-message synchronization.
//!
//! Every cut channel becomes a [`ProxyLink`]; links between the same pair of
//! logical processes share one FIFO transport link whose lookahead is the
//! smallest delay among them. Per input link the runtime tracks the
//! earliest input time (EIT): no envelope arriving later on that link
//! carries an event earlier than it. An LP processes events strictly before
//! `safe_time = min EIT`, and after every batch promises
//! `EOT = min(FES head, safe_time) + lookahead` to each output link,
//! sending a null message only when that promise strictly advanced.
//!
//! Event envelopes carry the sender's promise in the envelope timestamp
//! (`max(last EOT, send time + lookahead)`) and the event itself in the
//! payload. Event times on one link need not be monotone (serialization
//! delays differ per frame) but the promises are.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::channel::Channel;
use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::event::Event;
use crate::kernel::{Kernel, RunStats};
use crate::time::SimTime;
use crate::transport::{Endpoint, Envelope, EnvelopeKind, SendCounters, Transport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LpId(pub u32);

impl LpId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A channel whose ends live on different logical processes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProxyLink {
    pub src_lp: LpId,
    pub dst_lp: LpId,
    pub lookahead: SimTime,
    pub channel: Channel,
}

impl ProxyLink {
    pub fn new(channel: Channel, src_lp: LpId, dst_lp: LpId) -> Result<Self> {
        if channel.delay <= SimTime::ZERO {
            return Err(Error::Config(alloc::format!(
                "cut link {:?} -> {:?} (LP {} -> LP {}) has no lookahead: delay {}",
                channel.src_gate,
                channel.dst_gate,
                src_lp.0,
                dst_lp.0,
                channel.delay
            )));
        }
        Ok(ProxyLink {
            src_lp,
            dst_lp,
            lookahead: channel.delay,
            channel,
        })
    }
}

/// Minimum delay over all `a -> b` cut links.
pub fn compute_lookahead(links: &[ProxyLink], a: LpId, b: LpId) -> Option<SimTime> {
    links
        .iter()
        .filter(|l| l.src_lp == a && l.dst_lp == b)
        .map(|l| l.lookahead)
        .min()
}

/// Per-LP aggregate of the proxy links touching it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LpLinks {
    pub inputs: Vec<LpId>,
    pub outputs: Vec<(LpId, SimTime)>,
}

impl LpLinks {
    pub fn for_lp(lp: LpId, links: &[ProxyLink]) -> Self {
        let mut inputs: Vec<LpId> = links.iter().filter(|l| l.dst_lp == lp).map(|l| l.src_lp).collect();
        inputs.sort();
        inputs.dedup();
        let mut outs: BTreeMap<LpId, SimTime> = BTreeMap::new();
        for l in links.iter().filter(|l| l.src_lp == lp) {
            let e = outs.entry(l.dst_lp).or_insert(l.lookahead);
            *e = (*e).min(l.lookahead);
        }
        LpLinks {
            inputs,
            outputs: outs.into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct OutClock {
    to: LpId,
    lookahead: SimTime,
    last_eot: SimTime,
}

/// EIT per input link and last sent EOT per output link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelClock {
    eit: Vec<(LpId, SimTime)>,
    out: Vec<OutClock>,
}

impl ChannelClock {
    pub fn new(links: &LpLinks) -> Self {
        ChannelClock {
            eit: links.inputs.iter().map(|&l| (l, SimTime::ZERO)).collect(),
            out: links
                .outputs
                .iter()
                .map(|&(to, lookahead)| OutClock {
                    to,
                    lookahead,
                    last_eot: SimTime::ZERO,
                })
                .collect(),
        }
    }

    /// Minimum input EIT; unbounded without inputs.
    pub fn safe_time(&self) -> SimTime {
        self.eit.iter().map(|&(_, t)| t).min().unwrap_or(SimTime::MAX)
    }

    pub fn eit(&self, from: LpId) -> Option<SimTime> {
        self.eit.iter().find(|(l, _)| *l == from).map(|&(_, t)| t)
    }

    /// Raises the EIT of the link from `from`. A regression is a protocol
    /// violation.
    pub fn advance(&mut self, from: LpId, ts: SimTime) -> Result<()> {
        let slot = self
            .eit
            .iter_mut()
            .find(|(l, _)| *l == from)
            .ok_or_else(|| Error::Protocol(alloc::format!("envelope from LP {} which has no link here", from.0)))?;
        if ts < slot.1 {
            return Err(Error::Protocol(alloc::format!(
                "EIT regression on link from LP {}: {} after {}",
                from.0,
                ts,
                slot.1
            )));
        }
        slot.1 = ts;
        Ok(())
    }

    /// `min(fes_head, safe_time) + lookahead` for the link to `to`.
    pub fn eot(&self, to: LpId, fes_head: SimTime) -> Option<SimTime> {
        let o = self.out.iter().find(|o| o.to == to)?;
        Some(eot(fes_head, self.safe_time(), o.lookahead))
    }

    pub fn last_eot(&self, to: LpId) -> Option<SimTime> {
        self.out.iter().find(|o| o.to == to).map(|o| o.last_eot)
    }

    fn record_promise(&mut self, to: LpId, promise: SimTime) -> Result<()> {
        let o = self
            .out
            .iter_mut()
            .find(|o| o.to == to)
            .ok_or_else(|| Error::Protocol(alloc::format!("no output link to LP {}", to.0)))?;
        if promise < o.last_eot {
            return Err(Error::Protocol(alloc::format!(
                "EOT regression on link to LP {}: {} after {}",
                to.0,
                promise,
                o.last_eot
            )));
        }
        o.last_eot = promise;
        Ok(())
    }
}

/// Earliest output time for a lower bound formed by the FES head and the
/// input EITs. An infinite bound stays infinite.
pub fn eot(fes_head: SimTime, min_eit: SimTime, lookahead: SimTime) -> SimTime {
    let lower = fes_head.min(min_eit);
    if lower.is_never() {
        SimTime::MAX
    } else {
        lower.saturating_add(lookahead)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LpRunStats {
    pub kernel: RunStats,
    pub sent: SendCounters,
    pub events_received: u64,
    pub nulls_received: u64,
    /// Events checked against `safe_time` before processing.
    pub conservative_checks: u64,
    pub blocked_waits: u64,
}

pub fn encode_event(e: &Event) -> Vec<u8> {
    let mut w = Writer::with_capacity(96);
    e.encode(&mut w);
    w.finish()
}

pub fn decode_event(bytes: &[u8]) -> Result<Event> {
    let mut r = Reader::new(bytes);
    let e = Event::decode(&mut r)?;
    r.finish()?;
    Ok(e)
}

/// One logical process of a conservative parallel run.
pub struct LogicalProcess<'a, L, T> {
    kernel: &'a mut Kernel<L>,
    endpoint: &'a mut Endpoint<T>,
    clock: ChannelClock,
    stats: LpRunStats,
    t_end: SimTime,
}

impl<'a, L, T: Transport> LogicalProcess<'a, L, T> {
    pub fn new(kernel: &'a mut Kernel<L>, endpoint: &'a mut Endpoint<T>, links: &LpLinks, t_end: SimTime) -> Self {
        LogicalProcess {
            kernel,
            endpoint,
            clock: ChannelClock::new(links),
            stats: LpRunStats::default(),
            t_end,
        }
    }

    pub fn clock(&self) -> &ChannelClock {
        &self.clock
    }

    /// Applies one received envelope.
    pub fn on_receive(&mut self, from: crate::lp::LpId, env: Envelope) -> Result<()> {
        match env.kind {
            EnvelopeKind::Null => {
                self.stats.nulls_received += 1;
                self.clock.advance(from, env.timestamp)
            }
            EnvelopeKind::Event => {
                self.stats.events_received += 1;
                self.clock.advance(from, env.timestamp)?;
                let event = decode_event(&env.payload)?;
                if event.time < env.timestamp {
                    return Err(Error::Protocol(alloc::format!(
                        "event at {} below its envelope promise {}",
                        event.time,
                        env.timestamp
                    )));
                }
                if event.time > self.t_end {
                    // never processed; the EIT update above is all that matters
                    return Ok(());
                }
                self.kernel.insert_remote(event)
            }
            other => Err(Error::Protocol(alloc::format!(
                "unexpected {other:?} envelope from LP {} during the run",
                from.0
            ))),
        }
    }

    fn flush_outbox(&mut self) -> Result<()> {
        for rs in self.kernel.take_outbox() {
            let last = self
                .clock
                .last_eot(rs.lp)
                .ok_or_else(|| Error::Protocol(alloc::format!("no proxy link to LP {}", rs.lp.0)))?;
            let la = self.clock.out.iter().find(|o| o.to == rs.lp).unwrap().lookahead;
            let promise = last.max(rs.sent_at.checked_add(la)?);
            if rs.event.time < promise {
                return Err(Error::Causality(alloc::format!(
                    "event at {} undercuts promise {} to LP {}",
                    rs.event.time,
                    promise,
                    rs.lp.0
                )));
            }
            self.clock.record_promise(rs.lp, promise)?;
            let env = Envelope {
                kind: EnvelopeKind::Event,
                timestamp: promise,
                payload: encode_event(&rs.event),
            };
            self.endpoint.send(rs.lp, &env)?;
        }
        Ok(())
    }

    fn send_nulls(&mut self, done: bool) -> Result<bool> {
        let head = self.kernel.head_time();
        let safe = self.clock.safe_time();
        let mut sent = false;
        for i in 0..self.clock.out.len() {
            let o = &self.clock.out[i];
            let promise = if done { SimTime::MAX } else { eot(head, safe, o.lookahead) };
            if promise > o.last_eot {
                let to = o.to;
                self.clock.record_promise(to, promise)?;
                self.endpoint.send(to, &Envelope::null(promise))?;
                sent = true;
            }
        }
        Ok(sent)
    }

    /// Runs until this LP and every other LP have nothing left at or
    /// before `t_end`.
    pub fn run(mut self) -> Result<LpRunStats> {
        if self.t_end.is_never() {
            return Err(Error::Config("a parallel run needs a finite end time".into()));
        }
        self.flush_outbox()?;
        // LPs that finish early enter the final barrier while others still run
        let mut early = Vec::new();
        loop {
            while let Some((from, env)) = self.endpoint.try_next()? {
                if env.kind == EnvelopeKind::Barrier {
                    early.push((from, env));
                } else {
                    self.on_receive(from, env)?;
                }
            }
            let safe = self.clock.safe_time();
            let mut progressed = false;
            loop {
                let head = self.kernel.head_time();
                if head >= safe || head > self.t_end {
                    break;
                }
                self.stats.conservative_checks += 1;
                if !self.kernel.step(safe, self.t_end)? {
                    break;
                }
                if self.kernel.now() >= safe {
                    return Err(Error::Causality(alloc::format!(
                        "processed event at {} with safe time {}",
                        self.kernel.now(),
                        safe
                    )));
                }
                progressed = true;
                if self.kernel.has_outbox() {
                    self.flush_outbox()?;
                }
            }
            let head = self.kernel.head_time();
            if head > self.t_end && self.clock.safe_time() > self.t_end {
                break;
            }
            let nulls = self.send_nulls(false)?;
            if !progressed && !nulls {
                self.stats.blocked_waits += 1;
                let (from, env) = self.endpoint.next()?;
                if env.kind == EnvelopeKind::Barrier {
                    early.push((from, env));
                } else {
                    self.on_receive(from, env)?;
                }
            }
        }
        for (from, env) in early {
            self.endpoint.restash(from, env);
        }
        self.send_nulls(true)?;
        // second phase: LP 0 releases everybody once all are done
        self.endpoint.barrier(0)?;
        self.endpoint.discard_stashed(EnvelopeKind::Event);
        self.endpoint.discard_stashed(EnvelopeKind::Null);
        self.stats.kernel = self.kernel.stats();
        self.stats.sent = self.endpoint.sent;
        Ok(self.stats)
    }
}
