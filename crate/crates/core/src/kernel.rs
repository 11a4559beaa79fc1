//! Sequential discrete-event kernel. One instance runs per logical process.

use alloc::boxed::Box;
use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::any::Any;

use crate::channel::{Channel, GateRef, Transmitter};
use crate::dmsi::{DmsiState, DmsiVisit};
use crate::error::{Error, Result};
use crate::event::{Event, FutureEventSet};
use crate::lp::LpId;
use crate::message::Message;
use crate::path::{ModulePath, PathTable};
use crate::time::SimTime;
use crate::trace::{TraceRecord, TraceSink};

/// Rank of a module in the global [`PathTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModuleId(pub u32);

impl ModuleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Behaviour of a simulated module. `L` is the logical-process-local service
/// object modules may use during initialization.
pub trait Module<L>: Send {
    /// Number of initialization stages this module takes part in.
    fn init_stages(&self) -> u32 {
        1
    }

    fn init(&mut self, _stage: u32, _cx: &mut InitContext<'_, L>) -> Result<()> {
        Ok(())
    }

    /// Called while this module holds the DMSI token of `visit.kind`.
    fn dmsi_visit(
        &mut self,
        visit: &DmsiVisit<'_>,
        _token: &mut DmsiState,
        _cx: &mut InitContext<'_, L>,
    ) -> Result<()> {
        Err(Error::Dmsi(alloc::format!(
            "{} is not prepared for kind `{}`",
            visit.instance,
            visit.kind
        )))
    }

    fn handle(&mut self, event: Event, cx: &mut Context<'_>) -> Result<()>;

    fn as_any(&self) -> &dyn Any;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub messages_sent: u64,
    pub final_clock: SimTime,
}

/// An event produced for a module living on another logical process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteSend {
    pub lp: LpId,
    /// Simulation time of the event whose handler produced the message.
    pub sent_at: SimTime,
    pub event: Event,
}

#[derive(Debug)]
struct Gate {
    tx: Option<Transmitter>,
    remote_lp: Option<LpId>,
}

pub struct KernelCore {
    paths: Arc<PathTable>,
    lp: LpId,
    fes: FutureEventSet,
    now: SimTime,
    local: Vec<bool>,
    gates: Vec<Vec<Gate>>,
    seq: Vec<u64>,
    outbox: Vec<RemoteSend>,
    stats: RunStats,
    trace: Option<Box<dyn TraceSink>>,
}

impl KernelCore {
    fn next_seq(&mut self, m: ModuleId) -> u64 {
        let s = &mut self.seq[m.index()];
        let v = *s;
        *s += 1;
        v
    }

    fn enqueue(&mut self, event: Event, remote_lp: Option<LpId>) {
        match remote_lp {
            Some(lp) => self.outbox.push(RemoteSend {
                lp,
                sent_at: self.now,
                event,
            }),
            None => self.fes.insert(event),
        }
    }

    fn schedule_self(&mut self, module: ModuleId, at: SimTime, msg: Message) -> Result<()> {
        if at < self.now {
            return Err(Error::Causality(alloc::format!(
                "{} scheduled a message at {at}, before now ({})",
                self.paths.path(module),
                self.now
            )));
        }
        let seq = self.next_seq(module);
        self.fes.insert(Event {
            time: at,
            target: module,
            sender: module,
            sender_seq: seq,
            arrival_gate: None,
            payload: msg,
        });
        Ok(())
    }

    fn send(&mut self, module: ModuleId, gate: u16, msg: Message) -> Result<SimTime> {
        let now = self.now;
        let g = self.gates[module.index()]
            .get_mut(gate as usize)
            .ok_or_else(|| Error::Model(alloc::format!("{} has no gate {gate}", self.paths.path(module))))?;
        let remote = g.remote_lp;
        let tx = g.tx.as_mut().ok_or_else(|| {
            Error::Model(alloc::format!(
                "gate {gate} of {} is not connected",
                self.paths.path(module)
            ))
        })?;
        let arrival = tx.transmit(now, msg.byte_length() as u64)?;
        let dst = tx.channel.dst_gate;
        let seq = self.next_seq(module);
        self.stats.messages_sent += 1;
        self.enqueue(
            Event {
                time: arrival,
                target: dst.module,
                sender: module,
                sender_seq: seq,
                arrival_gate: Some(dst.gate),
                payload: msg,
            },
            remote,
        );
        Ok(arrival)
    }

    fn gate_peer(&self, module: ModuleId, gate: u16) -> Option<GateRef> {
        self.gates
            .get(module.index())?
            .get(gate as usize)?
            .tx
            .as_ref()
            .map(|t| t.channel.dst_gate)
    }
}

/// Handle given to [`Module::handle`].
pub struct Context<'a> {
    core: &'a mut KernelCore,
    module: ModuleId,
}

impl Context<'_> {
    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn module(&self) -> ModuleId {
        self.module
    }

    pub fn path(&self) -> &ModulePath {
        self.core.paths.path(self.module)
    }

    /// Sends `msg` out of `gate`; returns its arrival time at the far end.
    pub fn send(&mut self, gate: u16, msg: Message) -> Result<SimTime> {
        self.core.send(self.module, gate, msg)
    }

    pub fn schedule_at(&mut self, at: SimTime, msg: Message) -> Result<()> {
        self.core.schedule_self(self.module, at, msg)
    }

    pub fn gate_peer(&self, gate: u16) -> Option<GateRef> {
        self.core.gate_peer(self.module, gate)
    }
}

/// Handle given to [`Module::init`] and [`Module::dmsi_visit`].
pub struct InitContext<'a, L> {
    core: &'a mut KernelCore,
    local: &'a mut L,
    module: ModuleId,
    stage: u32,
}

impl<L> InitContext<'_, L> {
    pub fn module(&self) -> ModuleId {
        self.module
    }

    pub fn path(&self) -> &ModulePath {
        self.core.paths.path(self.module)
    }

    pub fn paths(&self) -> &PathTable {
        &self.core.paths
    }

    pub fn stage(&self) -> u32 {
        self.stage
    }

    pub fn lp(&self) -> LpId {
        self.core.lp
    }

    pub fn local(&mut self) -> &mut L {
        self.local
    }

    pub fn is_local(&self, m: ModuleId) -> bool {
        self.core.local.get(m.index()).copied().unwrap_or(false)
    }

    pub fn gate_peer(&self, gate: u16) -> Option<GateRef> {
        self.core.gate_peer(self.module, gate)
    }

    /// Whether `gate` has an outgoing channel. Only answerable for modules
    /// on this logical process.
    pub fn gate_connected(&self, gate: GateRef) -> Option<bool> {
        if !self.is_local(gate.module) {
            return None;
        }
        Some(self.core.gate_peer(gate.module, gate.gate).is_some())
    }

    pub fn schedule_at(&mut self, at: SimTime, msg: Message) -> Result<()> {
        self.core.schedule_self(self.module, at, msg)
    }

    pub fn send(&mut self, gate: u16, msg: Message) -> Result<SimTime> {
        self.core.send(self.module, gate, msg)
    }
}

pub struct Kernel<L> {
    modules: Vec<Option<Box<dyn Module<L>>>>,
    core: KernelCore,
    local: L,
}

impl<L> Kernel<L> {
    pub fn new(paths: Arc<PathTable>, lp: LpId, local: L) -> Self {
        let n = paths.len();
        let mut modules = Vec::with_capacity(n);
        modules.resize_with(n, || None);
        let mut gates = Vec::with_capacity(n);
        gates.resize_with(n, Vec::new);
        Kernel {
            modules,
            core: KernelCore {
                paths,
                lp,
                fes: FutureEventSet::new(),
                now: SimTime::ZERO,
                local: alloc::vec![false; n],
                gates,
                seq: alloc::vec![0; n],
                outbox: Vec::new(),
                stats: RunStats::default(),
                trace: None,
            },
            local,
        }
    }

    pub fn lp(&self) -> LpId {
        self.core.lp
    }

    pub fn paths(&self) -> &Arc<PathTable> {
        &self.core.paths
    }

    pub fn add_module(&mut self, id: ModuleId, module: Box<dyn Module<L>>) -> Result<()> {
        let slot = self
            .modules
            .get_mut(id.index())
            .ok_or_else(|| Error::Config(alloc::format!("module id {} out of range", id.0)))?;
        if slot.is_some() {
            return Err(Error::Config(alloc::format!(
                "module {} added twice",
                self.core.paths.path(id)
            )));
        }
        *slot = Some(module);
        self.core.local[id.index()] = true;
        Ok(())
    }

    /// Wires `channel` out of its source gate. `remote_lp` is set when the
    /// destination module lives on another logical process.
    pub fn connect(&mut self, channel: Channel, remote_lp: Option<LpId>) -> Result<()> {
        let src = channel.src_gate;
        if !self.is_local(src.module) {
            return Err(Error::Config(alloc::format!(
                "channel source {} is not on LP {}",
                self.core.paths.path(src.module),
                self.core.lp.0
            )));
        }
        let gates = &mut self.core.gates[src.module.index()];
        while gates.len() <= src.gate as usize {
            gates.push(Gate {
                tx: None,
                remote_lp: None,
            });
        }
        let g = &mut gates[src.gate as usize];
        if g.tx.is_some() {
            return Err(Error::Config(alloc::format!(
                "gate {} of {} connected twice",
                src.gate,
                self.core.paths.path(src.module)
            )));
        }
        g.tx = Some(Transmitter::new(channel));
        g.remote_lp = remote_lp;
        Ok(())
    }

    pub fn set_trace(&mut self, sink: Box<dyn TraceSink>) {
        self.core.trace = Some(sink);
    }

    pub fn take_trace(&mut self) -> Option<Box<dyn TraceSink>> {
        self.core.trace.take()
    }

    pub fn is_local(&self, id: ModuleId) -> bool {
        self.core.local.get(id.index()).copied().unwrap_or(false)
    }

    pub fn local_modules(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.modules
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_some())
            .map(|(i, _)| ModuleId(i as u32))
    }

    pub fn module(&self, id: ModuleId) -> Option<&dyn Module<L>> {
        self.modules.get(id.index())?.as_deref()
    }

    pub fn module_as<T: 'static>(&self, id: ModuleId) -> Option<&T> {
        self.module(id)?.as_any().downcast_ref::<T>()
    }

    pub fn local_state(&self) -> &L {
        &self.local
    }

    pub fn local_state_mut(&mut self) -> &mut L {
        &mut self.local
    }

    pub fn now(&self) -> SimTime {
        self.core.now
    }

    pub fn head_time(&self) -> SimTime {
        self.core.fes.head_time()
    }

    pub fn pending(&self) -> usize {
        self.core.fes.len()
    }

    pub fn stats(&self) -> RunStats {
        RunStats {
            final_clock: self.core.now,
            ..self.core.stats
        }
    }

    /// Largest number of init stages any local module asks for.
    pub fn local_stage_count(&self) -> u32 {
        self.modules
            .iter()
            .flatten()
            .map(|m| m.init_stages())
            .max()
            .unwrap_or(0)
    }

    fn module_slot(&mut self, id: ModuleId) -> Result<&mut Box<dyn Module<L>>> {
        let path = self.core.paths.path(id);
        self.modules
            .get_mut(id.index())
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::Config(alloc::format!("module {path} is not on this LP")))
    }

    pub fn init_module(&mut self, id: ModuleId, stage: u32) -> Result<()> {
        let core = &mut self.core;
        let m = self
            .modules
            .get_mut(id.index())
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::Config(alloc::format!("module {} is not on this LP", core.paths.path(id))))?;
        if stage >= m.init_stages() {
            return Ok(());
        }
        let mut cx = InitContext {
            core,
            local: &mut self.local,
            module: id,
            stage,
        };
        m.init(stage, &mut cx)
    }

    pub fn dmsi_visit(&mut self, id: ModuleId, visit: &DmsiVisit<'_>, token: &mut DmsiState) -> Result<()> {
        self.module_slot(id)?;
        let m = self.modules[id.index()].as_mut().unwrap();
        let mut cx = InitContext {
            core: &mut self.core,
            local: &mut self.local,
            module: id,
            stage: visit.stage,
        };
        m.dmsi_visit(visit, token, &mut cx)
    }

    /// Plain staged initialization of every local module, in path order.
    /// DMSI-aware initialization goes through [`crate::dmsi::run_init`].
    pub fn init_all(&mut self, num_stages: u32) -> Result<()> {
        let needed = self.local_stage_count();
        if needed > num_stages {
            return Err(Error::Config(alloc::format!(
                "a module needs {needed} init stages, only {num_stages} configured"
            )));
        }
        let ids: Vec<ModuleId> = self.local_modules().collect();
        for stage in 0..num_stages {
            for &id in &ids {
                self.init_module(id, stage)?;
            }
        }
        Ok(())
    }

    /// Accepts an event produced on another logical process.
    pub fn insert_remote(&mut self, event: Event) -> Result<()> {
        if !self.is_local(event.target) {
            return Err(Error::Protocol(alloc::format!(
                "event for {} delivered to LP {}",
                self.core.paths.path(event.target),
                self.core.lp.0
            )));
        }
        if event.time < self.core.now {
            return Err(Error::Causality(alloc::format!(
                "remote event for {} at {} arrived after local clock reached {}",
                self.core.paths.path(event.target),
                event.time,
                self.core.now
            )));
        }
        self.core.fes.insert(event);
        Ok(())
    }

    pub fn take_outbox(&mut self) -> Vec<RemoteSend> {
        core::mem::take(&mut self.core.outbox)
    }

    pub fn has_outbox(&self) -> bool {
        !self.core.outbox.is_empty()
    }

    /// Processes one event if the head is strictly before `bound` and not
    /// after `t_end`. Returns whether an event was processed.
    pub fn step(&mut self, bound: SimTime, t_end: SimTime) -> Result<bool> {
        let head = self.core.fes.head_time();
        if head >= bound || head > t_end {
            return Ok(false);
        }
        let event = self.core.fes.pop_min().expect("non-empty");
        self.dispatch(event)?;
        Ok(true)
    }

    fn dispatch(&mut self, event: Event) -> Result<()> {
        if event.time < self.core.now {
            return Err(Error::Causality(alloc::format!(
                "event for {} at {} processed after clock reached {}",
                self.core.paths.path(event.target),
                event.time,
                self.core.now
            )));
        }
        self.core.now = event.time;
        self.core.stats.events += 1;
        let key = event.key();
        if let Some(sink) = self.core.trace.as_mut() {
            let rec = TraceRecord {
                time: event.time,
                target: self.core.paths.path(event.target),
                kind: event.payload.kind(),
                sender: self.core.paths.path(event.sender),
                sender_seq: event.sender_seq,
            };
            sink.record(&rec)?;
        }
        let target = event.target;
        let core = &mut self.core;
        let m = self
            .modules
            .get_mut(target.index())
            .and_then(Option::as_mut)
            .ok_or_else(|| Error::Protocol(alloc::format!("no local module {}", core.paths.path(target))))?;
        let mut cx = Context { core, module: target };
        m.handle(event, &mut cx).map_err(|e| Error::Handler {
            key,
            target: self.core.paths.path(target).to_string(),
            reason: e.to_string(),
        })
    }

    /// Processes events in total order until the set is exhausted or the
    /// next event lies after `t_end`.
    pub fn run(&mut self, t_end: SimTime) -> Result<RunStats> {
        while self.step(SimTime::MAX, t_end)? {}
        Ok(self.stats())
    }
}
