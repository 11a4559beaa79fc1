#![allow(dead_code)]

use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::Duration;

use parsim_core::build::{BuildOptions, Model};
use parsim_core::dmsi::{run_init, InitReport};
use parsim_core::lp::{LogicalProcess, LpId, LpRunStats};
use parsim_core::netstack::NetLocal;
use parsim_core::trace::{parse_line, MemoryTrace, TraceRecord, TraceSink};
use parsim_core::transport::{Endpoint, SoloTransport, Transport};
use parsim_core::{Error, Kernel, Result};

pub struct MpscTransport {
    lp: LpId,
    peers: Vec<Sender<(LpId, Vec<u8>)>>,
    rx: Receiver<(LpId, Vec<u8>)>,
    timeout: Duration,
}

impl Transport for MpscTransport {
    fn local_lp(&self) -> LpId {
        self.lp
    }

    fn lp_count(&self) -> usize {
        self.peers.len()
    }

    fn send(&mut self, to: LpId, bytes: Vec<u8>) -> Result<()> {
        self.peers[to.index()]
            .send((self.lp, bytes))
            .map_err(|_| Error::Transport(format!("LP {} hung up", to.0)))
    }

    fn recv(&mut self) -> Result<(LpId, Vec<u8>)> {
        self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Watchdog(format!("LP {} waited {:?}", self.lp.0, self.timeout)),
            RecvTimeoutError::Disconnected => Error::Transport("all peers gone".into()),
        })
    }

    fn try_recv(&mut self) -> Result<Option<(LpId, Vec<u8>)>> {
        Ok(self.rx.try_recv().ok())
    }
}

pub fn mesh(n: usize, timeout: Duration) -> Vec<MpscTransport> {
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..n).map(|_| channel()).unzip();
    rxs.into_iter()
        .enumerate()
        .map(|(i, rx)| MpscTransport {
            lp: LpId(i as u32),
            peers: txs.clone(),
            rx,
            timeout,
        })
        .collect()
}

/// A trace sink that can be read back after the kernel is done with it.
pub struct SharedTrace(pub std::sync::Arc<std::sync::Mutex<Vec<String>>>);

impl TraceSink for SharedTrace {
    fn record(&mut self, rec: &TraceRecord<'_>) -> Result<()> {
        self.0.lock().unwrap().push(rec.to_string());
        Ok(())
    }
}

pub struct LpOutcome {
    pub kernel: Kernel<NetLocal>,
    pub init: InitReport,
    pub stats: Option<LpRunStats>,
    pub trace: Vec<String>,
}

fn run_one<T: Transport>(model: &Model, lp: LpId, t: T, opts: &BuildOptions, simulate: bool) -> Result<LpOutcome> {
    let mut kernel = model.build_lp(lp, opts)?;
    let lines = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    kernel.set_trace(Box::new(SharedTrace(lines.clone())));
    let mut ep = Endpoint::new(t);
    let init = run_init(&mut kernel, model.plan(), &mut ep)?;
    let stats = if !simulate {
        None
    } else if model.n_lps() == 1 {
        kernel.run(model.scenario.sim_time)?;
        None
    } else {
        let links = model.lp_links(lp);
        Some(LogicalProcess::new(&mut kernel, &mut ep, &links, model.scenario.sim_time).run()?)
    };
    kernel.take_trace();
    let trace = std::mem::take(&mut *lines.lock().unwrap());
    Ok(LpOutcome { kernel, init, stats, trace })
}

/// Runs every LP of `model` on its own thread.
pub fn run_model(model: &Model, opts: &BuildOptions, simulate: bool) -> Result<Vec<LpOutcome>> {
    if model.n_lps() == 1 {
        return Ok(vec![run_one(model, LpId(0), SoloTransport, opts, simulate)?]);
    }
    let transports = mesh(model.n_lps() as usize, Duration::from_secs(60));
    thread::scope(|s| {
        let handles: Vec<_> = transports
            .into_iter()
            .enumerate()
            .map(|(i, t)| s.spawn(move || run_one(model, LpId(i as u32), t, opts, simulate)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("LP thread panicked")).collect()
    })
}

/// All per-LP trace lines in total order.
pub fn merged_trace(outcomes: &[LpOutcome]) -> Vec<String> {
    let mut all: Vec<String> = outcomes.iter().flat_map(|o| o.trace.iter().cloned()).collect();
    all.sort_by(|a, b| parse_line(a).unwrap().cmp(&parse_line(b).unwrap()));
    all
}

pub fn memory_trace() -> Box<MemoryTrace> {
    Box::new(MemoryTrace::default())
}
