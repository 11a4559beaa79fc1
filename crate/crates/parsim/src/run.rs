//! Sequential and parallel runs of a scenario.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _};
use parsim_core::build::{BuildOptions, Model};
use parsim_core::dmsi::run_init;
use parsim_core::lp::{LogicalProcess, LpId};
use parsim_core::netstack::node::Node;
use parsim_core::netstack::NetLocal;
use parsim_core::scenario::{BackboneGraph, Role, Scenario};
use parsim_core::transport::{Endpoint, SoloTransport, Transport};
use parsim_core::{Kernel, Result};
use serde::{Deserialize, Serialize};

use crate::config::{parse_with_backbone, render_backbone, render_config};
use crate::inproc::inproc_mesh;
use crate::report::{HostTotals, LpSummary, RunReport};
use crate::tcp::TcpTransport;
use crate::trace::{lp_trace_path, FileTrace};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One kernel, no synchronization at all.
    Sequential,
    /// LPs on threads of this process.
    Inproc(u32),
    /// LPs in worker processes connected over TCP.
    Tcp(u32),
}

impl Mode {
    pub fn lps(self) -> u32 {
        match self {
            Mode::Sequential => 1,
            Mode::Inproc(n) | Mode::Tcp(n) => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sequential => "sequential",
            Mode::Inproc(_) => "inproc",
            Mode::Tcp(_) => "tcp",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    /// Sequential runs write exactly this file; parallel runs write one
    /// file per LP next to it, see [`lp_trace_path`].
    pub trace_out: Option<PathBuf>,
    pub init_only: bool,
    pub dump_init: bool,
    pub watchdog: Duration,
    pub build: BuildOptions,
    /// Executable started for TCP workers; defaults to the current one.
    pub worker_exe: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(mode: Mode) -> Self {
        RunConfig {
            mode,
            trace_out: None,
            init_only: false,
            dump_init: false,
            watchdog: Duration::from_secs(60),
            build: BuildOptions::default(),
            worker_exe: None,
        }
    }

    fn trace_for(&self, lp: u32) -> Option<PathBuf> {
        let base = self.trace_out.as_deref()?;
        Some(match self.mode {
            Mode::Sequential => base.to_path_buf(),
            _ => lp_trace_path(base, lp),
        })
    }
}

/// Everything one LP needs besides the model and its transport.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LpJob {
    pub trace: Option<PathBuf>,
    pub init_only: bool,
    pub dump_init: bool,
    /// Run through the null-message protocol rather than the bare kernel.
    pub synchronized: bool,
}

fn host_totals(model: &Model, kernel: &Kernel<NetLocal>) -> Vec<HostTotals> {
    kernel
        .local_state()
        .local_nodes
        .iter()
        .filter(|&&n| model.topology.nodes[n].role == Role::Host)
        .filter_map(|&n| {
            let s = kernel.module_as::<Node>(model.node_id(n))?.stats();
            Some(HostTotals {
                path: model.topology.nodes[n].path.to_string(),
                sent: s.sent,
                received: s.received,
                delay_sum_ps: s.delay_sum.ticks(),
            })
        })
        .collect()
}

fn init_dump(model: &Model, kernel: &Kernel<NetLocal>) -> Vec<String> {
    let show = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    let mut out = Vec::new();
    for &n in &kernel.local_state().local_nodes {
        let Some(node) = kernel.module_as::<Node>(model.node_id(n)) else { continue };
        for (k, i) in node.interfaces().iter().enumerate() {
            out.push(format!(
                "{} mac {} peer {} addr {} connected {}",
                model.topology.iface_path(n, k as u16),
                show(i.mac.map(|m| m.to_string())),
                show(i.peer_mac.map(|m| m.to_string())),
                show(i.addr.map(|a| a.to_string())),
                show(i.connected.map(|c| c.to_string())),
            ));
        }
        let path = &model.topology.nodes[n].path;
        for r in node.routes().render().lines() {
            out.push(format!("{path} route {r}"));
        }
    }
    out
}

/// Initializes and runs logical process `lp` of `model`.
pub fn run_lp<T: Transport>(model: &Model, lp: LpId, transport: T, job: &LpJob, build: &BuildOptions) -> Result<LpSummary> {
    let mut kernel = model.build_lp(lp, build)?;
    if let Some(p) = &job.trace {
        let sink = FileTrace::create(p).map_err(|e| parsim_core::Error::Trace(format!("{}: {e}", p.display())))?;
        kernel.set_trace(Box::new(sink));
    }
    let mut ep = Endpoint::new(transport);
    let t0 = Instant::now();
    let init = run_init(&mut kernel, model.plan(), &mut ep)?;
    let init_seconds = t0.elapsed().as_secs_f64();
    let mut s = LpSummary { lp: lp.0, stages: init.stages, token_hops: init.token_hops, init_seconds, ..LpSummary::default() };
    s.tokens_sent = ep.sent.tokens;
    if !job.init_only {
        let t1 = Instant::now();
        if job.synchronized {
            let links = model.lp_links(lp);
            let st = LogicalProcess::new(&mut kernel, &mut ep, &links, model.scenario.sim_time).run()?;
            s.events_sent = st.sent.events;
            s.nulls_sent = st.sent.nulls;
            s.events_received = st.events_received;
            s.nulls_received = st.nulls_received;
            s.blocked_waits = st.blocked_waits;
            s.conservative_checks = st.conservative_checks;
        } else {
            kernel.run(model.scenario.sim_time)?;
        }
        s.run_seconds = t1.elapsed().as_secs_f64();
        let k = kernel.stats();
        s.events = k.events;
        s.final_clock_ps = k.final_clock.ticks();
    }
    if let Some(mut sink) = kernel.take_trace() {
        sink.finish()?;
    }
    s.hosts = host_totals(model, &kernel);
    if job.dump_init {
        s.init_dump = init_dump(model, &kernel);
    }
    Ok(s)
}

/// Runs `scenario` as configured and collects a report.
pub fn run(scenario: Scenario, cfg: &RunConfig) -> anyhow::Result<RunReport> {
    let start = Instant::now();
    let lps = cfg.mode.lps();
    let sim_seconds = scenario.sim_time.as_secs_f64();
    let job = |lp: u32| LpJob {
        trace: cfg.trace_for(lp),
        init_only: cfg.init_only,
        dump_init: cfg.dump_init,
        synchronized: cfg.mode != Mode::Sequential,
    };
    let mut per_lp = match cfg.mode {
        Mode::Sequential | Mode::Inproc(1) => {
            let model = Model::new(scenario, 1)?;
            vec![run_lp(&model, LpId(0), SoloTransport, &job(0), &cfg.build)?]
        }
        Mode::Inproc(n) => {
            let model = Model::new(scenario, n)?;
            let mesh = inproc_mesh(n as usize, cfg.watchdog);
            let model = &model;
            thread::scope(|s| {
                let handles: Vec<_> = mesh
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let j = job(i as u32);
                        s.spawn(move || run_lp(model, LpId(i as u32), t, &j, &cfg.build))
                    })
                    .collect();
                handles
                    .into_iter()
                    .enumerate()
                    .map(|(i, h)| {
                        h.join()
                            .map_err(|_| anyhow!("LP {i} panicked"))?
                            .with_context(|| format!("LP {i}"))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()
            })?
        }
        Mode::Tcp(n) => {
            if !cfg.build.dangling_gates.is_empty() || cfg.build.record_deliveries {
                bail!("build options cannot be passed to TCP workers");
            }
            Model::new(scenario.clone(), n)?;
            run_workers(&scenario, n, cfg, &job)?
        }
    };
    per_lp.sort_by_key(|s| s.lp);
    let max = |f: fn(&LpSummary) -> f64| per_lp.iter().map(f).fold(0.0, f64::max);
    Ok(RunReport {
        mode: cfg.mode.name().into(),
        lps,
        sim_seconds,
        wall_seconds: start.elapsed().as_secs_f64(),
        run_seconds: max(|s| s.run_seconds),
        init_seconds: max(|s| s.init_seconds),
        per_lp,
        speedup: None,
        repeats: Vec::new(),
    })
}

#[derive(Serialize, Deserialize)]
struct Hello {
    lp: u32,
    port: u16,
}

#[derive(Serialize, Deserialize)]
struct WorkerJob {
    config: String,
    backbone: String,
    lps: u32,
    ports: Vec<u16>,
    watchdog_ms: u64,
    job: LpJob,
}

#[derive(Serialize, Deserialize)]
enum WorkerOutcome {
    Done(LpSummary),
    Failed(String),
}

fn send_line<T: Serialize>(s: &mut TcpStream, msg: &T) -> anyhow::Result<()> {
    let mut line = serde_json::to_vec(msg)?;
    line.push(b'\n');
    s.write_all(&line)?;
    Ok(())
}

fn read_line<T: for<'de> Deserialize<'de>>(r: &mut BufReader<TcpStream>) -> anyhow::Result<T> {
    let mut line = String::new();
    if r.read_line(&mut line)? == 0 {
        bail!("connection closed");
    }
    Ok(serde_json::from_str(&line)?)
}

struct Workers(Vec<Child>);

impl Drop for Workers {
    fn drop(&mut self) {
        for c in &mut self.0 {
            if matches!(c.try_wait(), Ok(None)) {
                let _ = c.kill();
            }
            let _ = c.wait();
        }
    }
}

fn accept_within(listener: &TcpListener, workers: &mut Workers, deadline: Instant) -> anyhow::Result<TcpStream> {
    listener.set_nonblocking(true)?;
    loop {
        match listener.accept() {
            Ok((s, _)) => {
                s.set_nonblocking(false)?;
                return Ok(s);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {}
            Err(e) => return Err(e.into()),
        }
        for (i, c) in workers.0.iter_mut().enumerate() {
            if let Some(status) = c.try_wait()? {
                bail!("worker {i} exited early with {status}");
            }
        }
        if Instant::now() > deadline {
            bail!("workers did not check in");
        }
        thread::sleep(Duration::from_millis(5));
    }
}

fn run_workers(scenario: &Scenario, n: u32, cfg: &RunConfig, job: &dyn Fn(u32) -> LpJob) -> anyhow::Result<Vec<LpSummary>> {
    let exe = match &cfg.worker_exe {
        Some(p) => p.clone(),
        None => std::env::current_exe()?,
    };
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let mut workers = Workers(Vec::new());
    for i in 0..n {
        let child = Command::new(&exe)
            .arg("--worker")
            .arg(addr.to_string())
            .arg("--worker-lp")
            .arg(i.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .spawn()
            .with_context(|| format!("starting worker {}", exe.display()))?;
        workers.0.push(child);
    }
    let deadline = Instant::now() + cfg.watchdog;
    let mut conns: Vec<Option<(TcpStream, BufReader<TcpStream>)>> = (0..n).map(|_| None).collect();
    let mut ports = vec![0u16; n as usize];
    for _ in 0..n {
        let s = accept_within(&listener, &mut workers, deadline)?;
        let mut r = BufReader::new(s.try_clone()?);
        let hello: Hello = read_line(&mut r)?;
        let slot = conns
            .get_mut(hello.lp as usize)
            .filter(|c| c.is_none())
            .ok_or_else(|| anyhow!("unexpected worker {}", hello.lp))?;
        *slot = Some((s, r));
        ports[hello.lp as usize] = hello.port;
    }
    let config = render_config(scenario);
    let backbone = render_backbone(&scenario.backbone);
    for (i, c) in conns.iter_mut().enumerate() {
        let (s, _) = c.as_mut().unwrap();
        let msg = WorkerJob {
            config: config.clone(),
            backbone: backbone.clone(),
            lps: n,
            ports: ports.clone(),
            watchdog_ms: cfg.watchdog.as_millis() as u64,
            job: job(i as u32),
        };
        send_line(s, &msg)?;
    }
    let mut out = Vec::new();
    for (i, c) in conns.iter_mut().enumerate() {
        let (_, r) = c.as_mut().unwrap();
        match read_line::<WorkerOutcome>(r).with_context(|| format!("worker {i}"))? {
            WorkerOutcome::Done(s) => out.push(s),
            WorkerOutcome::Failed(e) => bail!("LP {i}: {e}"),
        }
    }
    Ok(out)
}

/// Entry point of a worker process started by a TCP run.
pub fn worker_main(rendezvous: &str, lp: u32) -> anyhow::Result<()> {
    let mut s = TcpStream::connect(rendezvous).with_context(|| format!("connecting to {rendezvous}"))?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    send_line(&mut s, &Hello { lp, port: listener.local_addr()?.port() })?;
    let mut r = BufReader::new(s.try_clone()?);
    let msg: WorkerJob = read_line(&mut r)?;
    let result = (|| -> anyhow::Result<LpSummary> {
        let backbone = BackboneGraph::parse(&msg.backbone)?;
        let scenario = parse_with_backbone(&msg.config, None, backbone)?;
        let model = Model::new(scenario, msg.lps)?;
        let addrs: Vec<_> = msg.ports.iter().map(|&p| std::net::SocketAddr::from(([127, 0, 0, 1], p))).collect();
        let t = TcpTransport::connect(LpId(lp), listener, &addrs, Duration::from_millis(msg.watchdog_ms))?;
        Ok(run_lp(&model, LpId(lp), t, &msg.job, &BuildOptions::default())?)
    })();
    let outcome = match result {
        Ok(sum) => WorkerOutcome::Done(sum),
        Err(e) => WorkerOutcome::Failed(format!("{e:#}")),
    };
    send_line(&mut s, &outcome)
}

/// Sorted initialization dump of a whole run.
pub fn merged_init_dump(report: &RunReport) -> Vec<String> {
    let mut all: Vec<String> = report.per_lp.iter().flat_map(|l| l.init_dump.iter().cloned()).collect();
    all.sort();
    all
}

/// Per-host totals of a whole run, sorted by host path.
pub fn merged_hosts(report: &RunReport) -> Vec<HostTotals> {
    let mut all: Vec<HostTotals> = report.per_lp.iter().flat_map(|l| l.hosts.iter().cloned()).collect();
    all.sort_by(|a, b| a.path.cmp(&b.path));
    all
}

/// Every trace file a run with `cfg` writes.
pub fn trace_files(cfg: &RunConfig) -> Vec<PathBuf> {
    (0..cfg.mode.lps()).filter_map(|i| cfg.trace_for(i)).collect()
}

pub fn remove_traces(cfg: &RunConfig) {
    for p in trace_files(cfg) {
        let _ = std::fs::remove_file(Path::new(&p));
    }
}
