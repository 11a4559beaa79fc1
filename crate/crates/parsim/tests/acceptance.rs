//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails whose preconditions hold on this machine.
//!
//! `ACCEPTANCE_ONLY=1,4,9` restricts the run to some criteria.

use std::any::Any;
use std::cell::{Cell, RefCell};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parsim::config::parse_config;
use parsim::inproc::inproc_mesh;
use parsim::report::{median, RunReport};
use parsim::run::{merged_init_dump, remove_traces, trace_files};
use parsim::trace::compare_traces;
use parsim::{run, Mode, RunConfig};
use parsim_core::build::{BuildOptions, Model};
use parsim_core::dmsi::{run_init, DmsiState, DmsiVisit, Registry};
use parsim_core::kernel::{Context, InitContext};
use parsim_core::lp::LpId;
use parsim_core::netstack::app::{TrafficGen, TrafficParams};
use parsim_core::netstack::node::Node;
use parsim_core::netstack::udp::UdpLayer;
use parsim_core::partition::assign_partitions;
use parsim_core::path::PathTable;
use parsim_core::rng::derive_stream;
use parsim_core::scenario::Scenario;
use parsim_core::transport::{Endpoint, SoloTransport};
use parsim_core::{Error, Event, Kernel, Module, ModuleId, ModulePath, SimTime};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

const DESK: &str = include_str!("../../../configs/desk.cfg");
const FULL: &str = include_str!("../../../configs/full.cfg");

struct Verdict {
    pass: bool,
    detail: String,
    /// False when the machine cannot meet the criterion's preconditions.
    binding: bool,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, binding: true }
}

/// Every synchronized run, for the conservatism criterion.
#[derive(Default)]
struct Tally {
    runs: u64,
    checks: u64,
    nulls: u64,
    violations: Vec<String>,
}

impl Tally {
    fn record(&mut self, r: &anyhow::Result<RunReport>) {
        self.runs += 1;
        match r {
            Ok(rep) => {
                self.checks += rep.per_lp.iter().map(|l| l.conservative_checks).sum::<u64>();
                self.nulls += rep.nulls_sent();
            }
            Err(e) => {
                let core = e.chain().find_map(|c| c.downcast_ref::<Error>());
                if matches!(core, Some(Error::Causality(_) | Error::Protocol(_))) {
                    self.violations.push(format!("{e:#}"));
                }
            }
        }
    }
}

fn desk(seed: u64) -> Scenario {
    let mut s = parse_config(DESK, None).unwrap();
    s.seed = seed;
    s
}

fn worker_exe() -> std::path::PathBuf {
    env!("CARGO_BIN_EXE_parsim").into()
}

fn c1_determinism(tally: &mut Tally, dir: &Path) -> anyhow::Result<Verdict> {
    let mut compared = 0;
    let mut failures = Vec::new();
    for seed in [1, 2, 3] {
        let mut seq_cfg = RunConfig::new(Mode::Sequential);
        seq_cfg.trace_out = Some(dir.join(format!("seq{seed}.log")));
        let seq = run(desk(seed), &seq_cfg)?;
        let reference = dir.join(format!("seq{seed}.log"));
        for lps in [1, 2, 5, 9] {
            for mode in [Mode::Inproc(lps), Mode::Tcp(lps)] {
                let mut cfg = RunConfig::new(mode);
                cfg.trace_out = Some(dir.join(format!("par{seed}.log")));
                cfg.worker_exe = Some(worker_exe());
                let r = run(desk(seed), &cfg);
                tally.record(&r);
                let tag = format!("seed {seed} {} {lps} LPs", mode.name());
                match r {
                    Err(e) => failures.push(format!("{tag}: {e:#}")),
                    Ok(_) => {
                        let v = compare_traces(&reference, &trace_files(&cfg))?;
                        if !v.is_equal() {
                            failures.push(format!("{tag}: {v}"));
                        }
                    }
                }
                remove_traces(&cfg);
                compared += 1;
            }
        }
        let _ = std::fs::remove_file(&reference);
        if seed == 1 {
            println!("    desk scenario: {} events per run", seq.events());
        }
    }
    let detail = match failures.first() {
        None => format!("{compared} parallel runs byte-identical to the sequential trace"),
        Some(f) => format!("{} of {compared} runs differ; first: {f}", failures.len()),
    };
    Ok(verdict(failures.is_empty(), detail))
}

/// Init-only dumps of the full scenario at 1, 12 and 58 LPs.
fn full_dumps(tally: &mut Tally) -> anyhow::Result<Vec<(u32, Vec<String>)>> {
    let s = parse_config(FULL, None)?;
    let mut out = Vec::new();
    for lps in [1, 12, 58] {
        let mut cfg = RunConfig::new(if lps == 1 { Mode::Sequential } else { Mode::Inproc(lps) });
        cfg.init_only = true;
        cfg.dump_init = true;
        let r = run(s.clone(), &cfg);
        tally.record(&r);
        out.push((lps, merged_init_dump(&r?)));
    }
    Ok(out)
}

fn field<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let mut it = line.split(' ');
    while let Some(w) = it.next() {
        if w == name {
            return it.next();
        }
    }
    None
}

fn c2_macs(dumps: &[(u32, Vec<String>)]) -> anyhow::Result<Verdict> {
    let model = Model::new(parse_config(FULL, None)?, 1)?;
    let nodes = model.topology.node_count();
    // 57 backbone routers plus 57 campus networks of 13 routers and 57 hosts
    let expected_nodes = 57 + 57 * (13 + 57);
    let counts = assign_partitions(57, 12)?.lan_counts();
    let mut split: BTreeMap<u32, u32> = BTreeMap::new();
    for c in &counts[..11] {
        *split.entry(*c).or_default() += 1;
    }
    // "9 LPs each maintaining 5 LANs, 2 LPs maintaining 4 LANs, and an LP
    // with 4 LANs and the backbone"
    let paper_split = split == BTreeMap::from([(5, 9), (4, 2)]) && counts[11] == 4;

    let macs = |d: &[String]| -> BTreeMap<String, String> {
        d.iter()
            .filter_map(|l| Some((l.split(' ').next()?.to_string(), field(l, "mac")?.to_string())))
            .collect()
    };
    let mut detail = Vec::new();
    let reference = macs(&dumps[0].1);
    let distinct: BTreeSet<&String> = reference.values().collect();
    let injective = distinct.len() == reference.len() && !reference.values().any(|m| m == "-");
    let mut same = true;
    for (lps, d) in &dumps[1..] {
        if macs(d) != reference {
            same = false;
            detail.push(format!("{lps} LPs differ"));
        }
    }
    let pass = nodes == expected_nodes && injective && same && paper_split;
    detail.insert(
        0,
        format!(
            "{nodes} nodes, {} interfaces, injective={injective}, identical at 1/12/58 LPs={same}, 12-LP split {counts:?}",
            reference.len()
        ),
    );
    Ok(verdict(pass, detail.join("; ")))
}

fn c3_configurator(dumps: &[(u32, Vec<String>)]) -> anyhow::Result<Verdict> {
    let pick = |d: &[String]| -> Vec<String> {
        d.iter()
            .filter_map(|l| {
                if l.contains(" route ") {
                    Some(l.clone())
                } else {
                    Some(format!("{} {}", l.split(' ').next()?, field(l, "addr")?))
                }
            })
            .collect()
    };
    let reference = pick(&dumps[0].1);
    let routes = reference.iter().filter(|l| l.contains(" route ")).count();
    let unaddressed = reference.iter().filter(|l| l.ends_with(" -")).count();
    let differing: Vec<u32> = dumps[1..].iter().filter(|(_, d)| pick(d) != reference).map(|(n, _)| *n).collect();
    Ok(verdict(
        differing.is_empty() && unaddressed == 0 && routes > 0,
        format!(
            "{} addresses, {routes} routes, {unaddressed} unaddressed; mappings differing: {differing:?}",
            reference.len() - routes
        ),
    ))
}

struct Forgetful;

impl Module<()> for Forgetful {
    fn init_stages(&self) -> u32 {
        3
    }

    fn dmsi_visit(&mut self, v: &DmsiVisit<'_>, token: &mut DmsiState, _cx: &mut InitContext<'_, ()>) -> parsim_core::Result<()> {
        match v.stage {
            0 => token.enqueue_request(v.instance.as_str(), "isConnected", "net.nobody", vec![]),
            2 => token.take_response(v.instance.as_str(), "isConnected").map(drop),
            _ => Ok(()),
        }
    }

    fn handle(&mut self, _e: Event, _cx: &mut Context<'_>) -> parsim_core::Result<()> {
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn unanswered_request_aborts() -> bool {
    let p = ModulePath::parse("net.x").unwrap();
    let mut reg = Registry::new();
    reg.register_kind("X", p.clone(), ModuleId(0), 0, LpId(0)).unwrap();
    let plan = reg.seal();
    let mut k = Kernel::new(Arc::new(PathTable::new(vec![p])), LpId(0), ());
    k.add_module(ModuleId(0), Box::new(Forgetful)).unwrap();
    matches!(run_init(&mut k, &plan, &mut Endpoint::new(SoloTransport)), Err(Error::UnansweredRequest { .. }))
}

/// Initializes `model` on threads and returns every node's interfaces.
fn init_interfaces(model: &Model, opts: &BuildOptions) -> anyhow::Result<Vec<Vec<parsim_core::netstack::node::Interface>>> {
    let n = model.n_lps() as usize;
    let kernels: Vec<Kernel<_>> = if n == 1 {
        let mut k = model.build_lp(LpId(0), opts)?;
        run_init(&mut k, model.plan(), &mut Endpoint::new(SoloTransport))?;
        vec![k]
    } else {
        let mesh = inproc_mesh(n, Duration::from_secs(60));
        std::thread::scope(|s| {
            let hs: Vec<_> = mesh
                .into_iter()
                .enumerate()
                .map(|(i, t)| {
                    s.spawn(move || -> parsim_core::Result<_> {
                        let mut k = model.build_lp(LpId(i as u32), opts)?;
                        run_init(&mut k, model.plan(), &mut Endpoint::new(t))?;
                        Ok(k)
                    })
                })
                .collect();
            hs.into_iter().map(|h| h.join().expect("LP thread")).collect::<parsim_core::Result<Vec<_>>>()
        })?
    };
    Ok((0..model.topology.node_count())
        .map(|v| {
            kernels[model.node_lp(v).index()]
                .module_as::<Node>(model.node_id(v))
                .expect("node module")
                .interfaces()
                .to_vec()
        })
        .collect())
}

fn c4_connection_state() -> anyhow::Result<Verdict> {
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 24, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (1u32..=4, proptest::collection::vec((0usize..213, 0u16..8), 0..6));
    let cross_pairs = Cell::new(0u64);
    let result = runner.run(&strategy.no_shrink(), |(lps, picks)| {
        let model = Model::new(Scenario::new(3, SimTime::from_us(10)), lps).unwrap();
        let t = &model.topology;
        let mut opts = BuildOptions::default();
        for (n, k) in picks {
            if (k as usize) < t.ifaces[n].len() {
                opts.dangling_gates.insert((n, k));
            }
        }
        let ifs = init_interfaces(&model, &opts).map_err(|e| proptest::test_runner::TestCaseError::fail(e.to_string()))?;
        for (n, list) in ifs.iter().enumerate() {
            for (k, i) in list.iter().enumerate() {
                let f = t.ifaces[n][k];
                let wired = !opts.dangling_gates.contains(&(n, k as u16))
                    && !opts.dangling_gates.contains(&(f.peer, f.peer_iface));
                proptest::prop_assert_eq!(i.connected, Some(wired), "{}", t.iface_path(n, k as u16));
                let remote = model.node_lp(n) != model.node_lp(f.peer);
                if remote && !opts.dangling_gates.contains(&(n, k as u16)) {
                    proptest::prop_assert_eq!(i.connected_stage, Some(2));
                    cross_pairs.set(cross_pairs.get() + 1);
                }
            }
        }
        Ok(())
    });
    let aborts = unanswered_request_aborts();
    let cross_pairs = cross_pairs.get();
    let pass = result.is_ok() && aborts && cross_pairs > 0;
    let detail = match result {
        Ok(()) => format!("24 cases, {cross_pairs} cross-LP interfaces resolved in stage 2, unanswered request aborts={aborts}"),
        Err(e) => format!("{e}"),
    };
    Ok(verdict(pass, detail))
}

fn c5_socket_ids() -> anyhow::Result<Verdict> {
    let mut u = UdpLayer::with_next_id((1 << 31) - 5);
    let ids: Vec<i64> = (0..10).map(|_| u.bind(5000).map(|s| s.0 as i64)).collect::<Result<_, _>>()?;
    let distinct = ids.iter().collect::<BTreeSet<_>>().len() == ids.len();
    let increasing = ids.windows(2).all(|w| w[0] < w[1]);
    let nonneg = ids.iter().all(|&i| i >= 0);
    Ok(verdict(
        distinct && increasing && nonneg,
        format!("ids {}..={}", ids[0], ids[9]),
    ))
}

fn c6_traffic() -> anyhow::Result<Verdict> {
    let mut parts = Vec::new();
    let mut pass = true;
    for p_local in [0.5, 0.9] {
        let params = TrafficParams { p_local, ..TrafficParams::default() };
        let local: Vec<_> = (1..57).map(|i| std::net::Ipv4Addr::new(10, 0, 0, i)).collect();
        let remote: Vec<_> = (1..=57 * 7).map(|i| std::net::Ipv4Addr::new(10, 1, (i / 250) as u8, (i % 250) as u8)).collect();
        let rng = derive_stream(7, &ModulePath::parse("net.lan0.host0.app").unwrap());
        let mut g = TrafficGen::new(rng, params, local, remote)?;
        let n = 100_000;
        let (mut delay, mut size, mut local_n) = (0f64, 0f64, 0u32);
        for _ in 0..n {
            let s = g.step()?;
            delay += s.delay.as_secs_f64();
            size += s.size as f64;
            local_n += s.local as u32;
        }
        let mean_delay_us = delay / n as f64 * 1e6;
        let mean_size = size / n as f64;
        let frac = local_n as f64 / n as f64;
        let ok = (mean_delay_us / 20.0 - 1.0).abs() <= 0.02
            && (mean_size / 200.0 - 1.0).abs() <= 0.02
            && (frac - p_local).abs() <= 0.02;
        pass &= ok;
        parts.push(format!("p_local {p_local}: {mean_delay_us:.3}us {mean_size:.2}B local {frac:.4}"));
    }
    Ok(verdict(pass, parts.join("; ")))
}

fn c7_lookahead(tally: &mut Tally) -> anyhow::Result<Verdict> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let delays = [SimTime::from_ns(10), SimTime::from_us(1), SimTime::from_us(10), SimTime::from_us(100)];
    let mut speedups = Vec::new();
    for d in delays {
        let mut s = desk(1);
        s.links.uplink.delay = d;
        let (mut seq, mut par) = (Vec::new(), Vec::new());
        for _ in 0..5 {
            seq.push(run(s.clone(), &RunConfig::new(Mode::Sequential))?.run_seconds);
            let r = run(s.clone(), &RunConfig::new(Mode::Inproc(4)));
            tally.record(&r);
            par.push(r?.run_seconds);
        }
        speedups.push((d, median(&seq) / median(&par)));
    }
    let at = |i: usize| speedups[i].1;
    let pass = at(2) > at(0) && at(2) >= 1.3;
    let table: Vec<String> = speedups.iter().map(|(d, s)| format!("{d}: {s:.2}")).collect();
    Ok(Verdict {
        pass,
        detail: format!("median speedup, 4 LPs, {cores} core(s): {}", table.join(", ")),
        binding: cores >= 4,
    })
}

fn c8_conservatism(tally: &Tally) -> Verdict {
    verdict(
        tally.violations.is_empty() && tally.runs > 0,
        format!(
            "{} runs, {} guarded event executions, {} null messages, {} violations",
            tally.runs,
            tally.checks,
            tally.nulls,
            tally.violations.len()
        ),
    )
}

fn c9_progress(tally: &mut Tally) -> anyhow::Result<Verdict> {
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 50, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let strategy = (1u32..=4, 0u32..16, 10i64..=200_000, proptest::num::u64::ANY, 0.0f64..=1.0, 200i64..=1500);
    let slowest = Cell::new(Duration::ZERO);
    let tally = RefCell::new(tally);
    let result = runner.run(&strategy.no_shrink(), |(n_lans, pick, gw_ns, seed, p_local, sim_us)| {
        let mut s = Scenario::new(n_lans, SimTime::from_ns(gw_ns));
        s.seed = seed;
        s.traffic.p_local = p_local;
        s.sim_time = SimTime::from_us(sim_us);
        let lps = 2 + pick % n_lans;
        let t0 = Instant::now();
        let r = run(s.clone(), &RunConfig::new(Mode::Inproc(lps)));
        slowest.set(slowest.get().max(t0.elapsed()));
        tally.borrow_mut().record(&r);
        let r = r.map_err(|e| proptest::test_runner::TestCaseError::fail(format!("{e:#}")))?;
        let seq = run(s, &RunConfig::new(Mode::Sequential)).unwrap();
        proptest::prop_assert_eq!(r.events(), seq.events());
        Ok(())
    });
    let slowest = slowest.get();
    Ok(verdict(
        result.is_ok() && slowest < Duration::from_secs(60),
        match result {
            Ok(()) => format!("50 scenarios terminated, slowest {:.2}s", slowest.as_secs_f64()),
            Err(e) => e.to_string(),
        },
    ))
}

fn main() {
    let only: Option<BTreeSet<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |i: u32| only.as_ref().map_or(true, |s| s.contains(&i));
    let dir = tempfile::tempdir().expect("temp dir");
    let mut tally = Tally::default();
    let mut failed = Vec::new();
    let mut report = |id: u32, name: &str, v: anyhow::Result<Verdict>, t: Instant| {
        let v = v.unwrap_or_else(|e| verdict(false, format!("error: {e:#}")));
        let status = match (v.pass, v.binding) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (not binding on this machine)",
        };
        println!("[{status}] {id}. {name}: {} ({:.1}s)", v.detail, t.elapsed().as_secs_f64());
        if !v.pass && v.binding {
            failed.push(id);
        }
    };
    let t_dumps = Instant::now();
    let dumps = if wanted(2) || wanted(3) { Some(full_dumps(&mut tally)) } else { None };
    let dumps = dumps.map(|d| d.map_err(|e| anyhow::anyhow!("{e:#}")));
    let on_dumps = |f: fn(&[(u32, Vec<String>)]) -> anyhow::Result<Verdict>| match &dumps {
        Some(Ok(d)) => f(d),
        Some(Err(e)) => Err(anyhow::anyhow!("{e}")),
        None => unreachable!(),
    };

    if wanted(1) {
        let t = Instant::now();
        report(1, "determinism across mappings and transports", c1_determinism(&mut tally, dir.path()), t);
    }
    if wanted(2) {
        let t = t_dumps;
        report(2, "MAC assignment injective and mapping-independent", on_dumps(c2_macs), t);
    }
    if wanted(3) {
        let t = Instant::now();
        report(3, "addresses and routing tables mapping-independent", on_dumps(c3_configurator), t);
    }
    if wanted(4) {
        let t = Instant::now();
        report(4, "connection state staging", c4_connection_state(), t);
    }
    if wanted(5) {
        let t = Instant::now();
        report(5, "socket ids past 2^31-5", c5_socket_ids(), t);
    }
    if wanted(6) {
        let t = Instant::now();
        report(6, "traffic model over 10^5 draws", c6_traffic(), t);
    }
    if wanted(7) {
        let t = Instant::now();
        report(7, "lookahead trend", c7_lookahead(&mut tally), t);
    }
    if wanted(9) {
        let t = Instant::now();
        report(9, "null-message progress on random scenarios", c9_progress(&mut tally), t);
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, "conservatism over all runs above", Ok(c8_conservatism(&tally)), t);
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
