use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context as _};
use clap::{ArgGroup, Parser, ValueEnum};
use parsim::report::{self, baseline_seconds, median, stats_map};
use parsim::run::{merged_hosts, merged_init_dump, worker_main};
use parsim::trace::compare_traces;
use parsim::{load_config, run, Mode, RunConfig};
use parsim_core::time::parse_duration;
use parsim_core::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransportArg {
    Inproc,
    Tcp,
}

fn duration(s: &str) -> Result<SimTime, String> {
    parse_duration(s).map_err(|e| e.to_string())
}

/// Deterministic parallel simulation of the backbone/campus UDP benchmark.
#[derive(Debug, Parser)]
#[command(name = "parsim", version)]
#[command(group(ArgGroup::new("what").args(["config", "compare", "worker"]).required(true)))]
struct Cli {
    /// Scenario file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Run everything in one kernel (the default without --lps).
    #[arg(long, conflicts_with_all = ["lps", "transport"])]
    sequential: bool,

    /// Number of logical processes.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    lps: Option<u32>,

    #[arg(long, value_enum, requires = "lps")]
    transport: Option<TransportArg>,

    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Overrides the scenario's end time, e.g. `10ms`.
    #[arg(long, value_name = "DURATION", value_parser = duration)]
    sim_time: Option<SimTime>,

    /// Event trace; parallel runs write `<stem>.lp<i>.<ext>` per LP.
    #[arg(long, value_name = "FILE")]
    trace_out: Option<PathBuf>,

    /// Per-host and total packet statistics.
    #[arg(long, value_name = "FILE")]
    stats_out: Option<PathBuf>,

    /// Run report; also printed to stdout.
    #[arg(long, value_name = "FILE")]
    report_out: Option<PathBuf>,

    /// Report file of a sequential run to compute the speedup against.
    #[arg(long, value_name = "REPORT")]
    baseline: Option<PathBuf>,

    /// Repeat the run and report mean, stddev and median times.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    repeat: u32,

    /// Stop after initialization.
    #[arg(long)]
    init_only: bool,

    /// Write MACs, addresses, connection state and routes after
    /// initialization, sorted.
    #[arg(long, value_name = "FILE")]
    dump_init: Option<PathBuf>,

    /// Seconds a logical process may wait for a message before giving up.
    #[arg(long, default_value_t = 60, value_name = "SECS")]
    watchdog: u64,

    /// Reference trace to compare the merged --merge traces with.
    #[arg(long, value_name = "REF", requires = "merge", conflicts_with_all = ["config", "sequential", "lps"])]
    compare: Option<PathBuf>,

    /// Per-LP traces (globs are expanded).
    #[arg(long, value_name = "GLOB", num_args = 1.., requires = "compare")]
    merge: Vec<String>,

    #[arg(long, hide = true, requires = "worker_lp", conflicts_with = "config")]
    worker: Option<String>,

    #[arg(long, hide = true)]
    worker_lp: Option<u32>,
}

fn expand(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        let mut hits: Vec<PathBuf> = glob::glob(p)
            .with_context(|| format!("bad pattern `{p}`"))?
            .collect::<Result<_, _>>()?;
        if hits.is_empty() {
            bail!("`{p}` matches no file");
        }
        hits.sort();
        out.extend(hits);
    }
    Ok(out)
}

fn compare(reference: &PathBuf, merge: &[String]) -> anyhow::Result<bool> {
    let parts = expand(merge)?;
    let v = compare_traces(reference, &parts)?;
    println!("{v}");
    Ok(v.is_equal())
}

fn simulate(cli: &Cli) -> anyhow::Result<()> {
    let path = cli.config.as_ref().expect("checked by clap");
    let mut scenario = load_config(path)?;
    if let Some(s) = cli.seed {
        scenario.seed = s;
    }
    if let Some(t) = cli.sim_time {
        scenario.sim_time = t;
    }
    let mode = match (cli.lps, cli.transport) {
        (None, _) => Mode::Sequential,
        (Some(n), Some(TransportArg::Tcp)) => Mode::Tcp(n),
        (Some(n), _) => Mode::Inproc(n),
    };
    let mut cfg = RunConfig::new(mode);
    cfg.trace_out = cli.trace_out.clone();
    cfg.init_only = cli.init_only;
    cfg.dump_init = cli.dump_init.is_some();
    cfg.watchdog = Duration::from_secs(cli.watchdog);

    let mut times = Vec::new();
    let mut last = None;
    for _ in 0..cli.repeat {
        let r = run(scenario.clone(), &cfg)?;
        times.push(r.run_seconds);
        last = Some(r);
    }
    let mut r = last.expect("at least one run");
    if times.len() > 1 {
        r.repeats = times.clone();
    }
    if let Some(b) = &cli.baseline {
        let base = baseline_seconds(b).map_err(anyhow::Error::msg)?;
        r.speedup = Some(base / median(&times));
    }

    let text = report::render(&r.to_map());
    print!("{text}");
    if let Some(p) = &cli.report_out {
        std::fs::write(p, &text).with_context(|| p.display().to_string())?;
    }
    if let Some(p) = &cli.stats_out {
        let s = report::render(&stats_map(&merged_hosts(&r)));
        std::fs::write(p, s).with_context(|| p.display().to_string())?;
    }
    if let Some(p) = &cli.dump_init {
        let mut s = merged_init_dump(&r).join("\n");
        s.push('\n');
        std::fs::write(p, s).with_context(|| p.display().to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = if let Some(addr) = &cli.worker {
        worker_main(addr, cli.worker_lp.expect("checked by clap")).map(|_| true)
    } else if let Some(r) = &cli.compare {
        compare(r, &cli.merge)
    } else {
        simulate(&cli).map(|_| true)
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
