//! Run reports and statistics as flat `key value` files with sorted keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Counters of one host after a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HostTotals {
    pub path: String,
    pub sent: u64,
    pub received: u64,
    /// Sum of end-to-end delays in picoseconds.
    pub delay_sum_ps: i64,
}

/// What one logical process reports back.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LpSummary {
    pub lp: u32,
    pub events: u64,
    pub final_clock_ps: i64,
    pub events_sent: u64,
    pub nulls_sent: u64,
    pub tokens_sent: u64,
    pub events_received: u64,
    pub nulls_received: u64,
    pub blocked_waits: u64,
    pub conservative_checks: u64,
    pub stages: u32,
    pub token_hops: u64,
    pub init_seconds: f64,
    pub run_seconds: f64,
    pub hosts: Vec<HostTotals>,
    /// Initialization results, one line per interface or route.
    pub init_dump: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    /// `sequential`, `inproc` or `tcp`.
    pub mode: String,
    pub lps: u32,
    pub sim_seconds: f64,
    /// Process start to last LP finished, including model construction.
    pub wall_seconds: f64,
    /// Slowest LP's simulation phase, after initialization. Speedups are
    /// computed from this.
    pub run_seconds: f64,
    pub init_seconds: f64,
    pub per_lp: Vec<LpSummary>,
    pub speedup: Option<f64>,
    /// Simulation-phase times of every repetition when `--repeat` > 1.
    pub repeats: Vec<f64>,
}

pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

impl RunReport {
    pub fn events(&self) -> u64 {
        self.per_lp.iter().map(|l| l.events).sum()
    }

    pub fn nulls_sent(&self) -> u64 {
        self.per_lp.iter().map(|l| l.nulls_sent).sum()
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("mode", self.mode.clone());
        put("lps", self.lps.to_string());
        put("sim_seconds", format!("{:.9}", self.sim_seconds));
        put("wall_seconds", format!("{:.6}", self.wall_seconds));
        put("run_seconds", format!("{:.6}", self.run_seconds));
        put("init_seconds", format!("{:.6}", self.init_seconds));
        put("events", self.events().to_string());
        put("null_messages", self.nulls_sent().to_string());
        put("remote_events", self.per_lp.iter().map(|l| l.events_sent).sum::<u64>().to_string());
        put("token_hops", self.per_lp.iter().map(|l| l.token_hops).sum::<u64>().to_string());
        put("init_stages", self.per_lp.first().map_or(0, |l| l.stages).to_string());
        for l in &self.per_lp {
            put(&format!("lp{}.events", l.lp), l.events.to_string());
            put(&format!("lp{}.null_messages", l.lp), l.nulls_sent.to_string());
            put(&format!("lp{}.blocked_waits", l.lp), l.blocked_waits.to_string());
        }
        if let Some(s) = self.speedup {
            put("speedup", format!("{s:.4}"));
        }
        if self.repeats.len() > 1 {
            let (mean, sd) = mean_stddev(&self.repeats);
            put("repeat", self.repeats.len().to_string());
            put("run_seconds_mean", format!("{mean:.6}"));
            put("run_seconds_stddev", format!("{sd:.6}"));
            put("run_seconds_median", format!("{:.6}", median(&self.repeats)));
        }
        m
    }
}

/// Per-host and total packet counts and mean delays.
pub fn stats_map(hosts: &[HostTotals]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let (mut sent, mut received, mut delay) = (0u64, 0u64, 0i128);
    let mean = |sum: i128, n: u64| if n == 0 { 0 } else { sum / n as i128 };
    for h in hosts {
        m.insert(format!("{}.sent", h.path), h.sent.to_string());
        m.insert(format!("{}.received", h.path), h.received.to_string());
        m.insert(format!("{}.mean_delay_ps", h.path), mean(h.delay_sum_ps as i128, h.received).to_string());
        sent += h.sent;
        received += h.received;
        delay += h.delay_sum_ps as i128;
    }
    m.insert("total.sent".into(), sent.to_string());
    m.insert("total.received".into(), received.to_string());
    m.insert("total.mean_delay_ps".into(), mean(delay, received).to_string());
    m
}

pub fn render(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} {v}");
    }
    out
}

pub fn parse(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut m = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| format!("line {}: expected `key value`", i + 1))?;
        m.insert(k.to_string(), v.to_string());
    }
    Ok(m)
}

/// The simulation-phase time recorded in a report file; the median over
/// repetitions when there were several.
pub fn baseline_seconds(path: &Path) -> Result<f64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let m = parse(&text)?;
    let v = m
        .get("run_seconds_median")
        .or_else(|| m.get("run_seconds"))
        .ok_or_else(|| format!("{}: no run_seconds", path.display()))?;
    v.parse().map_err(|_| format!("{}: bad run_seconds `{v}`", path.display()))
}
