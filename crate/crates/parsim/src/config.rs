//! Scenario files.
//!
//! Flat `key = value` lines, optionally grouped under `[traffic]` and
//! `[links]` headers. `#` starts a comment. Only `n_lans` and
//! `gateway_delay` are required; everything else defaults to the benchmark
//! values:
//!
//! ```text
//! n_lans = 8
//! gateway_delay = 10us
//! sim_time = 10ms            # default 10ms
//! seed = 1                   # default 1
//! backbone_file = bb.txt     # default: the shipped 57-router graph
//!
//! [traffic]
//! p_local = 0.5              # default 0.5
//! mean_size = 200            # bytes, default 200
//! mean_interarrival = 20us   # default 20us
//! stop = 8ms                 # default: never
//!
//! [links]
//! access_delay = 100us       # host links, default 100us / 1Gbps
//! access_rate = 1Gbps
//! campus_delay = 100us       # router links inside a LAN, 100us / 10Gbps
//! campus_rate = 10Gbps
//! uplink_rate = 10Gbps       # LAN to backbone; its delay is gateway_delay
//! backbone_delay = 100us     # 100us / 100Gbps
//! backbone_rate = 100Gbps
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use parsim_core::channel::Datarate;
use parsim_core::scenario::{BackboneGraph, Scenario};
use parsim_core::time::parse_duration;
use parsim_core::SimTime;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn line_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, message: message.into() }
}

/// `1Gbps`, `100Mbps`, `64kbps`, `9600bps`.
pub fn parse_datarate(text: &str) -> Option<Datarate> {
    let s = text.trim();
    let split = s.find(|c: char| !c.is_ascii_digit())?;
    let (num, unit) = s.split_at(split);
    let scale: u64 = match unit.trim() {
        "bps" => 1,
        "kbps" => 1_000,
        "Mbps" => 1_000_000,
        "Gbps" => 1_000_000_000,
        _ => return None,
    };
    let v: u64 = num.parse().ok()?;
    (v > 0).then_some(())?;
    v.checked_mul(scale).map(Datarate)
}

/// Reads a scenario file; `backbone_file` is resolved against the file's
/// directory.
pub fn load_config(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, path.parent())
}

pub fn parse_config(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
    parse_with_backbone(text, base_dir, BackboneGraph::default())
}

/// Like [`parse_config`] but starting from `backbone` instead of the
/// shipped graph.
pub fn parse_with_backbone(text: &str, base_dir: Option<&Path>, backbone: BackboneGraph) -> Result<Scenario, ConfigError> {
    let mut s = Scenario::new(1, SimTime::ZERO);
    s.backbone = backbone;
    let mut n_lans = None;
    let mut gateway = None;
    let mut seen = BTreeSet::new();
    let mut section = String::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| line_err(ln, "unterminated section header"))?
                .trim();
            if !matches!(name, "traffic" | "links") {
                return Err(line_err(ln, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| line_err(ln, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(line_err(ln, format!("`{key}` has no value")));
        }
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        if !seen.insert(full.clone()) {
            return Err(line_err(ln, format!("`{full}` given twice")));
        }
        let dur = || parse_duration(value).map_err(|e| line_err(ln, e.to_string()));
        let rate = || parse_datarate(value).ok_or_else(|| line_err(ln, format!("invalid datarate `{value}`")));
        let num = |what: &str| line_err(ln, format!("invalid {what} `{value}`"));
        match full.as_str() {
            "n_lans" => n_lans = Some(value.parse::<u32>().map_err(|_| num("LAN count"))?),
            "gateway_delay" => gateway = Some(dur()?),
            "sim_time" => s.sim_time = dur()?,
            "seed" => s.seed = value.parse().map_err(|_| num("seed"))?,
            "backbone_file" => {
                let p = match base_dir {
                    Some(d) => d.join(value),
                    None => value.into(),
                };
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| line_err(ln, format!("cannot read {}: {e}", p.display())))?;
                s.backbone = BackboneGraph::parse(&text).map_err(|e| line_err(ln, e.to_string()))?;
            }
            "traffic.p_local" => s.traffic.p_local = value.parse().map_err(|_| num("probability"))?,
            "traffic.mean_size" => {
                let v = value.strip_suffix('B').unwrap_or(value).trim();
                s.traffic.mean_size_bytes = v.parse().map_err(|_| num("size"))?;
            }
            "traffic.mean_interarrival" => s.traffic.mean_interarrival = dur()?,
            "traffic.stop" => s.traffic.stop = Some(dur()?),
            "links.access_delay" => s.links.access.delay = dur()?,
            "links.access_rate" => s.links.access.datarate = rate()?,
            "links.campus_delay" => s.links.campus.delay = dur()?,
            "links.campus_rate" => s.links.campus.datarate = rate()?,
            "links.uplink_rate" => s.links.uplink.datarate = rate()?,
            "links.backbone_delay" => s.links.backbone.delay = dur()?,
            "links.backbone_rate" => s.links.backbone.datarate = rate()?,
            _ => return Err(line_err(ln, format!("unknown key `{full}`"))),
        }
    }

    s.n_lans = n_lans.ok_or_else(|| ConfigError::Invalid("missing required key `n_lans`".into()))?;
    s.links.uplink.delay =
        gateway.ok_or_else(|| ConfigError::Invalid("missing required key `gateway_delay`".into()))?;
    s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(s)
}

/// Renders every setting except the backbone graph; see [`render_backbone`].
pub fn render_config(s: &Scenario) -> String {
    let mut out = String::new();
    let t = &s.traffic;
    let l = &s.links;
    let _ = writeln!(out, "n_lans = {}", s.n_lans);
    let _ = writeln!(out, "gateway_delay = {}", l.uplink.delay);
    let _ = writeln!(out, "sim_time = {}", s.sim_time);
    let _ = writeln!(out, "seed = {}", s.seed);
    let _ = writeln!(out, "\n[traffic]");
    let _ = writeln!(out, "p_local = {:?}", t.p_local);
    let _ = writeln!(out, "mean_size = {:?}", t.mean_size_bytes);
    let _ = writeln!(out, "mean_interarrival = {}", t.mean_interarrival);
    if let Some(stop) = t.stop {
        let _ = writeln!(out, "stop = {stop}");
    }
    let _ = writeln!(out, "\n[links]");
    let _ = writeln!(out, "access_delay = {}", l.access.delay);
    let _ = writeln!(out, "access_rate = {}", l.access.datarate);
    let _ = writeln!(out, "campus_delay = {}", l.campus.delay);
    let _ = writeln!(out, "campus_rate = {}", l.campus.datarate);
    let _ = writeln!(out, "uplink_rate = {}", l.uplink.datarate);
    let _ = writeln!(out, "backbone_delay = {}", l.backbone.delay);
    let _ = writeln!(out, "backbone_rate = {}", l.backbone.datarate);
    out
}

/// The backbone in the format `BackboneGraph::parse` reads.
pub fn render_backbone(g: &BackboneGraph) -> String {
    let mut out = format!("routers {}\n", g.routers);
    for (a, b) in &g.edges {
        let _ = writeln!(out, "{a} {b}");
    }
    out
}
