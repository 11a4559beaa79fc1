//! Trace files: writing them, merging per-LP files, comparing.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use parsim_core::trace::{parse_line, TraceRecord, TraceSink};
use parsim_core::{Error, Result};

/// Writes one line per processed event.
pub struct FileTrace {
    out: BufWriter<File>,
}

impl FileTrace {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(FileTrace { out: BufWriter::new(File::create(path)?) })
    }
}

impl TraceSink for FileTrace {
    fn record(&mut self, rec: &TraceRecord<'_>) -> Result<()> {
        writeln!(self.out, "{rec}").map_err(|e| Error::Trace(e.to_string()))
    }

    fn finish(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::Trace(e.to_string()))
    }
}

/// `run.log` becomes `run.lp3.log`; `run` becomes `run.lp3`.
pub fn lp_trace_path(base: &Path, lp: u32) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}.lp{lp}.{}", ext.to_string_lossy()),
        None => format!("{stem}.lp{lp}"),
    };
    base.with_file_name(name)
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Format { path: String, line: u64, message: String },
}

struct Source {
    path: String,
    lines: Lines<BufReader<File>>,
    line_no: u64,
}

impl Source {
    fn open(path: &Path) -> std::result::Result<Self, TraceError> {
        let f = File::open(path).map_err(|source| TraceError::Io { path: path.display().to_string(), source })?;
        Ok(Source { path: path.display().to_string(), lines: BufReader::new(f).lines(), line_no: 0 })
    }

    fn next_line(&mut self) -> std::result::Result<Option<String>, TraceError> {
        match self.lines.next() {
            None => Ok(None),
            Some(Err(source)) => Err(TraceError::Io { path: self.path.clone(), source }),
            Some(Ok(l)) => {
                self.line_no += 1;
                parse_line(&l).map_err(|e| self.format_err(e.to_string()))?;
                Ok(Some(l))
            }
        }
    }

    fn format_err(&self, message: String) -> TraceError {
        TraceError::Format { path: self.path.clone(), line: self.line_no, message }
    }
}

struct Head {
    line: String,
    src: usize,
}

impl Head {
    fn key(&self) -> parsim_core::trace::LineKey<'_> {
        parse_line(&self.line).expect("validated when read")
    }
}

impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key()).then(self.src.cmp(&other.src))
    }
}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head {}

/// Streams the lines of several per-LP traces in total event order. Each
/// input must itself be in that order.
pub struct MergedTrace {
    sources: Vec<Source>,
    heap: BinaryHeap<Reverse<Head>>,
}

impl MergedTrace {
    pub fn open<P: AsRef<Path>>(paths: &[P]) -> std::result::Result<Self, TraceError> {
        let mut sources = paths.iter().map(|p| Source::open(p.as_ref())).collect::<std::result::Result<Vec<_>, _>>()?;
        let mut heap = BinaryHeap::new();
        for (i, s) in sources.iter_mut().enumerate() {
            if let Some(line) = s.next_line()? {
                heap.push(Reverse(Head { line, src: i }));
            }
        }
        Ok(MergedTrace { sources, heap })
    }
}

impl Iterator for MergedTrace {
    type Item = std::result::Result<String, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse(head) = self.heap.pop()?;
        let src = &mut self.sources[head.src];
        match src.next_line() {
            Err(e) => return Some(Err(e)),
            Ok(Some(line)) => {
                let next = Head { line, src: head.src };
                if next.key() <= head.key() {
                    return Some(Err(src.format_err("trace is not in event order".into())));
                }
                self.heap.push(Reverse(next));
            }
            Ok(None) => {}
        }
        Some(Ok(head.line))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Equal { lines: u64 },
    /// `line` is 1-based; a missing side means that trace ended first.
    Differ { line: u64, reference: Option<String>, merged: Option<String> },
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Verdict::Equal { .. })
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Equal { lines } => write!(f, "equal ({lines} lines)"),
            Verdict::Differ { line, reference, merged } => {
                let show = |l: &Option<String>| l.clone().unwrap_or_else(|| "<end of trace>".into());
                write!(f, "differ at line {line}\n  reference: {}\n  merged:    {}", show(reference), show(merged))
            }
        }
    }
}

/// Merges `parts` and compares the result line by line with `reference`.
pub fn compare_traces<P: AsRef<Path>>(reference: &Path, parts: &[P]) -> std::result::Result<Verdict, TraceError> {
    let mut r = Source::open(reference)?;
    let mut m = MergedTrace::open(parts)?;
    let mut line = 0;
    loop {
        line += 1;
        let a = r.lines.next().transpose().map_err(|source| TraceError::Io { path: r.path.clone(), source })?;
        let b = m.next().transpose()?;
        match (a, b) {
            (None, None) => return Ok(Verdict::Equal { lines: line - 1 }),
            (a, b) if a == b => continue,
            (reference, merged) => return Ok(Verdict::Differ { line, reference, merged }),
        }
    }
}
