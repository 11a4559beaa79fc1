//! Canonical per-event trace lines.
//!
//! `<ticks> <target-path> <msg-kind> <sender-path> <sender-seq>`, one line
//! per processed event in processing order. The order key can be recovered
//! from a line, which is what lets per-LP traces be merged and compared with
//! a sequential trace byte for byte.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};
use crate::message::MessageKind;
use crate::path::ModulePath;
use crate::time::SimTime;

#[derive(Clone, Copy, Debug)]
pub struct TraceRecord<'a> {
    pub time: SimTime,
    pub target: &'a ModulePath,
    pub kind: MessageKind,
    pub sender: &'a ModulePath,
    pub sender_seq: u64,
}

impl fmt::Display for TraceRecord<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {}",
            self.time.ticks(),
            self.target,
            self.kind,
            self.sender,
            self.sender_seq
        )
    }
}

pub trait TraceSink: Send {
    fn record(&mut self, rec: &TraceRecord<'_>) -> Result<()>;

    /// Called once when the run is over.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Keeps rendered lines in memory.
#[derive(Debug, Default)]
pub struct MemoryTrace {
    pub lines: Vec<String>,
}

impl TraceSink for MemoryTrace {
    fn record(&mut self, rec: &TraceRecord<'_>) -> Result<()> {
        self.lines.push(alloc::format!("{rec}"));
        Ok(())
    }
}

/// Order key parsed back from a trace line. Borrowed from the line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineKey<'a> {
    pub ticks: i64,
    pub target: &'a str,
    pub sender: &'a str,
    pub sender_seq: u64,
}

impl Ord for LineKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ticks
            .cmp(&other.ticks)
            .then_with(|| self.target.cmp(other.target))
            .then_with(|| self.sender.cmp(other.sender))
            .then_with(|| self.sender_seq.cmp(&other.sender_seq))
    }
}

impl PartialOrd for LineKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn parse_line(line: &str) -> Result<LineKey<'_>> {
    let bad = || Error::Parse(alloc::format!("malformed trace line `{line}`"));
    let mut it = line.split(' ');
    let ticks = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let target = it.next().ok_or_else(bad)?;
    let _kind = it.next().ok_or_else(bad)?;
    let sender = it.next().ok_or_else(bad)?;
    let sender_seq = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if it.next().is_some() {
        return Err(bad());
    }
    Ok(LineKey {
        ticks,
        target,
        sender,
        sender_seq,
    })
}
