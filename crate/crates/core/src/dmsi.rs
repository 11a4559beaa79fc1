//! Distributed multi-stage initialization (DMSI).
//!
//! Module instances register under a kind. Within every init stage, one
//! state token per kind walks through all instances of that kind in global
//! path order, hopping between logical processes as needed; the last
//! holder of stage `s` hands the token to the first instance of stage
//! `s + 1`. After the tokens have passed, each LP runs the ordinary local
//! `init(s)` of its modules in path order, and a global barrier closes the
//! stage.
//!
//! Two idioms sit on top of the token:
//! - global variables live in the ordered key/value entries;
//! - cross-LP method calls become requests enqueued in stage `i`, answered
//!   by the responder in stage `i + 1` and consumed in stage `i + 2`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{Reader, Writer};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, ModuleId};
use crate::lp::LpId;
use crate::path::ModulePath;
use crate::time::SimTime;
use crate::transport::{Endpoint, Envelope, EnvelopeKind, Transport};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Request {
    pub requester: String,
    pub tag: String,
    pub responder: String,
    pub args: Vec<u8>,
}

/// The circulating state of one registered kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DmsiState {
    entries: Vec<(String, Vec<u8>)>,
    index: BTreeMap<String, usize>,
    requests: Vec<Request>,
    responses: BTreeMap<(String, String), Vec<u8>>,
}

impl DmsiState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Overwrites in place; a new key is appended.
    pub fn put(&mut self, key: &str, value: Vec<u8>) {
        match self.index.get(key) {
            Some(&i) => self.entries[i].1 = value,
            None => {
                self.index.insert(String::from(key), self.entries.len());
                self.entries.push((String::from(key), value));
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&[u8]> {
        self.index.get(key).map(|&i| self.entries[i].1.as_slice())
    }

    pub fn put_u64(&mut self, key: &str, v: u64) {
        self.put(key, v.to_be_bytes().to_vec());
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(b) => b
                .try_into()
                .map(|a: [u8; 8]| Some(u64::from_be_bytes(a)))
                .map_err(|_| Error::Decode(alloc::format!("token entry `{key}` is not a u64"))),
        }
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[u8])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn enqueue_request(&mut self, requester: &str, tag: &str, responder: &str, args: Vec<u8>) -> Result<()> {
        if self
            .requests
            .iter()
            .any(|r| r.requester == requester && r.tag == tag)
            || self
                .responses
                .contains_key(&(String::from(requester), String::from(tag)))
        {
            return Err(Error::Dmsi(alloc::format!(
                "{requester} already has an outstanding request `{tag}`"
            )));
        }
        self.requests.push(Request {
            requester: String::from(requester),
            tag: String::from(tag),
            responder: String::from(responder),
            args,
        });
        Ok(())
    }

    pub fn pending_requests(&self) -> &[Request] {
        &self.requests
    }

    /// Removes every request accepted by `filter` and stores `answer`'s
    /// result as its response. Returns the number answered.
    pub fn answer_requests(
        &mut self,
        mut filter: impl FnMut(&Request) -> bool,
        mut answer: impl FnMut(&Request) -> Result<Vec<u8>>,
    ) -> Result<usize> {
        let mut kept = Vec::with_capacity(self.requests.len());
        let mut n = 0;
        for r in core::mem::take(&mut self.requests) {
            if filter(&r) {
                let resp = answer(&r)?;
                self.responses.insert((r.requester.clone(), r.tag.clone()), resp);
                n += 1;
            } else {
                kept.push(r);
            }
        }
        self.requests = kept;
        Ok(n)
    }

    /// Consumes the response to `(requester, tag)`.
    pub fn take_response(&mut self, requester: &str, tag: &str) -> Result<Vec<u8>> {
        self.responses
            .remove(&(String::from(requester), String::from(tag)))
            .ok_or_else(|| Error::UnansweredRequest {
                requester: String::from(requester),
                tag: String::from(tag),
            })
    }

    pub fn pending_responses(&self) -> usize {
        self.responses.len()
    }

    pub fn encode(&self, w: &mut Writer) {
        w.u32(self.entries.len() as u32);
        for (k, v) in &self.entries {
            w.str(k).bytes(v);
        }
        w.u32(self.requests.len() as u32);
        for r in &self.requests {
            w.str(&r.requester).str(&r.tag).str(&r.responder).bytes(&r.args);
        }
        w.u32(self.responses.len() as u32);
        for ((req, tag), v) in &self.responses {
            w.str(req).str(tag).bytes(v);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.finish()
    }

    pub fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let mut s = DmsiState::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.bytes()?.to_vec();
            if s.index.contains_key(&k) {
                return Err(Error::Decode(alloc::format!("duplicate token entry `{k}`")));
            }
            s.put(&k, v);
        }
        for _ in 0..r.u32()? {
            s.requests.push(Request {
                requester: r.string()?,
                tag: r.string()?,
                responder: r.string()?,
                args: r.bytes()?.to_vec(),
            });
        }
        for _ in 0..r.u32()? {
            let req = r.string()?;
            let tag = r.string()?;
            s.responses.insert((req, tag), r.bytes()?.to_vec());
        }
        Ok(s)
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let s = Self::decode(&mut r)?;
        r.finish()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DmsiRegistration {
    pub kind: String,
    pub instance: ModulePath,
    /// Event-processing module that implements the instance.
    pub owner: ModuleId,
    /// Owner-defined discriminator, e.g. the interface index.
    pub slot: u32,
    pub lp: LpId,
}

/// What a module is told when it receives a token.
#[derive(Clone, Copy, Debug)]
pub struct DmsiVisit<'a> {
    pub kind: &'a str,
    pub instance: &'a ModulePath,
    pub slot: u32,
    pub stage: u32,
}

#[derive(Debug, Default)]
pub struct Registry {
    regs: Vec<DmsiRegistration>,
    sealed: bool,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_kind(&mut self, kind: &str, instance: ModulePath, owner: ModuleId, slot: u32, lp: LpId) -> Result<()> {
        if self.sealed {
            return Err(Error::Dmsi(alloc::format!(
                "{instance} registered for `{kind}` after initialization started"
            )));
        }
        if self.regs.iter().any(|r| r.kind == kind && r.instance == instance) {
            return Err(Error::Dmsi(alloc::format!("{instance} registered twice for `{kind}`")));
        }
        self.regs.push(DmsiRegistration {
            kind: String::from(kind),
            instance,
            owner,
            slot,
            lp,
        });
        Ok(())
    }

    pub fn seal(&mut self) -> StagePlan {
        self.sealed = true;
        StagePlan::new(self.regs.clone())
    }
}

/// Per kind, the visitation order of its instances (by path).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StagePlan {
    kinds: BTreeMap<String, Vec<DmsiRegistration>>,
}

impl StagePlan {
    pub fn new(regs: Vec<DmsiRegistration>) -> Self {
        let mut kinds: BTreeMap<String, Vec<DmsiRegistration>> = BTreeMap::new();
        for r in regs {
            kinds.entry(r.kind.clone()).or_default().push(r);
        }
        for v in kinds.values_mut() {
            v.sort_by(|a, b| a.instance.cmp(&b.instance));
        }
        StagePlan { kinds }
    }

    pub fn kinds(&self) -> impl Iterator<Item = (&str, &[DmsiRegistration])> {
        self.kinds.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn order(&self, kind: &str) -> &[DmsiRegistration] {
        self.kinds.get(kind).map_or(&[], Vec::as_slice)
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Transport hops the tokens make over `stages` stages: one per change
    /// of LP between consecutive instances, plus the stage-to-stage handover
    /// when the last and first instances differ in LP.
    pub fn expected_hops(&self, stages: u32) -> u64 {
        if stages == 0 {
            return 0;
        }
        self.kinds
            .values()
            .map(|v| {
                let within = v.windows(2).filter(|w| w[0].lp != w[1].lp).count() as u64;
                let wrap = match (v.first(), v.last()) {
                    (Some(f), Some(l)) if f.lp != l.lp => 1,
                    _ => 0,
                };
                within * stages as u64 + wrap * (stages as u64 - 1)
            })
            .sum()
    }
}

#[derive(Clone, Debug, Default)]
pub struct InitReport {
    pub stages: u32,
    pub token_hops: u64,
    /// Tokens whose final holder is on this LP, after the last stage.
    pub final_tokens: BTreeMap<String, DmsiState>,
    /// `(kind, instance, stage)` in the order the visits happened here.
    pub visits: Vec<(String, ModulePath, u32)>,
}

fn token_envelope(kind: &str, stage: u32, state: &DmsiState) -> Envelope {
    let mut w = Writer::new();
    w.str(kind).u32(stage);
    state.encode(&mut w);
    Envelope {
        kind: EnvelopeKind::DmsiToken,
        timestamp: SimTime::ZERO,
        payload: w.finish(),
    }
}

fn token_header(env: &Envelope) -> Option<(String, u32)> {
    if env.kind != EnvelopeKind::DmsiToken {
        return None;
    }
    let mut r = Reader::new(&env.payload);
    Some((r.string().ok()?, r.u32().ok()?))
}

fn decode_token(env: &Envelope) -> Result<DmsiState> {
    let mut r = Reader::new(&env.payload);
    r.string()?;
    r.u32()?;
    let s = DmsiState::decode(&mut r)?;
    r.finish()?;
    Ok(s)
}

/// Initializes the local modules of `kernel` in lockstep with every other
/// logical process. The stage count is the global maximum of the modules'
/// declared needs.
pub fn run_init<L, T: Transport>(kernel: &mut Kernel<L>, plan: &StagePlan, endpoint: &mut Endpoint<T>) -> Result<InitReport> {
    let me = endpoint.lp();
    let stages = endpoint.barrier(kernel.local_stage_count() as u64)? as u32;
    let mut report = InitReport {
        stages,
        ..InitReport::default()
    };
    let mut held: BTreeMap<String, (u32, DmsiState)> = BTreeMap::new();
    let locals: Vec<ModuleId> = kernel.local_modules().collect();
    for stage in 0..stages {
        for (kind, order) in plan.kinds() {
            for (i, reg) in order.iter().enumerate() {
                if reg.lp != me {
                    continue;
                }
                let mut token = match held.remove(kind) {
                    Some((s, tok)) if s == stage => tok,
                    Some((s, _)) => {
                        return Err(Error::Dmsi(alloc::format!(
                            "token `{kind}` for stage {s} held during stage {stage}"
                        )))
                    }
                    None if stage == 0 && i == 0 => DmsiState::new(),
                    None => {
                        let (_, env) = endpoint.next_matching(|_, e| {
                            token_header(e).is_some_and(|(k, s)| k == kind && s == stage)
                        })?;
                        decode_token(&env)?
                    }
                };
                let visit = DmsiVisit {
                    kind,
                    instance: &reg.instance,
                    slot: reg.slot,
                    stage,
                };
                kernel.dmsi_visit(reg.owner, &visit, &mut token)?;
                report.visits.push((String::from(kind), reg.instance.clone(), stage));
                let next = if i + 1 < order.len() {
                    Some((order[i + 1].lp, stage))
                } else if stage + 1 < stages {
                    Some((order[0].lp, stage + 1))
                } else {
                    None
                };
                match next {
                    Some((lp, s)) if lp == me => {
                        held.insert(String::from(kind), (s, token));
                    }
                    Some((lp, s)) => {
                        endpoint.send(lp, &token_envelope(kind, s, &token))?;
                        report.token_hops += 1;
                    }
                    None => {
                        report.final_tokens.insert(String::from(kind), token);
                    }
                }
            }
        }
        for &id in &locals {
            kernel.init_module(id, stage)?;
        }
        endpoint.barrier(stage as u64)?;
    }
    Ok(report)
}
