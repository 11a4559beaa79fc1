mod common;

use std::any::Any;
use std::sync::Arc;

use common::{merged_trace, run_model};
use parsim_core::build::{BuildOptions, Model};
use parsim_core::channel::{Channel, Datarate, GateRef};
use parsim_core::kernel::{Context, InitContext};
use parsim_core::lp::{encode_event, LogicalProcess, LpId, LpLinks};
use parsim_core::message::Message;
use parsim_core::path::PathTable;
use parsim_core::scenario::Scenario;
use parsim_core::transport::{Endpoint, Envelope, EnvelopeKind, SoloTransport};
use parsim_core::{Error, Event, Kernel, Module, ModuleId, ModulePath, SimTime};
use proptest::prelude::*;

struct Sink;

impl Module<()> for Sink {
    fn handle(&mut self, _e: Event, _cx: &mut Context<'_>) -> parsim_core::Result<()> {
        Ok(())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn us(v: i64) -> SimTime {
    SimTime::from_us(v)
}

fn one_input_lp() -> (Kernel<()>, Endpoint<SoloTransport>, LpLinks) {
    let table = Arc::new(PathTable::new(vec![ModulePath::parse("net.a").unwrap()]));
    let mut k = Kernel::new(table, LpId(0), ());
    k.add_module(ModuleId(0), Box::new(Sink)).unwrap();
    let links = LpLinks { inputs: vec![LpId(1)], outputs: vec![] };
    (k, Endpoint::new(SoloTransport), links)
}

fn event_envelope(promise: SimTime, at: SimTime) -> Envelope {
    let e = Event {
        time: at,
        target: ModuleId(0),
        sender: ModuleId(0),
        sender_seq: 0,
        arrival_gate: Some(0),
        payload: Message::control(3),
    };
    Envelope { kind: EnvelopeKind::Event, timestamp: promise, payload: encode_event(&e) }
}

#[test]
fn receiving_nulls_and_events() {
    let (mut k, mut ep, links) = one_input_lp();
    let mut lp = LogicalProcess::new(&mut k, &mut ep, &links, us(1000));
    lp.on_receive(LpId(1), Envelope::null(us(30))).unwrap();
    lp.on_receive(LpId(1), Envelope::null(us(40))).unwrap();
    assert_eq!(lp.clock().eit(LpId(1)), Some(us(40)));
    let err = lp.on_receive(LpId(1), Envelope::null(us(20))).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)));

    let (mut k, mut ep, links) = one_input_lp();
    let mut lp = LogicalProcess::new(&mut k, &mut ep, &links, us(1000));
    lp.on_receive(LpId(1), Envelope::null(us(30))).unwrap();
    lp.on_receive(LpId(1), event_envelope(us(35), us(35))).unwrap();
    assert_eq!(lp.clock().eit(LpId(1)), Some(us(35)));
    drop(lp);
    assert_eq!(k.pending(), 1);
    assert_eq!(k.head_time(), us(35));
}

#[test]
fn event_below_its_promise_is_rejected() {
    let (mut k, mut ep, links) = one_input_lp();
    let mut lp = LogicalProcess::new(&mut k, &mut ep, &links, us(1000));
    assert!(lp.on_receive(LpId(1), event_envelope(us(35), us(34))).is_err());
}

struct Pinger;

impl Module<()> for Pinger {
    fn init(&mut self, _s: u32, cx: &mut InitContext<'_, ()>) -> parsim_core::Result<()> {
        cx.schedule_at(us(1), Message::control(0))
    }

    fn handle(&mut self, _e: Event, cx: &mut Context<'_>) -> parsim_core::Result<()> {
        cx.send(0, Message::control(1))?;
        let next = cx.now().checked_add(us(3))?;
        cx.schedule_at(next, Message::control(0))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[test]
fn single_lp_runtime_matches_the_kernel() {
    let build = || {
        let table = Arc::new(PathTable::new(vec![
            ModulePath::parse("net.a").unwrap(),
            ModulePath::parse("net.b").unwrap(),
        ]));
        let mut k = Kernel::new(table, LpId(0), ());
        k.add_module(ModuleId(0), Box::new(Pinger)).unwrap();
        k.add_module(ModuleId(1), Box::new(Sink)).unwrap();
        let a = GateRef { module: ModuleId(0), gate: 0 };
        let b = GateRef { module: ModuleId(1), gate: 0 };
        k.connect(Channel::new(us(2), Datarate::gbps(1), a, b).unwrap(), None).unwrap();
        k.init_all(1).unwrap();
        k
    };
    let mut seq = build();
    let s1 = seq.run(us(100)).unwrap();
    let mut par = build();
    let mut ep = Endpoint::new(SoloTransport);
    let s2 = LogicalProcess::new(&mut par, &mut ep, &LpLinks::default(), us(100)).run().unwrap();
    assert_eq!(s1, s2.kernel);
    assert_eq!(s2.sent.nulls, 0);
}

#[test]
fn paper_mapping_cuts_only_uplinks() {
    let m = Model::new(Scenario::new(57, us(10)), 58).unwrap();
    for j in 0..57 {
        let l = m.lp_links(LpId(j));
        assert_eq!(l.inputs, [LpId(57)]);
        assert_eq!(l.outputs, [(LpId(57), us(10))]);
    }
    assert_eq!(m.proxy_links().len(), 2 * 57);
    let mut s = Scenario::new(2, SimTime::ZERO);
    s.links.uplink.delay = SimTime::ZERO;
    assert!(Model::new(s, 3).is_err());
}

fn four_lans(seed: u64) -> Scenario {
    let mut s = Scenario::new(4, us(10));
    s.sim_time = SimTime::from_ms(2);
    s.seed = seed;
    s
}

#[test]
fn four_lan_traces_agree_across_partitionings() {
    let opts = BuildOptions::default();
    let seq = run_model(&Model::new(four_lans(3), 1).unwrap(), &opts, true).unwrap();
    let two = run_model(&Model::new(four_lans(3), 2).unwrap(), &opts, true).unwrap();
    let five = run_model(&Model::new(four_lans(3), 5).unwrap(), &opts, true).unwrap();
    let (a, b, c) = (merged_trace(&seq), merged_trace(&two), merged_trace(&five));
    let events: u64 = five.iter().map(|o| o.stats.unwrap().kernel.events).sum();
    assert_eq!(events as usize, a.len());
    assert_eq!(seq[0].kernel.stats().events as usize, a.len());
    assert!(a == b, "2 LPs diverge from the sequential trace");
    assert!(b == c, "5 LPs diverge from 2 LPs");
    assert!(five.iter().map(|o| o.stats.unwrap().sent.nulls).sum::<u64>() > 0);
}

#[test]
fn different_seeds_give_different_traces() {
    let opts = BuildOptions::default();
    let a = merged_trace(&run_model(&Model::new(four_lans(1), 1).unwrap(), &opts, true).unwrap());
    let b = merged_trace(&run_model(&Model::new(four_lans(2), 1).unwrap(), &opts, true).unwrap());
    assert!(a != b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn random_small_scenarios_replay_and_terminate(
        n_lans in 1u32..4,
        lp_pick in 0u32..8,
        gateway_ns in 10i64..200_000,
        seed in any::<u64>(),
        p_local in 0.0f64..1.0,
    ) {
        let mut s = Scenario::new(n_lans, SimTime::from_ns(gateway_ns));
        s.sim_time = SimTime::from_us(300);
        s.seed = seed;
        s.traffic.p_local = p_local;
        let lps = 1 + lp_pick % (n_lans + 1);
        let opts = BuildOptions::default();
        let seq = merged_trace(&run_model(&Model::new(s.clone(), 1).unwrap(), &opts, true).unwrap());
        let par = merged_trace(&run_model(&Model::new(s, lps).unwrap(), &opts, true).unwrap());
        prop_assert_eq!(seq.len(), par.len());
        prop_assert!(seq == par);
    }
}
