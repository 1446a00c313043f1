//! Randomized topologies and the simulator invariants checked on them:
//! bounded queues, liveness after sources stop, tuple conservation, time
//! ordering and determinism.

use std::sync::Arc;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use streamrc_core::simengine::{BpScope, SimConfig, SimState, TraceKind, TraceRecord, ACTION_FRACTIONS};
use streamrc_core::time::SimDuration;
use streamrc_core::topology::{
    random_tree, validate, ComponentKind, ComponentSpec, LinkSpec, TopologySpec, DEFAULT_TUPLE_BYTES,
};

/// One randomized simulator run.
#[derive(Debug, Clone)]
pub struct Case {
    pub spec: TopologySpec,
    pub seed: u64,
    pub run_s: f64,
    pub fractions: (usize, usize),
    pub scope: BpScope,
    pub jitter: bool,
}

/// A random DAG: sources first, sinks last, every non-source has at least one
/// earlier parent and every non-sink at least one later child.
fn dag(
    n: usize,
    n_src: usize,
    n_sink: usize,
    rates: Vec<u32>,
    services: Vec<u32>,
    sels: Vec<u32>,
    picks: Vec<u32>,
) -> TopologySpec {
    let n_op = n - n_src - n_sink;
    let name = |i: usize| {
        if i < n_src {
            format!("src{i}")
        } else if i < n_src + n_op {
            format!("op{i}")
        } else {
            format!("sk{i}")
        }
    };
    let mut components = Vec::new();
    for i in 0..n {
        let c = if i < n_src {
            ComponentSpec::source(&name(i), rates[i] as f64 * 100.0)
        } else if i < n_src + n_op {
            let sel = [0.5, 1.0, 1.0, 1.0, 1.5, 2.0][sels[i] as usize % 6];
            ComponentSpec::operator(&name(i), services[i] as f64 / 10.0, sel)
        } else {
            ComponentSpec::sink(&name(i), 0.05)
        };
        components.push(c);
    }
    let mut pick = picks.into_iter().cycle();
    let mut edges = std::collections::BTreeSet::new();
    for j in n_src..n {
        // Parents come from earlier sources and operators.
        let upper = j.min(n_src + n_op);
        let p = pick.next().unwrap() as usize % upper;
        edges.insert((p, j));
        if pick.next().unwrap() % 4 == 0 {
            let q = pick.next().unwrap() as usize % upper;
            edges.insert((q, j));
        }
    }
    for i in 0..n_src + n_op {
        if !edges.iter().any(|&(a, _)| a == i) {
            let lo = (i + 1).max(n_src);
            let c = lo + pick.next().unwrap() as usize % (n - lo);
            edges.insert((i, c));
        }
    }
    let links = edges.into_iter().map(|(a, b)| LinkSpec::new(&name(a), &name(b))).collect();
    TopologySpec { name: format!("dag{n}"), components, links, tuple_bytes: DEFAULT_TUPLE_BYTES }
}

pub fn dag_strategy() -> impl Strategy<Value = TopologySpec> {
    (3usize..=12)
        .prop_flat_map(|n| {
            let max_src = if n >= 5 { 2 } else { 1 };
            (Just(n), 1usize..=max_src)
        })
        .prop_flat_map(|(n, n_src)| {
            let max_sink = (n - n_src - 1).min(3usize);
            (
                Just(n),
                Just(n_src),
                1..=max_sink,
                prop::collection::vec(5u32..=20, n),
                prop::collection::vec(2u32..=12, n),
                prop::collection::vec(0u32..6, n),
                prop::collection::vec(any::<u32>(), 8..40),
            )
        })
        .prop_map(|(n, s, k, r, sv, sl, p)| dag(n, s, k, r, sv, sl, p))
}

pub fn case_strategy() -> impl Strategy<Value = Case> {
    let spec = prop_oneof![
        dag_strategy(),
        (3usize..=12, any::<u64>()).prop_map(|(n, seed)| random_tree(n, seed)),
    ];
    (
        spec,
        any::<u64>(),
        0.3f64..2.5,
        (0usize..10, 0usize..10),
        prop_oneof![Just(BpScope::Transitive), Just(BpScope::Direct)],
        any::<bool>(),
    )
        .prop_map(|(spec, seed, run_s, fractions, scope, jitter)| Case { spec, seed, run_s, fractions, scope, jitter })
}

/// Runs the case with tracing, switching the throttle halfway through.
pub fn run(case: &Case) -> SimState {
    let config = SimConfig { trace: true, bp_scope: case.scope, service_jitter: case.jitter, ..Default::default() };
    let mut s = SimState::new(Arc::new(case.spec.clone()), case.seed, config).unwrap();
    s.set_throttle(ACTION_FRACTIONS[case.fractions.0]).unwrap();
    s.advance_secs(case.run_s / 2.0);
    s.set_throttle(ACTION_FRACTIONS[case.fractions.1]).unwrap();
    s.advance_secs(case.run_s / 2.0);
    s
}

fn emitted_total(k: u64, sel: f64) -> u64 {
    (k as f64 * sel + 1e-9).floor() as u64
}

/// Checks every arrival against the bound: capacity plus the triggering
/// arrival, plus whatever was already on the incoming links when the episode
/// began, plus what upstream could still put on those links before the
/// suspend notice reached it.
pub fn check_queue_bound(spec: &TopologySpec, s: &SimState, trace: &[TraceRecord]) -> Result<(), String> {
    let n = spec.components.len();
    let link_dst: Vec<usize> = spec.links.iter().map(|l| spec.index_of(&l.to).unwrap()).collect();
    let window = s.config().control_latency + s.config().control_latency;
    let mut departed_into = vec![0u64; n];
    let mut arrived = vec![0u64; n];
    // Per component while in back pressure: (episode start, in-flight at the
    // start, departures towards it already traced at the start).
    let mut episode: Vec<Option<(u64, u64, usize)>> = vec![None; n];
    // Departure times per destination, in trace order and therefore sorted.
    let mut departs: Vec<Vec<u64>> = vec![Vec::new(); n];
    for r in trace.iter().filter(|r| r.kind == TraceKind::Depart) {
        departs[link_dst[r.detail as usize]].push(r.time.as_nanos());
    }
    for r in trace {
        let c = r.component;
        match r.kind {
            TraceKind::Depart => departed_into[link_dst[r.detail as usize]] += 1,
            TraceKind::Arrive => {
                arrived[c] += 1;
                let cap = s.components()[c].in_capacity as u64;
                let bound = match episode[c] {
                    None => cap + 1,
                    Some((t0, inflight, seen)) => {
                        // Departures traced after the trigger, including any in
                        // the same instant, up to the suspend notice.
                        let times = &departs[c][seen..];
                        let late = times.partition_point(|&t| t <= t0 + window.as_nanos()) as u64;
                        cap + 1 + inflight + late
                    }
                };
                if r.detail > bound {
                    return Err(format!("component {c} queue {} > bound {bound} at {:?}", r.detail, r.time));
                }
            }
            TraceKind::BpEnter => {
                let seen = departed_into[c] as usize;
                episode[c] = Some((r.time.as_nanos(), departed_into[c] - arrived[c], seen));
            }
            TraceKind::BpExit => episode[c] = None,
            _ => {}
        }
    }
    Ok(())
}

pub fn check_conservation(spec: &TopologySpec, s: &SimState) -> Result<(), String> {
    let outs = spec.out_links();
    let ins = spec.in_links();
    for (li, l) in s.links().iter().enumerate() {
        if l.departed != l.arrived + l.in_flight {
            return Err(format!("link {li}: departed {} != arrived {} + in flight {}", l.departed, l.arrived, l.in_flight));
        }
    }
    for (i, c) in s.components().iter().enumerate() {
        let cs = &spec.components[i];
        let arrived: u64 = ins[i].iter().map(|&li| s.links()[li].arrived).sum();
        let departed: u64 = outs[i].iter().map(|&li| s.links()[li].departed).sum();
        let ctr = &c.counters;
        if ctr.tuples_in != arrived {
            return Err(format!("{}: tuples_in {} != arrivals {arrived}", cs.id, ctr.tuples_in));
        }
        if ctr.tuples_out != departed {
            return Err(format!("{}: tuples_out {} != departures {departed}", cs.id, ctr.tuples_out));
        }
        let held_out = (c.out_len + c.pending.len()) as u64;
        match cs.kind() {
            ComponentKind::Source => {
                if ctr.generated * outs[i].len() as u64 != departed + held_out {
                    return Err(format!("{}: generated copies not conserved", cs.id));
                }
            }
            ComponentKind::Operator | ComponentKind::Sink => {
                let in_service = u64::from(c.job.is_some());
                if ctr.tuples_in != ctr.tuples_processed + c.incoming.len() as u64 + in_service {
                    return Err(format!("{}: input side not conserved", cs.id));
                }
                if cs.kind() == ComponentKind::Operator {
                    let made = emitted_total(ctr.tuples_processed, cs.selectivity().unwrap());
                    if made * outs[i].len() as u64 != departed + held_out {
                        return Err(format!("{}: output side not conserved", cs.id));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs every invariant check on one case; the error names the first violation.
pub fn check_case(case: &Case) -> Result<(), String> {
    if !validate(&case.spec).is_empty() {
        return Err(format!("generator produced invalid topology: {:?}", validate(&case.spec)));
    }
    let mut s = run(case);
    let trace = s.trace().unwrap().to_vec();
    if trace.windows(2).any(|w| w[1].time < w[0].time) {
        return Err("event times decreased".into());
    }
    check_queue_bound(&case.spec, &s, &trace)?;
    check_conservation(&case.spec, &s)?;

    let again = run(case);
    if s.format_trace(&trace) != again.format_trace(again.trace().unwrap()) || s.snapshot() != again.snapshot() {
        return Err("same inputs gave different traces".into());
    }

    s.stop_sources();
    s.advance(SimDuration::from_secs_f64(30.0));
    let trace = s.trace().unwrap().to_vec();
    check_queue_bound(&case.spec, &s, &trace)?;
    check_conservation(&case.spec, &s)?;
    for (i, c) in s.components().iter().enumerate() {
        if c.in_backpressure || c.suspended || c.resident() != 0 {
            return Err(format!("{} not drained: {:?}", case.spec.components[i].id, c));
        }
    }
    if s.links().iter().any(|l| l.in_flight != 0) {
        return Err("tuples left on links".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub cases: u32,
    /// First failing case after shrinking, if any.
    pub failure: Option<String>,
}

/// Checks `cases` generated cases with a deterministic runner.
pub fn run_suite(cases: u32) -> SuiteOutcome {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(
        proptest::test_runner::RngAlgorithm::ChaCha,
    ));
    let result = runner.run(&case_strategy(), |case| {
        check_case(&case).map_err(|e| TestCaseError::fail(format!("{e}\n{}", case.spec.to_document())))
    });
    SuiteOutcome { cases, failure: result.err().map(|e| e.to_string()) }
}

/// Number of the first `n` deterministic cases whose run entered back pressure.
pub fn back_pressure_coverage(n: usize) -> usize {
    let mut runner = TestRunner::deterministic();
    let strategy = case_strategy();
    (0..n)
        .filter(|_| {
            let case = strategy.new_tree(&mut runner).expect("strategy generates").current();
            run(&case).trace().expect("traced").iter().any(|r| r.kind == TraceKind::BpEnter)
        })
        .count()
}
