//! Trace scan for the idle-branch effect in the reference tree: while op5
//! holds back pressure, the op2/op4 branch should stop delivering to sk1.

use streamrc_core::baselines::{run_controller, Fixed, RunOptions};
use streamrc_core::simengine::{SimConfig, TraceKind};
use streamrc_core::time::SimDuration;
use streamrc_core::topology::builtin;

#[derive(Debug, Clone, Copy)]
pub struct Episode {
    pub start: u64,
    pub end: u64,
    /// Last sibling-sink arrival after the start, if any, in nanoseconds after it.
    pub last_sibling_arrival: Option<u64>,
}

/// Back-pressure episodes of op5 in the reference tree under the default
/// scheme, with the last arrival at sk1 (the other branch's sink) in each.
pub fn episodes(duration_s: f64, seed: u64) -> (Vec<Episode>, SimDuration) {
    let spec = builtin("rgt").unwrap();
    let op5 = spec.index_of("op5").unwrap();
    let sk1 = spec.index_of("sk1").unwrap();
    let config = SimConfig { trace: true, ..Default::default() };
    let control = config.control_latency;
    let (_, state) = run_controller(&spec, RunOptions::new(duration_s, seed), config, &mut Fixed(9)).unwrap();
    let trace = state.trace().unwrap();
    let mut out = Vec::new();
    let mut open: Option<u64> = None;
    let mut arrivals: Vec<u64> = Vec::new();
    for r in trace {
        let t = r.time.as_nanos();
        match r.kind {
            TraceKind::BpEnter if r.component == op5 => {
                open = Some(t);
                arrivals.clear();
            }
            TraceKind::BpExit if r.component == op5 => {
                if let Some(start) = open.take() {
                    let last = arrivals.last().map(|a| a - start);
                    out.push(Episode { start, end: t, last_sibling_arrival: last });
                }
            }
            TraceKind::Arrive if r.component == sk1 && open.is_some() => arrivals.push(t),
            _ => {}
        }
    }
    (out, control)
}

/// Worst-case time for the sibling branch to go quiet once op1 is suspended:
/// a tuple that just left op1 crosses three links and is served by op2 and op4.
pub fn sibling_drain_ns() -> u64 {
    let hop = 8192.0 / 1e8 * 1e9 + 500_000.0;
    (3.0 * hop + 400_000.0 + 500_000.0) as u64
}
