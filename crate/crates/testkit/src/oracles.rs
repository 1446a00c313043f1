//! Independently computed reference values: fluid throughput of stable
//! chains and the hand-replayed queue fill time of an overloaded operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streamrc_core::time::SimTime;
use streamrc_core::topology::{ComponentSpec, LinkSpec, TopologySpec, DEFAULT_TUPLE_BYTES};

pub const TX_NS: f64 = 8192.0 / 1e8 * 1e9;
pub const LINK_LATENCY_NS: f64 = 500_000.0;

/// A chain whose every component and link stays at or below 90% utilization,
/// with its fluid sink throughput (source rate times the selectivities).
pub fn stable_chain(rng: &mut ChaCha8Rng, index: usize) -> (TopologySpec, f64) {
    let n_ops = rng.random_range(1..=4);
    let rate = rng.random_range(5..=40) as f64 * 10.0;
    let mut components = vec![ComponentSpec::source("src", rate)];
    let mut flow = rate;
    let link_capacity = 1e9 / TX_NS;
    for k in 0..n_ops {
        let sel = [0.5, 1.0, 2.0, 3.0][rng.random_range(0..4)];
        // Keep the outgoing link of this operator below 90% too.
        let sel = if flow * sel > 0.9 * link_capacity { 1.0 } else { sel };
        let max_service_ms = 0.9 * 1000.0 / flow;
        let service_ms = rng.random_range(0.1..=1.0) * max_service_ms.min(2.0);
        components.push(ComponentSpec::operator(&format!("op{k}"), service_ms, sel));
        flow *= sel;
    }
    let sink_ms = (0.9 * 1000.0 / flow).min(0.05);
    components.push(ComponentSpec::sink("sk", sink_ms));
    let ids: Vec<String> = components.iter().map(|c| c.id.clone()).collect();
    let links = ids.windows(2).map(|w| LinkSpec::new(&w[0], &w[1])).collect();
    let spec = TopologySpec { name: format!("chain{index}"), components, links, tuple_bytes: DEFAULT_TUPLE_BYTES };
    (spec, flow)
}

pub fn stable_chains(n: usize, seed: u64) -> Vec<(TopologySpec, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| stable_chain(&mut rng, i)).collect()
}

/// 10/s source, 200 ms operator, fast sink.
pub fn fill_example() -> TopologySpec {
    TopologySpec {
        name: "fill".into(),
        components: vec![
            ComponentSpec::source("src", 10.0),
            ComponentSpec::operator("op", 200.0, 1.0),
            ComponentSpec::sink("sk", 0.05),
        ],
        links: vec![LinkSpec::new("src", "op"), LinkSpec::new("op", "sk")],
        tuple_bytes: DEFAULT_TUPLE_BYTES,
    }
}

/// Service time of the operator in [`fill_example`].
pub const FILL_SERVICE_S: f64 = 0.2;

/// Replays [`fill_example`] by hand and returns the time at which the
/// operator's incoming queue first holds more than 64 tuples.
pub fn closed_form_fill_time() -> SimTime {
    let arrival_delay = (TX_NS + LINK_LATENCY_NS) as u64;
    let service = (FILL_SERVICE_S * 1e9) as u64;
    let mut free_at = 0u64;
    let mut starts: Vec<u64> = Vec::new();
    for k in 1u64.. {
        let arrival = k * 100_000_000 + arrival_delay;
        // FIFO service: each job starts when both it and the operator are ready.
        let start = arrival.max(free_at);
        free_at = start + service;
        starts.push(start);
        let started = starts.iter().filter(|&&s| s <= arrival).count() as u64;
        if k - started > 64 {
            return SimTime(arrival);
        }
    }
    unreachable!()
}
