//! Per-window metrics, throughput/latency summaries and normalized features.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fluid::offered_load;
use crate::simengine::{CounterSnapshot, SimState};
use crate::time::NANOS_PER_SEC;
use crate::topology::{ComponentKind, LinkSpec, TopologySpec, DEFAULT_BANDWIDTH_BPS, DEFAULT_LINK_LATENCY};

pub const NODE_FEATURES: usize = 8;
pub const EDGE_FEATURES: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("unknown component {0:?}")]
    UnknownComponent(String),
}

/// Scales used to make features dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    /// Generation rate that maps to 1.0.
    pub max_rate: f64,
    pub capacity: f64,
    pub bandwidth_bps: f64,
    pub latency_s: f64,
}

impl Default for FeatureScale {
    fn default() -> Self {
        FeatureScale {
            max_rate: 2000.0,
            capacity: 64.0,
            bandwidth_bps: DEFAULT_BANDWIDTH_BPS,
            latency_s: DEFAULT_LINK_LATENCY.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ComponentMetrics {
    Source {
        /// Generation capacity including the current fluctuation multiplier.
        r_g: f64,
        r_c: f64,
        src_bk: f64,
        src_out: u64,
        src_max: usize,
    },
    Operator {
        op_in: u64,
        op_out: u64,
        op_max_out: usize,
        op_max_in: usize,
        op_bk: f64,
    },
    Sink {
        sk_bk: f64,
        sk_in: u64,
        sk_max_in: usize,
        /// Sum of source-to-sink latencies, seconds.
        sk_l: f64,
        sk_p: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentWindow {
    pub id: String,
    /// Offered input rate at unthrottled base generation, used to normalize
    /// counts (sources: base generation rate).
    pub reference_in: f64,
    /// Offered output rate at unthrottled base generation, summed over links.
    pub reference_out: f64,
    pub metrics: ComponentMetrics,
}

impl ComponentWindow {
    pub fn kind(&self) -> ComponentKind {
        match self.metrics {
            ComponentMetrics::Source { .. } => ComponentKind::Source,
            ComponentMetrics::Operator { .. } => ComponentKind::Operator,
            ComponentMetrics::Sink { .. } => ComponentKind::Sink,
        }
    }

    pub fn bk(&self) -> f64 {
        match self.metrics {
            ComponentMetrics::Source { src_bk, .. } => src_bk,
            ComponentMetrics::Operator { op_bk, .. } => op_bk,
            ComponentMetrics::Sink { sk_bk, .. } => sk_bk,
        }
    }
}

/// Metrics of every component over the last `k_s` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsWindow {
    pub k_s: f64,
    pub components: Vec<ComponentWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// Sink completions per second.
    pub thr: f64,
    pub mean_latency: f64,
    /// Back-pressure time summed over components, seconds.
    pub bp_time_total: f64,
}

/// Counters accumulated since the previous call, converted to a window of
/// length `k_s`.
pub fn collect_window(state: &mut SimState, k_s: f64) -> MetricsWindow {
    let (start, end) = state.take_window();
    window_between(state, &start, &end, k_s)
}

/// Builds a window from two counter snapshots of the same simulation.
pub fn window_between(
    state: &SimState,
    start: &CounterSnapshot,
    end: &CounterSnapshot,
    k_s: f64,
) -> MetricsWindow {
    let spec = state.spec();
    let refs = offered_load(spec, 1.0);
    let out_links = spec.out_links();
    let secs = |ns: u64| ns as f64 / NANOS_PER_SEC as f64;
    let components = spec
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let a = &start.components[i];
            let b = &end.components[i];
            let bk = secs(b.bp_time_ns - a.bp_time_ns).min(k_s);
            let cs = &state.components()[i];
            let metrics = match c.kind() {
                ComponentKind::Source => {
                    let src = state.sources()[i].expect("source rate state");
                    let r_g = src.base_rate * src.fluctuation_multiplier;
                    let r_c = if state.sources_stopped() { 0.0 } else { src.current_rate() };
                    ComponentMetrics::Source {
                        r_g,
                        r_c,
                        src_bk: bk,
                        src_out: b.tuples_out - a.tuples_out,
                        src_max: cs.out_capacity,
                    }
                }
                ComponentKind::Operator => ComponentMetrics::Operator {
                    op_in: b.tuples_in - a.tuples_in,
                    op_out: b.tuples_out - a.tuples_out,
                    op_max_out: cs.out_capacity,
                    op_max_in: cs.in_capacity,
                    op_bk: bk,
                },
                ComponentKind::Sink => ComponentMetrics::Sink {
                    sk_bk: bk,
                    sk_in: b.tuples_in - a.tuples_in,
                    sk_max_in: cs.in_capacity,
                    sk_l: secs(b.latency_sum_ns - a.latency_sum_ns),
                    sk_p: b.tuples_processed - a.tuples_processed,
                },
            };
            let reference_in = refs.arrival[i];
            let reference_out: f64 = out_links[i].iter().map(|&l| refs.link[l]).sum();
            ComponentWindow { id: c.id.clone(), reference_in, reference_out, metrics }
        })
        .collect();
    MetricsWindow { k_s, components }
}

/// Sink completions per second over the window.
pub fn throughput(window: &MetricsWindow) -> f64 {
    let processed: u64 = window
        .components
        .iter()
        .map(|c| match c.metrics {
            ComponentMetrics::Sink { sk_p, .. } => sk_p,
            _ => 0,
        })
        .sum();
    processed as f64 / window.k_s
}

/// Mean source-to-sink latency of the tuples completed in the window, or 0.
pub fn mean_latency(window: &MetricsWindow) -> f64 {
    let (sum, n) = window.components.iter().fold((0.0, 0u64), |(s, n), c| match c.metrics {
        ComponentMetrics::Sink { sk_l, sk_p, .. } => (s + sk_l, n + sk_p),
        _ => (s, n),
    });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn bp_time_total(window: &MetricsWindow) -> f64 {
    window.components.iter().map(ComponentWindow::bk).sum()
}

pub fn report(window: &MetricsWindow) -> ThroughputReport {
    ThroughputReport {
        thr: throughput(window),
        mean_latency: mean_latency(window),
        bp_time_total: bp_time_total(window),
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Kind one-hot followed by five normalized metrics.
pub fn node_features(
    window: &MetricsWindow,
    id: &str,
    scale: &FeatureScale,
) -> Result<[f64; NODE_FEATURES], MetricsError> {
    let c = window
        .components
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| MetricsError::UnknownComponent(id.to_string()))?;
    Ok(component_features(c, window.k_s, scale))
}

pub fn component_features(c: &ComponentWindow, k: f64, scale: &FeatureScale) -> [f64; NODE_FEATURES] {
    let mut f = [0.0; NODE_FEATURES];
    f[c.kind().index()] = 1.0;
    let metrics = match c.metrics {
        ComponentMetrics::Source { r_g, r_c, src_bk, src_out, src_max } => [
            ratio(r_g, scale.max_rate),
            ratio(r_c, r_g),
            src_bk / k,
            ratio(src_out as f64, c.reference_out * k),
            src_max as f64 / scale.capacity,
        ],
        ComponentMetrics::Operator { op_in, op_out, op_max_out, op_max_in, op_bk } => [
            ratio(op_in as f64, c.reference_in * k),
            ratio(op_out as f64, c.reference_out * k),
            op_max_out as f64 / scale.capacity,
            op_max_in as f64 / scale.capacity,
            op_bk / k,
        ],
        ComponentMetrics::Sink { sk_bk, sk_in, sk_max_in, sk_l, sk_p } => [
            sk_bk / k,
            ratio(sk_in as f64, c.reference_in * k),
            sk_max_in as f64 / scale.capacity,
            ratio(sk_l, sk_p as f64 * k),
            ratio(sk_p as f64, c.reference_in * k),
        ],
    };
    f[3..].copy_from_slice(&metrics);
    f
}

/// `[bandwidth / reference bandwidth, latency / reference latency]`.
pub fn edge_features(link: &LinkSpec, scale: &FeatureScale) -> [f64; EDGE_FEATURES] {
    [link.bandwidth_bps / scale.bandwidth_bps, link.latency.as_secs_f64() / scale.latency_s]
}

/// Edge features for every link of a topology, in link order.
pub fn all_edge_features(spec: &TopologySpec, scale: &FeatureScale) -> Vec<[f64; EDGE_FEATURES]> {
    spec.links.iter().map(|l| edge_features(l, scale)).collect()
}

/// One row of the per-window CSV export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_index: usize,
    pub thr: f64,
    pub mean_latency: f64,
    pub bp_time_total: f64,
    pub action: Option<usize>,
}

pub const WINDOW_CSV_HEADER: [&str; 5] = ["window_index", "thr", "mean_latency", "bp_time_total", "action"];

pub fn write_window_csv<W: Write>(rows: &[WindowRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WINDOW_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.window_index.to_string(),
            r.thr.to_string(),
            r.mean_latency.to_string(),
            r.bp_time_total.to_string(),
            r.action.map(|a| a.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simengine::init;
    use crate::time::SimDuration;
    use crate::topology::builtin;

    fn sink(id: &str, sk_l: f64, sk_p: u64) -> ComponentWindow {
        ComponentWindow {
            id: id.into(),
            reference_in: 100.0,
            reference_out: 0.0,
            metrics: ComponentMetrics::Sink { sk_bk: 0.0, sk_in: sk_p, sk_max_in: 64, sk_l, sk_p },
        }
    }

    #[test]
    fn throughput_formula() {
        let w = MetricsWindow { k_s: 1.0, components: vec![sink("a", 0.0, 300), sink("b", 0.0, 200)] };
        assert_eq!(throughput(&w), 500.0);
        let w = MetricsWindow { k_s: 1.0, components: vec![sink("a", 0.0, 0)] };
        assert_eq!(throughput(&w), 0.0);
        let w = MetricsWindow { k_s: 5.0, components: vec![sink("a", 0.0, 500)] };
        assert_eq!(throughput(&w), 100.0);
    }

    #[test]
    fn mean_latency_formula() {
        let w = MetricsWindow { k_s: 1.0, components: vec![sink("a", 2.0, 100)] };
        assert!((mean_latency(&w) - 0.02).abs() < 1e-15);
        let w = MetricsWindow { k_s: 1.0, components: vec![sink("a", 0.0, 0)] };
        assert_eq!(mean_latency(&w), 0.0);
    }

    #[test]
    fn idle_source_features() {
        let mut s = init(builtin("wct").unwrap(), 0).unwrap();
        s.stop_sources();
        s.advance_secs(1.0);
        let w = collect_window(&mut s, 1.0);
        let scale = FeatureScale::default();
        let f = node_features(&w, "src", &scale).unwrap();
        assert_eq!(f, [1.0, 0.0, 0.0, 1000.0 / 2000.0, 0.0, 0.0, 0.0, 1.0]);
        assert!(w.components.iter().all(|c| c.bk() == 0.0));
        assert_eq!(throughput(&w), 0.0);
        assert!(node_features(&w, "nope", &scale).is_err());
    }

    #[test]
    fn full_window_back_pressure_maps_to_one() {
        let c = ComponentWindow {
            id: "op".into(),
            reference_in: 10.0,
            reference_out: 10.0,
            metrics: ComponentMetrics::Operator { op_in: 0, op_out: 0, op_max_out: 64, op_max_in: 64, op_bk: 2.0 },
        };
        let f = component_features(&c, 2.0, &FeatureScale::default());
        assert_eq!(f[7], 1.0);
        assert_eq!(&f[..3], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn edge_feature_ratios() {
        let scale = FeatureScale::default();
        let mut l = LinkSpec::new("a", "b");
        assert_eq!(edge_features(&l, &scale), [1.0, 1.0]);
        l.bandwidth_bps = 50e6;
        l.latency = SimDuration::from_millis(1);
        assert_eq!(edge_features(&l, &scale), [0.5, 2.0]);
        l.latency = SimDuration::ZERO;
        assert_eq!(edge_features(&l, &scale), [0.5, 0.0]);
    }

    #[test]
    fn csv_layout() {
        let rows = [WindowRow { window_index: 0, thr: 10.5, mean_latency: 0.25, bp_time_total: 0.0, action: Some(9) }];
        let mut buf = Vec::new();
        write_window_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "window_index,thr,mean_latency,bp_time_total,action\n0,10.5,0.25,0,9\n"
        );
    }
}
