//! Deterministic rate-based approximation of a topology.
//!
//! Every source emits at `rate × scale`; operators multiply their input rate by
//! their selectivity and copy it onto each outgoing link. No capacity limits
//! are applied, so the result is the offered load at every component.

use crate::topology::{Profile, TopologySpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FluidRates {
    /// Tuples per second arriving at each component (sources: emission rate).
    pub arrival: Vec<f64>,
    /// Tuples per second carried by each link.
    pub link: Vec<f64>,
}

/// Offered load with every source scaled by `scale`.
pub fn offered_load(spec: &TopologySpec, scale: f64) -> FluidRates {
    let order = spec.topological_order().unwrap_or_default();
    let n = spec.components.len();
    let mut arrival = vec![0.0; n];
    let mut link = vec![0.0; spec.links.len()];
    let out_links = spec.out_links();
    for id in &order {
        let Some(i) = spec.index_of(id) else { continue };
        let emitted = match spec.components[i].profile {
            Profile::Source { rate } => {
                arrival[i] = rate * scale;
                arrival[i]
            }
            Profile::Operator { selectivity, .. } => arrival[i] * selectivity,
            Profile::Sink { .. } => 0.0,
        };
        for &li in &out_links[i] {
            link[li] = emitted;
            if let Some(d) = spec.index_of(&spec.links[li].to) {
                arrival[d] += emitted;
            }
        }
    }
    FluidRates { arrival, link }
}

impl FluidRates {
    /// Service utilization per component (sources report 0).
    pub fn utilization(&self, spec: &TopologySpec) -> Vec<f64> {
        spec.components
            .iter()
            .zip(&self.arrival)
            .map(|(c, &a)| c.service_time().map(|s| a * s.as_secs_f64()).unwrap_or(0.0))
            .collect()
    }

    /// Link utilization: offered tuple rate times per-tuple transmission time.
    pub fn link_utilization(&self, spec: &TopologySpec) -> Vec<f64> {
        let bits = spec.tuple_bits() as f64;
        spec.links.iter().zip(&self.link).map(|(l, &r)| r * bits / l.bandwidth_bps).collect()
    }

    /// Total tuples per second reaching sinks.
    pub fn sink_throughput(&self, spec: &TopologySpec) -> f64 {
        spec.components
            .iter()
            .zip(&self.arrival)
            .filter(|(c, _)| matches!(c.profile, Profile::Sink { .. }))
            .map(|(_, &a)| a)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::builtin;

    #[test]
    fn default_profiles_cross_saturation_between_adjacent_actions() {
        // (topology, best fraction): utilization of the bottleneck is below 1
        // at the best fraction and above 1 one action higher.
        for (name, best) in [("wct", 0.8), ("lspt", 0.9), ("rgt", 0.7)] {
            let spec = builtin(name).unwrap();
            let max_at = |f: f64| {
                offered_load(&spec, f).utilization(&spec).into_iter().fold(0.0f64, f64::max)
            };
            assert!(max_at(best) < 1.0, "{name} {}", max_at(best));
            assert!(max_at(best + 0.1) > 1.0, "{name} {}", max_at(best + 0.1));
        }
    }

    #[test]
    fn wct_rates() {
        let spec = builtin("wct").unwrap();
        let f = offered_load(&spec, 0.8);
        assert!((f.sink_throughput(&spec) - 6400.0).abs() < 1e-9);
        let u = offered_load(&spec, 1.0).utilization(&spec);
        assert!((u[2] - 1.2).abs() < 1e-9);
    }
}
