//! Rate control as a Markov decision process over the simulator.
//!
//! Each step applies a throttle action, simulates one metrics window and
//! returns a graph observation of that window together with the min-max
//! normalized throughput as reward.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    all_edge_features, collect_window, component_features, report, FeatureScale, MetricsWindow,
    ThroughputReport, EDGE_FEATURES, NODE_FEATURES,
};
use crate::simengine::{SimConfig, SimError, SimState, ACTION_FRACTIONS};
use crate::time::SimDuration;
use crate::topology::{ComponentKind, TopologySpec};

pub const N_ACTIONS: usize = ACTION_FRACTIONS.len();

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("action {0} out of range 0..=9")]
    BadAction(i64),
    #[error("environment has not been reset")]
    NotReset,
    #[error("episode is done; reset first")]
    EpisodeDone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Metrics window length in seconds.
    pub k_s: f64,
    pub episode_length: u64,
    /// Steps between rate-fluctuation draws.
    pub fluctuation_period: u64,
    pub fluctuation_range: (f64, f64),
    pub seed: u64,
    #[serde(skip)]
    pub scale: FeatureScale,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            k_s: 1.0,
            episode_length: 512,
            fluctuation_period: 100,
            fluctuation_range: (0.7, 1.3),
            seed: 0,
            scale: FeatureScale::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.k_s.is_finite() && self.k_s > 0.0) {
            return Err(EnvError::Config(format!("k_s must be positive, got {}", self.k_s)));
        }
        if self.episode_length < 1 {
            return Err(EnvError::Config("episode_length must be at least 1".into()));
        }
        if self.fluctuation_period < 1 {
            return Err(EnvError::Config("fluctuation_period must be at least 1".into()));
        }
        let (lo, hi) = self.fluctuation_range;
        if !(lo > 0.0 && lo <= 1.0 && hi >= 1.0 && hi.is_finite()) {
            return Err(EnvError::Config(format!(
                "fluctuation_range must contain 1.0, got [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Graph view of one metrics window, nodes in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphObservation {
    pub node_ids: Vec<String>,
    pub node_kinds: Vec<ComponentKind>,
    pub node_features: Vec<[f64; NODE_FEATURES]>,
    pub edges: Vec<(usize, usize)>,
    pub edge_features: Vec<[f64; EDGE_FEATURES]>,
}

/// Running throughput extrema used for min-max normalization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardNormalizer {
    extrema: Option<(f64, f64)>,
}

impl RewardNormalizer {
    pub fn thr_min(&self) -> Option<f64> {
        self.extrema.map(|e| e.0)
    }

    pub fn thr_max(&self) -> Option<f64> {
        self.extrema.map(|e| e.1)
    }

    /// Normalizes against the current extrema without widening them.
    pub fn normalize(&self, thr: f64) -> f64 {
        match self.extrema {
            Some((lo, hi)) if hi > lo => ((thr - lo) / (hi - lo)).clamp(0.0, 1.0),
            _ => 0.5,
        }
    }
}

/// Widens the extrema with `thr`, then returns its normalized value.
/// Returns 0.5 while the extrema coincide.
pub fn compute_reward(thr: f64, norm: &mut RewardNormalizer) -> f64 {
    norm.extrema = Some(match norm.extrema {
        None => (thr, thr),
        Some((lo, hi)) => (lo.min(thr), hi.max(thr)),
    });
    norm.normalize(thr)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: GraphObservation,
    pub reward: f64,
    pub done: bool,
    pub info: ThroughputReport,
}

/// Observation built from one window: features per component in topological
/// order and one edge per link.
pub fn observe(spec: &TopologySpec, window: &MetricsWindow, scale: &FeatureScale) -> GraphObservation {
    let order = spec.topological_order().expect("validated topology");
    let pos = |id: &str| order.iter().position(|o| o == id).expect("known id");
    let mut node_kinds = Vec::with_capacity(order.len());
    let mut node_features = Vec::with_capacity(order.len());
    for id in &order {
        let c = window.components.iter().find(|c| &c.id == id).expect("window covers topology");
        node_kinds.push(c.kind());
        node_features.push(component_features(c, window.k_s, scale));
    }
    let edges = spec.links.iter().map(|l| (pos(&l.from), pos(&l.to))).collect();
    GraphObservation {
        node_ids: order.clone(),
        node_kinds,
        node_features,
        edges,
        edge_features: all_edge_features(spec, scale),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic seed for episode `episode` of a run seeded with `base`.
pub fn derive_seed(base: u64, episode: u64) -> u64 {
    splitmix64(base ^ splitmix64(episode))
}

/// One rate-control environment over one topology.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: Arc<TopologySpec>,
    config: EnvConfig,
    sim_config: SimConfig,
    normalizer: RewardNormalizer,
    state: Option<SimState>,
    steps: u64,
    episodes: u64,
    done: bool,
}

impl Environment {
    pub fn new(spec: Arc<TopologySpec>, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let violations = crate::topology::validate(&spec);
        if !violations.is_empty() {
            return Err(SimError::Topology(crate::topology::TopologyError::Invalid(violations)).into());
        }
        let sim_config =
            SimConfig { fluctuation_range: config.fluctuation_range, ..SimConfig::default() };
        Ok(Environment {
            spec,
            config,
            sim_config,
            normalizer: RewardNormalizer::default(),
            state: None,
            steps: 0,
            episodes: 0,
            done: false,
        })
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &RewardNormalizer {
        &self.normalizer
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.spec.components.len()
    }

    pub fn n_edges(&self) -> usize {
        self.spec.links.len()
    }

    /// Starts a new episode. A given seed rebases the episode sequence; the
    /// reward normalizer is kept. Returns the observation of one warm-up
    /// window at full rate.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<(GraphObservation, ThroughputReport), EnvError> {
        if let Some(seed) = seed {
            self.config.seed = seed;
            self.episodes = 0;
        }
        let episode_seed = derive_seed(self.config.seed, self.episodes);
        self.episodes += 1;
        let mut state = SimState::new(self.spec.clone(), episode_seed, self.sim_config.clone())?;
        state.advance(self.window());
        let window = collect_window(&mut state, self.config.k_s);
        self.state = Some(state);
        self.steps = 0;
        self.done = false;
        Ok((observe(&self.spec, &window, &self.config.scale), report(&window)))
    }

    pub fn step(&mut self, action: i64) -> Result<StepResult, EnvError> {
        if !(0..N_ACTIONS as i64).contains(&action) {
            return Err(EnvError::BadAction(action));
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let window = self.window();
        let state = self.state.as_mut().ok_or(EnvError::NotReset)?;
        state.set_throttle(ACTION_FRACTIONS[action as usize])?;
        if self.steps > 0 && self.steps % self.config.fluctuation_period == 0 {
            state.schedule_fluctuation();
        }
        state.advance(window);
        let metrics = collect_window(state, self.config.k_s);
        let info = report(&metrics);
        let reward = compute_reward(info.thr, &mut self.normalizer);
        self.steps += 1;
        self.done = self.steps >= self.config.episode_length;
        Ok(StepResult {
            observation: observe(&self.spec, &metrics, &self.config.scale),
            reward,
            done: self.done,
            info,
        })
    }

    fn window(&self) -> SimDuration {
        SimDuration::from_secs_f64(self.config.k_s)
    }
}
