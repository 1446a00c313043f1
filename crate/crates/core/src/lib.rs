//! Stream-processing rate control: a deterministic discrete-event simulator of
//! a back-pressured stream topology, its metrics, and the rate-control
//! environment built on top of it.

pub mod api;
pub mod baselines;
pub mod environment;
pub mod fluid;
pub mod metrics;
pub mod simengine;
pub mod time;
pub mod topology;
pub mod wire;

pub use environment::{compute_reward, EnvConfig, Environment, GraphObservation, RewardNormalizer, StepResult};
pub use simengine::{init, SimConfig, SimState, ACTION_FRACTIONS};
pub use topology::{builtin, parse_topology, TopologySpec};
