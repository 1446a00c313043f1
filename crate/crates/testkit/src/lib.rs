//! Shared fixtures for the simulator test suites.

pub mod branch_idle;
pub mod invariants;
pub mod oracles;
pub mod reward;
