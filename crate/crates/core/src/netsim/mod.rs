//! Deterministic in-process network: latency-modelled links, the four-step
//! permitted-list handshake, block and transaction relay, and the
//! stop/restart observation script.

mod latency;
mod network;
mod scenario;

pub use latency::LatencyModel;
pub use network::{
    AbortReason, Behavior, CycleResult, HandshakeResult, NetError, Outcome, SimNetwork, SimNode,
    EPOCH_MS, HANDSHAKE_LEGS, TIMEOUT_FACTOR,
};
pub use scenario::{
    run_scenario, scenario_nodes, ConfigError, ScenarioConfig, ScenarioError, ScenarioRun, SCENARIOS,
};
