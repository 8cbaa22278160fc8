use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{LatencyReport, MemoryReport};

use super::latency::LatencyModel;
use super::network::{CycleResult, NetError, SimNetwork};

/// Node counts of the named scenarios: the hub plus 1, 2 or 7 peers.
pub const SCENARIOS: [(&str, usize); 3] = [("S1", 2), ("S2", 3), ("S3", 8)];

pub fn scenario_nodes(name: &str) -> Option<usize> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: String,
    /// Must match the scenario's node count when given.
    #[serde(default)]
    pub nodes: Option<usize>,
    #[serde(default = "default_link")]
    pub link: LatencyModel,
    #[serde(default = "default_observations")]
    pub observations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gap")]
    pub gap_ms: u64,
}

fn default_link() -> LatencyModel {
    LatencyModel::uniform(85.0, 160.0)
}

fn default_observations() -> usize {
    20
}

fn default_gap() -> u64 {
    60_000
}

impl ScenarioConfig {
    pub fn named(scenario: &str, seed: u64) -> Self {
        ScenarioConfig {
            scenario: scenario.to_owned(),
            nodes: None,
            link: default_link(),
            observations: default_observations(),
            seed,
            gap_ms: default_gap(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn node_count(&self) -> Result<usize, ConfigError> {
        let expected = scenario_nodes(&self.scenario)
            .ok_or_else(|| ConfigError::UnknownScenario(self.scenario.clone()))?;
        match self.nodes {
            Some(n) if n != expected => Err(ConfigError::NodeCountMismatch {
                scenario: self.scenario.clone(),
                expected,
                got: n,
            }),
            _ => Ok(expected),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.node_count()?;
        if !self.link.is_valid() {
            return Err(ConfigError::InvalidLink);
        }
        if self.observations == 0 {
            return Err(ConfigError::NoObservations);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("unknown scenario {0:?}; expected S1, S2 or S3")]
    UnknownScenario(String),
    #[error("scenario {scenario} has {expected} nodes, config says {got}")]
    NodeCountMismatch {
        scenario: String,
        expected: usize,
        got: usize,
    },
    #[error("link latency bounds are invalid")]
    InvalidLink,
    #[error("at least one observation is required")]
    NoObservations,
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub config: ScenarioConfig,
    /// One value per observation: the mean latency over every peer.
    pub samples: Vec<f64>,
    pub cycles: Vec<CycleResult>,
    pub latency: LatencyReport,
    pub memory: MemoryReport,
    pub trace: Vec<String>,
    pub converged: bool,
}

/// Hub (node 0) connects to every other node; then, per observation, it
/// publishes and mines one item, stops, waits `gap_ms`, restarts and
/// reconnects to all peers.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioRun, ScenarioError> {
    config.validate()?;
    let n = config.node_count()?;
    let mut net = SimNetwork::consortium(n, config.link, config.seed)?;
    let initial = net.node(0).node.chain().memory_report();
    let peers: Vec<usize> = (1..n).collect();
    let first = net.connect_many(0, &peers)?;
    if let Some(bad) = first.iter().find(|r| !r.is_connected()) {
        if let super::network::Outcome::Aborted { step, reason } = bad.outcome {
            return Err(NetError::Aborted {
                step,
                reason,
                result: bad.clone(),
            }
            .into());
        }
    }
    net.run_until_idle();

    let root = net.node(0).node.chain().params().root_stream_name.clone();
    let mut cycles = Vec::with_capacity(config.observations);
    for k in 0..config.observations {
        let key = format!("observation-{k}");
        net.node_mut(0)
            .node
            .publish(&root, Some(&key), key.clone().into_bytes())
            .map_err(|e| NetError::Node(e.into()))?;
        net.mine(0)?;
        net.run_until_idle();
        cycles.push(net.stop_start_cycle(0, config.gap_ms)?);
    }
    let samples: Vec<f64> = cycles.iter().map(|c| c.sample_ms).collect();
    let latency = LatencyReport::new(config.scenario.clone(), samples.clone())
        .expect("observations > 0 is validated");
    let memory = MemoryReport::between(&initial, &net.node(0).node.chain().memory_report());
    Ok(ScenarioRun {
        config: config.clone(),
        samples,
        cycles,
        latency,
        memory,
        converged: net.converged(),
        trace: net.trace().to_vec(),
    })
}
