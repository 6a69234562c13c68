use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::prosumer::{AgentType, LoadKind};
use crate::rng::{self, Purpose};

/// Hourly load shapes relative to the daily mean of gross load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadShape {
    /// Firm demand, mean 1 over the day.
    pub gross: Vec<f64>,
    /// Firm demand minus behind-the-meter generation, same scale as `gross`.
    pub net: Vec<f64>,
}

impl LoadShape {
    pub fn hours(&self) -> usize {
        self.gross.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gross.is_empty() || self.gross.len() != self.net.len() {
            return Err(Error::Input(format!(
                "load shape has {} gross and {} net values",
                self.gross.len(),
                self.net.len()
            )));
        }
        if self.gross.iter().chain(&self.net).any(|v| !v.is_finite()) {
            return Err(Error::Input("load shape values must be finite".into()));
        }
        let mean = self.gross.iter().sum::<f64>() / self.hours() as f64;
        if (mean - 1.0).abs() > 1e-6 {
            return Err(Error::Input(format!("gross load shape has mean {mean}, expected 1")));
        }
        Ok(())
    }

    pub fn net_mean(&self) -> f64 {
        self.net.iter().sum::<f64>() / self.hours() as f64
    }
}

/// Bus scaling factors, one uniform draw per bus from the scenario seed.
pub fn bus_scales(config: &ScenarioConfig, n_buses: usize) -> Vec<f64> {
    let [lo, hi] = config.bus_scale;
    (0..n_buses)
        .map(|n| {
            if hi > lo {
                rng::stream(config.seed, Purpose::BusScale, n as u64, 0, 0).random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect()
}

/// One consumer type and one prosumer type per bus, in bus order. Aggregate
/// loads are fixed in MW, so the per-agent load shrinks as the population grows.
/// Types with no agents are left out.
pub fn build_agent_types(network: &Network, shape: &LoadShape, config: &ScenarioConfig) -> Result<Vec<AgentType>> {
    shape.validate()?;
    if shape.hours() != config.hours_per_day {
        return Err(Error::Config(format!(
            "load shape has {} hours, scenario has {}",
            shape.hours(),
            config.hours_per_day
        )));
    }
    let scales = bus_scales(config, network.n_buses);
    let consumers = config.consumers_per_node();
    let prosumers = config.prosumers_per_node();
    let mut types = Vec::with_capacity(2 * network.n_buses);
    for (n, &scale) in scales.iter().enumerate() {
        if consumers > 0 {
            let per_agent = scale * config.consumer_load_mw / consumers as f64;
            types.push(AgentType {
                name: format!("bus{}-consumer", n + 1),
                kind: LoadKind::Consumer,
                node: n,
                capacity_total: 0.0,
                agent_count: consumers,
                load_profile: shape.gross.iter().map(|g| g * per_agent).collect(),
                noise: config.noise,
                efficiency: config.efficiency,
            });
        }
        if prosumers > 0 {
            let load = scale * config.prosumer_load_mw;
            let per_agent = load / prosumers as f64;
            types.push(AgentType {
                name: format!("bus{}-prosumer", n + 1),
                kind: LoadKind::Prosumer,
                node: n,
                capacity_total: config.battery_hours * load,
                agent_count: prosumers,
                load_profile: shape.net.iter().map(|q| q * per_agent).collect(),
                noise: config.noise,
                efficiency: config.efficiency,
            });
        }
    }
    for t in &types {
        t.validate(network.n_buses)?;
    }
    Ok(types)
}

/// Expected demand per bus averaged over the day (MW).
pub fn mean_demand(types: &[AgentType], n_buses: usize) -> Vec<f64> {
    let mut b = vec![0.0; n_buses];
    for t in types {
        b[t.node] += t.typical_load() * t.agent_count as f64;
    }
    b
}
