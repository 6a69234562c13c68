use rand::Rng;
use rand_distr::{Distribution, Triangular};
use serde::{Deserialize, Serialize};

use super::battery::EfficiencyParams;
use super::value::{grid_point, ValueFunction};
use crate::error::{Error, Result};

/// Triangular distribution on `[lower, upper]` peaking at `mode`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub lower: f64,
    pub mode: f64,
    pub upper: f64,
}

impl Default for Triangle {
    fn default() -> Self {
        Triangle {
            lower: 0.8,
            mode: 1.0,
            upper: 1.2,
        }
    }
}

impl Triangle {
    pub const NONE: Triangle = Triangle {
        lower: 1.0,
        mode: 1.0,
        upper: 1.0,
    };

    pub fn mean(&self) -> f64 {
        (self.lower + self.mode + self.upper) / 3.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower <= self.mode && self.mode <= self.upper && self.lower.is_finite() && self.upper.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("triangle {self:?} needs lower <= mode <= upper")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        if self.lower == self.upper {
            return Ok(self.mode);
        }
        Ok(self.distribution()?.sample(rng))
    }

    fn distribution(&self) -> Result<Triangular<f64>> {
        Triangular::new(self.lower, self.upper, self.mode)
            .map_err(|e| Error::Input(format!("noise {self:?}: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadKind {
    /// Pure load, no battery; bids its gross demand.
    Consumer,
    /// Behind-the-meter generation plus storage; bids net load and battery flow.
    Prosumer,
}

/// A population of identical agents at one bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentType {
    pub name: String,
    pub kind: LoadKind,
    pub node: usize,
    /// Battery capacity summed over the population (MWh).
    pub capacity_total: f64,
    pub agent_count: usize,
    /// Expected net load of one agent for each hour of the day (MWh).
    pub load_profile: Vec<f64>,
    /// Agent-level multiplicative load factor.
    pub noise: Triangle,
    pub efficiency: EfficiencyParams,
}

impl AgentType {
    pub fn per_agent_capacity(&self) -> f64 {
        if self.agent_count == 0 {
            0.0
        } else {
            self.capacity_total / self.agent_count as f64
        }
    }

    pub fn has_battery(&self) -> bool {
        self.capacity_total > 0.0 && self.agent_count > 0
    }

    /// Mean of the expected load over the day; the unit in which supply
    /// shocks are expressed.
    pub fn typical_load(&self) -> f64 {
        if self.load_profile.is_empty() {
            0.0
        } else {
            self.load_profile.iter().sum::<f64>() / self.load_profile.len() as f64
        }
    }

    pub fn validate(&self, n_buses: usize) -> Result<()> {
        if self.node >= n_buses {
            return Err(Error::Config(format!(
                "type {}: bus {} does not exist",
                self.name,
                self.node + 1
            )));
        }
        if !(self.capacity_total >= 0.0) || self.load_profile.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!(
                "type {}: capacity and load profile must be finite and nonnegative capacity",
                self.name
            )));
        }
        self.noise.validate()?;
        self.efficiency.validate()
    }
}

/// Range for fresh beliefs, uniform per entry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefInit {
    pub low: f64,
    pub high: f64,
}

impl BeliefInit {
    /// `[0.5·p, 1.5·p]` around a reference price.
    pub fn around(price: f64) -> Self {
        BeliefInit {
            low: 0.5 * price,
            high: 1.5 * price,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, hours: usize) -> Vec<f64> {
        (0..hours)
            .map(|_| {
                if self.high > self.low {
                    rng.random_range(self.low..self.high)
                } else {
                    self.low
                }
            })
            .collect()
    }
}

/// A solved value function and the beliefs it was solved for.
#[derive(Clone, Debug, PartialEq)]
pub struct CachedValue {
    pub beliefs: Vec<f64>,
    pub vf: ValueFunction,
}

impl CachedValue {
    /// Largest absolute difference between `beliefs` and the solved-for beliefs.
    pub fn drift(&self, beliefs: &[f64]) -> f64 {
        self.beliefs
            .iter()
            .zip(beliefs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub soc: f64,
    pub beliefs: Vec<f64>,
    pub beliefs_ds: Vec<f64>,
    pub beliefs_ss: Vec<f64>,
    pub tau_d: u64,
    pub tau_s: u64,
    /// Days since the agent entered (or re-entered) the market.
    pub days_elapsed: u64,
    pub cache: Option<CachedValue>,
    /// Value functions for signaled demand and supply shock periods.
    pub cache_ds: Option<CachedValue>,
    pub cache_ss: Option<CachedValue>,
}

impl AgentState {
    /// A fresh agent: random SoC on the grid and random beliefs.
    pub fn new<R: Rng + ?Sized>(rng: &mut R, init: &BeliefInit, hours: usize, soc_points: usize) -> Self {
        let soc = grid_point(rng.random_range(0..soc_points), soc_points);
        AgentState {
            soc,
            beliefs: init.draw(rng, hours),
            beliefs_ds: init.draw(rng, hours),
            beliefs_ss: init.draw(rng, hours),
            tau_d: 0,
            tau_s: 0,
            days_elapsed: 0,
            cache: None,
            cache_ds: None,
            cache_ss: None,
        }
    }

    /// Largest absolute belief change since the cached value function was solved,
    /// or `None` when there is no cache.
    pub fn belief_drift(&self) -> Option<f64> {
        self.cache.as_ref().map(|c| c.drift(&self.beliefs))
    }
}

/// Moves the hour-`h` belief toward the observed price with step
/// `δ/√(day_index + 1)`.
pub fn update_belief(beliefs: &mut [f64], h: usize, observed: f64, delta: f64, day_index: u64) {
    let step = delta / ((day_index + 1) as f64).sqrt();
    beliefs[h] -= step * (beliefs[h] - observed);
}

/// Shock-period variant: the shock counter plays the role of the day index
/// and advances once per observation.
pub fn update_shock_belief(beliefs: &mut [f64], h: usize, observed: f64, delta: f64, counter: &mut u64) {
    update_belief(beliefs, h, observed, delta, *counter);
    *counter += 1;
}

/// One agent's net load for an hour, in MWh. `weather` is the factor shared
/// by all agents of the type for this hour; the agent's own factor is drawn
/// from the type's triangular noise, so the draw is
/// `ω + ζ` with `ω = weather · profile[hour]` and `ζ = ω·(m − 1)`.
/// Divide by the per-agent capacity to express it as a fraction.
pub fn draw_net_load<R: Rng + ?Sized>(
    agent_type: &AgentType,
    hour: usize,
    weather: f64,
    rng: &mut R,
) -> Result<f64> {
    let omega = agent_type.load_profile[hour] * weather;
    let noise = agent_type.noise;
    if noise.lower == noise.upper {
        return Ok(omega * noise.mode / noise.mean());
    }
    // Dividing by the mean keeps E[ζ] = 0 when the triangle is skewed.
    let m = noise.sample(rng)? / noise.mean();
    Ok(omega * m)
}

/// Re-entry of an agent: new SoC and beliefs, counters and cache cleared.
pub fn regenerate<R: Rng + ?Sized>(
    state: &AgentState,
    rng: &mut R,
    init: &BeliefInit,
    soc_points: usize,
) -> AgentState {
    AgentState::new(rng, init, state.beliefs.len(), soc_points)
}
