use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prosumer::{BeliefInit, EfficiencyParams, Landing, Triangle};

/// Which market the agents play in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Learning agents that also keep separate beliefs for signaled shock hours.
    #[default]
    MfShockInfo,
    /// Learning agents with one belief vector; shock signals are ignored.
    MfNoShockInfo,
    /// Grid-tied baseline: batteries unused, no beliefs, no value functions.
    NoLearning,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::MfShockInfo, Mode::MfNoShockInfo, Mode::NoLearning];

    pub fn learns(self) -> bool {
        self != Mode::NoLearning
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::MfShockInfo => "mf-shock-info",
            Mode::MfNoShockInfo => "mf-no-shock-info",
            Mode::NoLearning => "no-learning",
        }
    }

    pub fn from_name(name: &str) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Arrival process and window of one shock kind. Hours are 0-based and the
/// window is `[start_hour, end_hour)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockWindow {
    /// Poisson arrivals per day.
    pub rate: f64,
    pub start_hour: usize,
    pub end_hour: usize,
    pub magnitude: Triangle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShockConfig {
    /// Evening demand surge.
    pub demand: ShockWindow,
    /// Night-time surge of distributed generation.
    pub supply: ShockWindow,
    /// Whether demand surges also scale prosumer net load (consumers are always hit).
    pub demand_hits_prosumers: bool,
}

impl Default for ShockConfig {
    fn default() -> Self {
        ShockConfig {
            demand: ShockWindow {
                rate: 0.1,
                start_hour: 18,
                end_hour: 21,
                magnitude: Triangle {
                    lower: 0.3,
                    mode: 0.4,
                    upper: 0.5,
                },
            },
            supply: ShockWindow {
                rate: 0.1,
                start_hour: 1,
                end_hour: 4,
                magnitude: Triangle {
                    lower: 0.2,
                    mode: 0.25,
                    upper: 0.3,
                },
            },
            demand_hits_prosumers: true,
        }
    }
}

impl ShockConfig {
    pub fn none() -> Self {
        let mut c = ShockConfig::default();
        c.demand.rate = 0.0;
        c.supply.rate = 0.0;
        c
    }
}

/// Everything that defines a run apart from the network and load shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub days: usize,
    pub hours_per_day: usize,
    pub seed: u64,
    pub agents_per_node: usize,
    /// Fraction of each bus's agents that own solar and storage.
    pub prosumer_share: f64,
    /// Mean gross load of all consumers at a bus before bus scaling (MW).
    pub consumer_load_mw: f64,
    /// Mean gross load of all prosumers at a bus before bus scaling (MW).
    pub prosumer_load_mw: f64,
    /// Prosumer storage at a bus, in hours of that bus's mean prosumer gross load.
    pub battery_hours: f64,
    pub bus_scale: [f64; 2],
    /// Band of the type-level multiplicative weather factor.
    pub weather: [f64; 2],
    pub noise: Triangle,
    pub efficiency: EfficiencyParams,
    pub shocks: ShockConfig,
    /// Per agent-hour re-entry probability.
    pub regen_prob: f64,
    /// Learning rate of the belief update.
    pub delta: f64,
    /// Per-hour discount factor.
    pub discount: f64,
    pub soc_points: usize,
    pub action_points: usize,
    pub landing: Landing,
    pub vf_tol: f64,
    /// Largest belief change ($/MWh) tolerated before a cached value
    /// function is re-solved at the start of a day.
    pub vf_refresh_drift: f64,
    /// Initial belief range; `None` means ±50% around the mean generator intercept.
    pub belief_init: Option<BeliefInit>,
    pub profile_soc_bins: usize,
    pub profile_action_bins: usize,
    /// Index, within each prosumer type, of the agent whose trajectory is logged.
    pub probe_agent: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "ieee14_baseline".into(),
            mode: Mode::MfShockInfo,
            days: 100,
            hours_per_day: 24,
            seed: 1,
            agents_per_node: 3000,
            prosumer_share: 0.5,
            consumer_load_mw: 150.0,
            prosumer_load_mw: 150.0,
            battery_hours: 2.0,
            bus_scale: [0.9, 1.1],
            weather: [0.95, 1.05],
            noise: Triangle::default(),
            efficiency: EfficiencyParams::default(),
            shocks: ShockConfig::default(),
            regen_prob: 1e-4,
            delta: 0.5,
            discount: 0.999,
            soc_points: 100,
            action_points: 201,
            landing: Landing::Interpolate,
            vf_tol: 1e-6,
            vf_refresh_drift: 0.5,
            belief_init: None,
            profile_soc_bins: 10,
            profile_action_bins: 10,
            probe_agent: 0,
        }
    }
}

fn check(ok: bool, rule: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("violated rule: {rule}")))
    }
}

fn check_window(w: &ShockWindow, hours: usize, kind: &str) -> Result<()> {
    check(w.rate >= 0.0 && w.rate.is_finite(), &format!("{kind} shock rate >= 0"))?;
    check(
        w.start_hour < w.end_hour && w.end_hour <= hours,
        &format!("{kind} shock window inside the day and non-empty"),
    )?;
    w.magnitude.validate()?;
    check(w.magnitude.lower >= 0.0, &format!("{kind} shock magnitude >= 0"))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.days >= 1, "days >= 1")?;
        check(self.hours_per_day >= 1, "hours_per_day >= 1")?;
        check(self.agents_per_node >= 1, "agents_per_node >= 1")?;
        check((0.0..=1.0).contains(&self.prosumer_share), "prosumer_share in [0, 1]")?;
        check(
            self.consumer_load_mw >= 0.0 && self.prosumer_load_mw >= 0.0,
            "bus loads >= 0",
        )?;
        check(self.battery_hours >= 0.0, "battery_hours >= 0")?;
        check(
            0.0 < self.bus_scale[0] && self.bus_scale[0] <= self.bus_scale[1],
            "0 < bus_scale low <= high",
        )?;
        check(
            0.0 < self.weather[0] && self.weather[0] <= self.weather[1],
            "0 < weather low <= high",
        )?;
        self.noise.validate()?;
        check(self.noise.mean() > 0.0, "noise mean > 0")?;
        self.efficiency.validate().map_err(|e| Error::Config(e.to_string()))?;
        check_window(&self.shocks.demand, self.hours_per_day, "demand")?;
        check_window(&self.shocks.supply, self.hours_per_day, "supply")?;
        check((0.0..=1.0).contains(&self.regen_prob), "regen_prob in [0, 1]")?;
        check(self.delta > 0.0 && self.delta <= 1.0, "delta in (0, 1]")?;
        check(self.discount > 0.0 && self.discount < 1.0, "discount in (0, 1)")?;
        check(self.soc_points >= 2 && self.action_points >= 2, "grid sizes >= 2")?;
        check(self.vf_tol > 0.0, "vf_tol > 0")?;
        check(self.vf_refresh_drift >= 0.0, "vf_refresh_drift >= 0")?;
        if let Some(b) = self.belief_init {
            check(b.low <= b.high && b.low.is_finite() && b.high.is_finite(), "belief_init low <= high")?;
        }
        check(
            self.profile_soc_bins >= 1 && self.profile_action_bins >= 1,
            "profile bins >= 1",
        )
    }

    pub fn prosumers_per_node(&self) -> usize {
        (self.agents_per_node as f64 * self.prosumer_share).round() as usize
    }

    pub fn consumers_per_node(&self) -> usize {
        self.agents_per_node - self.prosumers_per_node()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn zero_days_rejected() {
        let c = ScenarioConfig {
            days: 0,
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("days >= 1"), "{msg}");
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::from_name(m.name()), Some(m));
        }
    }

    #[test]
    fn split_of_agents() {
        let c = ScenarioConfig {
            agents_per_node: 201,
            prosumer_share: 0.5,
            ..Default::default()
        };
        assert_eq!(c.prosumers_per_node() + c.consumers_per_node(), 201);
    }
}
