//! Scenario configuration, shocks, population profiles, and the market loop.

mod config;
mod engine;
mod population;
mod profile;
mod shocks;
#[cfg(test)]
mod loop_tests;

pub use config::{Mode, ScenarioConfig, ShockConfig, ShockWindow};
pub use engine::{
    default_belief_init, run_simulation, run_simulation_with_threads, MarketRecord, PriceSource, ProbeHour,
    ProbeTrace, RunStats, Simulation, SimulationLog,
};
pub use population::{build_agent_types, bus_scales, mean_demand, LoadShape};
pub use profile::{empirical_profile, profile_distance, PopulationProfile, ProfileDistance, ProfileSample};
pub use shocks::{apply_shock, generate_shocks, ShockEvent, ShockKind};
