//! The hourly market loop.
//!
//! Each hour runs in a fixed order: agents choose actions and build bids,
//! bids are summed per bus in agent order, dispatch clears, every agent sees
//! its bus LMP, then beliefs, SoC and regeneration are updated. Choosing and
//! updating run in parallel over agents; every random draw comes from a
//! stream keyed by its coordinates, so results do not depend on the
//! schedule or the number of workers.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Mode, ScenarioConfig};
use super::profile::{PopulationProfile, ProfileSample};
use super::shocks::{apply_shock, generate_shocks, ShockEvent, ShockKind};
use crate::dispatch::{solve_ed, DemandVector, DispatchResult};
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::prosumer::{
    draw_net_load, make_bid, optimal_action, regenerate, soc_transition, update_belief, update_shock_belief,
    AgentState, AgentType, BeliefInit, BellmanKernel, CachedValue, LoadKind, ValueSolver,
};
use crate::rng::{self, Purpose};

/// Where the hour's settlement price came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceSource {
    Cleared,
    /// Dispatch failed; the previous hour's prices are reused.
    CarriedForward,
    /// Dispatch failed in the first hour; nobody settles or learns.
    Missing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketRecord {
    pub day: usize,
    pub hour: usize,
    /// Aggregate bid per bus. Periods are one hour, so MWh and MW coincide.
    pub demand: Vec<f64>,
    pub dispatch: Option<DispatchResult>,
    /// Per-bus price used for settlement and learning.
    pub lmp: Vec<f64>,
    pub price_source: PriceSource,
    pub demand_shock: bool,
    pub supply_shock: bool,
    /// Why dispatch did not clear, when it did not.
    pub breach: Option<String>,
}

/// One hour of a logged agent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeHour {
    /// SoC before the action.
    pub soc: f64,
    pub action: f64,
    /// Net load after shocks (MWh).
    pub load: f64,
    pub bid: f64,
    /// Regular belief for this hour, before the update.
    pub belief: f64,
    /// Belief that entered the decision (a shock belief during signaled hours).
    pub belief_used: f64,
    pub price: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub type_index: usize,
    pub agent: usize,
    pub node: usize,
    /// Battery capacity of the agent (MWh).
    pub capacity: f64,
    pub hours: Vec<ProbeHour>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub value_solves: u64,
    pub regenerations: u64,
    pub failed_hours: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationLog {
    pub config: ScenarioConfig,
    pub types: Vec<AgentType>,
    pub n_buses: usize,
    pub shocks: Vec<ShockEvent>,
    pub market: Vec<MarketRecord>,
    /// Type index of every agent, in agent order.
    pub agent_types: Vec<usize>,
    /// `daily_costs[agent][day]`: Σ LMP·bid over the day ($).
    pub daily_costs: Vec<Vec<f64>>,
    /// One profile per simulated day.
    pub profiles: Vec<PopulationProfile>,
    pub probes: Vec<ProbeTrace>,
    pub stats: RunStats,
}

impl SimulationLog {
    pub fn days_completed(&self) -> usize {
        self.market.len() / self.config.hours_per_day
    }

    /// Hourly settlement prices at one bus.
    pub fn lmp_series(&self, node: usize) -> Vec<f64> {
        self.market.iter().map(|r| r.lmp[node]).collect()
    }

    /// Days that had at least one shock.
    pub fn shock_days(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.shocks.iter().map(|s| s.day).collect();
        d.dedup();
        d
    }
}

struct Agent {
    type_index: usize,
    index: usize,
    state: AgentState,
    cost_today: f64,
    costs: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Decision {
    soc: f64,
    action: f64,
    load: f64,
    bid: f64,
    belief: f64,
    belief_used: f64,
    solved: bool,
}

/// Read-only inputs shared by all agents during one hour.
struct HourContext<'a> {
    types: &'a [AgentType],
    solvers: &'a [Option<ValueSolver>],
    config: &'a ScenarioConfig,
    weather: &'a [f64],
    shocks: &'a [ShockEvent],
    hour: usize,
    t: u64,
    demand_flag: bool,
    supply_flag: bool,
    /// A shock of this kind is signaled for the next hour.
    demand_ahead: bool,
    supply_ahead: bool,
}

impl HourContext<'_> {
    fn decide(&self, agent: &mut Agent) -> Result<Decision> {
        let ty = &self.types[agent.type_index];
        let cfg = self.config;
        let mut rng = rng::stream(cfg.seed, Purpose::AgentHour, agent.type_index as u64, agent.index as u64, self.t);
        let mut load = draw_net_load(ty, self.hour, self.weather[agent.type_index], &mut rng)?;
        for ev in self.shocks {
            let hit = match (ev.kind, ty.kind) {
                (ShockKind::Demand, LoadKind::Consumer) => true,
                (ShockKind::Demand, LoadKind::Prosumer) => cfg.shocks.demand_hits_prosumers,
                (ShockKind::Supply, LoadKind::Prosumer) => true,
                (ShockKind::Supply, LoadKind::Consumer) => false,
            };
            if hit {
                load = apply_shock(load, ev, ty.typical_load());
            }
        }

        let state = &mut agent.state;
        let belief = state.beliefs[self.hour];
        let mut d = Decision {
            soc: state.soc,
            action: 0.0,
            load,
            bid: load,
            belief,
            belief_used: belief,
            solved: false,
        };
        let Some(solver) = self.solvers[agent.type_index].as_ref() else {
            return Ok(d);
        };

        let stale = match state.belief_drift() {
            None => true,
            Some(drift) => self.hour == 0 && drift > cfg.vf_refresh_drift,
        };
        if stale {
            let vf = solver.solve(&state.beliefs, state.cache.as_ref().map(|c| &c.vf))?;
            state.cache = Some(CachedValue {
                beliefs: state.beliefs.clone(),
                vf,
            });
            d.solved = true;
        }
        let mut vf = &state.cache.as_ref().expect("value function cached above").vf;
        // From the signal hour through the shock, decisions use the
        // shock-period value function: shock beliefs inside the shock
        // window, regular beliefs outside it.
        let demand = self.demand_flag || self.demand_ahead;
        let supply = self.supply_flag || self.supply_ahead;
        if cfg.mode == Mode::MfShockInfo && (demand || supply) {
            let (window, shock, slot, during) = if demand {
                let w = &cfg.shocks.demand;
                (w.start_hour..w.end_hour, &state.beliefs_ds, &mut state.cache_ds, self.demand_flag)
            } else {
                let w = &cfg.shocks.supply;
                (w.start_hour..w.end_hour, &state.beliefs_ss, &mut state.cache_ss, self.supply_flag)
            };
            if during {
                d.belief_used = shock[self.hour];
            }
            // Refreshed when the signal arrives, like the regular function at midnight.
            let opening = !during || self.hour == window.start;
            let mut beliefs = state.beliefs.clone();
            beliefs[window.clone()].copy_from_slice(&shock[window]);
            let refresh = slot
                .as_ref()
                .is_none_or(|c| opening && c.drift(&beliefs) > cfg.vf_refresh_drift);
            if refresh {
                let warm = slot.as_ref().map(|c| &c.vf).or(Some(vf));
                let solved = solver.solve(&beliefs, warm)?;
                *slot = Some(CachedValue { beliefs, vf: solved });
                d.solved = true;
            }
            vf = &slot.as_ref().expect("shock value function cached above").vf;
        }
        let cap = ty.per_agent_capacity();
        d.action = optimal_action(vf, state.soc, self.hour, d.belief_used);
        d.bid = make_bid(state.soc, d.action, load / cap, cap, &ty.efficiency);
        Ok(d)
    }

    fn settle(&self, agent: &mut Agent, d: &Decision, lmp: Option<&[f64]>, init: &BeliefInit) -> bool {
        let ty = &self.types[agent.type_index];
        let cfg = self.config;
        let learns = cfg.mode.learns();
        if let Some(prices) = lmp {
            let p = prices[ty.node];
            agent.cost_today += p * d.bid;
            if learns {
                let s = &mut agent.state;
                let h = self.hour;
                if cfg.mode == Mode::MfShockInfo && self.demand_flag {
                    update_shock_belief(&mut s.beliefs_ds, h, p, cfg.delta, &mut s.tau_d);
                } else if cfg.mode == Mode::MfShockInfo && self.supply_flag {
                    update_shock_belief(&mut s.beliefs_ss, h, p, cfg.delta, &mut s.tau_s);
                } else {
                    update_belief(&mut s.beliefs, h, p, cfg.delta, s.days_elapsed);
                }
            }
        }
        if ty.has_battery() && learns {
            agent.state.soc = soc_transition(agent.state.soc, d.action);
        }
        if learns && cfg.regen_prob > 0.0 {
            let mut rng = rng::stream(
                cfg.seed,
                Purpose::Regeneration,
                agent.type_index as u64,
                agent.index as u64,
                self.t,
            );
            if rng.random_bool(cfg.regen_prob) {
                agent.state = regenerate(&agent.state, &mut rng, init, cfg.soc_points);
                if !ty.has_battery() {
                    agent.state.soc = 0.0;
                }
                return true;
            }
        }
        false
    }
}

/// A simulation in progress. `step_hour` advances the clock by one hour.
pub struct Simulation<'a> {
    network: &'a Network,
    config: ScenarioConfig,
    types: Vec<AgentType>,
    solvers: Vec<Option<ValueSolver>>,
    agents: Vec<Agent>,
    shocks: Vec<ShockEvent>,
    belief_init: BeliefInit,
    last_lmp: Option<Vec<f64>>,
    pool: rayon::ThreadPool,
    day: usize,
    hour: usize,
    market: Vec<MarketRecord>,
    profiles: Vec<PopulationProfile>,
    probes: Vec<ProbeTrace>,
    probe_agents: Vec<usize>,
    stats: RunStats,
}

/// Initial-belief range: ±50% around the mean generator intercept.
pub fn default_belief_init(network: &Network) -> BeliefInit {
    BeliefInit::around(network.mean_beta())
}

impl<'a> Simulation<'a> {
    /// `threads = 0` uses all available cores.
    pub fn new(network: &'a Network, types: Vec<AgentType>, config: ScenarioConfig, threads: usize) -> Result<Self> {
        config.validate()?;
        let hours = config.hours_per_day;
        for t in &types {
            t.validate(network.n_buses)?;
            if t.load_profile.len() != hours {
                return Err(Error::Config(format!(
                    "type {} has {} hourly loads, scenario has {hours} hours",
                    t.name,
                    t.load_profile.len()
                )));
            }
        }
        let belief_init = match config.belief_init {
            Some(b) => b,
            None => default_belief_init(network),
        };
        let solvers = types
            .iter()
            .map(|t| -> Result<Option<ValueSolver>> {
                if !(t.has_battery() && config.mode.learns()) {
                    return Ok(None);
                }
                let kernel =
                    BellmanKernel::with_landing(config.soc_points, config.action_points, t.efficiency, config.landing)?;
                let mut solver = ValueSolver::new(kernel, config.discount, config.vf_tol)?;
                solver.verify = false;
                Ok(Some(solver))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut agents = Vec::new();
        let mut probes = Vec::new();
        let mut probe_agents = Vec::new();
        for (ti, t) in types.iter().enumerate() {
            if t.has_battery() && config.probe_agent < t.agent_count {
                probe_agents.push(agents.len() + config.probe_agent);
                probes.push(ProbeTrace {
                    type_index: ti,
                    agent: config.probe_agent,
                    node: t.node,
                    capacity: t.per_agent_capacity(),
                    hours: Vec::new(),
                });
            }
            for i in 0..t.agent_count {
                let mut rng = rng::stream(config.seed, Purpose::AgentInit, ti as u64, i as u64, 0);
                let mut state = AgentState::new(&mut rng, &belief_init, hours, config.soc_points);
                if !t.has_battery() {
                    state.soc = 0.0;
                }
                agents.push(Agent {
                    type_index: ti,
                    index: i,
                    state,
                    cost_today: 0.0,
                    costs: Vec::with_capacity(config.days),
                });
            }
        }
        let shocks = generate_shocks(&config.shocks, config.days, config.seed)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        Ok(Simulation {
            network,
            config,
            types,
            solvers,
            agents,
            shocks,
            belief_init,
            last_lmp: None,
            pool,
            day: 0,
            hour: 0,
            market: Vec::new(),
            profiles: Vec::new(),
            probes,
            probe_agents,
            stats: RunStats::default(),
        })
    }

    pub fn shocks(&self) -> &[ShockEvent] {
        &self.shocks
    }

    pub fn belief_init(&self) -> BeliefInit {
        self.belief_init
    }

    pub fn done(&self) -> bool {
        self.day >= self.config.days
    }

    /// Runs one market hour and returns its record.
    pub fn step_hour(&mut self) -> Result<&MarketRecord> {
        if self.done() {
            return Err(Error::Usage("simulation horizon already completed".into()));
        }
        let cfg = &self.config;
        let (day, hour) = (self.day, self.hour);
        let hours = cfg.hours_per_day;
        let t = (day * hours + hour) as u64;
        let active: Vec<ShockEvent> = self.shocks.iter().filter(|e| e.covers(day, hour)).copied().collect();
        let (next_day, next_hour) = if hour + 1 == hours { (day + 1, 0) } else { (day, hour + 1) };
        let signaled = |kind: ShockKind| {
            self.shocks
                .iter()
                .any(|e| e.kind == kind && e.covers(next_day, next_hour))
        };
        let [wlo, whi] = cfg.weather;
        let weather: Vec<f64> = (0..self.types.len())
            .map(|ti| {
                if whi > wlo {
                    rng::stream(cfg.seed, Purpose::Weather, ti as u64, t, 0).random_range(wlo..whi)
                } else {
                    wlo
                }
            })
            .collect();
        let ctx = HourContext {
            types: &self.types,
            solvers: &self.solvers,
            config: cfg,
            weather: &weather,
            shocks: &active,
            hour,
            t,
            demand_flag: active.iter().any(|e| e.kind == ShockKind::Demand),
            supply_flag: active.iter().any(|e| e.kind == ShockKind::Supply),
            demand_ahead: signaled(ShockKind::Demand),
            supply_ahead: signaled(ShockKind::Supply),
        };

        // (1)-(2) actions and bids
        let agents = &mut self.agents;
        let decisions: Vec<Decision> = self
            .pool
            .install(|| agents.par_iter_mut().map(|a| ctx.decide(a)).collect::<Result<Vec<_>>>())?;

        if hour == 0 {
            self.profiles.push(PopulationProfile::new(
                self.types.len(),
                hours,
                cfg.profile_soc_bins,
                cfg.profile_action_bins,
            ));
        }
        let profile = self.profiles.last_mut().expect("profile opened at hour 0");
        // (3) aggregation in agent order
        let mut demand = vec![0.0; self.network.n_buses];
        for (a, d) in self.agents.iter().zip(&decisions) {
            demand[self.types[a.type_index].node] += d.bid;
            profile.record(&ProfileSample {
                type_index: a.type_index,
                hour,
                soc: d.soc,
                action: d.action,
            });
            self.stats.value_solves += d.solved as u64;
        }

        // (4)-(5) dispatch and prices
        let cleared = DemandVector::new(demand.clone()).and_then(|b| solve_ed(self.network, &b));
        let (dispatch, lmp, price_source, breach) = match cleared {
            Ok(r) => {
                let lmp = r.lmp.clone();
                (Some(r), lmp, PriceSource::Cleared, None)
            }
            Err(e @ (Error::Infeasible(_) | Error::Input(_))) => {
                self.stats.failed_hours += 1;
                log::warn!("day {day} hour {hour}: {e}");
                match &self.last_lmp {
                    Some(p) => (None, p.clone(), PriceSource::CarriedForward, Some(e.to_string())),
                    None => (
                        None,
                        vec![0.0; self.network.n_buses],
                        PriceSource::Missing,
                        Some(e.to_string()),
                    ),
                }
            }
            Err(e) => return Err(e),
        };
        if price_source == PriceSource::Cleared {
            self.last_lmp = Some(lmp.clone());
        }

        for (probe, &ai) in self.probes.iter_mut().zip(&self.probe_agents) {
            let d = &decisions[ai];
            probe.hours.push(ProbeHour {
                soc: d.soc,
                action: d.action,
                load: d.load,
                bid: d.bid,
                belief: d.belief,
                belief_used: d.belief_used,
                price: lmp[probe.node],
            });
        }

        // (6)-(8) learning, SoC, regeneration
        let prices = (price_source != PriceSource::Missing).then_some(&lmp[..]);
        let init = self.belief_init;
        let agents = &mut self.agents;
        let regenerated: u64 = self.pool.install(|| {
            agents
                .par_iter_mut()
                .zip(decisions.par_iter())
                .map(|(a, d)| ctx.settle(a, d, prices, &init) as u64)
                .sum()
        });
        self.stats.regenerations += regenerated;

        if hour + 1 == hours {
            let learns = cfg.mode.learns();
            for a in &mut self.agents {
                a.costs.push(a.cost_today);
                a.cost_today = 0.0;
                if learns {
                    a.state.days_elapsed += 1;
                }
            }
        }

        let demand_flag = ctx.demand_flag;
        let supply_flag = ctx.supply_flag;
        self.market.push(MarketRecord {
            day,
            hour,
            demand,
            dispatch,
            lmp,
            price_source,
            demand_shock: demand_flag,
            supply_shock: supply_flag,
            breach,
        });
        self.hour += 1;
        if self.hour == hours {
            self.hour = 0;
            self.day += 1;
        }
        Ok(self.market.last().expect("record just pushed"))
    }

    /// Consumes the simulation. A partially simulated final day is dropped
    /// from the cost ledgers and profiles but kept in the market records.
    /// Shocks of days never reached are dropped.
    pub fn finish(mut self) -> SimulationLog {
        let complete = self.day;
        self.profiles.truncate(complete);
        let started = self.market.len().div_ceil(self.config.hours_per_day);
        self.shocks.retain(|e| e.day < started);
        SimulationLog {
            n_buses: self.network.n_buses,
            shocks: self.shocks,
            market: self.market,
            agent_types: self.agents.iter().map(|a| a.type_index).collect(),
            daily_costs: self.agents.into_iter().map(|a| a.costs).collect(),
            profiles: self.profiles,
            probes: self.probes,
            stats: self.stats,
            types: self.types,
            config: self.config,
        }
    }
}

/// Runs the whole horizon on `threads` workers (`0` = all cores).
pub fn run_simulation_with_threads(
    network: &Network,
    types: Vec<AgentType>,
    config: ScenarioConfig,
    threads: usize,
) -> Result<SimulationLog> {
    let mut sim = Simulation::new(network, types, config, threads)?;
    while !sim.done() {
        sim.step_hour()?;
    }
    Ok(sim.finish())
}

pub fn run_simulation(network: &Network, types: Vec<AgentType>, config: ScenarioConfig) -> Result<SimulationLog> {
    run_simulation_with_threads(network, types, config, 0)
}
