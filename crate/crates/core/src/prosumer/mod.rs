//! A single prosumer: battery model, bidding, value function, and learning.

mod agent;
mod battery;
mod value;

pub use agent::{
    draw_net_load, regenerate, update_belief, update_shock_belief, AgentState, AgentType, BeliefInit,
    CachedValue, LoadKind, Triangle,
};
pub use battery::{efficiency, make_bid, soc_transition, unit_kernel, unit_reward, EfficiencyParams};
pub use value::{
    grid_point, optimal_action, read_value, snap, solve_value_function, BellmanKernel, Landing,
    ValueFunction, ValueSolver,
};
