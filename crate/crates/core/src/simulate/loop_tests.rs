//! End-to-end properties of the market loop on small populations.

use crate::grid::{ieee14, GeneratorCost, Network};
use crate::io::bundled_load_shape;
use crate::prosumer::Triangle;
use crate::simulate::{
    build_agent_types, run_simulation_with_threads, LoadShape, Mode, PriceSource, ScenarioConfig, ShockConfig,
    SimulationLog,
};

const ALPHA: f64 = 0.04;
const BETA: f64 = 160.0;

fn one_bus() -> Network {
    let gen = GeneratorCost {
        alpha: ALPHA,
        beta: BETA,
        gamma: 0.0,
        capacity: 5000.0,
    };
    Network::from_reactances(1, vec![], vec![gen], 0).unwrap()
}

fn quiet(mode: Mode, agents: usize) -> ScenarioConfig {
    ScenarioConfig {
        mode,
        days: 2,
        agents_per_node: agents,
        noise: Triangle::NONE,
        weather: [1.0, 1.0],
        bus_scale: [1.0, 1.0],
        shocks: ShockConfig::none(),
        soc_points: 21,
        action_points: 41,
        ..Default::default()
    }
}

fn run(net: &Network, shape: &LoadShape, cfg: ScenarioConfig, threads: usize) -> SimulationLog {
    let types = build_agent_types(net, shape, &cfg).unwrap();
    run_simulation_with_threads(net, types, cfg, threads).unwrap()
}

#[test]
fn flat_load_without_learning_gives_constant_price() {
    let shape = LoadShape {
        gross: vec![1.0; 24],
        net: vec![0.6; 24],
    };
    let cfg = ScenarioConfig {
        prosumer_share: 1.0,
        ..quiet(Mode::NoLearning, 1)
    };
    let log = run(&one_bus(), &shape, cfg, 1);
    let demand = 0.6 * 150.0;
    for r in &log.market {
        assert_eq!(r.price_source, PriceSource::Cleared);
        assert!((r.demand[0] - demand).abs() < 1e-9);
        assert!((r.lmp[0] - (ALPHA * demand + BETA)).abs() < 1e-9, "{}", r.lmp[0]);
    }
}

#[test]
fn no_learning_bids_are_net_loads() {
    let shape = bundled_load_shape();
    let log = run(&one_bus(), &shape, quiet(Mode::NoLearning, 10), 1);
    assert_eq!(log.stats.value_solves, 0);
    for r in &log.market {
        let expected = 150.0 * shape.gross[r.hour] + 150.0 * shape.net[r.hour];
        assert!((r.demand[0] - expected).abs() < 1e-9 * expected, "{} vs {expected}", r.demand[0]);
    }
}

#[test]
fn lone_prosumer_bid_is_the_bus_demand() {
    let cfg = ScenarioConfig {
        prosumer_share: 1.0,
        ..quiet(Mode::MfShockInfo, 1)
    };
    let log = run(&ieee14::bundled(), &bundled_load_shape(), cfg, 1);
    assert_eq!(log.probes.len(), 14);
    for p in &log.probes {
        for (t, h) in p.hours.iter().enumerate() {
            assert_eq!(h.bid, log.market[t].demand[p.node]);
            assert_eq!(h.price, log.market[t].lmp[p.node]);
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let net = ieee14::bundled();
    let cfg = ScenarioConfig {
        days: 2,
        agents_per_node: 12,
        soc_points: 21,
        action_points: 41,
        regen_prob: 0.01,
        ..Default::default()
    };
    let a = run(&net, &bundled_load_shape(), cfg.clone(), 1);
    let b = run(&net, &bundled_load_shape(), cfg, 3);
    assert_eq!(a, b);
}

#[test]
fn shorter_horizon_is_a_prefix() {
    let net = ieee14::bundled();
    let cfg = ScenarioConfig {
        days: 3,
        agents_per_node: 8,
        soc_points: 21,
        action_points: 41,
        ..Default::default()
    };
    let long = run(&net, &bundled_load_shape(), cfg.clone(), 1);
    let short = run(&net, &bundled_load_shape(), ScenarioConfig { days: 2, ..cfg }, 1);
    assert_eq!(&long.market[..48], &short.market[..]);
    assert_eq!(&long.probes[0].hours[..48], &short.probes[0].hours[..]);
}

#[test]
fn demand_shock_scales_only_its_window() {
    let net = one_bus();
    let shape = bundled_load_shape();
    let mut shocks = ShockConfig::none();
    shocks.demand.rate = 50.0;
    shocks.demand.magnitude = Triangle {
        lower: 0.4,
        mode: 0.4,
        upper: 0.4,
    };
    let base = run(&net, &shape, quiet(Mode::NoLearning, 10), 1);
    let hit = run(
        &net,
        &shape,
        ScenarioConfig {
            shocks,
            ..quiet(Mode::NoLearning, 10)
        },
        1,
    );
    assert_eq!(hit.shock_days(), vec![0, 1]);
    for (a, b) in base.market.iter().zip(&hit.market) {
        let factor = if (18..21).contains(&a.hour) { 1.4 } else { 1.0 };
        assert_eq!(b.demand_shock, factor > 1.0);
        assert!((b.demand[0] - factor * a.demand[0]).abs() < 1e-9 * a.demand[0]);
    }
}

#[test]
fn modes_keep_to_their_beliefs() {
    let net = ieee14::bundled();
    let mut shocks = ShockConfig::none();
    shocks.demand.rate = 50.0;
    let cfg = |mode| ScenarioConfig {
        mode,
        days: 2,
        agents_per_node: 6,
        soc_points: 21,
        action_points: 41,
        shocks,
        ..Default::default()
    };
    let blind = run(&net, &bundled_load_shape(), cfg(Mode::MfNoShockInfo), 1);
    for p in &blind.probes {
        assert!(p.hours.iter().all(|h| h.belief_used == h.belief));
    }
    let informed = run(&net, &bundled_load_shape(), cfg(Mode::MfShockInfo), 1);
    let shock_hours: Vec<usize> = informed
        .market
        .iter()
        .enumerate()
        .filter(|(_, r)| r.demand_shock)
        .map(|(t, _)| t)
        .collect();
    assert_eq!(shock_hours.len(), 6);
    for p in &informed.probes {
        for (t, h) in p.hours.iter().enumerate() {
            if !shock_hours.contains(&t) {
                assert_eq!(h.belief_used, h.belief);
            }
        }
        assert!(shock_hours.iter().any(|&t| p.hours[t].belief_used != p.hours[t].belief));
    }
    let fixed = run(&net, &bundled_load_shape(), cfg(Mode::NoLearning), 1);
    for p in &fixed.probes {
        assert!(p.hours.iter().all(|h| h.action == 0.0 && h.bid == h.load));
    }
    assert_eq!(fixed.stats.value_solves, 0);
    assert_eq!(fixed.stats.regenerations, 0);
}

#[test]
fn battery_energy_is_conserved_in_bids() {
    // With a flat price the only difference between bid and load is battery flow.
    let cfg = ScenarioConfig {
        prosumer_share: 1.0,
        ..quiet(Mode::MfNoShockInfo, 1)
    };
    let log = run(&ieee14::bundled(), &bundled_load_shape(), cfg, 1);
    for p in &log.probes {
        for w in p.hours.windows(2) {
            let stored = (w[1].soc - w[0].soc) * p.capacity;
            let flow = w[0].bid - w[0].load;
            if stored > 1e-12 {
                assert!(flow >= stored - 1e-9, "charging {stored} drew only {flow}");
            } else if stored < -1e-12 {
                assert!(-flow <= -stored + 1e-9, "discharging {stored} delivered {flow}");
            } else {
                assert!(flow.abs() < 1e-9);
            }
        }
    }
}
