//! The IEEE 14-bus test system with one quadratic-cost generator per bus.
//!
//! Topology and branch reactances are the published test-case values. Cost
//! coefficients are drawn once from a named seed; the result is checked in
//! as `data/ieee14.net` and loaded from there at runtime.

use rand::Rng;

use super::{GeneratorCost, Line, Network};
use crate::rng;

/// Seed name used to draw the checked-in cost coefficients.
pub const SEED_NAME: &str = "ieee14-costs-v1";

pub const ALPHA_RANGE: (f64, f64) = (0.0118, 0.0684);
pub const BETA_RANGE: (f64, f64) = (150.0, 233.0);
pub const GENERATOR_CAPACITY: f64 = 600.0;
pub const LINE_CAPACITY: f64 = 1000.0;

/// (from, to, reactance p.u.), 1-based buses.
pub const BRANCHES: [(usize, usize, f64); 20] = [
    (1, 2, 0.05917),
    (1, 5, 0.22304),
    (2, 3, 0.19797),
    (2, 4, 0.17632),
    (2, 5, 0.17388),
    (3, 4, 0.17103),
    (4, 5, 0.04211),
    (4, 7, 0.20912),
    (4, 9, 0.55618),
    (5, 6, 0.25202),
    (6, 11, 0.19890),
    (6, 12, 0.25581),
    (6, 13, 0.13027),
    (7, 8, 0.17615),
    (7, 9, 0.11001),
    (9, 10, 0.08450),
    (9, 14, 0.27038),
    (10, 11, 0.19207),
    (12, 13, 0.19988),
    (13, 14, 0.34802),
];

pub const BUNDLED_TEXT: &str = include_str!("../../data/ieee14.net");

/// Draws cost coefficients from `seed_name` and builds the network.
pub fn generate(seed_name: &str) -> Network {
    let mut rng = rng::named_stream(seed_name);
    let generators = (0..14)
        .map(|_| GeneratorCost {
            alpha: rng.random_range(ALPHA_RANGE.0..=ALPHA_RANGE.1),
            beta: rng.random_range(BETA_RANGE.0..=BETA_RANGE.1),
            gamma: 0.0,
            capacity: GENERATOR_CAPACITY,
        })
        .collect();
    let lines = BRANCHES
        .iter()
        .map(|&(f, t, x)| Line {
            from_bus: f - 1,
            to_bus: t - 1,
            reactance: Some(x),
            capacity: LINE_CAPACITY,
        })
        .collect();
    Network::from_reactances(14, lines, generators, 0).expect("IEEE 14-bus topology is connected")
}

/// The checked-in instance.
pub fn bundled() -> Network {
    super::parse_network(BUNDLED_TEXT, "ieee14.net")
        .expect("bundled ieee14.net parses")
        .network
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_file_matches_named_seed() {
        let generated = generate(SEED_NAME);
        let text = crate::grid::format_network(&generated, false);
        assert_eq!(
            text, BUNDLED_TEXT,
            "data/ieee14.net is stale; regenerate with `mfgrid gen-ieee14`"
        );
    }

    #[test]
    fn bundled_is_valid_and_in_ranges() {
        let net = bundled();
        assert!(net.validate().is_valid());
        assert_eq!(net.n_lines(), 20);
        for g in &net.generators {
            assert!((ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&g.alpha));
            assert!((BETA_RANGE.0..=BETA_RANGE.1).contains(&g.beta));
            assert_eq!(g.capacity, 600.0);
        }
    }

    /// Flows of a zero-sum injection reproduce the injection at every bus.
    #[test]
    fn kirchhoff_consistency() {
        let net = bundled();
        let mut x: Vec<f64> = (0..14).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let mean = x.iter().sum::<f64>() / 14.0;
        x.iter_mut().for_each(|v| *v -= mean);
        let flows = net.ptdf.flows(&x);
        let mut balance = vec![0.0; 14];
        for (line, f) in net.lines.iter().zip(&flows) {
            balance[line.from_bus] += f;
            balance[line.to_bus] -= f;
        }
        for (b, xi) in balance.iter().zip(&x) {
            assert!((b - xi).abs() < 1e-9, "{b} vs {xi}");
        }
    }
}
