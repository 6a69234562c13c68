use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::config::{ShockConfig, ShockWindow};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShockKind {
    Demand,
    Supply,
}

impl ShockKind {
    pub fn name(self) -> &'static str {
        match self {
            ShockKind::Demand => "demand",
            ShockKind::Supply => "supply",
        }
    }
}

/// One shock arrival. Hours are `[start_hour, end_hour)` of `day`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockEvent {
    pub kind: ShockKind,
    pub day: usize,
    pub start_hour: usize,
    pub end_hour: usize,
    pub magnitude: f64,
}

impl ShockEvent {
    pub fn covers(&self, day: usize, hour: usize) -> bool {
        self.day == day && (self.start_hour..self.end_hour).contains(&hour)
    }
}

fn arrivals(window: &ShockWindow, kind: ShockKind, days: usize, seed: u64, out: &mut Vec<ShockEvent>) -> Result<()> {
    if window.rate == 0.0 {
        return Ok(());
    }
    let poisson = Poisson::new(window.rate)
        .map_err(|e| Error::Config(format!("{} shock rate {}: {e}", kind.name(), window.rate)))?;
    for day in 0..days {
        let mut rng = rng::stream(seed, Purpose::Shocks, kind as u64, day as u64, 0);
        if poisson.sample(&mut rng) >= 1.0 {
            out.push(ShockEvent {
                kind,
                day,
                start_hour: window.start_hour,
                end_hour: window.end_hour,
                magnitude: window.magnitude.sample(&mut rng)?,
            });
        }
    }
    Ok(())
}

/// All shocks of the horizon, sorted by day then kind. Each day draws an
/// independent Poisson count per kind and a day with at least one arrival
/// gets a single event, so a surge never exceeds its magnitude band.
pub fn generate_shocks(config: &ShockConfig, days: usize, seed: u64) -> Result<Vec<ShockEvent>> {
    let mut out = Vec::new();
    arrivals(&config.demand, ShockKind::Demand, days, seed, &mut out)?;
    arrivals(&config.supply, ShockKind::Supply, days, seed, &mut out)?;
    out.sort_by_key(|e| (e.day, e.kind as u8));
    Ok(out)
}

/// Shocked net load. A demand surge scales the load by `1 + magnitude`; a
/// supply surge subtracts `magnitude · typical`, where `typical` is the
/// agent's mean load in the same unit as `q`, so the result may be negative.
pub fn apply_shock(q: f64, event: &ShockEvent, typical: f64) -> f64 {
    match event.kind {
        ShockKind::Demand => q * (1.0 + event.magnitude),
        ShockKind::Supply => q - event.magnitude * typical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn event(kind: ShockKind, magnitude: f64) -> ShockEvent {
        ShockEvent {
            kind,
            day: 0,
            start_hour: 0,
            end_hour: 1,
            magnitude,
        }
    }

    #[test]
    fn zero_rate_gives_no_events() {
        assert!(generate_shocks(&ShockConfig::none(), 1000, 7).unwrap().is_empty());
    }

    #[test]
    fn demand_day_count_matches_poisson() {
        let days = 10_000;
        let mut cfg = ShockConfig::default();
        cfg.supply.rate = 0.0;
        let events = generate_shocks(&cfg, days, 11).unwrap();
        let mut shock_days: Vec<usize> = events.iter().map(|e| e.day).collect();
        shock_days.dedup();
        assert_eq!(shock_days.len(), events.len(), "one event per shock day");
        // P(at least one arrival) per day, with its binomial spread.
        let p = 1.0 - (-0.1f64).exp();
        let mean = days as f64 * p;
        let sd = (days as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (shock_days.len() as f64 - mean).abs() <= 3.0 * sd,
            "{} shock days, expected {mean:.1} ± {sd:.1}",
            shock_days.len()
        );
    }

    #[test]
    fn magnitudes_and_windows_in_support() {
        let events = generate_shocks(&ShockConfig::default(), 5000, 3).unwrap();
        assert!(!events.is_empty());
        for e in &events {
            match e.kind {
                ShockKind::Demand => {
                    assert!((0.3..=0.5).contains(&e.magnitude));
                    assert!(e.start_hour >= 18 && e.end_hour <= 21);
                }
                ShockKind::Supply => {
                    assert!((0.2..=0.3).contains(&e.magnitude));
                    assert!(e.start_hour >= 1 && e.end_hour <= 4);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_shocks(&ShockConfig::default(), 500, 9).unwrap();
        let b = generate_shocks(&ShockConfig::default(), 500, 9).unwrap();
        assert_eq!(a, b);
        // The draw for a day does not depend on the horizon length.
        let c = generate_shocks(&ShockConfig::default(), 250, 9).unwrap();
        assert_eq!(&a[..c.len()], &c[..]);
    }

    #[test]
    fn apply_examples() {
        assert_eq!(apply_shock(0.2, &event(ShockKind::Demand, 0.0), 0.2), 0.2);
        assert!((apply_shock(0.2, &event(ShockKind::Demand, 0.4), 0.2) - 0.28).abs() < 1e-15);
        assert!(apply_shock(0.2, &event(ShockKind::Supply, 0.25), 1.0) < 0.0);
    }
}
