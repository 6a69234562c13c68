//! Evaluation quantities computed from a finished run.

mod deviation;

pub use deviation::{deviation_gain, heuristic_candidates, CandidatePolicy, DeviationReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{ProbeTrace, SimulationLog};

/// Smallest realized price magnitude a relative error is computed against.
pub const PRICE_GUARD: f64 = 1e-9;

/// Incremental mean volatility: mean absolute change between successive prices.
pub fn imv(prices: &[f64]) -> Result<f64> {
    if prices.len() < 2 {
        return Err(Error::Input(format!(
            "IMV needs at least two prices, got {}",
            prices.len()
        )));
    }
    let total: f64 = prices.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (prices.len() - 1) as f64)
}

/// Max minus min of one day of prices; an empty day has no spread.
pub fn peak_spread(prices: &[f64]) -> f64 {
    if prices.is_empty() {
        return 0.0;
    }
    let hi = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = prices.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// Peak spread of every complete day in an hourly series.
pub fn daily_spreads(prices: &[f64], hours_per_day: usize) -> Vec<f64> {
    prices.chunks_exact(hours_per_day).map(peak_spread).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefError {
    pub day: usize,
    /// `|belief − price| / |price|`; NaN when flagged.
    pub value: f64,
    /// The realized price was too close to zero for a relative error.
    pub flagged: bool,
}

/// Relative error of a belief for one hour of the day, one entry per day.
/// `beliefs` and `realized` are aligned hourly series.
pub fn belief_relative_error(beliefs: &[f64], realized: &[f64], hours_per_day: usize, hour: usize) -> Result<Vec<BeliefError>> {
    if beliefs.len() != realized.len() {
        return Err(Error::Input(format!(
            "{} beliefs against {} realized prices",
            beliefs.len(),
            realized.len()
        )));
    }
    if hour >= hours_per_day {
        return Err(Error::Input(format!("hour {hour} outside a {hours_per_day}-hour day")));
    }
    let days = beliefs.len() / hours_per_day;
    Ok((0..days)
        .map(|day| {
            let t = day * hours_per_day + hour;
            let p = realized[t];
            if p.abs() < PRICE_GUARD {
                BeliefError {
                    day,
                    value: f64::NAN,
                    flagged: true,
                }
            } else {
                BeliefError {
                    day,
                    value: (beliefs[t] - p).abs() / p.abs(),
                    flagged: false,
                }
            }
        })
        .collect())
}

/// Belief error of a logged agent, using its regular belief before each update.
pub fn probe_belief_error(probe: &ProbeTrace, hours_per_day: usize, hour: usize) -> Result<Vec<BeliefError>> {
    let beliefs: Vec<f64> = probe.hours.iter().map(|h| h.belief).collect();
    let prices: Vec<f64> = probe.hours.iter().map(|h| h.price).collect();
    belief_relative_error(&beliefs, &prices, hours_per_day, hour)
}

/// Total cost of all agents on one day (`Σ LMP·bid`).
pub fn daily_cost(log: &SimulationLog, day: usize) -> f64 {
    log.daily_costs.iter().filter_map(|c| c.get(day)).sum()
}

/// Total cost of all agents over the last `days` complete days.
pub fn window_cost(log: &SimulationLog, days: usize) -> f64 {
    let end = log.days_completed();
    (end.saturating_sub(days)..end).map(|d| daily_cost(log, d)).sum()
}

/// Prices at `node` over the last `days` complete days.
pub fn last_days(log: &SimulationLog, node: usize, days: usize) -> Vec<f64> {
    let h = log.config.hours_per_day;
    let end = log.days_completed() * h;
    let start = end.saturating_sub(days * h);
    log.market[start..end].iter().map(|r| r.lmp[node]).collect()
}

/// IMV at `node` over the last `days` days.
pub fn window_imv(log: &SimulationLog, node: usize, days: usize) -> Result<f64> {
    imv(&last_days(log, node, days))
}

/// Mean daily peak spread at `node` over the last `days` days.
pub fn window_spread(log: &SimulationLog, node: usize, days: usize) -> f64 {
    let s = daily_spreads(&last_days(log, node, days), log.config.hours_per_day);
    if s.is_empty() {
        0.0
    } else {
        s.iter().sum::<f64>() / s.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Day,
    Hour,
}

/// A named metric over the simulated horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub unit: String,
    pub resolution: Resolution,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl MetricSeries {
    pub fn validate(&self, days: usize, hours_per_day: usize) -> Result<()> {
        let expected = match self.resolution {
            Resolution::Day => days,
            Resolution::Hour => days * hours_per_day,
        };
        if self.values.len() != expected {
            return Err(Error::Input(format!(
                "metric {} has {} values, horizon needs {expected}",
                self.name,
                self.values.len()
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("metric {} has a non-finite value at {i}", self.name)));
        }
        Ok(())
    }
}

/// Daily cost, and daily spread and IMV at `node`, for every completed day.
pub fn standard_series(log: &SimulationLog, node: usize) -> Result<Vec<MetricSeries>> {
    if node >= log.n_buses {
        return Err(Error::Input(format!("bus index {node} outside a {}-bus network", log.n_buses)));
    }
    let h = log.config.hours_per_day;
    let days = log.days_completed();
    let prices = &log.lmp_series(node)[..days * h];
    let seed = log.config.seed;
    let bus = node + 1;
    let day_imv = prices
        .chunks_exact(h)
        .map(|d| if d.len() < 2 { Ok(0.0) } else { imv(d) })
        .collect::<Result<Vec<_>>>()?;
    let series = vec![
        MetricSeries {
            name: "daily_cost".into(),
            unit: "$".into(),
            resolution: Resolution::Day,
            seed,
            values: (0..days).map(|d| daily_cost(log, d)).collect(),
        },
        MetricSeries {
            name: format!("peak_spread_bus{bus}"),
            unit: "$/MWh".into(),
            resolution: Resolution::Day,
            seed,
            values: daily_spreads(prices, h),
        },
        MetricSeries {
            name: format!("imv_bus{bus}"),
            unit: "$/MWh".into(),
            resolution: Resolution::Day,
            seed,
            values: day_imv,
        },
    ];
    for s in &series {
        s.validate(days, h)?;
    }
    Ok(series)
}
