//! Unilateral deviation probes: replay one logged agent under other policies
//! while everyone else's bids stay as logged.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispatch::{solve_ed, DemandVector};
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::prosumer::{make_bid, soc_transition, unit_reward};
use crate::simulate::{ProbeTrace, SimulationLog};

/// A policy the probe agent could have followed instead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidatePolicy {
    /// The logged actions and bids.
    Realized,
    /// The same action every hour.
    Constant { action: f64 },
    /// Charge at `rate` inside one window of hours and discharge inside another.
    Schedule {
        charge: [usize; 2],
        discharge: [usize; 2],
        rate: f64,
    },
    /// Charge when the agent's belief for the hour is below one level and
    /// discharge when it is above another.
    Threshold {
        charge_below: f64,
        discharge_above: f64,
        rate: f64,
    },
}

impl CandidatePolicy {
    fn action(&self, hour: usize, belief: f64) -> f64 {
        let within = |w: &[usize; 2]| (w[0]..w[1]).contains(&hour);
        match *self {
            CandidatePolicy::Realized => 0.0,
            CandidatePolicy::Constant { action } => action,
            CandidatePolicy::Schedule { charge, discharge, rate } => {
                if within(&charge) {
                    rate
                } else if within(&discharge) {
                    -rate
                } else {
                    0.0
                }
            }
            CandidatePolicy::Threshold {
                charge_below,
                discharge_above,
                rate,
            } => {
                if belief < charge_below {
                    rate
                } else if belief > discharge_above {
                    -rate
                } else {
                    0.0
                }
            }
        }
    }
}

/// `n` fixed heuristic policies: constant actions, hour-window schedules, and
/// belief thresholds placed at quantiles of the probe's beliefs over `hours`.
pub fn heuristic_candidates(probe: &ProbeTrace, hours: Range<usize>, n: usize) -> Vec<CandidatePolicy> {
    let mut out = Vec::with_capacity(n);
    for k in -4..=4 {
        out.push(CandidatePolicy::Constant { action: 0.05 * k as f64 });
    }
    for (charge, discharge) in [
        ([0, 6], [17, 22]),
        ([9, 15], [17, 21]),
        ([10, 16], [18, 22]),
        ([11, 15], [18, 21]),
        ([1, 5], [7, 10]),
    ] {
        for rate in [0.1, 0.2, 0.3, 0.5] {
            out.push(CandidatePolicy::Schedule { charge, discharge, rate });
        }
    }
    let mut beliefs: Vec<f64> = probe.hours[hours].iter().map(|h| h.belief_used).collect();
    beliefs.sort_by(f64::total_cmp);
    if !beliefs.is_empty() {
        let q = |f: f64| beliefs[((beliefs.len() - 1) as f64 * f).round() as usize];
        for (lo, hi) in [(0.1, 0.9), (0.2, 0.8), (0.25, 0.75), (0.3, 0.7), (0.4, 0.6), (0.5, 0.5)] {
            for rate in [0.1, 0.2, 0.3, 0.5] {
                out.push(CandidatePolicy::Threshold {
                    charge_below: q(lo),
                    discharge_above: q(hi),
                    rate,
                });
            }
        }
    }
    out.truncate(n);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    /// Index of the probe in the log.
    pub probe: usize,
    /// Discounted payoff (negative cost plus terminal storage value) of the logged behavior.
    pub realized_payoff: f64,
    /// Undiscounted `Σ LMP·bid` of the logged behavior over the window.
    pub realized_cost: f64,
    /// Payoff of each candidate, in input order.
    pub payoffs: Vec<f64>,
    /// Best candidate payoff minus the realized payoff, floored at zero
    /// because the realized behavior is always available.
    pub gain: f64,
    /// Index of the best candidate, `None` when nothing beats the realized behavior.
    pub best: Option<usize>,
}

struct Replay<'a> {
    network: &'a Network,
    log: &'a SimulationLog,
    probe: &'a ProbeTrace,
    steps: Range<usize>,
}

impl Replay<'_> {
    fn payoff(&self, policy: &CandidatePolicy) -> Result<(f64, f64)> {
        let ty = &self.log.types[self.probe.type_index];
        let cap = self.probe.capacity;
        let node = self.probe.node;
        let beta = self.log.config.discount;
        let h = self.log.config.hours_per_day;

        let mut soc = self.probe.hours[self.steps.start].soc;
        let mut disc = 1.0;
        let mut payoff = 0.0;
        let mut cost = 0.0;
        let mut last_price = None;
        for t in self.steps.clone() {
            let logged = &self.probe.hours[t];
            let record = &self.log.market[t];
            let (action, bid) = match policy {
                CandidatePolicy::Realized => (logged.action, logged.bid),
                _ if cap == 0.0 => (0.0, logged.load),
                p => {
                    let a = p.action(t % h, logged.belief_used);
                    (a, make_bid(soc, a, logged.load / cap, cap, &ty.efficiency))
                }
            };
            let price = if bid == logged.bid {
                record.lmp[node]
            } else {
                let mut demand = record.demand.clone();
                demand[node] += bid - logged.bid;
                match DemandVector::new(demand).and_then(|b| solve_ed(self.network, &b)) {
                    Ok(r) => r.lmp[node],
                    Err(Error::Infeasible(_) | Error::Input(_)) => last_price.unwrap_or(record.lmp[node]),
                    Err(e) => return Err(e),
                }
            };
            last_price = Some(price);
            payoff -= disc * price * bid;
            cost += price * bid;
            disc *= beta;
            soc = match policy {
                CandidatePolicy::Realized => soc_transition(logged.soc, logged.action),
                _ => soc_transition(soc, action),
            };
        }
        // Stored energy is worth selling at the final day's mean price.
        let end = self.steps.end;
        let tail = &self.log.market[end.saturating_sub(h).max(self.steps.start)..end];
        let mean_price = tail.iter().map(|r| r.lmp[node]).sum::<f64>() / tail.len() as f64;
        if cap > 0.0 {
            payoff += disc * cap * unit_reward(-soc, mean_price, &ty.efficiency);
        }
        Ok((payoff, cost))
    }
}

/// Best payoff improvement the probe could have obtained over `days` by
/// switching to one of `candidates`. Every replayed hour with a changed bid
/// is re-cleared, so the probe's own price impact is included.
pub fn deviation_gain(
    network: &Network,
    log: &SimulationLog,
    probe: usize,
    days: Range<usize>,
    candidates: &[CandidatePolicy],
) -> Result<DeviationReport> {
    if candidates.is_empty() {
        return Err(Error::Input("deviation probe needs at least one candidate policy".into()));
    }
    let trace = log
        .probes
        .get(probe)
        .ok_or_else(|| Error::Input(format!("log has {} probes, asked for {probe}", log.probes.len())))?;
    let h = log.config.hours_per_day;
    let steps = days.start * h..days.end * h;
    if steps.is_empty() || steps.end > trace.hours.len().min(log.market.len()) {
        return Err(Error::Input(format!(
            "deviation window of days {}..{} outside the {} logged days",
            days.start,
            days.end,
            log.days_completed()
        )));
    }
    let replay = Replay {
        network,
        log,
        probe: trace,
        steps,
    };
    let (realized_payoff, realized_cost) = replay.payoff(&CandidatePolicy::Realized)?;
    let payoffs = candidates
        .par_iter()
        .map(|c| replay.payoff(c).map(|(p, _)| p))
        .collect::<Result<Vec<_>>>()?;
    let (best, best_payoff) = payoffs
        .iter()
        .copied()
        .enumerate()
        .fold((None, realized_payoff), |acc, (i, p)| if p > acc.1 { (Some(i), p) } else { acc });
    Ok(DeviationReport {
        probe,
        realized_payoff,
        realized_cost,
        payoffs,
        gain: best_payoff - realized_payoff,
        best,
    })
}
