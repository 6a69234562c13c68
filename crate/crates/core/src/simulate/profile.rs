//! Empirical state-action histograms of the population.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One agent's state and action at some hour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileSample {
    pub type_index: usize,
    pub hour: usize,
    pub soc: f64,
    pub action: f64,
}

/// Per (type, hour) counts over SoC bins on `[0, 1]` × action bins on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationProfile {
    pub n_types: usize,
    pub hours: usize,
    pub soc_bins: usize,
    pub action_bins: usize,
    /// Indexed `((type · hours) + hour) · cells + soc_bin · action_bins + action_bin`.
    pub counts: Vec<u32>,
}

fn bin(x: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((x - lo) / (hi - lo) * bins as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

impl PopulationProfile {
    pub fn new(n_types: usize, hours: usize, soc_bins: usize, action_bins: usize) -> Self {
        PopulationProfile {
            n_types,
            hours,
            soc_bins,
            action_bins,
            counts: vec![0; n_types * hours * soc_bins * action_bins],
        }
    }

    pub fn cells(&self) -> usize {
        self.soc_bins * self.action_bins
    }

    fn offset(&self, type_index: usize, hour: usize) -> usize {
        (type_index * self.hours + hour) * self.cells()
    }

    pub fn record(&mut self, s: &ProfileSample) {
        let cell = bin(s.soc, 0.0, 1.0, self.soc_bins) * self.action_bins
            + bin(s.action, -1.0, 1.0, self.action_bins);
        let at = self.offset(s.type_index, s.hour) + cell;
        self.counts[at] += 1;
    }

    pub fn cell_counts(&self, type_index: usize, hour: usize) -> &[u32] {
        let o = self.offset(type_index, hour);
        &self.counts[o..o + self.cells()]
    }

    pub fn population(&self, type_index: usize, hour: usize) -> u64 {
        self.cell_counts(type_index, hour).iter().map(|&c| c as u64).sum()
    }

    /// Normalized mass, or `None` for a (type, hour) with no agents.
    pub fn mass(&self, type_index: usize, hour: usize) -> Option<Vec<f64>> {
        let n = self.population(type_index, hour);
        if n == 0 {
            return None;
        }
        Some(
            self.cell_counts(type_index, hour)
                .iter()
                .map(|&c| c as f64 / n as f64)
                .collect(),
        )
    }

    fn same_binning(&self, other: &PopulationProfile) -> bool {
        self.n_types == other.n_types
            && self.hours == other.hours
            && self.soc_bins == other.soc_bins
            && self.action_bins == other.action_bins
    }
}

/// Builds a profile from samples. Types that receive no sample stay empty
/// and are reported by `mass` as `None`.
pub fn empirical_profile<I>(samples: I, n_types: usize, hours: usize, soc_bins: usize, action_bins: usize) -> Result<PopulationProfile>
where
    I: IntoIterator<Item = ProfileSample>,
{
    if soc_bins == 0 || action_bins == 0 {
        return Err(Error::Input("profile needs at least one bin per axis".into()));
    }
    let mut p = PopulationProfile::new(n_types, hours, soc_bins, action_bins);
    for s in samples {
        if s.type_index >= n_types || s.hour >= hours {
            return Err(Error::Input(format!(
                "sample for type {} hour {} outside a {n_types}x{hours} profile",
                s.type_index, s.hour
            )));
        }
        p.record(&s);
    }
    Ok(p)
}

/// Total-variation distances between two profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileDistance {
    /// For each hour, the largest distance over types.
    pub per_hour: Vec<f64>,
    pub max: f64,
}

/// Total variation `½·Σ|m₁ − m₂|` per (type, hour). A type empty in both
/// profiles contributes 0; empty in only one contributes 1.
pub fn profile_distance(a: &PopulationProfile, b: &PopulationProfile) -> Result<ProfileDistance> {
    if !a.same_binning(b) {
        return Err(Error::Input("profiles use different binning".into()));
    }
    let mut per_hour = vec![0.0f64; a.hours];
    for (h, slot) in per_hour.iter_mut().enumerate() {
        for t in 0..a.n_types {
            let d = match (a.mass(t, h), b.mass(t, h)) {
                (None, None) => 0.0,
                (Some(x), Some(y)) => 0.5 * x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>(),
                _ => 1.0,
            };
            *slot = slot.max(d);
        }
    }
    let max = per_hour.iter().copied().fold(0.0, f64::max);
    Ok(ProfileDistance { per_hour, max })
}
