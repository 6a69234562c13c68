//! Static power-system data: buses, generators, lines and the PTDF matrix
//! that maps nodal injections onto line flows under the DC approximation.

mod file;
pub mod ieee14;

use std::collections::VecDeque;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{format_network, parse_network, NetworkFile};

/// Quadratic generation cost `C(g) = ½·alpha·g² + beta·g + gamma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorCost {
    /// $/MW²h
    pub alpha: f64,
    /// $/MWh
    pub beta: f64,
    /// $ (does not influence prices)
    pub gamma: f64,
    /// MW
    pub capacity: f64,
}

impl GeneratorCost {
    pub fn cost(&self, g: f64) -> f64 {
        0.5 * self.alpha * g * g + self.beta * g + self.gamma
    }

    pub fn marginal_cost(&self, g: f64) -> f64 {
        self.alpha * g + self.beta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    /// 0-based bus index
    pub from_bus: usize,
    /// 0-based bus index
    pub to_bus: usize,
    /// Per-unit series reactance. Only needed when the PTDF is computed.
    pub reactance: Option<f64>,
    /// MW
    pub capacity: f64,
}

/// Row-major `L × N` matrix of power transfer distribution factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ptdf {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Ptdf {
    pub fn from_rows(rows: Vec<Vec<f64>>, cols: usize) -> Result<Self> {
        let n_rows = rows.len();
        let mut data = Vec::with_capacity(n_rows * cols);
        for (l, row) in rows.into_iter().enumerate() {
            if row.len() != cols {
                return Err(Error::Input(format!(
                    "PTDF row {} has {} entries, expected {}",
                    l + 1,
                    row.len(),
                    cols
                )));
            }
            data.extend(row);
        }
        Ok(Ptdf {
            rows: n_rows,
            cols,
            data,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Ptdf {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, line: usize, bus: usize) -> f64 {
        self.data[line * self.cols + bus]
    }

    pub fn row(&self, line: usize) -> &[f64] {
        &self.data[line * self.cols..(line + 1) * self.cols]
    }

    fn set(&mut self, line: usize, bus: usize, value: f64) {
        self.data[line * self.cols + bus] = value;
    }

    /// Line flows `PTDF · injections`.
    pub fn flows(&self, injections: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|l| {
                self.row(l)
                    .iter()
                    .zip(injections)
                    .map(|(p, x)| p * x)
                    .sum()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub n_buses: usize,
    pub lines: Vec<Line>,
    /// One generator per bus, indexed by bus.
    pub generators: Vec<GeneratorCost>,
    pub ptdf: Ptdf,
    /// 0-based reference bus for the PTDF.
    pub slack_bus: usize,
}

impl Network {
    /// Assembles a network, computing the PTDF from line reactances.
    pub fn from_reactances(
        n_buses: usize,
        lines: Vec<Line>,
        generators: Vec<GeneratorCost>,
        slack_bus: usize,
    ) -> Result<Self> {
        let ptdf = compute_ptdf(&lines, n_buses, slack_bus)?;
        Ok(Network {
            n_buses,
            lines,
            generators,
            ptdf,
            slack_bus,
        })
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn total_capacity(&self) -> f64 {
        self.generators.iter().map(|g| g.capacity).sum()
    }

    pub fn mean_beta(&self) -> f64 {
        self.generators.iter().map(|g| g.beta).sum::<f64>() / self.generators.len().max(1) as f64
    }

    pub fn validate(&self) -> ValidationReport {
        validate_network(self)
    }
}

fn is_connected(n_buses: usize, lines: &[Line]) -> bool {
    if n_buses == 0 {
        return false;
    }
    let mut adj = vec![Vec::new(); n_buses];
    for line in lines {
        if line.from_bus < n_buses && line.to_bus < n_buses {
            adj[line.from_bus].push(line.to_bus);
            adj[line.to_bus].push(line.from_bus);
        }
    }
    let mut seen = vec![false; n_buses];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(b) = queue.pop_front() {
        for &nb in &adj[b] {
            if !seen[nb] {
                seen[nb] = true;
                queue.push_back(nb);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// DC power-flow PTDF: branch flow matrix times the inverse of the reduced
/// nodal susceptance matrix. The slack column is identically zero.
pub fn compute_ptdf(lines: &[Line], n_buses: usize, slack: usize) -> Result<Ptdf> {
    if slack >= n_buses {
        return Err(Error::Input(format!(
            "slack bus {} out of range for {} buses",
            slack + 1,
            n_buses
        )));
    }
    let mut reactances = Vec::with_capacity(lines.len());
    for (l, line) in lines.iter().enumerate() {
        if line.from_bus >= n_buses || line.to_bus >= n_buses {
            return Err(Error::Input(format!("line {} references unknown bus", l + 1)));
        }
        match line.reactance {
            Some(x) if x > 0.0 && x.is_finite() => reactances.push(x),
            Some(x) => {
                return Err(Error::Input(format!(
                    "line {} has non-positive reactance {x}",
                    l + 1
                )))
            }
            None => return Err(Error::Input(format!("line {} has no reactance", l + 1))),
        }
    }
    if !is_connected(n_buses, lines) {
        return Err(Error::Structural("network graph is not connected".into()));
    }

    // Map every non-slack bus to a row of the reduced susceptance matrix.
    let reduced: Vec<Option<usize>> = {
        let mut next = 0;
        (0..n_buses)
            .map(|b| {
                if b == slack {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let m = n_buses - 1;
    let mut ptdf = Ptdf::zeros(lines.len(), n_buses);
    if m == 0 {
        return Ok(ptdf);
    }

    let mut b_red = DMatrix::<f64>::zeros(m, m);
    for (line, &x) in lines.iter().zip(&reactances) {
        let b = 1.0 / x;
        let (f, t) = (reduced[line.from_bus], reduced[line.to_bus]);
        if let Some(f) = f {
            b_red[(f, f)] += b;
        }
        if let Some(t) = t {
            b_red[(t, t)] += b;
        }
        if let (Some(f), Some(t)) = (f, t) {
            b_red[(f, t)] -= b;
            b_red[(t, f)] -= b;
        }
    }
    let x_red = b_red
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Structural("reduced susceptance matrix is singular".into()))?;

    for (l, (line, &x)) in lines.iter().zip(&reactances).enumerate() {
        for bus in 0..n_buses {
            let Some(k) = reduced[bus] else { continue };
            let theta_from = reduced[line.from_bus].map_or(0.0, |f| x_red[(f, k)]);
            let theta_to = reduced[line.to_bus].map_or(0.0, |t| x_red[(t, k)]);
            ptdf.set(l, bus, (theta_from - theta_to) / x);
        }
    }
    Ok(ptdf)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.rule, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, rule: &'static str, detail: String) {
        self.violations.push(Violation { rule, detail });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msg = self
                .violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::Input(msg))
        }
    }
}

/// Lists every violated network invariant; an empty report means the
/// network is usable for dispatch.
pub fn validate_network(network: &Network) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = network.n_buses;
    if n == 0 {
        report.push("buses", "network has no buses".into());
        return report;
    }
    if network.slack_bus >= n {
        report.push(
            "slack",
            format!("slack bus {} outside 1..={n}", network.slack_bus + 1),
        );
    }
    if network.generators.len() != n {
        report.push(
            "one-generator-per-bus",
            format!("{} generators for {n} buses", network.generators.len()),
        );
    }
    for (bus, g) in network.generators.iter().enumerate() {
        if !(g.alpha > 0.0 && g.alpha.is_finite()) {
            report.push(
                "alpha-positive",
                format!("bus {}: alpha = {} must be > 0", bus + 1, g.alpha),
            );
        }
        if !(g.capacity > 0.0 && g.capacity.is_finite()) {
            report.push(
                "capacity-positive",
                format!("bus {}: capacity = {} must be > 0", bus + 1, g.capacity),
            );
        }
        if !g.beta.is_finite() || !g.gamma.is_finite() {
            report.push("finite-cost", format!("bus {}: non-finite cost term", bus + 1));
        }
    }
    for (l, line) in network.lines.iter().enumerate() {
        if line.from_bus >= n || line.to_bus >= n {
            report.push("line-bus-range", format!("line {}: bus index out of range", l + 1));
        } else if line.from_bus == line.to_bus {
            report.push(
                "line-distinct-ends",
                format!("line {}: from bus equals to bus ({})", l + 1, line.from_bus + 1),
            );
        }
        if !(line.capacity > 0.0) {
            report.push(
                "line-capacity-positive",
                format!("line {}: capacity = {} must be > 0", l + 1, line.capacity),
            );
        }
        if let Some(x) = line.reactance {
            if !(x > 0.0) {
                report.push(
                    "line-reactance-positive",
                    format!("line {}: reactance = {x} must be > 0", l + 1),
                );
            }
        }
    }
    if !is_connected(n, &network.lines) {
        report.push("connected", "network graph is not connected".into());
    }
    let ptdf = &network.ptdf;
    if ptdf.rows() != network.lines.len() || ptdf.cols() != n {
        report.push(
            "ptdf-dimensions",
            format!(
                "PTDF is {}x{}, expected {}x{}",
                ptdf.rows(),
                ptdf.cols(),
                network.lines.len(),
                n
            ),
        );
    } else if network.slack_bus < n {
        for l in 0..ptdf.rows() {
            if ptdf.get(l, network.slack_bus) != 0.0 {
                report.push(
                    "ptdf-slack-column",
                    format!("PTDF row {} has non-zero slack entry", l + 1),
                );
            }
        }
        if ptdf.data.iter().any(|v| !v.is_finite()) {
            report.push("ptdf-finite", "PTDF contains non-finite entries".into());
        }
    }
    report
}
