//! Hourly economic dispatch.
//!
//! The dispatch QP
//!
//! ```text
//! min  Σₙ ½αₙgₙ² + βₙgₙ + γₙ
//! s.t. Σₙ gₙ ≥ Σₙ Bₙ                          (λ)
//!      −F̂ₗ ≤ Σₙ PTDFₗₙ (gₙ − Bₙ) ≤ F̂ₗ          (μ̲ₗ, μ̄ₗ)
//!      0 ≤ gₙ ≤ Ĝₙ                             (η̄ₙ on the upper bound)
//! ```
//!
//! is solved through its KKT conditions written as an LCP over
//! `x = (g, λ, μ̄, μ̲, η̄)`. Nodal prices follow from the duals as
//! `LMPₙ = λ − Σₗ PTDFₗₙ (μ̄ₗ − μ̲ₗ)`.

mod lcp;
mod lipschitz;
mod oracle;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Network;

pub use lcp::{solve_lcp, LcpProblem, LcpSolution};
pub use lipschitz::{estimate_lipschitz, LipschitzEstimate};
pub use oracle::{brute_force_ed, cross_check, random_network, OracleReport};

/// Per-bus aggregate net demand in MW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandVector(Vec<f64>);

impl DemandVector {
    /// Rejects non-finite entries and a non-positive system total.
    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("demand contains non-finite entries".into()));
        }
        let total: f64 = b.iter().sum();
        if total <= 0.0 {
            return Err(Error::Input(format!(
                "total net demand {total} MW is not positive"
            )));
        }
        Ok(DemandVector(b))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    /// MW per bus
    pub g: Vec<f64>,
    /// $/MWh
    pub lambda: f64,
    pub mu_upper: Vec<f64>,
    pub mu_lower: Vec<f64>,
    pub eta_upper: Vec<f64>,
    pub lmp: Vec<f64>,
    /// $
    pub objective: f64,
    /// Active-constraint gradients are linearly dependent, so the duals
    /// (and hence prices) need not be unique.
    pub licq_violated: bool,
    pub residual: f64,
    pub pivots: usize,
}

/// Index ranges of the LCP variable vector `x = (g, λ, μ̄, μ̲, η̄)`.
#[derive(Clone, Copy, Debug)]
pub struct LcpLayout {
    pub n_buses: usize,
    pub n_lines: usize,
}

impl LcpLayout {
    pub fn of(network: &Network) -> Self {
        LcpLayout {
            n_buses: network.n_buses,
            n_lines: network.n_lines(),
        }
    }
    pub fn dim(&self) -> usize {
        2 * self.n_buses + 1 + 2 * self.n_lines
    }
    pub fn g(&self, n: usize) -> usize {
        n
    }
    pub fn lambda(&self) -> usize {
        self.n_buses
    }
    pub fn mu_upper(&self, l: usize) -> usize {
        self.n_buses + 1 + l
    }
    pub fn mu_lower(&self, l: usize) -> usize {
        self.n_buses + 1 + self.n_lines + l
    }
    pub fn eta_upper(&self, n: usize) -> usize {
        self.n_buses + 1 + 2 * self.n_lines + n
    }
}

/// KKT system of the dispatch QP as an LCP. Only `u` depends on demand.
pub fn build_kkt_lcp(network: &Network, demand: &DemandVector) -> Result<LcpProblem> {
    let b = demand.as_slice();
    if b.len() != network.n_buses {
        return Err(Error::Input(format!(
            "demand has {} entries for {} buses",
            b.len(),
            network.n_buses
        )));
    }
    let lay = LcpLayout::of(network);
    let dim = lay.dim();
    let (nb, nl) = (lay.n_buses, lay.n_lines);
    let ptdf = &network.ptdf;

    let mut u = vec![0.0; dim];
    let mut m = vec![0.0; dim * dim];
    let mut set = |i: usize, j: usize, v: f64| m[i * dim + j] = v;

    for n in 0..nb {
        let gen = &network.generators[n];
        let row = lay.g(n);
        u[row] = gen.beta;
        set(row, lay.g(n), gen.alpha);
        set(row, lay.lambda(), -1.0);
        for l in 0..nl {
            set(row, lay.mu_upper(l), ptdf.get(l, n));
            set(row, lay.mu_lower(l), -ptdf.get(l, n));
        }
        set(row, lay.eta_upper(n), 1.0);
    }

    u[lay.lambda()] = -demand.total();
    for n in 0..nb {
        set(lay.lambda(), lay.g(n), 1.0);
    }

    let flows = ptdf.flows(b);
    for l in 0..nl {
        let cap = network.lines[l].capacity;
        u[lay.mu_upper(l)] = cap + flows[l];
        u[lay.mu_lower(l)] = cap - flows[l];
        for n in 0..nb {
            set(lay.mu_upper(l), lay.g(n), -ptdf.get(l, n));
            set(lay.mu_lower(l), lay.g(n), ptdf.get(l, n));
        }
    }

    for n in 0..nb {
        u[lay.eta_upper(n)] = network.generators[n].capacity;
        set(lay.eta_upper(n), lay.g(n), -1.0);
    }

    LcpProblem::new(u, m)
}

/// `LMPₙ = λ − Σₗ PTDFₗₙ (μ̄ₗ − μ̲ₗ)`
pub fn lmp_from_duals(network: &Network, lambda: f64, mu_upper: &[f64], mu_lower: &[f64]) -> Vec<f64> {
    (0..network.n_buses)
        .map(|n| {
            lambda
                - (0..network.n_lines())
                    .map(|l| network.ptdf.get(l, n) * (mu_upper[l] - mu_lower[l]))
                    .sum::<f64>()
        })
        .collect()
}

/// Constraint activity test used for the LICQ check, in MW.
const ACTIVE_TOL: f64 = 1e-7;

/// True when the gradients of the constraints active at `g` are linearly
/// dependent.
pub fn licq_violated(network: &Network, demand: &DemandVector, g: &[f64]) -> bool {
    let n = network.n_buses;
    let b = demand.as_slice();
    let scale = 1.0 + demand.total().abs();
    let tol = ACTIVE_TOL * scale;
    let mut grads: Vec<Vec<f64>> = Vec::new();

    if (g.iter().sum::<f64>() - demand.total()).abs() <= tol {
        grads.push(vec![1.0; n]);
    }
    let inj: Vec<f64> = g.iter().zip(b).map(|(gi, bi)| gi - bi).collect();
    let flows = network.ptdf.flows(&inj);
    for (l, f) in flows.iter().enumerate() {
        let cap = network.lines[l].capacity;
        if (cap - f).abs() <= tol || (cap + f).abs() <= tol {
            grads.push(network.ptdf.row(l).to_vec());
        }
    }
    for (k, (gk, gen)) in g.iter().zip(&network.generators).enumerate() {
        if gk.abs() <= tol || (gen.capacity - gk).abs() <= tol {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            grads.push(e);
        }
    }
    if grads.is_empty() {
        return false;
    }
    if grads.len() > n {
        return true;
    }
    let a = DMatrix::from_fn(grads.len(), n, |i, j| grads[i][j]);
    a.rank(1e-9) < grads.len()
}

/// Solves the dispatch QP for one hour.
pub fn solve_ed(network: &Network, demand: &DemandVector) -> Result<DispatchResult> {
    let total = demand.total();
    let capacity = network.total_capacity();
    if total > capacity {
        return Err(Error::Infeasible(format!(
            "total demand {total:.3} MW exceeds total generation capacity {capacity:.3} MW"
        )));
    }
    let problem = build_kkt_lcp(network, demand)?;
    let sol = match solve_lcp(&problem) {
        Ok(s) => s,
        Err(Error::RayTermination { .. }) => {
            return Err(Error::Infeasible(format!(
                "demand of {total:.3} MW cannot be delivered within transmission limits"
            )))
        }
        Err(e) => return Err(e),
    };
    if sol.residual > 1e-8 {
        return Err(Error::SolverFailure(format!(
            "complementarity residual {:.3e} above tolerance",
            sol.residual
        )));
    }
    Ok(decode(network, demand, &sol.x, sol.residual, sol.pivots))
}

pub(crate) fn decode(
    network: &Network,
    demand: &DemandVector,
    x: &[f64],
    residual: f64,
    pivots: usize,
) -> DispatchResult {
    let lay = LcpLayout::of(network);
    let g: Vec<f64> = (0..lay.n_buses).map(|n| x[lay.g(n)]).collect();
    let lambda = x[lay.lambda()];
    let mu_upper: Vec<f64> = (0..lay.n_lines).map(|l| x[lay.mu_upper(l)]).collect();
    let mu_lower: Vec<f64> = (0..lay.n_lines).map(|l| x[lay.mu_lower(l)]).collect();
    let eta_upper: Vec<f64> = (0..lay.n_buses).map(|n| x[lay.eta_upper(n)]).collect();
    let lmp = lmp_from_duals(network, lambda, &mu_upper, &mu_lower);
    let objective = g
        .iter()
        .zip(&network.generators)
        .map(|(gi, gen)| gen.cost(*gi))
        .sum();
    let licq_violated = licq_violated(network, demand, &g);
    DispatchResult {
        g,
        lambda,
        mu_upper,
        mu_lower,
        eta_upper,
        lmp,
        objective,
        licq_violated,
        residual,
        pivots,
    }
}
