//! Active-set enumeration oracle for small dispatch instances.
//!
//! Every constraint is written as `aₖᵀg ≥ bₖ`. For each candidate active set
//! `S` the equality-constrained KKT system
//!
//! ```text
//! Λg − A_Sᵀν = −β,   A_S g = b_S
//! ```
//!
//! is solved densely; the first set whose solution is primal feasible with
//! nonnegative multipliers is the optimum (unique by strong convexity).
//! Sets are enumerated by increasing size, up to `N` constraints, which is
//! exhaustive whenever LICQ holds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{licq_violated, lmp_from_duals, solve_ed, DemandVector, DispatchResult};
use crate::error::{Error, Result};
use crate::grid::{GeneratorCost, Line, Network};

pub const MAX_BUSES: usize = 4;
pub const MAX_LINES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Balance,
    FlowUpper(usize),
    FlowLower(usize),
    Capacity(usize),
    NonNegative(usize),
}

struct Constraint {
    kind: Kind,
    a: Vec<f64>,
    b: f64,
}

impl Constraint {
    fn conflicts(&self, other: &Constraint) -> bool {
        use Kind::*;
        matches!(
            (self.kind, other.kind),
            (FlowUpper(x), FlowLower(y)) | (FlowLower(x), FlowUpper(y))
                | (Capacity(x), NonNegative(y)) | (NonNegative(x), Capacity(y)) if x == y
        )
    }
}

fn constraints(network: &Network, demand: &DemandVector) -> Vec<Constraint> {
    let n = network.n_buses;
    let b = demand.as_slice();
    let mut out = vec![Constraint {
        kind: Kind::Balance,
        a: vec![1.0; n],
        b: demand.total(),
    }];
    for l in 0..network.n_lines() {
        let row = network.ptdf.row(l);
        let pb: f64 = row.iter().zip(b).map(|(p, x)| p * x).sum();
        let cap = network.lines[l].capacity;
        out.push(Constraint {
            kind: Kind::FlowUpper(l),
            a: row.iter().map(|p| -p).collect(),
            b: -cap - pb,
        });
        out.push(Constraint {
            kind: Kind::FlowLower(l),
            a: row.to_vec(),
            b: pb - cap,
        });
    }
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        out.push(Constraint {
            kind: Kind::NonNegative(k),
            a: e.clone(),
            b: 0.0,
        });
        out.push(Constraint {
            kind: Kind::Capacity(k),
            a: e.iter().map(|v| -v).collect(),
            b: -network.generators[k].capacity,
        });
    }
    out
}

/// Solves the KKT system for one active set; `None` if singular.
fn solve_active(network: &Network, cons: &[Constraint], active: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = network.n_buses;
    let k = active.len();
    let dim = n + k;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for i in 0..n {
        a[(i, i)] = network.generators[i].alpha;
        rhs[i] = -network.generators[i].beta;
    }
    for (j, &c) in active.iter().enumerate() {
        for i in 0..n {
            a[(i, n + j)] = -cons[c].a[i];
            a[(n + j, i)] = cons[c].a[i];
        }
        rhs[n + j] = cons[c].b;
    }
    let sol = a.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).iter().copied().collect(), sol.rows(n, k).iter().copied().collect()))
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Reference dispatch by exhaustive active-set enumeration. Restricted to
/// `N ≤ 4` buses and `L ≤ 6` lines.
pub fn brute_force_ed(network: &Network, demand: &DemandVector) -> Result<DispatchResult> {
    let n = network.n_buses;
    if n > MAX_BUSES || network.n_lines() > MAX_LINES {
        return Err(Error::Usage(format!(
            "brute-force dispatch is limited to {MAX_BUSES} buses and {MAX_LINES} lines (got {n} and {})",
            network.n_lines()
        )));
    }
    if demand.len() != n {
        return Err(Error::Input(format!("demand has {} entries for {n} buses", demand.len())));
    }
    let cons = constraints(network, demand);
    let scale = 1.0
        + demand.total().abs()
        + network.generators.iter().map(|g| g.beta.abs()).fold(0.0, f64::max);
    let tol = 1e-9 * scale;

    for size in 0..=n.min(cons.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let compatible = idx
                .iter()
                .enumerate()
                .all(|(p, &i)| idx[p + 1..].iter().all(|&j| !cons[i].conflicts(&cons[j])));
            if compatible {
                if let Some((g, nu)) = solve_active(network, &cons, &idx) {
                    let primal_ok = cons.iter().all(|c| {
                        c.a.iter().zip(&g).map(|(a, x)| a * x).sum::<f64>() - c.b >= -tol
                    });
                    let dual_ok = nu.iter().all(|&v| v >= -tol);
                    if primal_ok && dual_ok {
                        return Ok(assemble(network, demand, &cons, &idx, g, &nu));
                    }
                }
            }
            if size == 0 || !next_combination(&mut idx, cons.len()) {
                break;
            }
        }
    }
    Err(Error::Infeasible("no KKT-consistent active set".into()))
}

fn assemble(
    network: &Network,
    demand: &DemandVector,
    cons: &[Constraint],
    active: &[usize],
    g: Vec<f64>,
    nu: &[f64],
) -> DispatchResult {
    let nl = network.n_lines();
    let mut lambda = 0.0;
    let mut mu_upper = vec![0.0; nl];
    let mut mu_lower = vec![0.0; nl];
    let mut eta_upper = vec![0.0; network.n_buses];
    for (&c, &v) in active.iter().zip(nu) {
        let v = v.max(0.0);
        match cons[c].kind {
            Kind::Balance => lambda = v,
            Kind::FlowUpper(l) => mu_upper[l] = v,
            Kind::FlowLower(l) => mu_lower[l] = v,
            Kind::Capacity(k) => eta_upper[k] = v,
            Kind::NonNegative(_) => {}
        }
    }
    let lmp = lmp_from_duals(network, lambda, &mu_upper, &mu_lower);
    let objective = g
        .iter()
        .zip(&network.generators)
        .map(|(x, gen)| gen.cost(*x))
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
        residual: 0.0,
        pivots: 0,
    }
}

/// A random connected network of 2 to 4 buses small enough for enumeration.
/// Line limits are tight enough that a good share of instances congest.
pub fn random_network<R: Rng + ?Sized>(rng: &mut R) -> Network {
    let n = rng.random_range(2..=MAX_BUSES);
    let mut pairs = Vec::new();
    // Random spanning tree, then extra edges up to the line guard.
    for k in 1..n {
        pairs.push((rng.random_range(0..k), k));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !pairs.contains(&(a, b)) && pairs.len() < MAX_LINES && rng.random_bool(0.5) {
                pairs.push((a, b));
            }
        }
    }
    let lines = pairs
        .into_iter()
        .map(|(a, b)| Line {
            from_bus: a,
            to_bus: b,
            reactance: Some(rng.random_range(0.05..0.5)),
            capacity: rng.random_range(30.0..300.0),
        })
        .collect();
    let generators = (0..n)
        .map(|_| GeneratorCost {
            alpha: rng.random_range(0.0118..0.0684),
            beta: rng.random_range(150.0..233.0),
            gamma: 0.0,
            capacity: rng.random_range(200.0..600.0),
        })
        .collect();
    Network::from_reactances(n, lines, generators, 0).expect("spanning tree keeps the network connected")
}

/// Outcome of comparing the pivoting solver with enumeration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub cases: usize,
    /// Draws with no feasible dispatch, which are replaced.
    pub skipped: usize,
    pub congested: usize,
    /// MW
    pub max_dispatch_gap: f64,
    /// $/MWh
    pub max_price_gap: f64,
}

/// Solves `cases` random feasible instances both ways and records the
/// largest disagreement.
pub fn cross_check(cases: usize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    while report.cases < cases {
        let net = random_network(&mut rng);
        let cap = net.total_capacity();
        let b: Vec<f64> = (0..net.n_buses)
            .map(|_| rng.random_range(0.0..0.6) * cap / net.n_buses as f64)
            .collect();
        let reference = match DemandVector::new(b).and_then(|d| brute_force_ed(&net, &d).map(|r| (d, r))) {
            Ok(x) => x,
            Err(Error::Infeasible(_) | Error::Input(_)) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (demand, reference) = reference;
        let lemke = solve_ed(&net, &demand)?;
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        report.max_dispatch_gap = report.max_dispatch_gap.max(gap(&lemke.g, &reference.g));
        report.max_price_gap = report.max_price_gap.max(gap(&lemke.lmp, &reference.lmp));
        if reference.mu_upper.iter().chain(&reference.mu_lower).any(|&m| m > 1e-9) {
            report.congested += 1;
        }
        report.cases += 1;
    }
    Ok(report)
}
