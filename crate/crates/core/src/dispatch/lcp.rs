//! Linear complementarity problems and Lemke's complementary pivoting method.
//!
//! Finds `x ≥ 0` with `w = u + M x ≥ 0` and `xᵀw = 0`. The tableau form is
//! `I·w − M·z − d·z₀ = u` with covering vector `d = 1`; ties in the ratio
//! test are broken lexicographically on the rows of the current basis
//! inverse, which rules out cycling under degeneracy.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `0 ≤ x ⊥ u + M x ≥ 0`, with `M` stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LcpProblem {
    pub u: Vec<f64>,
    pub m: Vec<f64>,
}

impl LcpProblem {
    pub fn new(u: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        let n = u.len();
        if m.len() != n * n {
            return Err(Error::Input(format!(
                "LCP matrix has {} entries, expected {n}x{n}",
                m.len()
            )));
        }
        Ok(LcpProblem { u, m })
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn m_at(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim() + j]
    }

    /// `w = u + M x`
    pub fn slack(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.u[i]
                    + self.m[i * n..(i + 1) * n]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Natural residual `max_i |min(x_i, w_i)|`, scaled by `1 + ‖u‖∞`.
    /// Zero exactly when `x` solves the problem.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let w = self.slack(x);
        let scale = 1.0 + self.u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| xi.min(*wi).abs())
            .fold(0.0, f64::max)
            / scale
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LcpSolution {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub pivots: usize,
    pub residual: f64,
}

const PIVOT_TOL: f64 = 1e-12;
const RATIO_TOL: f64 = 1e-11;

struct Tableau {
    n: usize,
    width: usize,
    data: Vec<f64>,
    /// Variable in each row: `0..n` are `w`, `n..2n` are `z`, `2n` is `z₀`.
    basis: Vec<usize>,
}

impl Tableau {
    fn new(problem: &LcpProblem) -> Self {
        let n = problem.dim();
        let width = 2 * n + 2;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            let row = &mut data[i * width..(i + 1) * width];
            row[i] = 1.0;
            for j in 0..n {
                row[n + j] = -problem.m_at(i, j);
            }
            row[2 * n] = -1.0;
            row[2 * n + 1] = problem.u[i];
        }
        Tableau {
            n,
            width,
            data,
            basis: (0..n).collect(),
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn artificial(&self) -> usize {
        2 * self.n
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        let (head, rest) = self.data.split_at_mut(r * w);
        let (prow, tail) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= p;
        }
        prow[c] = 1.0;
        for row in head.chunks_exact_mut(w).chain(tail.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Lexicographic comparison of rows `a` and `b` scaled by `1/da`, `1/db`,
    /// over `(rhs, B⁻¹ row)`. `B⁻¹` occupies the `w` columns.
    fn lex_cmp(&self, a: usize, da: f64, b: usize, db: f64) -> Ordering {
        let cols = std::iter::once(self.width - 1).chain(0..self.n);
        for j in cols {
            let va = self.at(a, j) / da;
            let vb = self.at(b, j) / db;
            let scale = 1.0 + va.abs().max(vb.abs());
            if (va - vb).abs() > RATIO_TOL * scale {
                return va.partial_cmp(&vb).unwrap_or(Ordering::Equal);
            }
        }
        Ordering::Equal
    }
}

fn complement(var: usize, n: usize) -> usize {
    if var < n {
        var + n
    } else {
        var - n
    }
}

/// Solves the LCP by Lemke's method. Deterministic: the pivot sequence is a
/// function of the problem data only.
pub fn solve_lcp(problem: &LcpProblem) -> Result<LcpSolution> {
    let n = problem.dim();
    if problem.u.iter().chain(&problem.m).any(|v| !v.is_finite()) {
        return Err(Error::Input("LCP data contains non-finite values".into()));
    }
    if problem.u.iter().all(|&v| v >= 0.0) {
        let x = vec![0.0; n];
        return Ok(LcpSolution {
            w: problem.u.clone(),
            residual: 0.0,
            x,
            pivots: 0,
        });
    }

    let mut t = Tableau::new(problem);
    let max_pivots = 10 * n * n;

    // z₀ enters at the lexicographically smallest (most negative) row.
    let mut r = 0;
    for i in 1..n {
        if t.lex_cmp(i, 1.0, r, 1.0) == Ordering::Less {
            r = i;
        }
    }
    let art = t.artificial();
    let mut leaving = t.basis[r];
    t.pivot(r, art);
    let mut pivots = 1;

    loop {
        let entering = complement(leaving, n);
        let mut best: Option<usize> = None;
        let mut best_art = false;
        for i in 0..n {
            let d = t.at(i, entering);
            if d <= PIVOT_TOL {
                continue;
            }
            match best {
                None => {
                    best = Some(i);
                    best_art = t.basis[i] == art;
                }
                Some(b) => {
                    let db = t.at(b, entering);
                    // Prefer z₀ whenever it ties on the ratio itself.
                    let ri = t.rhs(i) / d;
                    let rb = t.rhs(b) / db;
                    let tie = (ri - rb).abs() <= RATIO_TOL * (1.0 + ri.abs().max(rb.abs()));
                    if tie && t.basis[i] == art {
                        best = Some(i);
                        best_art = true;
                    } else if tie && best_art {
                        continue;
                    } else if t.lex_cmp(i, d, b, db) == Ordering::Less {
                        best = Some(i);
                        best_art = t.basis[i] == art;
                    }
                }
            }
        }
        let Some(r) = best else {
            let mut basis = t.basis.clone();
            basis.sort_unstable();
            return Err(Error::RayTermination { pivots, basis });
        };
        leaving = t.basis[r];
        t.pivot(r, entering);
        pivots += 1;
        if leaving == art {
            break;
        }
        if pivots > max_pivots {
            return Err(Error::SolverFailure(format!(
                "Lemke exceeded {max_pivots} pivots on a problem of dimension {n}"
            )));
        }
    }

    let mut x = vec![0.0; n];
    for (i, &var) in t.basis.iter().enumerate() {
        if (n..2 * n).contains(&var) {
            x[var - n] = t.rhs(i).max(0.0);
        }
    }
    polish(problem, &t.basis, &mut x);
    let w = problem.slack(&x);
    let residual = problem.residual(&x);
    Ok(LcpSolution {
        x,
        w,
        pivots,
        residual,
    })
}

/// Re-solves the final basic system directly to remove round-off
/// accumulated over the pivot sequence. Keeps the pivoted solution if the
/// direct solve is not an improvement.
fn polish(problem: &LcpProblem, basis: &[usize], x: &mut [f64]) {
    let n = problem.dim();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for (col, &var) in basis.iter().enumerate() {
        for i in 0..n {
            b[(i, col)] = if var < n {
                if i == var {
                    1.0
                } else {
                    0.0
                }
            } else {
                -problem.m_at(i, var - n)
            };
        }
    }
    let rhs = DVector::from_column_slice(&problem.u);
    let Some(sol) = b.lu().solve(&rhs) else {
        return;
    };
    let mut candidate = vec![0.0; n];
    for (k, &var) in basis.iter().enumerate() {
        if (n..2 * n).contains(&var) {
            candidate[var - n] = sol[k].max(0.0);
        }
    }
    if problem.residual(&candidate) <= problem.residual(x) {
        x.copy_from_slice(&candidate);
    }
}
