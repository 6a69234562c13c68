//! Cyclic-day value iteration for a price-taking battery.
//!
//! State is the SoC grid point `i` and hour-of-day `h`; hour `H-1` wraps to
//! hour `0`. From SoC `e` the admissible actions are `A` uniform points on
//! `[-e, 1-e]`, so action index `k` always lands at `L_k = k/(A-1)` whatever
//! `e` is. The continuation value at a landing point is read off the SoC grid
//! either by linear interpolation (default) or by snapping to the nearest
//! grid point. Either way it depends on `k` only, so one backup is
//!
//! ```text
//! C_k    = β·V_{h+1}(L_k)
//! V_h(i) = max_k  P_h·ρ(L_k − e_i) + C_k
//! ```
//!
//! with the unit reward `ρ` tabulated once per grid.
//!
//! Snapping lets a small discharge land back on the starting grid point, so
//! the table can book revenue without losing charge. With discount factors
//! close to 1 that phantom income is worth more than real arbitrage, which is
//! why interpolation is the default.
//!
//! The solver runs Gauss–Seidel sweeps backward through the day. A sweep maps
//! the hour-0 values `v` to `D(v)`, and `D(v + c) = D(v) + β^H·c` for
//! constants `c`. After each sweep the midpoint `m` of the change `d = D(v) − v`
//! is extrapolated geometrically, which removes the slowly decaying constant
//! mode; the half-span of `d` then contracts by at least `β^H` per sweep.

use serde::{Deserialize, Serialize};

use super::battery::{unit_kernel, EfficiencyParams};
use crate::error::{Error, Result};

/// How a landing SoC between grid points is valued.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Landing {
    #[default]
    Interpolate,
    Nearest,
}

/// Per-grid reward table shared by every solve on the same grids.
#[derive(Clone, Debug)]
pub struct BellmanKernel {
    soc_points: usize,
    action_points: usize,
    params: EfficiencyParams,
    landing: Landing,
    /// `reward[i * A + k] = ρ(L_k − e_i)`
    reward: Vec<f64>,
    /// Interpolation stencil per landing: lower grid index and upper weight.
    stencil: Vec<(usize, f64)>,
}

impl BellmanKernel {
    pub fn new(soc_points: usize, action_points: usize, params: EfficiencyParams) -> Result<Self> {
        Self::with_landing(soc_points, action_points, params, Landing::default())
    }

    pub fn with_landing(
        soc_points: usize,
        action_points: usize,
        params: EfficiencyParams,
        landing: Landing,
    ) -> Result<Self> {
        if soc_points < 2 || action_points < 2 {
            return Err(Error::Input(format!(
                "grids need at least 2 points (soc {soc_points}, actions {action_points})"
            )));
        }
        params.validate()?;
        let (g, a) = (soc_points, action_points);
        let mut reward = Vec::with_capacity(g * a);
        for i in 0..g {
            let e = grid_point(i, g);
            for k in 0..a {
                reward.push(unit_kernel(grid_point(k, a) - e, &params));
            }
        }
        let stencil = (0..a)
            .map(|k| {
                let x = grid_point(k, a) * (g - 1) as f64;
                match landing {
                    Landing::Nearest => (snap(grid_point(k, a), g), 0.0),
                    Landing::Interpolate => {
                        let lo = (x.floor() as usize).min(g - 2);
                        (lo, (x - lo as f64).clamp(0.0, 1.0))
                    }
                }
            })
            .collect();
        Ok(BellmanKernel {
            soc_points,
            action_points,
            params,
            landing,
            reward,
            stencil,
        })
    }

    pub fn soc_points(&self) -> usize {
        self.soc_points
    }

    pub fn action_points(&self) -> usize {
        self.action_points
    }

    pub fn params(&self) -> &EfficiencyParams {
        &self.params
    }

    pub fn landing(&self) -> Landing {
        self.landing
    }

    /// `out[k] = scale · V(L_k)`
    fn continuation(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        for (o, &(lo, w)) in out.iter_mut().zip(&self.stencil) {
            *o = scale * if w == 0.0 { v[lo] } else { (1.0 - w) * v[lo] + w * v[lo + 1] };
        }
    }

    /// `out[i] = max_k P·ρ(L_k − e_i) + c[k]`.
    ///
    /// `ρ` is concave, so `ρ(L_k − e_i)` is supermodular in `(i, k)` and the
    /// smallest maximizing `k` is monotone in `i` (nondecreasing for `P ≥ 0`,
    /// nonincreasing for `P < 0`) whatever `c` is. Divide and conquer over
    /// rows then needs `O(A log G)` evaluations instead of `G·A`.
    fn backup(&self, price: f64, c: &[f64], out: &mut [f64]) {
        self.split(price, c, out, 0, self.soc_points, 0, self.action_points);
    }

    #[allow(clippy::too_many_arguments)]
    fn split(&self, price: f64, c: &[f64], out: &mut [f64], i0: usize, i1: usize, k0: usize, k1: usize) {
        if i0 >= i1 {
            return;
        }
        let mid = (i0 + i1) / 2;
        let row = &self.reward[mid * self.action_points..(mid + 1) * self.action_points];
        let mut best = f64::NEG_INFINITY;
        let mut arg = k0;
        for k in k0..k1 {
            let v = price * row[k] + c[k];
            if v > best {
                best = v;
                arg = k;
            }
        }
        out[mid] = best;
        if price >= 0.0 {
            self.split(price, c, out, i0, mid, k0, arg + 1);
            self.split(price, c, out, mid + 1, i1, arg, k1);
        } else {
            self.split(price, c, out, i0, mid, arg, k1);
            self.split(price, c, out, mid + 1, i1, k0, arg + 1);
        }
    }

    /// Reference backup scanning every action for every row.
    pub fn backup_exhaustive(&self, price: f64, c: &[f64], out: &mut [f64]) {
        let a = self.action_points;
        for (i, o) in out.iter_mut().enumerate() {
            *o = row_max(price, &self.reward[i * a..(i + 1) * a], c);
        }
    }
}

#[inline]
fn row_max(price: f64, r: &[f64], c: &[f64]) -> f64 {
    let mut acc = [f64::NEG_INFINITY; 4];
    let mut rc = r.chunks_exact(4);
    let mut cc = c.chunks_exact(4);
    for (rs, cs) in (&mut rc).zip(&mut cc) {
        for l in 0..4 {
            let v = price * rs[l] + cs[l];
            acc[l] = if v > acc[l] { v } else { acc[l] };
        }
    }
    let mut m = acc[0].max(acc[1]).max(acc[2].max(acc[3]));
    for (x, y) in rc.remainder().iter().zip(cc.remainder()) {
        m = m.max(price * x + y);
    }
    m
}

#[inline]
pub fn grid_point(i: usize, points: usize) -> f64 {
    i as f64 / (points - 1) as f64
}

/// Nearest SoC grid index for a fraction in `[0, 1]`.
#[inline]
pub fn snap(e: f64, points: usize) -> usize {
    ((e * (points - 1) as f64).round().max(0.0) as usize).min(points - 1)
}

/// Solved table of discounted values, in $ per unit of battery capacity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    /// Hour-major: `values[h * soc_points + i]`.
    pub values: Vec<f64>,
    pub soc_points: usize,
    pub action_points: usize,
    pub hours: usize,
    pub discount: f64,
    pub params: EfficiencyParams,
    pub landing: Landing,
    /// Half-span of the hour-0 change after each sweep (see module docs).
    pub sweep_residuals: Vec<f64>,
    /// Sup-norm of `T V − V` for the plain Bellman operator at the returned table.
    pub bellman_residual: f64,
}

impl ValueFunction {
    pub fn hour(&self, h: usize) -> &[f64] {
        &self.values[h * self.soc_points..(h + 1) * self.soc_points]
    }

    pub fn at(&self, h: usize, i: usize) -> f64 {
        self.values[h * self.soc_points + i]
    }

    pub fn soc_grid(&self) -> Vec<f64> {
        (0..self.soc_points).map(|i| grid_point(i, self.soc_points)).collect()
    }
}

/// Reusable solver configuration.
#[derive(Clone, Debug)]
pub struct ValueSolver {
    pub kernel: BellmanKernel,
    pub discount: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    /// Apply one extra Jacobi pass after convergence to measure the true
    /// Bellman residual. When off, `bellman_residual` holds the a-priori
    /// bound `β·half_span` instead.
    pub verify: bool,
}

impl ValueSolver {
    pub fn new(kernel: BellmanKernel, discount: f64, tol: f64) -> Result<Self> {
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Input(format!("discount {discount} outside (0, 1)")));
        }
        if !(tol > 0.0) {
            return Err(Error::Input(format!("tolerance {tol} must be positive")));
        }
        Ok(ValueSolver {
            kernel,
            discount,
            tol,
            max_sweeps: 100_000,
            verify: true,
        })
    }

    /// Applies the plain (Jacobi) Bellman operator to a full table.
    pub fn bellman_operator(&self, beliefs: &[f64], values: &[f64]) -> Vec<f64> {
        let g = self.kernel.soc_points;
        let hours = beliefs.len();
        let mut out = vec![0.0; values.len()];
        let mut c = vec![0.0; self.kernel.action_points];
        for h in 0..hours {
            let next = (h + 1) % hours;
            self.kernel
                .continuation(&values[next * g..(next + 1) * g], self.discount, &mut c);
            self.kernel.backup(beliefs[h], &c, &mut out[h * g..(h + 1) * g]);
        }
        out
    }

    pub fn solve(&self, beliefs: &[f64], warm: Option<&ValueFunction>) -> Result<ValueFunction> {
        let hours = beliefs.len();
        if hours == 0 {
            return Err(Error::Input("belief vector is empty".into()));
        }
        if beliefs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input("beliefs contain non-finite prices".into()));
        }
        let g = self.kernel.soc_points;
        let beta = self.discount;
        let gamma = beta.powi(hours as i32);
        let mut values = match warm {
            Some(vf) if vf.soc_points == g && vf.hours == hours && vf.values.len() == g * hours => {
                vf.values.clone()
            }
            _ => vec![0.0; g * hours],
        };
        // Powers β^(H-h) used to spread the extrapolated shift over the day.
        let depth: Vec<f64> = (0..hours).map(|h| beta.powi((hours - h) as i32)).collect();

        let mut residuals = Vec::new();
        let mut c = vec![0.0; self.kernel.action_points];
        let mut old0 = vec![0.0; g];
        let target = self.tol / beta;
        let mut converged = false;
        for _ in 0..self.max_sweeps {
            old0.copy_from_slice(&values[..g]);
            for h in (0..hours).rev() {
                let next = (h + 1) % hours;
                let (cur, tail) = values[h * g..].split_at_mut(g);
                let source = if next == 0 { &old0[..] } else { &tail[..g] };
                self.kernel.continuation(source, beta, &mut c);
                self.kernel.backup(beliefs[h], &c, cur);
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..g {
                let d = values[j] - old0[j];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let half_span = 0.5 * (hi - lo);
            let shift = 0.5 * (hi + lo) / (1.0 - gamma);
            for h in 0..hours {
                let s = depth[h] * shift;
                for v in &mut values[h * g..(h + 1) * g] {
                    *v += s;
                }
            }
            residuals.push(half_span);
            if half_span <= target {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SolverFailure(format!(
                "value iteration did not reach {} within {} sweeps",
                self.tol, self.max_sweeps
            )));
        }
        let bellman_residual = if self.verify {
            let applied = self.bellman_operator(beliefs, &values);
            applied
                .iter()
                .zip(&values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        } else {
            beta * residuals.last().copied().unwrap_or(0.0)
        };
        Ok(ValueFunction {
            values,
            soc_points: g,
            action_points: self.kernel.action_points,
            hours,
            discount: beta,
            params: self.kernel.params,
            landing: self.kernel.landing,
            sweep_residuals: residuals,
            bellman_residual,
        })
    }
}

/// One-shot solve from scratch.
pub fn solve_value_function(
    beliefs: &[f64],
    params: &EfficiencyParams,
    discount: f64,
    soc_points: usize,
    action_points: usize,
    tol: f64,
) -> Result<ValueFunction> {
    let kernel = BellmanKernel::new(soc_points, action_points, *params)?;
    ValueSolver::new(kernel, discount, tol)?.solve(beliefs, None)
}

/// Best action from SoC `e` at hour `h` when the price for this hour is
/// believed to be `belief`. Searches the whole action grid on `[-e, 1-e]`;
/// near-ties go to the smallest `|a|`, then to discharging.
pub fn optimal_action(vf: &ValueFunction, e: f64, h: usize, belief: f64) -> f64 {
    let e = e.clamp(0.0, 1.0);
    let n = vf.action_points;
    let g = vf.soc_points;
    let next = vf.hour((h + 1) % vf.hours);
    let mut best_a = 0.0f64;
    let mut best_v = f64::NEG_INFINITY;
    for k in 0..n {
        let landing = grid_point(k, n);
        let a = landing - e;
        let v = belief * unit_kernel(a, &vf.params) + vf.discount * read_value(next, landing, g, vf.landing);
        let tol = 1e-12 * (1.0 + v.abs());
        let better = if k == 0 || v > best_v + tol {
            true
        } else if (v - best_v).abs() <= tol {
            a.abs() < best_a.abs() - 1e-15 || ((a.abs() - best_a.abs()).abs() <= 1e-15 && a < best_a)
        } else {
            false
        };
        if better {
            best_v = v;
            best_a = a;
        }
    }
    best_a
}

/// Value of SoC `e` from one hour's row of the table.
pub fn read_value(row: &[f64], e: f64, points: usize, landing: Landing) -> f64 {
    match landing {
        Landing::Nearest => row[snap(e, points)],
        Landing::Interpolate => {
            let x = e.clamp(0.0, 1.0) * (points - 1) as f64;
            let lo = (x.floor() as usize).min(points - 2);
            let w = x - lo as f64;
            (1.0 - w) * row[lo] + w * row[lo + 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosumer::battery::{soc_transition, unit_reward};
    use proptest::prelude::*;

    const P: EfficiencyParams = EfficiencyParams {
        alpha0: 0.95,
        alpha_c: 0.1,
        alpha_d: 0.1,
    };

    fn solver(beta: f64, g: usize, a: usize) -> ValueSolver {
        ValueSolver::new(BellmanKernel::new(g, a, P).unwrap(), beta, 1e-9).unwrap()
    }

    fn duck(h: usize) -> f64 {
        // Cheap midday, expensive evening.
        let x = h as f64;
        180.0 - 25.0 * ((x - 13.0) / 24.0 * std::f64::consts::TAU).cos()
    }

    /// Finite-horizon dynamic program over the raw action grid, evaluated
    /// directly from the dynamics without the reward table: the value of `days` days starting at hour 0 with zero
    /// terminal value.
    fn rollout(beliefs: &[f64], beta: f64, g: usize, a: usize, days: usize) -> Vec<Vec<f64>> {
        let hours = beliefs.len();
        let mut v = vec![0.0; g];
        let mut per_hour = vec![vec![0.0; g]; hours];
        for step in (0..days * hours).rev() {
            let h = step % hours;
            let mut nv = vec![0.0; g];
            for (i, slot) in nv.iter_mut().enumerate() {
                let e = grid_point(i, g);
                let mut best = f64::NEG_INFINITY;
                for k in 0..a {
                    let act = -e + grid_point(k, a);
                    let land = soc_transition(e, act);
                    let val = unit_reward(act, beliefs[h], &P)
                        + beta * read_value(&v, land, g, Landing::Interpolate);
                    best = best.max(val);
                }
                *slot = best;
            }
            v = nv;
            per_hour[h] = v.clone();
        }
        per_hour
    }

    #[test]
    fn flat_prices_keep_an_empty_battery_idle() {
        let beliefs = vec![200.0; 24];
        let vf = solver(0.95, 100, 201).solve(&beliefs, None).unwrap();
        for h in 0..24 {
            assert_eq!(optimal_action(&vf, 0.0, h, beliefs[h]), 0.0);
        }
        // Brute-force rollout: charging at a flat price never pays back.
        let r = rollout(&beliefs, 0.95, 100, 201, 3);
        for h in 0..24 {
            assert!(r[h][0].abs() < 1e-9, "hour {h}: {}", r[h][0]);
            assert!(vf.at(h, 0).abs() < 1e-6);
        }
    }

    #[test]
    fn tiny_discount_is_myopic() {
        let beliefs: Vec<f64> = (0..24).map(duck).collect();
        let vf = solver(1e-6, 50, 101).solve(&beliefs, None).unwrap();
        let scale = beliefs.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        for h in 0..24 {
            for i in 0..50 {
                let e = grid_point(i, 50);
                let myopic = (0..101)
                    .map(|k| unit_reward(-e + grid_point(k, 101), beliefs[h], &P))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!((vf.at(h, i) - myopic).abs() <= 1e-4 * scale);
            }
        }
    }

    #[test]
    fn converged_table_matches_long_rollout() {
        let beliefs: Vec<f64> = (0..24).map(duck).collect();
        let beta = 0.9;
        let vf = solver(beta, 20, 41).solve(&beliefs, None).unwrap();
        // 40 days at β = 0.9 per hour leaves a truncation error of order β^960.
        let r = rollout(&beliefs, beta, 20, 41, 40);
        for h in 0..24 {
            for i in 0..20 {
                assert!((vf.at(h, i) - r[h][i]).abs() < 1e-7, "h {h} i {i}");
            }
        }
    }

    #[test]
    fn full_battery_discharges_at_the_peak() {
        let mut beliefs = vec![150.0; 24];
        beliefs[19] = 300.0;
        let vf = solver(0.99, 100, 201).solve(&beliefs, None).unwrap();
        assert!(optimal_action(&vf, 1.0, 19, beliefs[19]) < 0.0);
        // Empty at the peak: cannot discharge, and buying there is a loss.
        assert_eq!(optimal_action(&vf, 0.0, 19, beliefs[19]), 0.0);
    }

    #[test]
    fn residuals_contract_and_table_is_converged() {
        let beliefs: Vec<f64> = (0..24).map(duck).collect();
        for beta in [0.95, 0.999] {
            let s = ValueSolver::new(BellmanKernel::new(100, 201, P).unwrap(), beta, 1e-6).unwrap();
            let vf = s.solve(&beliefs, None).unwrap();
            for w in vf.sweep_residuals.windows(2) {
                assert!(w[1] <= (beta + 1e-12) * w[0], "{:?}", vf.sweep_residuals);
            }
            assert!(vf.bellman_residual <= 1e-6, "{}", vf.bellman_residual);
        }
    }

    #[test]
    fn warm_start_reaches_the_same_fixed_point() {
        let beliefs: Vec<f64> = (0..24).map(duck).collect();
        let s = solver(0.99, 60, 121);
        let cold = s.solve(&beliefs, None).unwrap();
        let mut moved = beliefs.clone();
        moved[5] += 3.0;
        let prior = s.solve(&moved, None).unwrap();
        let warm = s.solve(&beliefs, Some(&prior)).unwrap();
        for (a, b) in cold.values.iter().zip(&warm.values) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(warm.sweep_residuals.len() <= cold.sweep_residuals.len());
    }

    #[test]
    fn rejects_non_finite_beliefs() {
        let mut beliefs = vec![100.0; 24];
        beliefs[3] = f64::NAN;
        assert!(matches!(solver(0.9, 10, 21).solve(&beliefs, None), Err(Error::Input(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn monotone_backup_matches_exhaustive(
            price in -300.0..600.0f64,
            c in prop::collection::vec(-1000.0..1000.0f64, 201),
        ) {
            let k = BellmanKernel::new(100, 201, P).unwrap();
            let mut fast = vec![0.0; 100];
            let mut slow = vec![0.0; 100];
            k.backup(price, &c, &mut fast);
            k.backup_exhaustive(price, &c, &mut slow);
            for (f, s) in fast.iter().zip(&slow) {
                prop_assert!((f - s).abs() <= 1e-9 * (1.0 + s.abs()), "{f} vs {s}");
            }
        }

        #[test]
        fn bellman_operator_is_a_contraction(
            beliefs in prop::collection::vec(-50.0..400.0f64, 24),
            a in prop::collection::vec(-500.0..500.0f64, 24 * 12),
            b in prop::collection::vec(-500.0..500.0f64, 24 * 12),
            beta in 0.5..0.999f64,
        ) {
            let s = ValueSolver::new(BellmanKernel::new(12, 23, P).unwrap(), beta, 1e-6).unwrap();
            let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            let ta = s.bellman_operator(&beliefs, &a);
            let tb = s.bellman_operator(&beliefs, &b);
            prop_assert!(dist(&ta, &tb) <= (beta + 1e-12) * dist(&a, &b) + 1e-9);
            let tta = s.bellman_operator(&beliefs, &ta);
            prop_assert!(dist(&tta, &ta) <= (beta + 1e-12) * dist(&ta, &a) + 1e-9);
        }

        #[test]
        fn value_is_nondecreasing_in_soc(beliefs in prop::collection::vec(1.0..400.0f64, 24)) {
            let vf = solver(0.98, 30, 61).solve(&beliefs, None).unwrap();
            for h in 0..24 {
                for w in vf.hour(h).windows(2) {
                    prop_assert!(w[1] >= w[0] - 1e-9);
                }
            }
        }

        #[test]
        fn action_stays_feasible(e in 0.0..=1.0f64, h in 0usize..24, belief in -100.0..500.0f64) {
            let beliefs: Vec<f64> = (0..24).map(duck).collect();
            let vf = solver(0.95, 20, 41).solve(&beliefs, None).unwrap();
            let a = optimal_action(&vf, e, h, belief);
            prop_assert!(a >= -e - 1e-12 && a <= 1.0 - e + 1e-12);
        }
    }
}
