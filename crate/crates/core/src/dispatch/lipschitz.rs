use rand::Rng;

use super::{solve_ed, DemandVector};
use crate::error::{Error, Result};
use crate::grid::Network;
use crate::rng::{self, Purpose};

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// max ‖LMP(B) − LMP(B′)‖∞ / ‖B − B′‖∞ over evaluated pairs ($/MWh per MW)
    pub constant: f64,
    pub pairs: usize,
    /// Sample points or partners skipped because dispatch was infeasible.
    pub infeasible_skipped: usize,
}

fn ratio(a: &[f64], b: &[f64], da: &[f64], db: &[f64]) -> f64 {
    let dist = da
        .iter()
        .zip(db)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if dist == 0.0 {
        return 0.0;
    }
    let dp = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    dp / dist
}

/// Empirical Lipschitz constant of the price map around `base`.
///
/// Each sample draws `B` uniformly from the box `base ± radius` and pairs it
/// with (a) an independent point of the same box and (b) the point
/// `B + radius·sign(Jᵢ)`, where `Jᵢ` is the row of largest absolute sum in a
/// forward-difference Jacobian at `B`. The second pair realises the local
/// ∞-norm operator bound, which uniform sampling alone approaches slowly.
pub fn estimate_lipschitz(
    network: &Network,
    base: &DemandVector,
    n_samples: usize,
    radius: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if !(radius >= 0.0) {
        return Err(Error::Input(format!("radius {radius} must be nonnegative")));
    }
    let n = network.n_buses;
    if base.len() != n {
        return Err(Error::Input(format!("demand has {} entries for {n} buses", base.len())));
    }
    let mut est = LipschitzEstimate {
        constant: 0.0,
        pairs: 0,
        infeasible_skipped: 0,
    };
    let price = |b: &[f64]| -> Option<Vec<f64>> {
        let d = DemandVector::new(b.to_vec()).ok()?;
        solve_ed(network, &d).ok().map(|r| r.lmp)
    };

    for s in 0..n_samples {
        let mut rng = rng::stream(seed, Purpose::Sampling, s as u64, 0, 0);
        let draw = |rng: &mut rng::Stream| -> Vec<f64> {
            base.as_slice()
                .iter()
                .map(|&b| if radius > 0.0 { b + rng.random_range(-radius..=radius) } else { b })
                .collect()
        };
        let b = draw(&mut rng);
        let Some(p) = price(&b) else {
            est.infeasible_skipped += 1;
            continue;
        };

        let partner = draw(&mut rng);
        match price(&partner) {
            Some(pp) => {
                est.constant = est.constant.max(ratio(&p, &pp, &b, &partner));
                est.pairs += 1;
            }
            None => est.infeasible_skipped += 1,
        }

        if radius == 0.0 {
            continue;
        }
        let mut jac = vec![vec![0.0; n]; n];
        let mut ok = true;
        for k in 0..n {
            let mut bk = b.clone();
            bk[k] += radius;
            match price(&bk) {
                Some(pk) => {
                    for i in 0..n {
                        jac[i][k] = (pk[i] - p[i]) / radius;
                    }
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            est.infeasible_skipped += 1;
            continue;
        }
        let row = (0..n)
            .max_by(|&i, &j| {
                let si: f64 = jac[i].iter().map(|v| v.abs()).sum();
                let sj: f64 = jac[j].iter().map(|v| v.abs()).sum();
                si.total_cmp(&sj).then(j.cmp(&i))
            })
            .unwrap_or(0);
        let aligned: Vec<f64> = b
            .iter()
            .zip(&jac[row])
            .map(|(bi, j)| bi + radius * if *j < 0.0 { -1.0 } else { 1.0 })
            .collect();
        match price(&aligned) {
            Some(pa) => {
                est.constant = est.constant.max(ratio(&p, &pa, &b, &aligned));
                est.pairs += 1;
            }
            None => est.infeasible_skipped += 1,
        }
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GeneratorCost;

    fn single_bus() -> Network {
        Network::from_reactances(
            1,
            vec![],
            vec![GeneratorCost {
                alpha: 0.02,
                beta: 150.0,
                gamma: 0.0,
                capacity: 600.0,
            }],
            0,
        )
        .unwrap()
    }

    #[test]
    fn interior_single_bus_recovers_alpha() {
        let est = estimate_lipschitz(&single_bus(), &DemandVector::new(vec![300.0]).unwrap(), 20, 50.0, 1)
            .unwrap();
        assert!((est.constant - 0.02).abs() < 1e-9, "{est:?}");
        assert_eq!(est.infeasible_skipped, 0);
    }

    #[test]
    fn zero_radius_is_zero() {
        let est = estimate_lipschitz(&single_bus(), &DemandVector::new(vec![300.0]).unwrap(), 5, 0.0, 1)
            .unwrap();
        assert_eq!(est.constant, 0.0);
    }

    #[test]
    fn infeasible_samples_are_skipped() {
        let est = estimate_lipschitz(&single_bus(), &DemandVector::new(vec![590.0]).unwrap(), 20, 50.0, 3)
            .unwrap();
        assert!(est.infeasible_skipped > 0);
        assert!(est.constant.is_finite());
    }
}
