//! Battery physics and bid construction. Quantities are fractions of the
//! agent's battery capacity unless stated otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rate-dependent charge/discharge efficiency: `α0 + αd·a` when discharging
/// (`a < 0`), `α0 − αc·a` when charging.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyParams {
    pub alpha0: f64,
    pub alpha_c: f64,
    pub alpha_d: f64,
}

impl Default for EfficiencyParams {
    fn default() -> Self {
        EfficiencyParams {
            alpha0: 0.99,
            alpha_c: 0.02,
            alpha_d: 0.02,
        }
    }
}

impl EfficiencyParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha0 > 0.0
            && self.alpha0 < 1.0
            && self.alpha_c >= 0.0
            && self.alpha_d >= 0.0
            && self.alpha0 - self.alpha_c > 0.0
            && self.alpha0 - self.alpha_d > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "efficiency parameters {self:?} must satisfy 0 < alpha0 < 1, slopes >= 0, \
                 and alpha0 above both slopes"
            )))
        }
    }

    /// Efficiency without the domain check; `a` must lie in `[-1, 1]`.
    #[inline]
    pub fn eta(&self, a: f64) -> f64 {
        if a < 0.0 {
            self.alpha0 + self.alpha_d * a
        } else {
            self.alpha0 - self.alpha_c * a
        }
    }
}

pub fn efficiency(a: f64, params: &EfficiencyParams) -> Result<f64> {
    if !(a.abs() <= 1.0) {
        return Err(Error::Input(format!("action {a} outside [-1, 1]")));
    }
    Ok(params.eta(a))
}

/// Next state of charge, clipped to `[0, 1]`.
#[inline]
pub fn soc_transition(e: f64, a: f64) -> f64 {
    (e + a).clamp(0.0, 1.0)
}

/// Signed energy bid in MWh: net load plus battery flow at the meter.
/// Negative bids are sales.
pub fn make_bid(e: f64, a: f64, q: f64, capacity: f64, params: &EfficiencyParams) -> f64 {
    let load = q * capacity;
    if a < 0.0 {
        load + params.eta(a) * capacity * a.max(-e)
    } else {
        load + capacity * a.min(1.0 - e) / params.eta(a)
    }
}

/// Stage payoff per unit of capacity at price `price` for a feasible action:
/// sale revenue when discharging, purchase cost when charging. The net-load
/// part of the bill does not depend on the action and is left out.
#[inline]
pub fn unit_reward(a: f64, price: f64, params: &EfficiencyParams) -> f64 {
    price * unit_kernel(a, params)
}

/// `unit_reward` at a price of 1.
#[inline]
pub fn unit_kernel(a: f64, params: &EfficiencyParams) -> f64 {
    if a < 0.0 {
        -params.eta(a) * a
    } else {
        -a / params.eta(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const P: EfficiencyParams = EfficiencyParams {
        alpha0: 0.95,
        alpha_c: 0.1,
        alpha_d: 0.1,
    };

    #[test]
    fn efficiency_values() {
        assert_eq!(efficiency(0.0, &P).unwrap(), 0.95);
        assert_relative_eq!(efficiency(-1.0, &P).unwrap(), 0.85, epsilon = 1e-15);
        assert_relative_eq!(efficiency(1.0, &P).unwrap(), 0.85, epsilon = 1e-15);
        assert!(efficiency(1.5, &P).is_err());
        assert!(efficiency(f64::NAN, &P).is_err());
    }

    #[test]
    fn rejects_slopes_above_baseline() {
        let bad = EfficiencyParams {
            alpha0: 0.5,
            alpha_c: 0.6,
            alpha_d: 0.1,
        };
        assert!(bad.validate().is_err());
        assert!(P.validate().is_ok());
    }

    #[test]
    fn transition_clips() {
        assert_eq!(soc_transition(0.9, 0.5), 1.0);
        assert_relative_eq!(soc_transition(0.3, -0.2), 0.1, epsilon = 1e-15);
        assert_eq!(soc_transition(0.1, -0.5), 0.0);
    }

    #[test]
    fn discharge_bid() {
        assert_relative_eq!(make_bid(0.5, -0.5, 0.2, 10.0, &P), -2.5, epsilon = 1e-12);
    }

    #[test]
    fn idle_bid_is_net_load() {
        for e in [0.0, 0.3, 1.0] {
            assert_eq!(make_bid(e, 0.0, 0.2, 10.0, &P), 2.0);
        }
    }

    #[test]
    fn charge_bid_limited_by_headroom() {
        // Independent evaluation: headroom 0.1 of 10 MWh at efficiency 0.9.
        let expected = 0.2 * 10.0 + 10.0 * 0.1 / (0.95 - 0.1 * 0.5);
        assert_relative_eq!(make_bid(0.9, 0.5, 0.2, 10.0, &P), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 3.111_111_111_111_111, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn soc_stays_in_unit_interval(e in 0.0..=1.0f64, actions in prop::collection::vec(-1.0..=1.0f64, 1..50)) {
            let mut s = e;
            for a in actions {
                s = soc_transition(s, a);
                prop_assert!((0.0..=1.0).contains(&s));
            }
        }

        #[test]
        fn bid_is_continuous_at_idle(e in 0.0..=1.0f64, q in -1.0..2.0f64, cap in 0.1..100.0f64) {
            let eps = 1e-9;
            let idle = q * cap;
            prop_assert!((make_bid(e, eps, q, cap, &P) - idle).abs() <= 2.0 * eps * cap);
            prop_assert!((make_bid(e, -eps, q, cap, &P) - idle).abs() <= 2.0 * eps * cap);
        }

        #[test]
        fn bid_minus_load_is_battery_flow(e in 0.0..=1.0f64, a in -1.0..=1.0f64, q in -1.0..2.0f64, cap in 0.1..100.0f64) {
            let flow = make_bid(e, a, q, cap, &P) - q * cap;
            let stored = (soc_transition(e, a) - e) * cap;
            let expected = if a < 0.0 { stored * P.eta(a) } else { stored / P.eta(a) };
            prop_assert!((flow - expected).abs() <= 1e-9 * cap);
        }

        #[test]
        fn kernel_is_strictly_concave(price in 0.01..1000.0f64, k in 1usize..400) {
            let h = 1.0 / 200.0;
            let a = -1.0 + k as f64 * h;
            let f = |x: f64| unit_reward(x, price, &P);
            prop_assert!(f(a - h) - 2.0 * f(a) + f(a + h) < 0.0);
        }
    }
}
