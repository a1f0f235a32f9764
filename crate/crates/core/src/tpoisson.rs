//! Translated Poisson laws `a + Po(lambda)` with integer shift `a`.
//!
//! Fitting from a mean `mu` and variance `var` takes `a = floor(mu - var)` and
//! `lambda = mu - a`, which matches the mean exactly and the variance to
//! within one: `var <= lambda < var + 1`.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::metrics::Pmf;
use crate::special::{ln_factorial, KahanSum};

/// Window tail budget used whenever a translated Poisson law is compared with
/// another mass function.
pub const WINDOW_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslatedPoisson {
    pub shift: i64,
    pub rate: f64,
}

impl TranslatedPoisson {
    pub fn fit(mu: f64, var: f64) -> Result<Self> {
        if !mu.is_finite() || !var.is_finite() {
            return validation(format!("non-finite input: mu = {mu}, var = {var}"));
        }
        if var < 0.0 {
            return validation(format!("var = {var} must be nonnegative"));
        }
        let shift = (mu - var).floor();
        if shift.abs() > 9.0e15 {
            return validation(format!("shift {shift} is outside the exact integer range"));
        }
        Ok(TranslatedPoisson {
            shift: shift as i64,
            rate: mu - shift,
        })
    }

    pub fn mean(&self) -> f64 {
        self.shift as f64 + self.rate
    }

    pub fn variance(&self) -> f64 {
        self.rate
    }

    /// `ln P{k}`; `-inf` off the support.
    pub fn ln_pmf(&self, k: i64) -> f64 {
        if k < self.shift {
            return f64::NEG_INFINITY;
        }
        let j = (k - self.shift) as u64;
        if self.rate == 0.0 {
            return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        j as f64 * self.rate.ln() - self.rate - ln_factorial(j)
    }

    pub fn pmf(&self, k: i64) -> f64 {
        self.ln_pmf(k).exp()
    }

    /// Smallest contiguous window whose complement carries at most `eps`.
    ///
    /// Grows greedily from the mode, always absorbing the heavier neighbour;
    /// unimodality makes the greedy window minimal. The uncovered mass is
    /// recorded as the tail defect.
    pub fn window(&self, eps: f64) -> Pmf {
        assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0, 1)");
        if self.rate == 0.0 {
            return Pmf::point_mass(self.shift);
        }
        let mode = self.shift + self.rate.floor() as i64;
        let mut lo = mode;
        let mut hi = mode;
        let mut left: Vec<f64> = Vec::new();
        let mut right: Vec<f64> = vec![self.pmf(mode)];
        let mut acc = KahanSum::new();
        acc.add(right[0]);
        let mut next_lo = if lo > self.shift {
            self.pmf(lo - 1)
        } else {
            0.0
        };
        let mut next_hi = self.pmf(hi + 1);
        while 1.0 - acc.value() > eps {
            if next_lo == 0.0 && next_hi == 0.0 {
                break;
            }
            if next_lo >= next_hi {
                lo -= 1;
                left.push(next_lo);
                acc.add(next_lo);
                next_lo = if lo > self.shift {
                    self.pmf(lo - 1)
                } else {
                    0.0
                };
            } else {
                hi += 1;
                right.push(next_hi);
                acc.add(next_hi);
                next_hi = self.pmf(hi + 1);
            }
        }
        left.reverse();
        left.extend(right);
        Pmf {
            offset: lo,
            masses: left,
            tail_defect: (1.0 - acc.value()).max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fit_examples() {
        assert_eq!(
            TranslatedPoisson::fit(3.0, 3.0).unwrap(),
            TranslatedPoisson {
                shift: 0,
                rate: 3.0
            }
        );
        let tp = TranslatedPoisson::fit(5.3, 2.0).unwrap();
        assert_eq!(tp.shift, 3);
        assert!((tp.rate - 2.3).abs() < 1e-15);
        assert_eq!(
            TranslatedPoisson::fit(4.0, 1.0).unwrap(),
            TranslatedPoisson {
                shift: 3,
                rate: 1.0
            }
        );
        assert_eq!(
            TranslatedPoisson::fit(7.0, 0.0).unwrap(),
            TranslatedPoisson {
                shift: 7,
                rate: 0.0
            }
        );
        let tp = TranslatedPoisson::fit(7.25, 0.0).unwrap();
        assert_eq!(tp.shift, 7);
        assert!((tp.rate - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(TranslatedPoisson::fit(1.0, -0.5).is_err());
        assert!(TranslatedPoisson::fit(f64::NAN, 1.0).is_err());
        assert!(TranslatedPoisson::fit(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn pmf_examples() {
        let po = TranslatedPoisson {
            shift: 0,
            rate: 3.0,
        };
        assert!((po.pmf(0) - 0.049_787_068_367_863_94).abs() < 1e-16);
        let tp = TranslatedPoisson {
            shift: 3,
            rate: 2.3,
        };
        assert_eq!(tp.pmf(2), 0.0);
        // e^{-2.3} by its series, independent of the log-space route
        let series: f64 = (0..60)
            .map(|k| (-2.3f64).powi(k) / (1..=k).map(|i| i as f64).product::<f64>())
            .sum();
        assert!((tp.pmf(3) - series).abs() < 1e-15);
        assert!((tp.pmf(3) - 0.100_258_8).abs() < 1e-7);
    }

    #[test]
    fn pmf_large_arguments_stay_finite() {
        let tp = TranslatedPoisson {
            shift: -5,
            rate: 2.0e6,
        };
        let p = tp.pmf(2_000_000 - 5);
        // Stirling: P(mode) ~ 1 / sqrt(2 pi lambda)
        let approx = 1.0 / (2.0 * std::f64::consts::PI * 2.0e6f64).sqrt();
        assert!((p / approx - 1.0).abs() < 1e-5);
        assert_eq!(tp.pmf(-6), 0.0);
    }

    #[test]
    fn window_examples() {
        let deg = TranslatedPoisson {
            shift: 0,
            rate: 0.0,
        };
        let w = deg.window(1e-3);
        assert_eq!(w, Pmf::point_mass(0));

        let w = TranslatedPoisson {
            shift: 0,
            rate: 3.0,
        }
        .window(1e-12);
        assert!(w.offset == 0 && w.end() > 20);
        assert!(w.total_mass() >= 1.0 - 1e-12);
        assert!(w.tail_defect <= 1e-12);

        let w = TranslatedPoisson {
            shift: 10,
            rate: 4.0,
        }
        .window(1e-12);
        assert_eq!(w.offset, 10);
    }

    #[test]
    fn window_is_minimal() {
        let tp = TranslatedPoisson {
            shift: 2,
            rate: 7.5,
        };
        let w = tp.window(1e-6);
        // dropping either end must push the complement above eps
        let lo = w.masses[0];
        let hi = *w.masses.last().unwrap();
        assert!(w.tail_defect + lo.min(hi) > 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn fit_matches_mean_and_brackets_variance(mu in -1e4f64..1e4, var in 0.0f64..1e3) {
            let tp = TranslatedPoisson::fit(mu, var).unwrap();
            prop_assert!((tp.mean() - mu).abs() <= 1e-12 * mu.abs().max(1.0));
            prop_assert!(tp.rate >= var - 1e-12 * mu.abs().max(1.0));
            prop_assert!(tp.rate < var + 1.0 + 1e-12 * mu.abs().max(1.0));
        }

        #[test]
        fn fit_is_shift_equivariant(mu_q in -1_000_000i64..1_000_000, var_q in 0i64..100_000) {
            // dyadic inputs keep mu + 1 and mu - var exact
            let mu = mu_q as f64 / 1024.0;
            let var = var_q as f64 / 1024.0;
            let a = TranslatedPoisson::fit(mu, var).unwrap();
            let b = TranslatedPoisson::fit(mu + 1.0, var).unwrap();
            prop_assert_eq!(b.shift, a.shift + 1);
            prop_assert_eq!(b.rate, a.rate);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn window_sums_to_one(shift in -50i64..50, rate in 0.01f64..5e3) {
            let w = TranslatedPoisson { shift, rate }.window(WINDOW_EPS);
            prop_assert!((w.total_mass() - 1.0).abs() < 1e-10);
            prop_assert!(w.offset >= shift);
        }
    }
}
