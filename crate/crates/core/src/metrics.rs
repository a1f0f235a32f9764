//! Integer-supported mass functions and the distances between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::special::KahanSum;

/// Tolerance on `sum masses + tail_defect = 1`.
pub const PMF_MASS_TOL: f64 = 1e-9;

/// A mass function on the integers: `masses[i]` is the mass at `offset + i`.
///
/// `tail_defect` is probability certified to lie outside the table (pruned,
/// truncated or otherwise unresolved mass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    pub offset: i64,
    pub masses: Vec<f64>,
    pub tail_defect: f64,
}

/// A distance together with a certified uncertainty radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub value: f64,
    pub uncertainty: f64,
}

impl Pmf {
    /// Validating constructor.
    pub fn new(offset: i64, masses: Vec<f64>, tail_defect: f64) -> Result<Self> {
        let pmf = Pmf {
            offset,
            masses,
            tail_defect,
        };
        pmf.validate()?;
        Ok(pmf)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .masses
            .iter()
            .position(|m| !(m.is_finite() && *m >= 0.0))
        {
            return validation(format!(
                "masses[{i}] = {} is not a nonnegative number",
                self.masses[i]
            ));
        }
        if !(self.tail_defect.is_finite() && self.tail_defect >= 0.0) {
            return validation(format!(
                "tail_defect = {} must be nonnegative",
                self.tail_defect
            ));
        }
        let total = self.total_mass() + self.tail_defect;
        if (total - 1.0).abs() > PMF_MASS_TOL {
            return validation(format!("masses plus tail_defect sum to {total:.17}, not 1"));
        }
        Ok(())
    }

    pub fn point_mass(k: i64) -> Self {
        Pmf {
            offset: k,
            masses: vec![1.0],
            tail_defect: 0.0,
        }
    }

    /// Mass at `k` (zero off the table).
    pub fn mass(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.masses.get(i as usize).copied().unwrap_or(0.0)
    }

    /// One past the last tabulated point.
    pub fn end(&self) -> i64 {
        self.offset + self.masses.len() as i64
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().copied().collect::<KahanSum>().value()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.offset + i as i64, m))
    }

    /// Mean of the tabulated part, normalized by its own mass.
    pub fn mean(&self) -> f64 {
        let mass = self.total_mass();
        self.iter()
            .map(|(k, m)| k as f64 * m)
            .collect::<KahanSum>()
            .value()
            / mass
    }

    /// Variance of the tabulated part, normalized by its own mass.
    pub fn variance(&self) -> f64 {
        let mass = self.total_mass();
        let mu = self.mean();
        self.iter()
            .map(|(k, m)| (k as f64 - mu).powi(2) * m)
            .collect::<KahanSum>()
            .value()
            / mass
    }

    /// Drop zero masses at both ends of the table.
    pub fn trimmed(mut self) -> Self {
        let first = self.masses.iter().position(|&m| m > 0.0);
        match first {
            None => {
                self.masses.clear();
                self
            }
            Some(f) => {
                let last = self.masses.iter().rposition(|&m| m > 0.0).unwrap();
                self.masses.truncate(last + 1);
                self.masses.drain(..f);
                self.offset += f as i64;
                self
            }
        }
    }
}

fn union_range(p: &Pmf, q: &Pmf) -> std::ops::Range<i64> {
    let lo = match (p.masses.is_empty(), q.masses.is_empty()) {
        (true, true) => return 0..0,
        (true, false) => q.offset,
        (false, true) => p.offset,
        (false, false) => p.offset.min(q.offset),
    };
    let hi = p.end().max(q.end());
    lo..hi
}

/// `d_TV(P, Q) = 1/2 sum_k |p_k - q_k|`, with `(dP + dQ)/2` as uncertainty radius.
pub fn total_variation(p: &Pmf, q: &Pmf) -> Distance {
    let l1: KahanSum = union_range(p, q)
        .map(|k| (p.mass(k) - q.mass(k)).abs())
        .collect();
    Distance {
        value: 0.5 * l1.value(),
        uncertainty: 0.5 * (p.tail_defect + q.tail_defect),
    }
}

/// `d_loc(P, Q) = max_k |p_k - q_k|`, with `max(dP, dQ)` as uncertainty radius.
pub fn local_distance(p: &Pmf, q: &Pmf) -> Distance {
    let value = union_range(p, q)
        .map(|k| (p.mass(k) - q.mass(k)).abs())
        .fold(0.0, f64::max);
    Distance {
        value,
        uncertainty: p.tail_defect.max(q.tail_defect),
    }
}

/// Normalized frequency table with a dense support (gaps filled with zero).
pub fn empirical_pmf(counts: &BTreeMap<i64, u64>) -> Result<Pmf> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return validation("empirical_pmf needs at least one observation");
    }
    let lo = *counts.keys().next().unwrap();
    let hi = *counts.keys().next_back().unwrap();
    let mut masses = vec![0.0; (hi - lo + 1) as usize];
    for (&k, &c) in counts {
        masses[(k - lo) as usize] = c as f64 / total as f64;
    }
    Ok(Pmf {
        offset: lo,
        masses,
        tail_defect: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pmf(offset: i64, masses: &[f64]) -> Pmf {
        Pmf::new(offset, masses.to_vec(), 0.0).unwrap()
    }

    #[test]
    fn tv_examples() {
        let a = pmf(0, &[0.5, 0.5]);
        assert_eq!(total_variation(&a, &a).value, 0.0);
        assert_eq!(
            total_variation(&Pmf::point_mass(0), &Pmf::point_mass(1)).value,
            1.0
        );
        let b = pmf(0, &[0.25, 0.75]);
        assert_eq!(total_variation(&a, &b).value, 0.25);
        assert_eq!(local_distance(&a, &b).value, 0.25);
        assert_eq!(local_distance(&a, &a).value, 0.0);
    }

    #[test]
    fn uncertainty_radii() {
        let a = Pmf::new(0, vec![0.5, 0.4], 0.1).unwrap();
        let b = Pmf::new(0, vec![0.5, 0.48], 0.02).unwrap();
        let tv = total_variation(&a, &b);
        assert!((tv.uncertainty - 0.06).abs() < 1e-15);
        assert_eq!(local_distance(&a, &b).uncertainty, 0.1);
    }

    #[test]
    fn empirical_examples() {
        let e = empirical_pmf(&BTreeMap::from([(5, 10)])).unwrap();
        assert_eq!(e, Pmf::point_mass(5));
        let e = empirical_pmf(&BTreeMap::from([(0, 1), (1, 1)])).unwrap();
        assert_eq!(e.masses, vec![0.5, 0.5]);
        let e = empirical_pmf(&BTreeMap::from([(2, 3), (4, 1)])).unwrap();
        assert_eq!(e.offset, 2);
        assert_eq!(e.masses, vec![0.75, 0.0, 0.25]);
        assert!(empirical_pmf(&BTreeMap::new()).is_err());
        assert!(empirical_pmf(&BTreeMap::from([(3, 0)])).is_err());
    }

    #[test]
    fn validation_rejects_bad_tables() {
        assert!(Pmf::new(0, vec![0.5, -0.1, 0.6], 0.0).is_err());
        assert!(Pmf::new(0, vec![0.5, 0.4], 0.0).is_err());
        assert!(Pmf::new(0, vec![0.5, 0.4], 0.1).is_ok());
    }

    #[test]
    fn trimmed_drops_zero_ends() {
        let p = Pmf::new(3, vec![0.0, 0.0, 0.5, 0.0, 0.5, 0.0], 0.0)
            .unwrap()
            .trimmed();
        assert_eq!(p.offset, 5);
        assert_eq!(p.masses, vec![0.5, 0.0, 0.5]);
    }

    /// sup over all events of |P(A) - Q(A)|, by enumeration of subsets.
    fn brute_force_tv(p: &Pmf, q: &Pmf) -> f64 {
        let range: Vec<i64> = union_range(p, q).collect();
        let s = range.len();
        let mut best: f64 = 0.0;
        for mask in 0u32..(1 << s) {
            let mut d = 0.0;
            for (i, &k) in range.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    d += p.mass(k) - q.mass(k);
                }
            }
            best = best.max(d.abs());
        }
        best
    }

    fn arb_pmf(max_len: usize) -> impl Strategy<Value = Pmf> {
        (-3i64..3, prop::collection::vec(0.0f64..1.0, 1..=max_len)).prop_filter_map(
            "nonzero mass",
            |(off, w)| {
                let s: f64 = w.iter().sum();
                if s <= 1e-6 {
                    return None;
                }
                Some(Pmf {
                    offset: off,
                    masses: w.iter().map(|x| x / s).collect(),
                    tail_defect: 0.0,
                })
            },
        )
    }

    proptest! {
        #[test]
        fn tv_equals_sup_over_events(p in arb_pmf(6), q in arb_pmf(6)) {
            prop_assume!(union_range(&p, &q).count() <= 12);
            let tv = total_variation(&p, &q).value;
            prop_assert!((tv - brute_force_tv(&p, &q)).abs() < 1e-12);
        }

        #[test]
        fn metric_axioms(p in arb_pmf(8), q in arb_pmf(8), r in arb_pmf(8)) {
            let tv_pq = total_variation(&p, &q).value;
            prop_assert!((tv_pq - total_variation(&q, &p).value).abs() < 1e-15);
            let loc_pq = local_distance(&p, &q).value;
            prop_assert_eq!(loc_pq, local_distance(&q, &p).value);
            prop_assert!(tv_pq <= total_variation(&p, &r).value + total_variation(&r, &q).value + 1e-12);
            prop_assert!(loc_pq <= local_distance(&p, &r).value + local_distance(&r, &q).value + 1e-12);
            prop_assert!(loc_pq >= 0.0);
            prop_assert!(loc_pq <= 2.0 * tv_pq + 1e-12);
            prop_assert!(tv_pq <= 1.0 + 1e-12);
        }
    }
}
