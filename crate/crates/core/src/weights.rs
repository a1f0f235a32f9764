//! Box weight sequences `p_1 >= p_2 >= ... > 0` and the cutoffs derived from them.
//!
//! Box indices are 1-based throughout the crate, matching the usual indexing
//! of the occupancy scheme. An explicit model of length `L` is treated as a
//! finite scheme: `p_j = 0` for every `j > L`. This is the only way to get
//! exact distributions at desk scale, and every downstream computation is
//! valid for it (a finite scheme is still a sum of box indicators).
//!
//! The power-law model `p_j = j^{-a} / zeta(a)` keeps a lazily extended cache
//! of partial sums; beyond the cache, tail masses come from the integral
//! bounds, which are two-sided.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::special::{hurwitz_tail, zeta, KahanSum};

/// Tolerance on `sum p_j = 1` for explicit models.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Partial sums of the power law are extended in blocks of this many boxes.
pub const CACHE_BLOCK: usize = 1 << 16;

/// Hard cap on the power-law partial-sum cache (entries).
pub const CACHE_MAX: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Explicit,
    ZetaPowerLaw,
}

/// JSON description of a model: `{"kind":"explicit","probs":[...]}` or
/// `{"kind":"zeta","exponent":2.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Explicit { probs: Vec<f64> },
    Zeta { exponent: f64 },
}

impl ModelSpec {
    pub fn build(&self) -> Result<WeightModel> {
        match self {
            ModelSpec::Explicit { probs } => WeightModel::explicit(probs.clone()),
            ModelSpec::Zeta { exponent } => WeightModel::zeta(*exponent),
        }
    }
}

/// Cutoff `j_n` and the tail quantities attached to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProfile {
    pub jn: usize,
    /// `max_{j >= j_n} p_j = p_{j_n}`.
    pub pbar: f64,
    /// `sum_{j >= j_n} p_j`.
    pub pn: f64,
}

#[derive(Debug)]
struct ZetaCache {
    cumulative: Arc<Vec<f64>>,
    acc: KahanSum,
}

#[derive(Debug)]
struct ZetaWeights {
    exponent: f64,
    norm: f64,
    cache: RwLock<ZetaCache>,
}

#[derive(Debug)]
enum Repr {
    Explicit {
        probs: Vec<f64>,
        cumulative: Arc<Vec<f64>>,
        // suffix[j] = sum_{i > j} p_i, j = 0..=L
        suffix: Vec<f64>,
    },
    Zeta(ZetaWeights),
}

/// A nonincreasing probability sequence over boxes `1, 2, ...`.
#[derive(Debug)]
pub struct WeightModel {
    repr: Repr,
}

impl Clone for WeightModel {
    fn clone(&self) -> Self {
        match &self.repr {
            Repr::Explicit {
                probs,
                cumulative,
                suffix,
            } => WeightModel {
                repr: Repr::Explicit {
                    probs: probs.clone(),
                    cumulative: cumulative.clone(),
                    suffix: suffix.clone(),
                },
            },
            Repr::Zeta(z) => {
                let cache = z.cache.read().unwrap();
                WeightModel {
                    repr: Repr::Zeta(ZetaWeights {
                        exponent: z.exponent,
                        norm: z.norm,
                        cache: RwLock::new(ZetaCache {
                            cumulative: cache.cumulative.clone(),
                            acc: cache.acc,
                        }),
                    }),
                }
            }
        }
    }
}

impl WeightModel {
    /// Build an explicit finite model.
    pub fn explicit(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return validation("probability sequence is empty");
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p <= 0.0 {
                return validation(format!("probs[{i}] = {p} is not a positive finite number"));
            }
            if i > 0 && p > probs[i - 1] {
                return validation(format!(
                    "probs[{i}] = {p} exceeds probs[{}] = {} (sequence must be nonincreasing)",
                    i - 1,
                    probs[i - 1]
                ));
            }
        }
        let mut acc = KahanSum::new();
        let cumulative: Vec<f64> = probs
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect();
        let total = acc.value();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return validation(format!(
                "probs sum to {total:.17}, not 1 within {NORMALIZATION_TOL:e} (index {})",
                probs.len() - 1
            ));
        }
        let mut suffix = vec![0.0; probs.len() + 1];
        let mut tail = KahanSum::new();
        for j in (0..probs.len()).rev() {
            tail.add(probs[j]);
            suffix[j] = tail.value();
        }
        Ok(WeightModel {
            repr: Repr::Explicit {
                probs,
                cumulative: Arc::new(cumulative),
                suffix,
            },
        })
    }

    /// Power law `p_j = j^{-a} / zeta(a)`, `a > 1`.
    pub fn zeta(exponent: f64) -> Result<Self> {
        if !exponent.is_finite() || exponent <= 1.0 {
            return validation(format!(
                "exponent = {exponent}: the power law is summable only for exponent > 1"
            ));
        }
        Ok(WeightModel {
            repr: Repr::Zeta(ZetaWeights {
                exponent,
                norm: zeta(exponent),
                cache: RwLock::new(ZetaCache {
                    cumulative: Arc::new(Vec::new()),
                    acc: KahanSum::new(),
                }),
            }),
        })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        spec.build()
    }

    pub fn spec(&self) -> ModelSpec {
        match &self.repr {
            Repr::Explicit { probs, .. } => ModelSpec::Explicit {
                probs: probs.clone(),
            },
            Repr::Zeta(z) => ModelSpec::Zeta {
                exponent: z.exponent,
            },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.repr {
            Repr::Explicit { .. } => ModelKind::Explicit,
            Repr::Zeta(_) => ModelKind::ZetaPowerLaw,
        }
    }

    /// Number of boxes with positive weight, `None` for the infinite power law.
    pub fn support_len(&self) -> Option<usize> {
        match &self.repr {
            Repr::Explicit { probs, .. } => Some(probs.len()),
            Repr::Zeta(_) => None,
        }
    }

    /// Power-law exponent, if any.
    pub fn exponent(&self) -> Option<f64> {
        match &self.repr {
            Repr::Zeta(z) => Some(z.exponent),
            Repr::Explicit { .. } => None,
        }
    }

    /// `p_j`; zero for `j = 0` and past the end of an explicit model.
    pub fn prob(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Explicit { probs, .. } => probs.get(j - 1).copied().unwrap_or(0.0),
            Repr::Zeta(z) => (j as f64).powf(-z.exponent) / z.norm,
        }
    }

    /// `c_j = sum_{i <= j} p_i`.
    pub fn cumulative(&self, j: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match &self.repr {
            Repr::Explicit { cumulative, .. } => cumulative[j.min(cumulative.len()) - 1],
            Repr::Zeta(z) => {
                if j > CACHE_MAX {
                    return 1.0 - self.tail_mass(j);
                }
                let table = z.ensure(j);
                table[j - 1]
            }
        }
    }

    /// `sum_{i > j} p_i`, computed directly (no `1 - c_j` cancellation).
    pub fn tail_mass(&self, j: usize) -> f64 {
        match &self.repr {
            Repr::Explicit { suffix, .. } => suffix[j.min(suffix.len() - 1)],
            Repr::Zeta(z) => hurwitz_tail(z.exponent, j as u64 + 1) / z.norm,
        }
    }

    /// Certified two-sided bounds on `sum_{i > j} p_i`.
    ///
    /// For the power law this is the integral sandwich
    /// `J^{1-a}/((a-1) zeta(a)) * (1 - a/J) <= tail <= J^{1-a}/((a-1) zeta(a))`,
    /// intersected with a relative `1e-13` band around the Euler-Maclaurin value.
    pub fn tail_mass_bounds(&self, j: usize) -> (f64, f64) {
        match &self.repr {
            Repr::Explicit { probs, .. } => {
                if j >= probs.len() {
                    return (0.0, 0.0);
                }
                let t = self.tail_mass(j);
                let slack = 4.0 * f64::EPSILON * (1.0 + j as f64).log2().max(1.0);
                ((t - slack).max(0.0), t + slack)
            }
            Repr::Zeta(z) => {
                let t = self.tail_mass(j);
                if j == 0 {
                    return (1.0, 1.0);
                }
                let a = z.exponent;
                let jf = j as f64;
                let hi_int = jf.powf(1.0 - a) / ((a - 1.0) * z.norm);
                let lo_int = (hi_int * (1.0 - a / jf)).max(0.0);
                let lo = lo_int.max(t * (1.0 - 1e-13));
                let hi = hi_int.min(t * (1.0 + 1e-13));
                (lo.min(t), hi.max(t))
            }
        }
    }

    /// Snapshot of the partial sums `c_1, ..., c_m` with `m >= min(upto, cap)`.
    ///
    /// For explicit models this is the whole table; for the power law the cache
    /// is extended to cover `upto` (capped at [`CACHE_MAX`]).
    pub fn cdf_table(&self, upto: usize) -> Arc<Vec<f64>> {
        match &self.repr {
            Repr::Explicit { cumulative, .. } => cumulative.clone(),
            Repr::Zeta(z) => z.ensure(upto.clamp(1, CACHE_MAX)),
        }
    }

    /// `(j_0, P_0)`: smallest `j_0` with `sum_{j >= j_0 - 1} p_j >= 1/2 > sum_{j >= j_0} p_j`.
    pub fn split_j0(&self) -> (usize, f64) {
        // tail_mass(j0 - 2) >= 1/2 holds automatically for the first j0 with
        // tail_mass(j0 - 1) < 1/2, because tails are nonincreasing and
        // tail_mass(0) = 1.
        let below_half = |j: usize| self.tail_mass(j) < 0.5;
        let idx = match &self.repr {
            Repr::Explicit { probs, .. } => (0..=probs.len()).find(|&j| below_half(j)).unwrap(),
            Repr::Zeta(_) => {
                let mut hi = 1usize;
                while !below_half(hi) {
                    hi *= 2;
                }
                let mut lo = 0usize;
                // invariant: !below_half(lo), below_half(hi)
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if below_half(mid) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        };
        let j0 = idx + 1;
        (j0, self.tail_mass(idx))
    }

    /// Cutoff `j_n`: smallest `j` with `p_j < 4 log(n) / n`.
    pub fn tail_profile(&self, n: u64) -> TailProfile {
        let thr = cutoff_threshold(n);
        let jn = match &self.repr {
            Repr::Explicit { probs, .. } => probs
                .iter()
                .position(|&p| p < thr)
                .map(|i| i + 1)
                .unwrap_or(probs.len() + 1),
            Repr::Zeta(z) => {
                // p_j < thr  <=>  j > (zeta * thr)^{-1/a}
                let guess = (z.norm * thr).powf(-1.0 / z.exponent);
                let mut j = (guess.floor() as usize).max(1);
                while j > 1 && self.prob(j - 1) < thr {
                    j -= 1;
                }
                while self.prob(j) >= thr {
                    j += 1;
                }
                j
            }
        };
        TailProfile {
            jn,
            pbar: self.prob(jn),
            pn: self.tail_mass(jn - 1),
        }
    }

    /// Smallest `n >= 3` with `n / log^2 n >= 16 / P_0` and `j_n >= j_0`.
    ///
    /// Both conditions are monotone in `n` once `n >= 8` (`n / log^2 n`
    /// increases past `e^2`, and `4 log n / n` decreases past `e`, so `j_n` is
    /// nondecreasing), and neither the first can hold for `n < 8` because
    /// `16 / P_0 >= 16` while `n / log^2 n < 2.5` there.
    pub fn min_n0(&self) -> Result<u64> {
        let (j0, p0) = self.split_j0();
        if p0 <= 0.0 {
            return Err(Error::Degenerate(
                "P_0 = 0: no mass beyond the first half of the weights".into(),
            ));
        }
        let bound = 16.0 / p0;
        let ok = |n: u64| {
            let l = (n as f64).ln();
            n as f64 / (l * l) >= bound && self.tail_profile(n).jn >= j0
        };
        for n in 3..8 {
            if ok(n) {
                return Ok(n);
            }
        }
        let mut lo = 7u64;
        let mut hi = 16u64;
        while !ok(hi) {
            lo = hi;
            hi = hi
                .checked_mul(2)
                .ok_or_else(|| Error::Resource("n_0 exceeds u64 range".into()))?;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    /// Smallest `J` such that `n * tail_mass(J) <= target`, searching no
    /// further than `limit`. Returns `None` if the limit is hit first.
    pub fn truncation_point(&self, n: u64, target: f64, limit: usize) -> Option<usize> {
        let ok = |j: usize| n as f64 * self.tail_mass(j) <= target;
        if let Some(len) = self.support_len() {
            let len = len.min(limit);
            return (0..=len).find(|&j| ok(j));
        }
        if ok(0) {
            return Some(0);
        }
        let mut hi = 1usize;
        while !ok(hi) {
            if hi >= limit {
                return None;
            }
            hi = (hi * 2).min(limit);
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}

/// `4 log(n) / n`.
pub fn cutoff_threshold(n: u64) -> f64 {
    4.0 * (n as f64).ln() / n as f64
}

impl ZetaWeights {
    fn ensure(&self, upto: usize) -> Arc<Vec<f64>> {
        {
            let cache = self.cache.read().unwrap();
            if cache.cumulative.len() >= upto {
                return cache.cumulative.clone();
            }
        }
        let mut cache = self.cache.write().unwrap();
        if cache.cumulative.len() >= upto {
            return cache.cumulative.clone();
        }
        let target = upto.div_ceil(CACHE_BLOCK) * CACHE_BLOCK;
        let target = target.min(CACHE_MAX).max(upto.min(CACHE_MAX));
        let mut table: Vec<f64> = Vec::with_capacity(target);
        table.extend_from_slice(&cache.cumulative);
        let mut acc = cache.acc;
        for j in table.len() + 1..=target {
            acc.add((j as f64).powf(-self.exponent) / self.norm);
            table.push(acc.value().min(1.0));
        }
        cache.acc = acc;
        cache.cumulative = Arc::new(table);
        cache.cumulative.clone()
    }
}
