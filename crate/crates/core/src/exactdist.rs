//! Exact laws of `K_n` and `K_{n,r}` at desk scale.
//!
//! [`exact_pmf`] runs a dynamic program over boxes in their natural order:
//! the state is `(m, k)` = (balls placed so far, statistic value so far), and
//! box `j` receives `N_j ~ Bin(n - m, p_j / R_{j-1})` of the remaining balls,
//! `R_{j-1} = sum_{i >= j} p_i`. Mass that is pruned, clipped from a binomial
//! row, or left with balls destined beyond the last processed box goes into
//! the tail defect.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::metrics::Pmf;
use crate::moments::{StatKind, Statistic};
use crate::special::{ln_factorial, poisson_pmf, KahanSum};
use crate::weights::WeightModel;
use crate::Error;

/// Largest `n * tail_mass(J)` accepted by [`exact_pmf`].
pub const DP_TAIL_GUARD: f64 = 0.1;
/// Largest `J^n` accepted by [`enumerate_pmf`].
pub const ENUMERATION_GUARD: f64 = 1e7;
/// Largest `k` accepted by [`low_boxes_all_occupied`].
pub const INCLUSION_EXCLUSION_MAX: usize = 25;
const MAX_PRUNE_EPS: f64 = 1e-9;
// binomial rows are extended until terms fall this far below the mode
const ROW_REL_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    /// Boxes `1..=boxes` are processed exactly.
    pub boxes: usize,
    /// States lighter than this are dropped into the defect.
    pub prune_eps: f64,
}

impl DpConfig {
    pub fn new(boxes: usize, prune_eps: f64) -> Self {
        DpConfig { boxes, prune_eps }
    }

    /// Exact (unpruned) configuration covering the whole support of an
    /// explicit model.
    pub fn full(model: &WeightModel) -> Option<Self> {
        model.support_len().map(|l| DpConfig::new(l.max(1), 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.boxes == 0 {
            return validation("DpConfig.boxes must be at least 1");
        }
        if !(0.0..=MAX_PRUNE_EPS).contains(&self.prune_eps) {
            return validation(format!(
                "DpConfig.prune_eps = {} must lie in [0, {MAX_PRUNE_EPS:e}]",
                self.prune_eps
            ));
        }
        Ok(())
    }
}

/// Binomial(t, q) masses from `lo` on, normalized over the computed range.
struct BinomialRow {
    lo: usize,
    masses: Vec<f64>,
}

fn binomial_row(t: usize, q: f64) -> BinomialRow {
    if q <= 0.0 || t == 0 {
        return BinomialRow {
            lo: 0,
            masses: vec![1.0],
        };
    }
    if q >= 1.0 {
        return BinomialRow {
            lo: t,
            masses: vec![1.0],
        };
    }
    let tf = t as f64;
    let mode = (((tf + 1.0) * q).floor() as usize).min(t);
    let odds = q / (1.0 - q);
    // relative masses around the mode via the ratio recurrence
    let mut right = vec![1.0];
    let mut v = 1.0;
    let mut l = mode;
    while l < t {
        v *= (t - l) as f64 / (l + 1) as f64 * odds;
        if v < ROW_REL_FLOOR {
            break;
        }
        right.push(v);
        l += 1;
    }
    let mut left = Vec::new();
    v = 1.0;
    l = mode;
    while l > 0 {
        v *= l as f64 / ((t - l + 1) as f64 * odds);
        if v < ROW_REL_FLOOR {
            break;
        }
        left.push(v);
        l -= 1;
    }
    let lo = mode - left.len();
    left.reverse();
    left.extend(right);
    let total: f64 = left.iter().copied().collect::<KahanSum>().value();
    for x in &mut left {
        *x /= total;
    }
    BinomialRow { lo, masses: left }
}

/// Exact law of `stat` by the sequential-conditioning dynamic program.
pub fn exact_pmf(model: &WeightModel, n: u64, stat: Statistic, cfg: DpConfig) -> Result<Pmf> {
    stat.validate()?;
    cfg.validate()?;
    if n == 0 {
        return validation("exact_pmf: n must be at least 1");
    }
    let per_hit = stat.balls_per_hit();
    if per_hit > n {
        return Ok(Pmf::point_mass(0));
    }
    let boxes = match model.support_len() {
        Some(l) => cfg.boxes.min(l),
        None => cfg.boxes,
    };
    let leftover = n as f64 * model.tail_mass(boxes);
    if leftover > DP_TAIL_GUARD {
        return Err(Error::Resource(format!(
            "exact_pmf: n * tail(J) = {leftover:.3e} exceeds {DP_TAIL_GUARD} at J = {boxes}; increase J"
        )));
    }
    let nn = n as usize;
    let from = stat.first_box();
    let counted = (boxes + 1).saturating_sub(from);
    let kcap = (nn / per_hit as usize).min(counted);
    let width = kcap + 1;
    let clip = cfg.prune_eps / (n as f64 * boxes as f64);

    let mut cur = vec![0.0f64; (nn + 1) * width];
    let mut next = vec![0.0f64; (nn + 1) * width];
    cur[0] = 1.0;
    let (mut m_lo, mut m_hi) = (0usize, 0usize);
    let mut k_hi = 0usize;
    let mut defect = KahanSum::new();

    for j in 1..=boxes {
        let p = model.prob(j);
        let rest = model.tail_mass(j - 1);
        let q = if rest > 0.0 { (p / rest).min(1.0) } else { 1.0 };
        let counts = j >= from;
        let (mut nm_lo, mut nm_hi, mut nk_hi) = (usize::MAX, 0usize, 0usize);
        for m in m_lo..=m_hi {
            let src = &cur[m * width..m * width + k_hi + 1];
            if src.iter().all(|&x| x == 0.0) {
                continue;
            }
            let row = binomial_row(nn - m, q);
            for (i, &b) in row.masses.iter().enumerate() {
                let l = row.lo + i;
                if b < clip {
                    let lost: f64 = src.iter().sum::<f64>() * b;
                    defect.add(lost);
                    continue;
                }
                let hit = counts && stat.hits(l as u64);
                let m2 = m + l;
                let shift = hit as usize;
                let dst = &mut next[m2 * width..(m2 + 1) * width];
                for (k, &x) in src.iter().enumerate() {
                    if x != 0.0 {
                        let k2 = k + shift;
                        if k2 < width {
                            dst[k2] += x * b;
                        } else {
                            defect.add(x * b);
                        }
                    }
                }
                nm_lo = nm_lo.min(m2);
                nm_hi = nm_hi.max(m2);
                nk_hi = nk_hi.max((k_hi + shift).min(kcap));
            }
        }
        for m in m_lo..=m_hi {
            cur[m * width..m * width + k_hi + 1].fill(0.0);
        }
        std::mem::swap(&mut cur, &mut next);
        if nm_lo == usize::MAX {
            m_lo = 0;
            m_hi = 0;
            k_hi = 0;
            break;
        }
        m_lo = nm_lo;
        m_hi = nm_hi;
        k_hi = nk_hi;
        if cfg.prune_eps > 0.0 {
            for x in &mut cur[m_lo * width..(m_hi + 1) * width] {
                if *x != 0.0 && *x < cfg.prune_eps {
                    defect.add(*x);
                    *x = 0.0;
                }
            }
        }
        debug_assert!({
            let live: KahanSum = cur[m_lo * width..(m_hi + 1) * width]
                .iter()
                .copied()
                .collect();
            (live.value() + defect.value() - 1.0).abs() <= 1e-11 * (1.0 + j as f64 / 1e3)
        });
    }

    // states that still owe balls to boxes beyond J are unresolved
    let mut masses = vec![0.0; width];
    for m in m_lo..=m_hi {
        let row = &cur[m * width..m * width + k_hi + 1];
        if m == nn {
            masses[..row.len()].copy_from_slice(row);
        } else {
            for &x in row {
                defect.add(x);
            }
        }
    }
    let pmf = Pmf {
        offset: 0,
        masses,
        tail_defect: defect.value().max(0.0),
    };
    Ok(trim_right(pmf))
}

fn trim_right(mut pmf: Pmf) -> Pmf {
    while pmf.masses.len() > 1 && *pmf.masses.last().unwrap() == 0.0 {
        pmf.masses.pop();
    }
    pmf
}

/// Exact law by summing over all `J^n` assignments of labelled balls.
pub fn enumerate_pmf(model: &WeightModel, n: u64, stat: Statistic) -> Result<Pmf> {
    stat.validate()?;
    let j = model
        .support_len()
        .ok_or_else(|| Error::Resource("enumerate_pmf needs a finite support".into()))?;
    let size = (j as f64).powf(n as f64);
    if size > ENUMERATION_GUARD {
        return Err(Error::Resource(format!(
            "enumerate_pmf: J^n = {size:.3e} exceeds {ENUMERATION_GUARD:e}"
        )));
    }
    let probs: Vec<f64> = (1..=j).map(|i| model.prob(i)).collect();
    let from = stat.first_box();
    let mut out = vec![KahanSum::new(); j + 1];
    let mut counts = vec![0u64; j];
    fn walk(
        left: u64,
        weight: f64,
        probs: &[f64],
        counts: &mut [u64],
        stat: &Statistic,
        from: usize,
        out: &mut [KahanSum],
    ) {
        if left == 0 {
            let k = counts
                .iter()
                .enumerate()
                .filter(|&(i, &c)| i + 1 >= from && stat.hits(c))
                .count();
            out[k].add(weight);
            return;
        }
        for i in 0..probs.len() {
            if probs[i] == 0.0 {
                continue;
            }
            counts[i] += 1;
            walk(left - 1, weight * probs[i], probs, counts, stat, from, out);
            counts[i] -= 1;
        }
    }
    walk(n, 1.0, &probs, &mut counts, &stat, from, &mut out);
    let masses = out.iter().map(KahanSum::value).collect();
    Ok(trim_right(Pmf {
        offset: 0,
        masses,
        tail_defect: 0.0,
    }))
}

/// Law of a sum of independent Bernoulli variables, by sequential convolution.
pub fn poisson_binomial(probs: &[f64]) -> Pmf {
    let mut masses = vec![1.0];
    for &s in probs {
        if s <= 0.0 {
            continue;
        }
        masses.push(0.0);
        for k in (1..masses.len()).rev() {
            masses[k] = masses[k] * (1.0 - s) + masses[k - 1] * s;
        }
        masses[0] *= 1.0 - s;
    }
    Pmf {
        offset: 0,
        masses,
        tail_defect: 0.0,
    }
}

/// Law of the statistic when box counts are independent `Poisson(n p_j)`.
///
/// Boxes `j > boxes` are not convolved: masses are scaled by a lower bound on
/// `P[no tail box fires]` and the remainder becomes the tail defect.
pub fn poissonized_pmf(model: &WeightModel, n: u64, stat: Statistic, boxes: usize) -> Result<Pmf> {
    stat.validate()?;
    if n == 0 {
        return validation("poissonized_pmf: n must be at least 1");
    }
    let boxes = match model.support_len() {
        Some(l) => boxes.min(l),
        None => boxes,
    };
    let nf = n as f64;
    let success = |p: f64| match stat.kind {
        StatKind::OccupiedBoxes => -(-nf * p).exp_m1(),
        StatKind::ExactlyR { r } => poisson_pmf(nf * p, r as u64),
    };
    let probs: Vec<f64> = (stat.first_box()..=boxes)
        .map(|j| success(model.prob(j)))
        .collect();
    let mut pmf = poisson_binomial(&probs);
    let (_, t_hi) = model.tail_mass_bounds(boxes.max(stat.first_box() - 1));
    if t_hi > 0.0 {
        let keep = match stat.kind {
            // P[no tail box occupied] = exp(-n * tail)
            StatKind::OccupiedBoxes => (-nf * t_hi).exp(),
            StatKind::ExactlyR { r } => {
                let p_max = model.prob(boxes + 1);
                let rf = r as f64;
                let s =
                    (rf * nf.ln() + (rf - 1.0) * p_max.ln() - ln_factorial(r as u64)).exp() * t_hi;
                (1.0 - s).max(0.0)
            }
        };
        for x in &mut pmf.masses {
            *x *= keep;
        }
        pmf.tail_defect = 1.0 - keep;
    }
    Ok(pmf)
}

/// `P[N_j >= 1 for all j <= k]` by inclusion-exclusion over subsets.
pub fn low_boxes_all_occupied(model: &WeightModel, n: u64, k: usize) -> Result<f64> {
    if k == 0 {
        return validation("low_boxes_all_occupied: k must be at least 1");
    }
    if k > INCLUSION_EXCLUSION_MAX {
        return Err(Error::Resource(format!(
            "low_boxes_all_occupied: k = {k} exceeds {INCLUSION_EXCLUSION_MAX} (2^k subsets)"
        )));
    }
    let probs: Vec<f64> = (1..=k).map(|j| model.prob(j)).collect();
    // subset sums from two half tables, one rounding per subset
    let half = k / 2;
    let table = |ps: &[f64]| -> Vec<f64> {
        let mut t = vec![0.0; 1 << ps.len()];
        for mask in 1..t.len() {
            let low = mask.trailing_zeros() as usize;
            t[mask] = t[mask & (mask - 1)] + ps[low];
        }
        t
    };
    let lo_tab = table(&probs[..half]);
    let hi_tab = table(&probs[half..]);
    let nf = n as f64;
    let mut acc = KahanSum::new();
    for (hm, &hs) in hi_tab.iter().enumerate() {
        for (lm, &ls) in lo_tab.iter().enumerate() {
            let s = (hs + ls).min(1.0);
            let v = (nf * (-s).ln_1p()).exp();
            if (hm.count_ones() + lm.count_ones()) % 2 == 0 {
                acc.add(v);
            } else {
                acc.add(-v);
            }
        }
    }
    Ok(acc.value().clamp(0.0, 1.0))
}
