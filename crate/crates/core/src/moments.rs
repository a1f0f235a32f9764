//! Means and variances of `K_n` and `K_{n,r}`.
//!
//! Both statistics are sums of box indicators, so
//! `Var = sum_j v_j + sum_{j != s} Cov(I_j, I_s)` with closed-form pair terms.
//! Two evaluation modes:
//!
//! * `ExactPairwise` sums every pair over the first `J` boxes, `J` chosen so
//!   that `n * tail(J) <= 1e-12`; refused when `J > 5000`.
//! * `HybridLargeScale` sums pairs exactly over the `B = 2000` heaviest boxes
//!   and replaces every pair involving a lighter box by a separable expansion
//!   whose remainder is bounded in closed form. Boxes beyond the explicit range
//!   (power-law tails) enter through first-order tail sums with certified
//!   bounds.
//!
//! `truncation_error` bounds `|reported - true|` for both the mean and the
//! variance; it includes a floating-point allowance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::special::{binomial_pmf, ln_choose, pow1m, KahanSum};
use crate::weights::{ModelKind, WeightModel, CACHE_MAX};
use crate::Error;

/// Number of boxes summed exactly pairwise in `HybridLargeScale` mode.
pub const HYBRID_HEAD: usize = 2000;
/// Largest `J` accepted by `ExactPairwise`.
pub const EXACT_PAIRWISE_MAX: usize = 5000;
/// `n * tail(J)` target for `ExactPairwise`.
pub const EXACT_TAIL_TARGET: f64 = 1e-12;
/// `n * tail(J)` target for the explicit range of `HybridLargeScale`.
const HYBRID_TAIL_TARGET: f64 = 1e-9;
const FP_ALLOWANCE: f64 = 1e-13;
const ROW_BLOCK: usize = 64;

/// Which box indicator is summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatKind {
    /// `I[N_j >= 1]`
    OccupiedBoxes,
    /// `I[N_j = r]`, `r >= 1`
    ExactlyR { r: u32 },
}

/// A statistic `sum_{j >= from} I_j`; `from = 1` unless restricted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statistic {
    pub kind: StatKind,
    pub restricted_from: Option<usize>,
}

impl Statistic {
    pub fn occupied() -> Self {
        Statistic {
            kind: StatKind::OccupiedBoxes,
            restricted_from: None,
        }
    }

    pub fn exactly(r: u32) -> Self {
        Statistic {
            kind: StatKind::ExactlyR { r },
            restricted_from: None,
        }
    }

    /// Restrict the sum to boxes `j >= from`.
    pub fn from_box(self, from: usize) -> Self {
        Statistic {
            restricted_from: Some(from),
            ..self
        }
    }

    /// First box index included in the sum.
    pub fn first_box(&self) -> usize {
        self.restricted_from.unwrap_or(1).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if let StatKind::ExactlyR { r: 0 } = self.kind {
            return validation("ExactlyR requires r >= 1");
        }
        Ok(())
    }

    /// Whether a box holding `balls` balls contributes one to the count.
    #[inline]
    pub fn hits(&self, balls: u64) -> bool {
        match self.kind {
            StatKind::OccupiedBoxes => balls >= 1,
            StatKind::ExactlyR { r } => balls == r as u64,
        }
    }

    /// Whether box `j` is part of the sum.
    #[inline]
    pub fn includes(&self, j: usize) -> bool {
        j >= self.first_box()
    }

    /// Balls needed per counted box (1 for occupancy, `r` otherwise).
    pub fn balls_per_hit(&self) -> u64 {
        match self.kind {
            StatKind::OccupiedBoxes => 1,
            StatKind::ExactlyR { r } => r as u64,
        }
    }
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    /// `kn` or `knr:<r>`, optionally followed by `@<from>` to restrict.
    fn from_str(s: &str) -> Result<Self> {
        let (body, from) = match s.split_once('@') {
            Some((b, f)) => {
                let from: usize = f
                    .parse()
                    .map_err(|_| Error::Validation(format!("stat: bad restriction index '{f}'")))?;
                (b, Some(from))
            }
            None => (s, None),
        };
        let kind = if body == "kn" {
            StatKind::OccupiedBoxes
        } else if let Some(r) = body.strip_prefix("knr:") {
            let r: u32 = r
                .parse()
                .map_err(|_| Error::Validation(format!("stat: bad r in '{s}'")))?;
            StatKind::ExactlyR { r }
        } else {
            return validation(format!("stat: expected 'kn' or 'knr:<r>', got '{s}'"));
        };
        let stat = Statistic {
            kind,
            restricted_from: from,
        };
        stat.validate()?;
        Ok(stat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentMode {
    ExactPairwise,
    HybridLargeScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub mu: f64,
    pub var: f64,
    pub truncation_error: f64,
    pub mode: MomentMode,
}

/// A value together with a certified bound on its absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedValue {
    pub value: f64,
    pub error: f64,
}

/// Per-box and pairwise terms of a statistic at fixed `n`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel {
    n: u64,
    nf: f64,
    kind: StatKind,
    r: u64,
    ln_cr: f64,
    ln_kappa: f64,
    kappa: f64,
}

impl Kernel {
    pub(crate) fn new(n: u64, kind: StatKind) -> Self {
        let r = match kind {
            StatKind::OccupiedBoxes => 0,
            StatKind::ExactlyR { r } => r as u64,
        };
        let (ln_cr, ln_kappa) = if r > 0 && n >= r {
            let ln_kappa = if n >= 2 * r {
                // kappa = (n-r)_r / (n)_r = prod_{i<r} (1 - r/(n-i))
                (0..r).map(|i| (-(r as f64) / (n - i) as f64).ln_1p()).sum()
            } else {
                f64::NEG_INFINITY
            };
            (ln_choose(n, r), ln_kappa)
        } else {
            (f64::NEG_INFINITY, f64::NEG_INFINITY)
        };
        Kernel {
            n,
            nf: n as f64,
            kind,
            r,
            ln_cr,
            ln_kappa,
            kappa: ln_kappa.exp(),
        }
    }

    /// `P(I_j = 1)` for a box of weight `p`.
    #[inline]
    pub(crate) fn mean(&self, p: f64) -> f64 {
        match self.kind {
            StatKind::OccupiedBoxes => -(self.nf * (-p).ln_1p()).exp_m1(),
            StatKind::ExactlyR { .. } => binomial_pmf(self.n, p, self.r),
        }
    }

    /// `Cov(I_j, I_s)` for boxes of weights `a`, `b` (distinct boxes).
    #[inline]
    pub(crate) fn cov(&self, a: f64, b: f64) -> f64 {
        let la = (-a).ln_1p();
        let lb = (-b).ln_1p();
        let x = (1.0 - a) * (1.0 - b);
        if x <= 0.0 {
            // one box carries all the mass, so the other never fires
            return 0.0;
        }
        let d = (a * b / x).min(1.0);
        match self.kind {
            StatKind::OccupiedBoxes => {
                // (1-a-b)^n - (1-a)^n (1-b)^n = x^n * expm1(n log1p(-ab/x))
                let xn = (self.nf * (la + lb)).exp();
                xn * (self.nf * (-d).ln_1p()).exp_m1()
            }
            StatKind::ExactlyR { .. } => {
                let za = self.mean(a);
                let zb = self.mean(b);
                if za == 0.0 || zb == 0.0 {
                    return 0.0;
                }
                if self.n < 2 * self.r {
                    return -za * zb;
                }
                let rf = self.r as f64;
                let e = self.n - 2 * self.r;
                let y_term = if e == 0 { 0.0 } else { e as f64 * (-d).ln_1p() };
                za * zb * (self.ln_kappa + y_term - rf * la - rf * lb).exp_m1()
            }
        }
    }

    /// `C(n, r) p^r`.
    #[inline]
    fn g0(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        (self.ln_cr + self.r as f64 * p.ln()).exp()
    }
}

/// Separable pieces of the pair expansion for one box.
///
/// Occupied boxes: `cov(a, b) = -n F(a) F(b) + R`, `0 <= R <= n^2/2 D(a) D(b)`
/// with `F(x) = x (1-x)^{n-1}`, `D(x) = x^2 (1-x)^{n-2}`.
///
/// Exactly `r` (n >= 2r): expanding in `b` around zero,
/// `cov(a, b) = F0(a) G0(b) + F1(a) G1(b) + R`, `|R| <= E(a) H(b)`, where
/// `G0 = C(n,r) b^r`, `G1 = G0 b`, `H = G0 b^2 / 2`.
#[derive(Debug, Clone, Copy, Default)]
struct BoxTerms {
    f: f64,
    d: f64,
    f0: f64,
    f1: f64,
    e: f64,
    g0: f64,
    g1: f64,
    h: f64,
    z: f64,
}

impl Kernel {
    fn box_terms(&self, p: f64) -> BoxTerms {
        let nf = self.nf;
        match self.kind {
            StatKind::OccupiedBoxes => BoxTerms {
                f: p * pow1m(p, nf - 1.0),
                d: if self.n >= 2 {
                    p * p * pow1m(p, nf - 2.0)
                } else {
                    0.0
                },
                ..Default::default()
            },
            StatKind::ExactlyR { .. } => {
                let z = self.mean(p);
                let g0 = self.g0(p);
                let mut t = BoxTerms {
                    z,
                    g0,
                    g1: g0 * p,
                    h: 0.5 * g0 * p * p,
                    ..Default::default()
                };
                if self.n >= 2 * self.r {
                    let rf = self.r as f64;
                    let e = (self.n - 2 * self.r) as f64;
                    let la = (-p).ln_1p();
                    t.f0 = z * (self.ln_kappa - rf * la).exp_m1();
                    let first = (nf - rf) * pow1m(p, nf - rf);
                    let second = if e > 0.0 {
                        self.kappa * e * pow1m(p, e - 1.0)
                    } else {
                        0.0
                    };
                    t.f1 = g0 * (first - second);
                    let yy = if e >= 2.0 {
                        self.kappa * e * (e - 1.0) * pow1m(p, e - 2.0)
                    } else {
                        0.0
                    };
                    let xx = if nf - rf >= 2.0 {
                        (nf - rf) * (nf - rf - 1.0) * pow1m(p, nf - rf)
                    } else {
                        0.0
                    };
                    t.e = g0 * (yy + xx);
                }
                t
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct TermSums {
    f: KahanSum,
    f2: KahanSum,
    d: KahanSum,
    f0: KahanSum,
    f1: KahanSum,
    f0_abs: KahanSum,
    f1_abs: KahanSum,
    e: KahanSum,
    z: KahanSum,
    z2: KahanSum,
}

impl TermSums {
    fn add(&mut self, t: &BoxTerms) {
        self.f.add(t.f);
        self.f2.add(t.f * t.f);
        self.d.add(t.d);
        self.f0.add(t.f0);
        self.f1.add(t.f1);
        self.f0_abs.add(t.f0.abs());
        self.f1_abs.add(t.f1.abs());
        self.e.add(t.e);
        self.z.add(t.z);
        self.z2.add(t.z * t.z);
    }
}

/// Accumulates an estimate with a running error bound.
#[derive(Debug, Default)]
struct Tally {
    value: KahanSum,
    abs: KahanSum,
    error: f64,
}

impl Tally {
    fn add(&mut self, v: f64, err: f64) {
        self.value.add(v);
        self.abs.add(v.abs());
        self.error += err;
    }

    fn finish(&self) -> (f64, f64) {
        (self.value.value(), self.error)
    }
}

/// First-order contribution of the boxes beyond the explicit range `> J`.
#[derive(Debug, Clone, Copy)]
struct TailInfo {
    t: f64,
    t_lo: f64,
    t_hi: f64,
    /// upper bound on every single weight beyond `J`
    p_max: f64,
}

impl TailInfo {
    fn of(model: &WeightModel, last: usize) -> Self {
        let (t_lo, t_hi) = model.tail_mass_bounds(last);
        TailInfo {
            t: model.tail_mass(last),
            t_lo,
            t_hi,
            p_max: model.prob(last + 1),
        }
    }

    fn is_empty(&self) -> bool {
        self.t_hi == 0.0
    }
}

/// Mean and variance of `stat` under `model` with `n` balls.
pub fn moments(
    model: &WeightModel,
    n: u64,
    stat: Statistic,
    mode: MomentMode,
) -> Result<MomentSummary> {
    stat.validate()?;
    if n == 0 {
        return validation("moments: n must be at least 1");
    }
    let kernel = Kernel::new(n, stat.kind);
    let from = stat.first_box();
    let (last, head_end) = match mode {
        MomentMode::ExactPairwise => {
            let last = model
                .truncation_point(n, EXACT_TAIL_TARGET, EXACT_PAIRWISE_MAX)
                .ok_or_else(|| {
                    Error::Resource(format!(
                        "ExactPairwise needs more than {EXACT_PAIRWISE_MAX} boxes for n = {n}; use HybridLargeScale"
                    ))
                })?;
            (last, last)
        }
        MomentMode::HybridLargeScale => {
            let last = match model.kind() {
                ModelKind::Explicit => model.support_len().unwrap(),
                ModelKind::ZetaPowerLaw => model
                    .truncation_point(n, HYBRID_TAIL_TARGET, CACHE_MAX)
                    .unwrap_or(CACHE_MAX),
            };
            let last = last.max(from.saturating_sub(1));
            (last, (from + HYBRID_HEAD - 1).min(last))
        }
    };
    if let StatKind::ExactlyR { r } = stat.kind {
        if (r as u64) > n {
            return Ok(MomentSummary {
                mu: 0.0,
                var: 0.0,
                truncation_error: 0.0,
                mode,
            });
        }
    }
    let probs: Vec<f64> = (from..=last).map(|j| model.prob(j)).collect();
    let head_len = (head_end + 1).saturating_sub(from).min(probs.len());
    let tail = TailInfo::of(model, last.max(from - 1));
    Ok(assemble(&kernel, &probs, head_len, &tail, mode))
}

fn assemble(
    kernel: &Kernel,
    probs: &[f64],
    head_len: usize,
    tail: &TailInfo,
    mode: MomentMode,
) -> MomentSummary {
    let n = kernel.nf;
    let mut mean = Tally::default();
    let mut var = Tally::default();

    // single-box terms over the explicit range
    for &p in probs {
        let m = kernel.mean(p);
        mean.add(m, 0.0);
        var.add(m * (1.0 - m), 0.0);
    }

    // exact pairs within the head
    let head = &probs[..head_len];
    let rows: Vec<KahanSum> = (0..head.len())
        .collect::<Vec<_>>()
        .par_chunks(ROW_BLOCK)
        .map(|block| {
            let mut acc = KahanSum::new();
            for &j in block {
                let a = head[j];
                for &b in &head[j + 1..] {
                    acc.add(kernel.cov(a, b));
                }
            }
            acc
        })
        .collect();
    let mut head_pairs = KahanSum::new();
    for r in &rows {
        head_pairs.merge(r);
    }
    var.add(2.0 * head_pairs.value(), 0.0);

    // separable pieces over head and over everything explicit
    let mut head_sums = TermSums::default();
    let mut all_sums = TermSums::default();
    let terms: Vec<BoxTerms> = probs.iter().map(|&p| kernel.box_terms(p)).collect();
    for (i, t) in terms.iter().enumerate() {
        if i < head_len {
            head_sums.add(t);
        }
        all_sums.add(t);
    }
    let small = &terms[head_len..];

    match kernel.kind {
        StatKind::OccupiedBoxes => {
            // ordered pairs with at least one light box:
            // (sum_all F)^2 - sum_all F^2 - [(sum_head F)^2 - sum_head F^2]
            let a_all = all_sums.f.value();
            let a_head = head_sums.f.value();
            let approx = -n
                * ((a_all * a_all - all_sums.f2.value())
                    - (a_head * a_head - head_sums.f2.value()));
            let d_small: f64 = small.iter().map(|t| t.d).sum();
            // remainder is one-sided in [0, bound]; report the midpoint
            let bound = n * n * d_small * all_sums.d.value();
            var.add(approx + 0.5 * bound, 0.5 * bound);

            if !tail.is_empty() {
                let dt = tail.t_hi - tail.t_lo;
                // q(b) in [nb - n^2 b^2 / 2, nb]
                mean.add(n * tail.t, n * dt + 0.5 * n * n * tail.p_max * tail.t_hi);
                // q(1-q) in [nb - 3/2 n^2 b^2, nb]
                var.add(n * tail.t, n * dt + 1.5 * n * n * tail.p_max * tail.t_hi);
                // F(b) in [b (1 - (n-1) b), b]
                let f_err = dt + (n - 1.0).max(0.0) * tail.p_max * tail.t_hi;
                var.add(
                    -2.0 * n * a_all * tail.t,
                    2.0 * (n * a_all * f_err
                        + 0.5 * n * n * all_sums.d.value() * tail.p_max * tail.t_hi),
                );
                // pairs with both boxes in the tail
                var.add(
                    0.0,
                    n * tail.t_hi * tail.t_hi + 0.5 * (n * tail.p_max * tail.t_hi).powi(2),
                );
            }
        }
        StatKind::ExactlyR { .. } => {
            let r = kernel.r;
            if kernel.n >= 2 * r {
                // sum over light s of sum over j != s of cov(p_j, p_s), doubled
                // by symmetry for (light, head) pairs already covered once.
                let (f0_all, f1_all, e_all) =
                    (all_sums.f0.value(), all_sums.f1.value(), all_sums.e.value());
                let (f0_head, f1_head, e_head) = (
                    head_sums.f0.value(),
                    head_sums.f1.value(),
                    head_sums.e.value(),
                );
                let mut cross = KahanSum::new();
                let mut rem = KahanSum::new();
                for t in small {
                    cross.add(t.g0 * (f0_all - t.f0 + f0_head) + t.g1 * (f1_all - t.f1 + f1_head));
                    rem.add(t.h * (e_all - t.e + e_head));
                }
                var.add(cross.value(), rem.value());
            } else {
                let z_all = all_sums.z.value();
                let z_head = head_sums.z.value();
                let approx = -((z_all * z_all - all_sums.z2.value())
                    - (z_head * z_head - head_sums.z2.value()));
                var.add(approx, 0.0);
            }

            if !tail.is_empty() {
                let rf = r as f64;
                let dt = tail.t_hi - tail.t_lo;
                let cr = kernel.ln_cr.exp();
                // sum_tail C(n,r) b^r
                let (g0_est, g0_hi, g0_err) = if r == 1 {
                    (n * tail.t, n * tail.t_hi, n * dt)
                } else {
                    let hi = cr * tail.p_max.powf(rf - 1.0) * tail.t_hi;
                    (0.0, hi, hi)
                };
                let g1_hi = cr * tail.p_max.powf(rf) * tail.t_hi;
                let h_hi = 0.5 * cr * tail.p_max.powf(rf + 1.0) * tail.t_hi;
                // z(b) = G0(b) (1-b)^{n-r}, so z <= G0 and G0 - z <= n b G0
                let z_err = g0_err + n * tail.p_max * g0_hi;
                let z_max = cr * tail.p_max.powf(rf);
                mean.add(g0_est, z_err);
                var.add(g0_est, z_err + g0_hi * z_max);
                if kernel.n >= 2 * r {
                    let f0 = all_sums.f0.value();
                    var.add(
                        2.0 * f0 * g0_est,
                        2.0 * (f0.abs() * g0_err
                            + all_sums.f1_abs.value() * g1_hi
                            + all_sums.e.value() * h_hi),
                    );
                    // both boxes in the tail: |F0| <= G0, |F1| <= 2n G0, E <= 2n^2 G0
                    var.add(
                        0.0,
                        g0_hi * g0_hi + 2.0 * n * g0_hi * g1_hi + 2.0 * n * n * g0_hi * h_hi,
                    );
                } else {
                    let z_all = all_sums.z.value();
                    var.add(-2.0 * z_all * g0_est, 2.0 * z_all * z_err + g0_hi * g0_hi);
                }
            }
        }
    }

    let (mu, mu_err) = mean.finish();
    let (v, v_err) = var.finish();
    let fp = FP_ALLOWANCE * (mean.abs.value() + var.abs.value() + 1.0);
    MomentSummary {
        mu,
        var: v.max(0.0),
        truncation_error: mu_err.max(v_err) + fp,
        mode,
    }
}

/// Mean of `stat` alone, with a certified error bound (no pair sums).
pub fn mean_only(model: &WeightModel, n: u64, stat: Statistic) -> Result<CertifiedValue> {
    stat.validate()?;
    let kernel = Kernel::new(n, stat.kind);
    let from = stat.first_box();
    let last = match model.support_len() {
        Some(l) => l,
        None => model
            .truncation_point(n, HYBRID_TAIL_TARGET, CACHE_MAX)
            .unwrap_or(CACHE_MAX),
    }
    .max(from - 1);
    let mut acc = KahanSum::new();
    for j in from..=last {
        acc.add(kernel.mean(model.prob(j)));
    }
    let tail = TailInfo::of(model, last);
    let nf = n as f64;
    let (est, err) = if tail.is_empty() {
        (0.0, 0.0)
    } else {
        match stat.kind {
            StatKind::OccupiedBoxes => (
                nf * tail.t,
                nf * (tail.t_hi - tail.t_lo) + 0.5 * nf * nf * tail.p_max * tail.t_hi,
            ),
            StatKind::ExactlyR { r } => {
                let cr = kernel.ln_cr.exp();
                if r == 1 {
                    (
                        nf * tail.t,
                        nf * (tail.t_hi - tail.t_lo) + nf * nf * tail.p_max * tail.t_hi,
                    )
                } else {
                    (0.0, cr * tail.p_max.powi(r as i32 - 1) * tail.t_hi)
                }
            }
        }
    };
    acc.add(est);
    let value = acc.value();
    Ok(CertifiedValue {
        value,
        error: err + FP_ALLOWANCE * (value + 1.0),
    })
}

/// `mu_hat_r = sum_{j >= j_n} (n p_j)^r e^{-n p_j} / r!`.
pub fn mu_hat_r(model: &WeightModel, n: u64, r: u32) -> Result<CertifiedValue> {
    if r == 0 {
        return validation("mu_hat_r requires r >= 1");
    }
    if n < 3 {
        return validation("mu_hat_r requires n >= 3");
    }
    let jn = model.tail_profile(n).jn;
    let nf = n as f64;
    let rf = r as f64;
    let ln_rfact = crate::special::ln_factorial(r as u64);
    let term = |p: f64| {
        if p <= 0.0 {
            0.0
        } else {
            let x = nf * p;
            (rf * x.ln() - x - ln_rfact).exp()
        }
    };
    let mut acc = KahanSum::new();
    let limit = model.support_len().unwrap_or(CACHE_MAX);
    let mut j = jn;
    loop {
        if j > limit {
            break;
        }
        acc.add(term(model.prob(j)));
        // terms decrease in j once n p_j <= r; check the remainder bound then
        let p_next = model.prob(j + 1);
        if nf * p_next <= rf && (j - jn) % 256 == 255 {
            let (est, err) = remainder(model, j, nf, r, ln_rfact);
            if err <= 1e-18 * (acc.value() + est) {
                acc.add(est);
                return Ok(CertifiedValue {
                    value: acc.value(),
                    error: err + FP_ALLOWANCE * acc.value(),
                });
            }
        }
        j += 1;
    }
    let (est, err) = remainder(model, limit, nf, r, ln_rfact);
    acc.add(est);
    Ok(CertifiedValue {
        value: acc.value(),
        error: err + FP_ALLOWANCE * acc.value(),
    })
}

/// Estimate and bound for `sum_{i > j} (n p_i)^r e^{-n p_i} / r!`.
fn remainder(model: &WeightModel, j: usize, nf: f64, r: u32, ln_rfact: f64) -> (f64, f64) {
    let (t_lo, t_hi) = model.tail_mass_bounds(j);
    if t_hi == 0.0 {
        return (0.0, 0.0);
    }
    let p = model.prob(j + 1);
    if r == 1 {
        // x e^{-x} in [x - x^2, x]
        (
            nf * model.tail_mass(j),
            nf * (t_hi - t_lo) + nf * nf * p * t_hi,
        )
    } else {
        let rf = r as f64;
        let bound = (rf * nf.ln() + (rf - 1.0) * p.ln() - ln_rfact).exp() * t_hi;
        (0.0, bound)
    }
}

/// Outcome of the two-sided comparison between `mu` and `mu_hat_r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuBoundReport {
    pub n: u64,
    pub r: u32,
    pub jn: usize,
    pub pbar: f64,
    pub mu: f64,
    pub mu_hat: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    pub pass: bool,
    /// `n >= n_0`, when `n_0` is defined for the model.
    pub in_premise: Option<bool>,
    pub note: String,
}

/// `exp(-n pbar^2 - r^2/n) <= mu / mu_hat_r <= e^{r pbar}` for the restricted
/// mean `mu = sum_{j >= j_n} Bin(n, p_j){r}`.
pub fn mu_bound_check(model: &WeightModel, n: u64, r: u32) -> Result<MuBoundReport> {
    if r == 0 || n < (2 * r as u64).max(3) {
        return validation(format!(
            "mu_bound_check requires r >= 1 and n >= max(2r, 3), got n={n}, r={r}"
        ));
    }
    let tp = model.tail_profile(n);
    let nf = n as f64;
    let rf = r as f64;
    let lower = (-nf * tp.pbar * tp.pbar - rf * rf / nf).exp();
    let upper = (rf * tp.pbar).exp();
    let in_premise = model.min_n0().ok().map(|n0| n >= n0);
    if tp.pn == 0.0 {
        return Ok(MuBoundReport {
            n,
            r,
            jn: tp.jn,
            pbar: tp.pbar,
            mu: 0.0,
            mu_hat: 0.0,
            ratio: f64::NAN,
            lower,
            upper,
            lower_ok: true,
            upper_ok: true,
            pass: true,
            in_premise,
            note: "empty tail".into(),
        });
    }
    let mu = mean_only(model, n, Statistic::exactly(r).from_box(tp.jn))?;
    let mu_hat = mu_hat_r(model, n, r)?;
    let ratio = mu.value / mu_hat.value;
    let rel = (mu.error / mu.value.max(f64::MIN_POSITIVE)) + mu_hat.error / mu_hat.value;
    let lower_ok = ratio * (1.0 + rel) >= lower;
    let upper_ok = ratio * (1.0 - rel) <= upper;
    Ok(MuBoundReport {
        n,
        r,
        jn: tp.jn,
        pbar: tp.pbar,
        mu: mu.value,
        mu_hat: mu_hat.value,
        ratio,
        lower,
        upper,
        lower_ok,
        upper_ok,
        pass: lower_ok && upper_ok,
        in_premise,
        note: String::new(),
    })
}

/// Pairwise covariance of two distinct box indicators, exposed for checks.
pub fn pair_covariance(n: u64, kind: StatKind, a: f64, b: f64) -> f64 {
    Kernel::new(n, kind).cov(a, b)
}
