//! Monte Carlo samplers and the conditional decomposition.
//!
//! Every stochastic routine takes a master seed; replicate `i` draws from
//! ChaCha8 stream `i` of that seed, so results do not depend on how replicates
//! are scheduled across threads.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::exactdist::poisson_binomial;
use crate::metrics::Pmf;
use crate::moments::{StatKind, Statistic};
use crate::special::binomial_pmf;
use crate::weights::{WeightModel, CACHE_MAX};
use crate::Error;

/// Samples per parallel work unit in histogram simulations.
pub const CHUNK: u64 = 4096;
/// Smallest replicate count accepted by [`decomposition_estimate`].
pub const MIN_DECOMPOSITION_REPS: usize = 1000;
// n * tail(table end) target when sizing a power-law lookup table
const TABLE_TAIL_TARGET: f64 = 0.01;
// head boxes with n p_j above this are drawn by conditional binomials
const HEAD_LOAD: f64 = 0.5;

/// Generator for replicate `index` under master seed `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSample {
    /// `N_j` for every box that received a ball.
    pub counts: BTreeMap<usize, u64>,
    /// `M_j` of the two-stage construction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_one: Option<BTreeMap<usize, u64>>,
    pub seed: u64,
}

impl AllocationSample {
    pub fn statistic(&self, stat: &Statistic) -> u64 {
        self.counts
            .iter()
            .filter(|&(&j, &c)| stat.includes(j) && stat.hits(c))
            .count() as u64
    }
}

/// Boxes `j > after`, drawn with probability `p_j / tail(after)`.
#[derive(Debug, Clone, Copy)]
pub struct Region {
    pub after: usize,
    base: f64,
    mass: f64,
}

impl Region {
    pub fn mass(&self) -> f64 {
        self.mass
    }
}

/// Inverse-CDF box sampler: binary search over a cached table of partial
/// sums, with an exact rejection sampler for power-law boxes past the table.
#[derive(Debug, Clone)]
pub struct BoxSampler {
    model: WeightModel,
    cdf: Arc<Vec<f64>>,
    exponent: Option<f64>,
    last_positive: usize,
}

impl BoxSampler {
    /// Table sized so that about 1% of `n` draws land beyond it.
    pub fn new(model: &WeightModel, n: u64) -> Self {
        let len = match model.support_len() {
            Some(l) => l,
            None => model
                .truncation_point(n.max(1), TABLE_TAIL_TARGET, CACHE_MAX)
                .unwrap_or(CACHE_MAX)
                .max(1),
        };
        Self::with_table(model, len)
    }

    pub fn with_table(model: &WeightModel, len: usize) -> Self {
        let cdf = model.cdf_table(len);
        let last_positive = match model.support_len() {
            Some(l) => (1..=l).rev().find(|&j| model.prob(j) > 0.0).unwrap_or(1),
            None => usize::MAX,
        };
        BoxSampler {
            model: model.clone(),
            cdf,
            exponent: model.exponent(),
            last_positive,
        }
    }

    pub fn region(&self, after: usize) -> Region {
        Region {
            after,
            base: self.model.cumulative(after),
            mass: self.model.tail_mass(after),
        }
    }

    /// One draw from the full weight sequence.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.locate(u, rng)
    }

    /// One draw restricted to `region` (which must carry positive mass).
    pub fn sample_in<R: Rng + ?Sized>(&self, region: &Region, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.locate(region.base + u * region.mass, rng)
            .max(region.after + 1)
    }

    fn locate<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx < self.cdf.len() {
            return (idx + 1).min(self.last_positive);
        }
        match self.exponent {
            Some(a) => self.power_tail(a, rng),
            None => self.last_positive,
        }
    }

    /// Exact draw from `p_k ∝ k^{-a}`, `k > J`, `J` = table length.
    ///
    /// Proposal `ceil(J U^{-1/(a-1)})` (a discretized Pareto), accepted with
    /// probability `k^{-a} (a-1) / ((k-1)^{1-a} - k^{1-a}) <= 1`.
    fn power_tail<R: Rng + ?Sized>(&self, a: f64, rng: &mut R) -> usize {
        let j = self.cdf.len() as f64;
        loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let x = j * u.powf(-1.0 / (a - 1.0));
            if x.is_nan() || x >= 9.0e18 {
                continue;
            }
            let k = x.ceil().max(j + 1.0);
            let accept = (a - 1.0) / (k * ((1.0 - a) * (-1.0 / k).ln_1p()).exp_m1());
            if rng.random::<f64>() < accept {
                return k as usize;
            }
        }
    }
}

/// Sparse counts from a list of box labels (sorted in place).
fn tally(labels: &mut [usize]) -> BTreeMap<usize, u64> {
    labels.sort_unstable();
    let mut out = BTreeMap::new();
    for &b in labels.iter() {
        *out.entry(b).or_insert(0) += 1;
    }
    out
}

/// Visit `(box, multiplicity)` runs of a sorted label list.
fn for_each_run(labels: &[usize], mut f: impl FnMut(usize, u64)) {
    let mut i = 0;
    while i < labels.len() {
        let b = labels[i];
        let mut c = 1;
        while i + c < labels.len() && labels[i + c] == b {
            c += 1;
        }
        f(b, c as u64);
        i += c;
    }
}

/// `n` independent box draws.
pub fn sample_counts(model: &WeightModel, n: u64, seed: u64) -> Result<AllocationSample> {
    if n == 0 {
        return validation("sample_counts: n must be at least 1");
    }
    let sampler = BoxSampler::new(model, n);
    let mut rng = replicate_rng(seed, 0);
    let mut labels: Vec<usize> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    Ok(AllocationSample {
        counts: tally(&mut labels),
        stage_one: None,
        seed,
    })
}

/// Stage-one throw restricted to `j >= j_0` followed by thinning with
/// retention probability `P_0`. Only boxes `j >= j_0` are realized.
pub fn two_stage_sample(model: &WeightModel, n: u64, seed: u64) -> Result<AllocationSample> {
    if n == 0 {
        return validation("two_stage_sample: n must be at least 1");
    }
    let (j0, p0) = model.split_j0();
    if p0 <= 0.0 {
        return Err(Error::Degenerate(
            "P_0 = 0: two-stage construction undefined".into(),
        ));
    }
    let sampler = BoxSampler::new(model, n);
    let region = sampler.region(j0 - 1);
    let mut rng = replicate_rng(seed, 0);
    let mut labels: Vec<usize> = (0..n)
        .map(|_| sampler.sample_in(&region, &mut rng))
        .collect();
    let stage_one = tally(&mut labels);
    let mut counts = BTreeMap::new();
    for (&j, &m) in &stage_one {
        let kept = thin(m, p0, &mut rng);
        if kept > 0 {
            counts.insert(j, kept);
        }
    }
    Ok(AllocationSample {
        counts,
        stage_one: Some(stage_one),
        seed,
    })
}

#[inline]
fn thin<R: Rng + ?Sized>(m: u64, p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return m;
    }
    Binomial::new(m, p).expect("valid binomial").sample(rng)
}

/// Fast exact sampler of a single statistic value.
///
/// Heavily loaded head boxes are filled by sequential conditional binomials
/// `N_j ~ Bin(remaining, p_j / tail(j-1))`; the balls left over are thrown
/// one by one into boxes past the head and tallied by sorting.
#[derive(Debug, Clone)]
pub struct StatisticSampler {
    n: u64,
    stat: Statistic,
    head: Vec<f64>,
    region: Region,
    boxes: BoxSampler,
}

impl StatisticSampler {
    pub fn new(model: &WeightModel, n: u64, stat: Statistic) -> Result<Self> {
        stat.validate()?;
        if n == 0 {
            return validation("StatisticSampler: n must be at least 1");
        }
        let nf = n as f64;
        let limit = model.support_len().unwrap_or(CACHE_MAX);
        let mut head = Vec::new();
        let mut j = 1;
        while j <= limit && nf * model.prob(j) >= HEAD_LOAD {
            let rest = model.tail_mass(j - 1);
            head.push(if rest > 0.0 {
                (model.prob(j) / rest).min(1.0)
            } else {
                1.0
            });
            j += 1;
        }
        let boxes = BoxSampler::new(model, n);
        let region = boxes.region(head.len());
        Ok(StatisticSampler {
            n,
            stat,
            head,
            region,
            boxes,
        })
    }

    /// One draw; `buf` is scratch space reused across calls.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<usize>) -> i64 {
        let mut left = self.n;
        let mut k = 0i64;
        for (i, &q) in self.head.iter().enumerate() {
            if left == 0 {
                break;
            }
            let x = thin(left, q, rng);
            left -= x;
            if self.stat.includes(i + 1) && self.stat.hits(x) {
                k += 1;
            }
        }
        if left > 0 && self.region.mass > 0.0 {
            buf.clear();
            buf.extend((0..left).map(|_| self.boxes.sample_in(&self.region, rng)));
            buf.sort_unstable();
            for_each_run(buf, |b, c| {
                if self.stat.includes(b) && self.stat.hits(c) {
                    k += 1;
                }
            });
        }
        k
    }
}

/// Frequency table of `samples` independent draws of the statistic.
pub fn sample_histogram(
    model: &WeightModel,
    n: u64,
    stat: Statistic,
    samples: u64,
    seed: u64,
) -> Result<BTreeMap<i64, u64>> {
    if samples == 0 {
        return validation("sample_histogram: samples must be at least 1");
    }
    let sampler = StatisticSampler::new(model, n, stat)?;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<BTreeMap<i64, u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = replicate_rng(seed, c);
            let mut buf = Vec::new();
            let todo = CHUNK.min(samples - c * CHUNK);
            let mut hist = BTreeMap::new();
            for _ in 0..todo {
                *hist.entry(sampler.sample(&mut rng, &mut buf)).or_insert(0) += 1;
            }
            hist
        })
        .collect();
    let mut out = BTreeMap::new();
    for part in parts {
        for (k, c) in part {
            *out.entry(k).or_insert(0) += c;
        }
    }
    Ok(out)
}

/// Conditional success probability `z(l)` of a box holding `l` stage-one balls.
#[inline]
fn kernel(kind: StatKind, p0: f64, l: u64) -> f64 {
    if l == 0 {
        return 0.0;
    }
    match kind {
        StatKind::OccupiedBoxes => -(l as f64 * (-p0).ln_1p()).exp_m1(),
        StatKind::ExactlyR { r } => binomial_pmf(l, p0, r as u64),
    }
}

fn conditional_first_box(stat: &Statistic, j0: usize) -> Result<usize> {
    let from = stat.restricted_from.ok_or_else(|| {
        Error::Validation("conditional quantities need restricted_from (normally j_n)".into())
    })?;
    if from < j0 {
        return validation(format!(
            "restricted_from = {from} lies below j_0 = {j0}; the two-stage construction only realizes j >= j_0"
        ));
    }
    Ok(from)
}

/// `(mu_M, sigma2_M) = (sum z(M_j), sum z(M_j)(1 - z(M_j)))` over counted boxes.
pub fn conditional_moments(
    stage_one: &BTreeMap<usize, u64>,
    model: &WeightModel,
    stat: &Statistic,
) -> Result<(f64, f64)> {
    stat.validate()?;
    let (j0, p0) = model.split_j0();
    let from = conditional_first_box(stat, j0)?;
    let mut mu = 0.0;
    let mut s2 = 0.0;
    for (_, &m) in stage_one.range(from..) {
        let z = kernel(stat.kind, p0, m);
        mu += z;
        s2 += z * (1.0 - z);
    }
    Ok((mu, s2))
}

/// Law of `W` given the stage-one counts: a Poisson-binomial distribution.
pub fn conditional_pmf_given_m(
    stage_one: &BTreeMap<usize, u64>,
    model: &WeightModel,
    stat: &Statistic,
) -> Result<Pmf> {
    stat.validate()?;
    let (j0, p0) = model.split_j0();
    let from = conditional_first_box(stat, j0)?;
    let z: Vec<f64> = stage_one
        .range(from..)
        .map(|(_, &m)| kernel(stat.kind, p0, m))
        .collect();
    Ok(poisson_binomial(&z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionErrors {
    pub sigma2: f64,
    pub tau2: f64,
    pub rho2: f64,
    pub nu2: f64,
    /// standard error of `sigma2 - rho2 - tau2`, from per-replicate
    /// influence terms (the three estimates share replicates)
    pub identity: f64,
    pub mean_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: u64,
    pub stat: Statistic,
    pub sigma2: f64,
    pub tau2: f64,
    pub rho2: f64,
    pub nu2: f64,
    pub mean_w: f64,
    pub mean_mu_m: f64,
    /// `(mu_M - mean) / tau_hat`, standardized with the estimated `tau`.
    pub u_samples: Vec<f64>,
    pub reps: usize,
    pub std_errors: DecompositionErrors,
    /// `n >= n_0` for the model.
    pub in_premise: Option<bool>,
    pub notes: Vec<String>,
}

struct MomentStats {
    mean: f64,
    var: f64,
    var_se: f64,
    mean_se: f64,
}

fn moment_stats(xs: &[f64]) -> MomentStats {
    let r = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / r;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (r - 1.0);
    let m4 = m4 / r;
    let s4 = var * var;
    let var_se = ((m4 - s4 * (r - 3.0) / (r - 1.0)) / r).max(0.0).sqrt();
    MomentStats {
        mean,
        var,
        var_se,
        mean_se: (var / r).sqrt(),
    }
}

/// Monte Carlo estimates of `sigma^2 = Var W`, `tau^2 = Var mu_M`,
/// `rho^2 = E sigma^2_M` and `nu^2 = Var sigma^2_M`.
///
/// An unrestricted statistic is restricted to `j >= j_n`.
pub fn decomposition_estimate(
    model: &WeightModel,
    n: u64,
    stat: Statistic,
    reps: usize,
    seed: u64,
) -> Result<Decomposition> {
    stat.validate()?;
    if reps < MIN_DECOMPOSITION_REPS {
        return validation(format!(
            "decomposition_estimate: reps = {reps} below {MIN_DECOMPOSITION_REPS}"
        ));
    }
    if n < 3 {
        return validation("decomposition_estimate: n must be at least 3");
    }
    let (j0, p0) = model.split_j0();
    if p0 <= 0.0 {
        return Err(Error::Degenerate(
            "P_0 = 0: two-stage construction undefined".into(),
        ));
    }
    let stat = match stat.restricted_from {
        Some(_) => stat,
        None => stat.from_box(model.tail_profile(n).jn),
    };
    let from = conditional_first_box(&stat, j0)?;
    let mut notes = Vec::new();
    let in_premise = model.min_n0().ok().map(|n0| n >= n0);
    if in_premise == Some(false) {
        log::warn!("n = {n} is below n_0");
        notes.push("n below n_0".into());
    }

    let sampler = BoxSampler::new(model, n);
    let region = sampler.region(j0 - 1);
    let rows: Vec<(f64, f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map_init(Vec::new, |labels, i| {
            let mut rng = replicate_rng(seed, i);
            labels.clear();
            labels.extend((0..n).map(|_| sampler.sample_in(&region, &mut rng)));
            labels.sort_unstable();
            let (mut mu, mut s2, mut w) = (0.0, 0.0, 0.0);
            for_each_run(labels, |b, m| {
                if b >= from {
                    let z = kernel(stat.kind, p0, m);
                    mu += z;
                    s2 += z * (1.0 - z);
                    if stat.hits(thin(m, p0, &mut rng)) {
                        w += 1.0;
                    }
                }
            });
            (mu, s2, w)
        })
        .collect();

    let mus: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let s2s: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ws: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mu_st = moment_stats(&mus);
    let s2_st = moment_stats(&s2s);
    let w_st = moment_stats(&ws);
    if mu_st.var <= 0.0 {
        return Err(Error::Degenerate(
            "estimated tau^2 = 0: U is undefined".into(),
        ));
    }
    let tau = mu_st.var.sqrt();
    let influence: Vec<f64> = rows
        .iter()
        .map(|&(mu, s2, w)| (w - w_st.mean).powi(2) - s2 - (mu - mu_st.mean).powi(2))
        .collect();
    let inf_st = moment_stats(&influence);
    notes.push("U standardized with the estimated tau".into());
    Ok(Decomposition {
        n,
        stat,
        sigma2: w_st.var,
        tau2: mu_st.var,
        rho2: s2_st.mean,
        nu2: s2_st.var,
        mean_w: w_st.mean,
        mean_mu_m: mu_st.mean,
        u_samples: mus.iter().map(|m| (m - mu_st.mean) / tau).collect(),
        reps,
        std_errors: DecompositionErrors {
            sigma2: w_st.var_se,
            tau2: mu_st.var_se,
            rho2: s2_st.mean_se,
            nu2: s2_st.var_se,
            identity: inf_st.mean_se,
            mean_w: w_st.mean_se,
        },
        in_premise,
        notes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRatios {
    pub nu2_over_rho2: f64,
    pub nu2_over_rho2_se: f64,
    pub rho2_over_sigma2: f64,
    pub rho2_over_sigma2_se: f64,
}

/// `nu^2 / rho^2` and `rho^2 / sigma^2` with delta-method standard errors.
pub fn condition_ratios(dec: &Decomposition) -> Result<ConditionRatios> {
    if dec.rho2 <= 0.0 {
        return Err(Error::Degenerate("rho^2 = 0: ratios undefined".into()));
    }
    if dec.sigma2 <= 0.0 {
        return Err(Error::Degenerate("sigma^2 = 0: ratios undefined".into()));
    }
    let se = dec.std_errors;
    let ratio = |a: f64, sa: f64, b: f64, sb: f64| {
        let r = a / b;
        let rel = if a > 0.0 { (sa / a).powi(2) } else { 0.0 } + (sb / b).powi(2);
        (r, r.abs() * rel.sqrt())
    };
    let (nr, nr_se) = ratio(dec.nu2, se.nu2, dec.rho2, se.rho2);
    let (rs, rs_se) = ratio(dec.rho2, se.rho2, dec.sigma2, se.sigma2);
    Ok(ConditionRatios {
        nu2_over_rho2: nr,
        nu2_over_rho2_se: nr_se,
        rho2_over_sigma2: rs,
        rho2_over_sigma2_se: rs_se,
    })
}
