#![allow(dead_code)]
//! Brute-force oracles shared by the integration tests.

use std::collections::BTreeMap;

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use occupancy::moments::{StatKind, Statistic};

/// Every count vector of `n` balls in `probs.len()` boxes with its
/// multinomial probability.
pub fn multinomial_outcomes(probs: &[f64], n: u64) -> Vec<(Vec<u64>, f64)> {
    fn rec(
        probs: &[f64],
        left: u64,
        coef: f64,
        prob: f64,
        cur: &mut Vec<u64>,
        out: &mut Vec<(Vec<u64>, f64)>,
    ) {
        let i = cur.len();
        if i + 1 == probs.len() {
            cur.push(left);
            let p = prob * probs[i].powi(left as i32) / factorial(left);
            out.push((cur.clone(), coef * p));
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            let p = prob * probs[i].powi(k as i32) / factorial(k);
            rec(probs, left - k, coef, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(probs, n, factorial(n), 1.0, &mut Vec::new(), &mut out);
    out
}

pub fn factorial(k: u64) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binom(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
        * p.powi(k as i32)
        * (1.0 - p).powi((n - k) as i32)
}

fn hits(kind: StatKind, c: u64) -> bool {
    match kind {
        StatKind::OccupiedBoxes => c >= 1,
        StatKind::ExactlyR { r } => c == r as u64,
    }
}

/// Law of a statistic by enumerating every allocation.
pub fn statistic_law(probs: &[f64], n: u64, stat: Statistic) -> BTreeMap<i64, f64> {
    let from = stat.restricted_from.unwrap_or(1);
    let mut law = BTreeMap::new();
    for (counts, p) in multinomial_outcomes(probs, n) {
        let k = counts
            .iter()
            .enumerate()
            .filter(|&(j, &c)| j + 1 >= from && hits(stat.kind, c))
            .count() as i64;
        *law.entry(k).or_insert(0.0) += p;
    }
    law
}

/// Joint law of `(N_j)_{j >= j0}` under direct multinomial allocation.
pub fn restricted_law(probs: &[f64], n: u64, j0: usize) -> BTreeMap<Vec<u64>, f64> {
    let mut law = BTreeMap::new();
    for (counts, p) in multinomial_outcomes(probs, n) {
        *law.entry(counts[j0 - 1..].to_vec()).or_insert(0.0) += p;
    }
    law
}

/// Joint law of the thinned counts of the two-stage construction: `n` balls
/// into boxes `j >= j0` with probabilities `p_j / P0`, each kept with
/// probability `P0`.
pub fn two_stage_law(probs: &[f64], n: u64, j0: usize) -> BTreeMap<Vec<u64>, f64> {
    let tail = &probs[j0 - 1..];
    let p0: f64 = tail.iter().sum();
    let cond: Vec<f64> = tail.iter().map(|p| p / p0).collect();
    let mut law = BTreeMap::new();
    for (stage, p) in multinomial_outcomes(&cond, n) {
        // every thinning outcome
        let mut partial: Vec<(Vec<u64>, f64)> = vec![(Vec::new(), p)];
        for &m in &stage {
            let mut next = Vec::new();
            for (v, q) in &partial {
                for k in 0..=m {
                    let mut w = v.clone();
                    w.push(k);
                    next.push((w, q * binom(m, k, p0)));
                }
            }
            partial = next;
        }
        for (v, q) in partial {
            *law.entry(v).or_insert(0.0) += q;
        }
    }
    law
}

/// A random nonincreasing probability vector of length `len`.
pub fn random_model<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 1e-3).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Pearson chi-square p-value; cells with expected count below 5 are pooled.
pub fn chi_square_pvalue(observed: &[u64], expected: &[f64]) -> f64 {
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        o_acc += o;
        e_acc += e;
        if e_acc >= 5.0 {
            obs.push(o_acc as f64);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0 {
        match exp.last_mut() {
            Some(last) => {
                *last += e_acc;
                *obs.last_mut().unwrap() += o_acc as f64;
            }
            None => {
                obs.push(o_acc as f64);
                exp.push(e_acc);
            }
        }
    }
    if exp.len() < 2 {
        return 1.0;
    }
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e).powi(2) / e).sum();
    let dist = ChiSquared::new((exp.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Mean, variance and their standard errors from a frequency table.
pub struct SampleMoments {
    pub mean: f64,
    pub var: f64,
    pub mean_se: f64,
    pub var_se: f64,
}

pub fn sample_moments(hist: &BTreeMap<i64, u64>) -> SampleMoments {
    let r: f64 = hist.values().map(|&c| c as f64).sum();
    let mean = hist.iter().map(|(&k, &c)| k as f64 * c as f64).sum::<f64>() / r;
    let central = |p: i32| {
        hist.iter()
            .map(|(&k, &c)| (k as f64 - mean).powi(p) * c as f64)
            .sum::<f64>()
    };
    let var = central(2) / (r - 1.0);
    let m4 = central(4) / r;
    let var_se = ((m4 - var * var * (r - 3.0) / (r - 1.0)) / r)
        .max(0.0)
        .sqrt();
    SampleMoments {
        mean,
        var,
        mean_se: (var / r).sqrt(),
        var_se,
    }
}
