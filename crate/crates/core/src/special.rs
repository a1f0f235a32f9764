//! Scalar special functions and compensated summation.
//!
//! Everything probability-valued is evaluated in log space so that masses far
//! in the tails neither overflow nor underflow prematurely.

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

#[inline]
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `(1 - p)^n` evaluated as `exp(n log1p(-p))`.
#[inline]
pub fn pow1m(p: f64, n: f64) -> f64 {
    if p >= 1.0 {
        return if n == 0.0 { 1.0 } else { 0.0 };
    }
    (n * (-p).ln_1p()).exp()
}

/// Binomial(n, p) mass at k.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    ln.exp()
}

/// Poisson(lambda) mass at k.
pub fn poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * lambda.ln() - lambda - ln_factorial(k)).exp()
}

/// Falling factorial `m (m-1) ... (m-s+1)` as a float.
pub fn falling_factorial(m: u64, s: u64) -> f64 {
    if s > m {
        return 0.0;
    }
    (0..s).fold(1.0, |acc, i| acc * (m - i) as f64)
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn merge(&mut self, other: &KahanSum) {
        self.add(other.sum);
        self.add(other.comp);
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

// B_2, B_4, ..., B_12
const BERNOULLI_EVEN: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// `sum_{j >= start} j^{-a}` for `a > 1`, `start >= 1`.
///
/// Direct summation up to a cut-over point, then the Euler-Maclaurin tail
/// (integral plus boundary and Bernoulli corrections).
pub fn hurwitz_tail(a: f64, start: u64) -> f64 {
    debug_assert!(a > 1.0 && start >= 1);
    let cut = 16 + 2 * a.ceil() as u64;
    let mut acc = KahanSum::new();
    let mut j = start;
    while j < cut {
        acc.add((j as f64).powf(-a));
        j += 1;
    }
    let big_n = j as f64;
    acc.add(big_n.powf(1.0 - a) / (a - 1.0));
    acc.add(0.5 * big_n.powf(-a));
    // B_{2k}/(2k)! * a (a+1) ... (a+2k-2) * N^{-a-2k+1}
    let mut rising = a;
    let mut fact = 2.0;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = k as f64 + 1.0;
        let term = b / fact * rising * big_n.powf(-a - 2.0 * k + 1.0);
        acc.add(term);
        rising *= (a + 2.0 * k - 1.0) * (a + 2.0 * k);
        fact *= (2.0 * k + 1.0) * (2.0 * k + 2.0);
    }
    acc.value()
}

/// Riemann zeta function for real `a > 1`.
pub fn zeta(a: f64) -> f64 {
    hurwitz_tail(a, 1)
}

/// Maximize a continuous function on `[lo, hi]` by a log-spaced grid scan
/// followed by golden-section refinement around the best grid point.
///
/// Intended for the unimodal `x^k e^{-c x}` shapes used by the appendix
/// constants; returns `(argmax, max)`.
pub fn maximize_1d<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> (f64, f64) {
    assert!(lo < hi && lo >= 0.0);
    const GRID: usize = 4096;
    let a = if lo > 0.0 {
        lo
    } else {
        1e-12_f64.min(hi / 2.0)
    };
    let ratio = (hi / a).ln();
    let pt = |i: usize| {
        if i == 0 {
            lo
        } else if i == GRID {
            hi
        } else {
            a * (ratio * i as f64 / GRID as f64).exp()
        }
    };
    let mut best_i = 0;
    let mut best = f(pt(0));
    for i in 1..=GRID {
        let v = f(pt(i));
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut left = pt(best_i.saturating_sub(1));
    let mut right = pt((best_i + 1).min(GRID));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = right - phi * (right - left);
    let mut x2 = left + phi * (right - left);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (right - left) <= 1e-15 * right.abs().max(1e-300) {
            break;
        }
        if f1 < f2 {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + phi * (right - left);
            f2 = f(x2);
        } else {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - phi * (right - left);
            f1 = f(x1);
        }
    }
    let (arg, val) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
    if val > best {
        (arg, val)
    } else {
        (pt(best_i), best)
    }
}
