//! Probability mass functions and tail probabilities that stay accurate at
//! photon numbers in the 10^7 range and trial counts in the 10^8 range.
//!
//! Poisson and binomial masses use Loader's saddle-point form
//! (`stirlerr` + `bd0`), which keeps full relative precision where a naive
//! `exp(k ln λ - λ - lnΓ(k+1))` loses eight or more digits. The regularized
//! incomplete beta function is evaluated by a Lentz continued fraction whose
//! prefactor is one such binomial mass.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::ln_gamma;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Half-width of the summation band for Poisson masses, in standard
/// deviations. Mass outside `λ ± (40σ + 40)` is below 1e-25.
const POISSON_BAND_SIGMAS: f64 = 40.0;

/// Error of Stirling's approximation: `ln n! - [(n + 1/2) ln n - n + ln √(2π)]`.
pub fn stirlerr(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 0.0 {
        return 0.0;
    }
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation when
/// `x ≈ np`.
pub fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
    }
    x * (x / np).ln() + np - x
}

/// Natural log of the Poisson(λ) mass at `k`. Returns `-inf` for impossible
/// outcomes.
pub fn ln_poisson_pmf(k: f64, lambda: f64) -> f64 {
    if k < 0.0 {
        return f64::NEG_INFINITY;
    }
    if lambda == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0.0 {
        return -lambda;
    }
    -stirlerr(k) - bd0(k, lambda) - 0.5 * (2.0 * PI * k).ln()
}

pub fn poisson_pmf(k: f64, lambda: f64) -> f64 {
    ln_poisson_pmf(k, lambda).exp()
}

/// Natural log of the Binomial(n, p) mass at `k`.
pub fn ln_binomial_pmf(k: f64, n: f64, p: f64) -> f64 {
    let q = 1.0 - p;
    if k < 0.0 || k > n {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if k == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0.0 {
        if n == 0.0 {
            return 0.0;
        }
        return if p < 0.1 {
            -bd0(n, n * q) - n * p
        } else {
            n * q.ln()
        };
    }
    if k == n {
        return if q < 0.1 {
            -bd0(n, n * p) - n * q
        } else {
            n * p.ln()
        };
    }
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(k, n * p) - bd0(n - k, n * q);
    let lf = (2.0 * PI).ln() + k.ln() + (-k / n).ln_1p();
    lc - 0.5 * lf
}

pub fn binomial_pmf(k: f64, n: f64, p: f64) -> f64 {
    ln_binomial_pmf(k, n, p).exp()
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Range of `k` outside of which Poisson(λ) mass is negligible.
pub fn poisson_support_band(lambda: f64) -> (u64, u64) {
    let half = POISSON_BAND_SIGMAS * lambda.sqrt() + POISSON_BAND_SIGMAS;
    let lo = (lambda - half).floor().max(0.0) as u64;
    let hi = (lambda + half).ceil() as u64;
    (lo, hi)
}

/// `P(lo ≤ K ≤ hi)` for `K ~ Poisson(λ)`, by direct summation over the part
/// of the window that intersects the support band.
pub fn poisson_window_mass(lo: u64, hi: u64, lambda: f64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    if lambda == 0.0 {
        return if lo == 0 { 1.0 } else { 0.0 };
    }
    let (band_lo, band_hi) = poisson_support_band(lambda);
    let start = lo.max(band_lo);
    let end = hi.min(band_hi);
    if end < start {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    for k in start..=end {
        acc.add(poisson_pmf(k as f64, lambda));
    }
    acc.value().min(1.0)
}

/// `P(K ≤ k)` for `K ~ Poisson(λ)`.
pub fn poisson_cdf(k: u64, lambda: f64) -> f64 {
    poisson_window_mass(0, k, lambda)
}

const BETACF_MAX_ITER: usize = 1_000_000;
const BETACF_EPS: f64 = 1e-16;

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let fpmin = f64::MIN_POSITIVE / f64::EPSILON;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < fpmin {
        d = fpmin;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETACF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < fpmin {
            d = fpmin;
        }
        c = 1.0 + aa / c;
        if c.abs() < fpmin {
            c = fpmin;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() <= BETACF_EPS {
            return h;
        }
    }
    debug_assert!(false, "incomplete beta continued fraction did not converge");
    h
}

/// Regularized incomplete beta function `I_x(a, b)` for `a, b > 0`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta_reg requires a, b > 0");
    assert!((0.0..=1.0).contains(&x), "beta_reg requires x in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    // x^a (1-x)^b Γ(a+b) / (Γ(a+1) Γ(b)) == (1-x) * Binomial(a+b-1, x) mass at a
    let front = |a: f64, b: f64, x: f64| (1.0 - x) * binomial_pmf(a, a + b - 1.0, x);
    if x < (a + 1.0) / (a + b + 2.0) {
        front(a, b, x) * beta_continued_fraction(a, b, x)
    } else {
        1.0 - front(b, a, 1.0 - x) * beta_continued_fraction(b, a, 1.0 - x)
    }
}

/// `P(X ≥ k)` for `X ~ Binomial(n, p)`.
pub fn binomial_upper_tail(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    beta_reg(k as f64, (n - k + 1) as f64, p)
}

/// `P(X ≤ k)` for `X ~ Binomial(n, p)`.
pub fn binomial_lower_tail(k: u64, n: u64, p: f64) -> f64 {
    if k >= n {
        return 1.0;
    }
    beta_reg((n - k) as f64, (k + 1) as f64, 1.0 - p)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile for `p ∈ (0, 1)`.
pub fn normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}
