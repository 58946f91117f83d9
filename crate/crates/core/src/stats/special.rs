#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::Scalar;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const CF_MAX_ITER: usize = 300;
const CF_EPS: f64 = 1e-14;

/// `ln Γ(x)` for `x > 0` (Lanczos, with reflection below 1/2).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    let half = T::of(0.5);
    if x < half {
        // Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::of(LANCZOS[0]);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::of(*c) / (x + T::of_usize(i));
    }
    let t = x + T::of(LANCZOS_G) + half;
    half * (T::TAU()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Remainder of Stirling's series, `ln Γ(x) - [(x-½)ln x - x + ½ln 2π]`, for x ≥ 10.
fn stirling_tail<T: Scalar>(x: T) -> T {
    let r = x.recip();
    let r2 = r * r;
    r * (T::of(1.0 / 12.0)
        - r2 * (T::of(1.0 / 360.0)
            - r2 * (T::of(1.0 / 1260.0) - r2 * (T::of(1.0 / 1680.0) - r2 * T::of(1.0 / 1188.0)))))
}

/// Natural log of the Beta function.
///
/// When the larger argument is at least 10 the difference
/// `ln Γ(l) - ln Γ(l+s)` is formed from Stirling's series directly, which
/// avoids cancelling two huge log-gammas against each other.
pub fn log_beta<T: Scalar>(a: T, b: T) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
        return domain(format!("log_beta requires positive finite shapes, got ({a}, {b})"));
    }
    let (small, large) = if a < b { (a, b) } else { (b, a) };
    if large < T::of(10.0) {
        return Ok(ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    }
    let half = T::of(0.5);
    let sum = large + small;
    let diff = -(large - half) * (small / large).ln_1p() - small * sum.ln()
        + small
        + stirling_tail(large)
        - stirling_tail(sum);
    Ok(ln_gamma(small) + diff)
}

/// Shape parameters of a Beta distribution. Shapes may be non-integer
/// because effective counts are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> BetaParams<T> {
    pub fn new(a: T, b: T) -> Result<Self> {
        if !(a > T::zero() && b > T::zero()) || !a.is_finite() || !b.is_finite() {
            return domain(format!("Beta shapes must be positive, got ({a}, {b})"));
        }
        Ok(Self { a, b })
    }

    /// Posterior under a uniform prior after `events` successes in
    /// `events + non_events` (possibly fractional) trials.
    pub fn posterior(events: T, non_events: T) -> Result<Self> {
        Self::new(events + T::one(), non_events + T::one())
    }

    pub fn cdf(&self, x: T) -> Result<T> {
        beta_cdf(x, self)
    }

    /// Upper tail `Pr(p > x)`.
    pub fn sf(&self, x: T) -> Result<T> {
        Ok(T::one() - beta_cdf(x, self)?)
    }

    pub fn interval_prob(&self, lo: T, hi: T) -> Result<T> {
        interval_prob(lo, hi, self)
    }

    pub fn ln_pdf(&self, x: T) -> Result<T> {
        if !(x > T::zero() && x < T::one()) {
            return domain(format!("Beta density evaluated outside (0,1): {x}"));
        }
        Ok((self.a - T::one()) * x.ln() + (self.b - T::one()) * (-x).ln_1p()
            - log_beta(self.a, self.b)?)
    }
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn beta_cdf<T: Scalar>(x: T, p: &BetaParams<T>) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return domain(format!("beta_cdf argument {x} outside [0, 1]"));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x == T::one() {
        return Ok(T::one());
    }
    let (a, b) = (p.a, p.b);
    let ln_front = a * x.ln() + b * (-x).ln_1p() - log_beta(a, b)?;
    let front = ln_front.exp();
    let switch = (a + T::one()) / (a + b + T::of(2.0));
    let value = if x < switch {
        front * continued_fraction(a, b, x)? / a
    } else {
        T::one() - front * continued_fraction(b, a, T::one() - x)? / b
    };
    Ok(value.max(T::zero()).min(T::one()))
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn continued_fraction<T: Scalar>(a: T, b: T, x: T) -> Result<T> {
    let one = T::one();
    let tiny = T::min_positive_value() / T::epsilon();
    let eps = T::of(CF_EPS).max(T::epsilon());
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;

    let clamp = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = clamp(one - qab * x / qap).recip();
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = T::of_usize(m);
        let m2 = m + m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = clamp(one + aa * d).recip();
        c = clamp(one + aa / c);
        h = h * d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = clamp(one + aa * d).recip();
        c = clamp(one + aa / c);
        let del = d * c;
        h = h * del;

        if (del - one).abs() <= eps {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!(
        "incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )))
}

/// Posterior mass of `(lo, hi]` under `p`.
pub fn interval_prob<T: Scalar>(lo: T, hi: T, p: &BetaParams<T>) -> Result<T> {
    if !(lo < hi) {
        return domain(format!("interval ({lo}, {hi}) is empty or reversed"));
    }
    if lo < T::zero() || hi > T::one() {
        return domain(format!("interval ({lo}, {hi}) not inside [0, 1]"));
    }
    let mass = beta_cdf(hi, p)? - beta_cdf(lo, p)?;
    Ok(mass.max(T::zero()))
}
