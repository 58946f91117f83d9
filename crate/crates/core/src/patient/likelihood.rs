use super::PendingData;
use crate::error::{domain, Result};
use crate::stats::quadrature;
use crate::Scalar;

/// Log-likelihood of the pending-outcome model at toxicity probability `p`:
/// `y ln p + m ln(1-p) + Σ ln(1 - w_i p)`.
///
/// Boundary values of `p` give `-∞` when the data contradict them.
pub fn exact_log_likelihood<T: Scalar>(p: T, data: &PendingData<T>) -> T {
    let term = |count: usize, log_factor: T| {
        if count == 0 {
            T::zero()
        } else {
            T::of_usize(count) * log_factor
        }
    };
    let mut ll = term(data.y, p.ln()) + term(data.m, (-p).ln_1p());
    for &w in &data.weights {
        ll = ll + (-(w * p)).ln_1p();
    }
    if ll.is_nan() {
        T::neg_infinity()
    } else {
        ll
    }
}

/// Posterior of `p` under a uniform prior and the exact pending-data
/// likelihood, integrated numerically.
#[derive(Debug, Clone)]
pub struct ExactPosterior<T> {
    data: PendingData<T>,
    log_scale: T,
    normaliser: T,
    tol: T,
}

impl<T: Scalar> ExactPosterior<T> {
    pub fn new(data: PendingData<T>, tol: T) -> Result<Self> {
        // Scale by the likelihood at the effective-data mode so the
        // integrand stays O(1) for larger samples.
        let eff = data.effective();
        let mode = if eff.n_eff > T::zero() {
            (T::of_usize(eff.y) / eff.n_eff).max(T::of(1e-6)).min(T::one() - T::of(1e-6))
        } else {
            T::of(0.5)
        };
        let log_scale = exact_log_likelihood(mode, &data);
        let mut post = Self { data, log_scale, normaliser: T::one(), tol };
        post.normaliser = post.raw_mass(T::zero(), T::one())?;
        if !(post.normaliser > T::zero()) {
            return Err(crate::Error::Numeric("exact posterior normaliser vanished".into()));
        }
        Ok(post)
    }

    fn density(&self, p: T) -> T {
        (exact_log_likelihood(p, &self.data) - self.log_scale).exp()
    }

    fn raw_mass(&self, lo: T, hi: T) -> Result<T> {
        quadrature::adaptive(&|p| self.density(p), lo, hi, self.tol)
    }

    pub fn interval_prob(&self, lo: T, hi: T) -> Result<T> {
        if !(lo < hi) || lo < T::zero() || hi > T::one() {
            return domain(format!("interval ({lo}, {hi}) not a sub-interval of [0, 1]"));
        }
        Ok((self.raw_mass(lo, hi)? / self.normaliser).max(T::zero()))
    }

    pub fn cdf(&self, x: T) -> Result<T> {
        if x <= T::zero() {
            return Ok(T::zero());
        }
        if x >= T::one() {
            return Ok(T::one());
        }
        self.interval_prob(T::zero(), x)
    }
}

/// Upper bound on `|(1 - w p) - (1 - p)^w|` over `w ∈ [0, 1]`.
pub fn approximation_error_bound<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return domain(format!("error bound requires p in (0, 1), got {p}"));
    }
    let l = (-p).ln_1p();
    let beta = (-p / l).ln() / l;
    Ok((T::one() - beta * p) - (beta * l).exp())
}
