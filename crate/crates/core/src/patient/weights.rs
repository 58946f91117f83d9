use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::stats::{ln_gamma, BetaParams};
use crate::Scalar;

/// Prior probabilities that a toxicity falls in the early, middle and late
/// thirds of the assessment window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseWeights<T> {
    pub early: T,
    pub middle: T,
    pub late: T,
}

impl<T: Scalar> PiecewiseWeights<T> {
    pub fn new(early: T, middle: T, late: T) -> Result<Self> {
        let v = Self { early, middle, late };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.early, self.middle, self.late];
        if parts.iter().any(|p| !(*p >= T::zero())) {
            return config(format!("piecewise weights must be non-negative: {self:?}"));
        }
        let total = self.early + self.middle + self.late;
        if (total - T::one()).abs() > T::of(1e-9) {
            return config(format!("piecewise weights must sum to 1, got {total}"));
        }
        Ok(())
    }
}

/// Independent Gamma(shape, rate) priors on the two shapes of the scaled
/// Beta time-to-toxicity model, plus the log-spaced quadrature grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePrior<T> {
    pub lambda_shape: T,
    pub lambda_rate: T,
    pub gamma_shape: T,
    pub gamma_rate: T,
    pub grid_points: usize,
    pub log_lower: T,
    pub log_upper: T,
}

impl<T: Scalar> AdaptivePrior<T> {
    /// Gamma(shape, rate) on both shapes with the default 40×40 grid over [e⁻³, e³].
    pub fn gamma(shape: T, rate: T) -> Self {
        Self {
            lambda_shape: shape,
            lambda_rate: rate,
            gamma_shape: shape,
            gamma_rate: rate,
            grid_points: 40,
            log_lower: T::of(-3.0),
            log_upper: T::of(3.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let hyper = [self.lambda_shape, self.lambda_rate, self.gamma_shape, self.gamma_rate];
        if hyper.iter().any(|h| !(*h > T::zero())) {
            return config("adaptive prior hyperparameters must be positive");
        }
        if self.grid_points < 2 || !(self.log_lower < self.log_upper) {
            return config("adaptive weight grid is empty");
        }
        Ok(())
    }

    fn grid(&self) -> Vec<(T, T)> {
        // (log-shape, trapezoid weight in log space)
        let g = self.grid_points;
        let h = (self.log_upper - self.log_lower) / T::of_usize(g - 1);
        (0..g)
            .map(|i| {
                let w = if i == 0 || i == g - 1 { T::of(0.5) * h } else { h };
                (self.log_lower + h * T::of_usize(i), w)
            })
            .collect()
    }
}

impl<T: Scalar> Default for AdaptivePrior<T> {
    fn default() -> Self {
        Self::gamma(T::of(0.1), T::of(0.1))
    }
}

/// Log density of Gamma(shape, rate) for `ln x`, including the `x` Jacobian.
fn ln_gamma_prior_on_log<T: Scalar>(log_x: T, shape: T, rate: T) -> T {
    shape * rate.ln() - ln_gamma(shape) + shape * log_x - rate * log_x.exp()
}

/// How pending patients' partial follow-up is converted into a weight.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme<T> {
    #[default]
    Uniform,
    Piecewise(PiecewiseWeights<T>),
    Adaptive(AdaptivePrior<T>),
}

impl<T: Scalar> WeightScheme<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            WeightScheme::Uniform => Ok(()),
            WeightScheme::Piecewise(v) => v.validate(),
            WeightScheme::Adaptive(p) => p.validate(),
        }
    }

    /// Freezes the scheme for one decision clock. Only the adaptive scheme
    /// looks at `observed_dlt_times` (ascertained DLT times, all doses).
    pub fn prepare(&self, tau: T, observed_dlt_times: &[T]) -> Result<WeightModel<T>> {
        if !(tau > T::zero()) {
            return config(format!("assessment window must be positive, got {tau}"));
        }
        Ok(match self {
            WeightScheme::Uniform => WeightModel::Uniform { tau },
            WeightScheme::Piecewise(v) => {
                v.validate()?;
                WeightModel::Piecewise { tau, parts: *v }
            }
            WeightScheme::Adaptive(p) => WeightModel::Adaptive(AdaptivePosterior::fit(p, tau, observed_dlt_times)?),
        })
    }
}

/// A weight scheme bound to a window length and, for the adaptive scheme,
/// to the posterior of the time-to-toxicity shapes.
#[derive(Debug, Clone)]
pub enum WeightModel<T> {
    Uniform { tau: T },
    Piecewise { tau: T, parts: PiecewiseWeights<T> },
    Adaptive(AdaptivePosterior<T>),
}

impl<T: Scalar> WeightModel<T> {
    pub fn tau(&self) -> T {
        match self {
            WeightModel::Uniform { tau } | WeightModel::Piecewise { tau, .. } => *tau,
            WeightModel::Adaptive(post) => post.tau,
        }
    }

    pub fn weight(&self, follow_up: T) -> Result<T> {
        match self {
            WeightModel::Uniform { tau } => weight_uniform(follow_up, *tau),
            WeightModel::Piecewise { tau, parts } => weight_piecewise(follow_up, *tau, parts),
            WeightModel::Adaptive(post) => post.weight(follow_up),
        }
    }
}

fn check_follow_up<T: Scalar>(u: T, tau: T) -> Result<T> {
    if !(tau > T::zero()) {
        return domain(format!("assessment window must be positive, got {tau}"));
    }
    let slack = T::of(super::TIME_EPS);
    if !(u >= -slack) || u > tau + slack {
        return domain(format!("follow-up {u} outside [0, {tau}]"));
    }
    Ok(u.max(T::zero()).min(tau))
}

/// Follow-up proportion `u / τ`.
pub fn weight_uniform<T: Scalar>(u: T, tau: T) -> Result<T> {
    let u = check_follow_up(u, tau)?;
    Ok(u / tau)
}

/// Piecewise-uniform time to toxicity over the three thirds of the window.
pub fn weight_piecewise<T: Scalar>(u: T, tau: T, parts: &PiecewiseWeights<T>) -> Result<T> {
    parts.validate()?;
    let u = check_follow_up(u, tau)?;
    let three = T::of(3.0);
    let r = u / tau;
    let PiecewiseWeights { early, middle, late } = *parts;
    let w = if r < T::one() / three {
        three * early * r
    } else if r < T::of(2.0) / three {
        early - middle + three * middle * r
    } else {
        early + middle - T::of(2.0) * late + three * late * r
    };
    Ok(w.max(T::zero()).min(T::one()))
}

/// Grid posterior over the scaled-Beta time-to-toxicity shapes.
#[derive(Debug, Clone)]
pub struct AdaptivePosterior<T> {
    tau: T,
    nodes: Vec<(BetaParams<T>, T)>,
}

impl<T: Scalar> AdaptivePosterior<T> {
    /// Posterior on the grid given ascertained DLT times (each in (0, τ]).
    /// Pending patients do not enter the shape likelihood.
    pub fn fit(prior: &AdaptivePrior<T>, tau: T, observed_dlt_times: &[T]) -> Result<Self> {
        prior.validate()?;
        if !(tau > T::zero()) {
            return config(format!("assessment window must be positive, got {tau}"));
        }
        let edge = T::of(1e-9);
        let mut scaled = Vec::with_capacity(observed_dlt_times.len());
        for &t in observed_dlt_times {
            if !(t > T::zero()) || t > tau + T::of(super::TIME_EPS) {
                return domain(format!("observed DLT time {t} outside (0, {tau}]"));
            }
            scaled.push((t / tau).max(edge).min(T::one() - edge));
        }
        let grid = prior.grid();
        let mut log_w = Vec::with_capacity(grid.len() * grid.len());
        let mut params = Vec::with_capacity(grid.len() * grid.len());
        for &(sl, wl) in &grid {
            let lp_l = ln_gamma_prior_on_log(sl, prior.lambda_shape, prior.lambda_rate) + wl.ln();
            for &(sg, wg) in &grid {
                let lp_g = ln_gamma_prior_on_log(sg, prior.gamma_shape, prior.gamma_rate) + wg.ln();
                let shape = BetaParams::new(sl.exp(), sg.exp())?;
                let mut ll = lp_l + lp_g;
                for &x in &scaled {
                    ll = ll + shape.ln_pdf(x)?;
                }
                log_w.push(ll);
                params.push(shape);
            }
        }
        let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
        let weights: Vec<T> = log_w.iter().map(|l| (*l - max).exp()).collect();
        let total = weights.iter().fold(T::zero(), |a, w| a + *w);
        let nodes = params.into_iter().zip(weights.into_iter().map(|w| w / total)).collect();
        Ok(Self { tau, nodes })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Posterior expected probability that a toxicity occurs by follow-up `u`.
    pub fn weight(&self, u: T) -> Result<T> {
        let u = check_follow_up(u, self.tau)?;
        if u >= self.tau {
            return Ok(T::one());
        }
        if u <= T::zero() {
            return Ok(T::zero());
        }
        let x = u / self.tau;
        let mut acc = T::zero();
        for (shape, w) in &self.nodes {
            acc = acc + *w * shape.cdf(x)?;
        }
        Ok(acc.max(T::zero()).min(T::one()))
    }
}

/// One-shot adaptive weight; fits the grid posterior on every call.
pub fn weight_adaptive<T: Scalar>(u: T, tau: T, observed_dlt_times: &[T], prior: &AdaptivePrior<T>) -> Result<T> {
    AdaptivePosterior::fit(prior, tau, observed_dlt_times)?.weight(u)
}
