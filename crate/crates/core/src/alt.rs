use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::keyboard::{apply_safety, top_margin, Action, Decision, DesignParams, DosePosition, RawDecision};
use crate::patient::EffectiveData;
use crate::stats::BetaParams;
use crate::Scalar;

/// Under-, target- and over-dosing intervals of the mTPI rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtpiIntervals<T> {
    pub under: (T, T),
    pub target: (T, T),
    pub over: (T, T),
}

impl<T: Scalar> MtpiIntervals<T> {
    pub fn new(params: &DesignParams<T>) -> Result<Self> {
        params.validate()?;
        let lo = params.phi - params.delta1;
        let hi = params.phi + params.delta2;
        Ok(Self { under: (T::zero(), lo), target: (lo, hi), over: (hi, T::one()) })
    }

    /// Unit probability mass of (under, target, over).
    pub fn upm(&self, post: &BetaParams<T>) -> Result<[T; 3]> {
        let c_lo = post.cdf(self.target.0)?;
        let c_hi = post.cdf(self.target.1)?;
        let len = |iv: (T, T)| iv.1 - iv.0;
        Ok([
            c_lo / len(self.under),
            (c_hi - c_lo).max(T::zero()) / len(self.target),
            (T::one() - c_hi).max(T::zero()) / len(self.over),
        ])
    }
}

pub fn mtpi_raw<T: Scalar>(data: &EffectiveData<T>, iv: &MtpiIntervals<T>) -> Result<RawDecision<T>> {
    let post = BetaParams::posterior(T::of_usize(data.y), data.m_eff)?;
    let upm = iv.upm(&post)?;
    let best = upm.iter().copied().fold(T::neg_infinity(), T::max);
    let eps = T::of(1e-12);
    // preference order on ties: target, over, under
    let action = if upm[1] >= best - eps {
        Action::Stay
    } else if upm[2] >= best - eps {
        Action::DeEscalate
    } else {
        Action::Escalate
    };
    Ok(RawDecision { action, strongest_key: None, margin: Some(top_margin(&upm)) })
}

pub fn mtpi_decision<T: Scalar>(
    data: &EffectiveData<T>,
    iv: &MtpiIntervals<T>,
    params: &DesignParams<T>,
    pos: DosePosition,
) -> Result<Decision<T>> {
    apply_safety(mtpi_raw(data, iv)?, data, params, pos)
}

/// Escalation and de-escalation cutoffs on the observed toxicity rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoinBoundaries<T> {
    pub lambda_e: T,
    pub lambda_d: T,
}

pub fn boin_boundaries<T: Scalar>(phi: T, phi1: T, phi2: T) -> Result<BoinBoundaries<T>> {
    if !(T::zero() < phi1 && phi1 < phi && phi < phi2 && phi2 < T::one()) {
        return config(format!("BOIN requires 0 < phi1 < phi < phi2 < 1, got {phi1}, {phi}, {phi2}"));
    }
    let one = T::one();
    let lambda_e = ((one - phi1) / (one - phi)).ln() / (phi * (one - phi1) / (phi1 * (one - phi))).ln();
    let lambda_d = ((one - phi) / (one - phi2)).ln() / (phi2 * (one - phi) / (phi * (one - phi2))).ln();
    Ok(BoinBoundaries { lambda_e, lambda_d })
}

impl<T: Scalar> BoinBoundaries<T> {
    /// Boundaries with phi1 = 0.6 phi and phi2 = 1.4 phi.
    pub fn default_for(phi: T) -> Result<Self> {
        boin_boundaries(phi, T::of(0.6) * phi, (T::of(1.4) * phi).min(T::of(0.999_999)))
    }
}

pub fn boin_raw<T: Scalar>(data: &EffectiveData<T>, b: &BoinBoundaries<T>) -> Result<RawDecision<T>> {
    let rate = data
        .rate()
        .ok_or_else(|| Error::InsufficientData("BOIN needs a positive effective sample size".into()))?;
    let action = if rate <= b.lambda_e {
        Action::Escalate
    } else if rate >= b.lambda_d {
        Action::DeEscalate
    } else {
        Action::Stay
    };
    Ok(RawDecision { action, strongest_key: None, margin: None })
}

pub fn boin_decision<T: Scalar>(
    data: &EffectiveData<T>,
    b: &BoinBoundaries<T>,
    params: &DesignParams<T>,
    pos: DosePosition,
) -> Result<Decision<T>> {
    apply_safety(boin_raw(data, b)?, data, params, pos)
}
