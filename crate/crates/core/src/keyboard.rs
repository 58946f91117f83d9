use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::patient::{EffectiveData, ExactPosterior, PendingData};
use crate::stats::BetaParams;
use crate::Scalar;

const TIE_EPS: f64 = 1e-12;

/// Design constants shared by every engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct DesignParams<T> {
    pub phi: T,
    pub delta1: T,
    pub delta2: T,
    /// Assessment window, in months.
    pub tau: T,
    pub max_n: usize,
    pub cohort_size: usize,
    /// Elimination cutoff on Pr(p > phi).
    pub eta: T,
    pub min_complete_for_escalation: usize,
    pub doses: usize,
}

impl<T: Scalar> Default for DesignParams<T> {
    fn default() -> Self {
        Self {
            phi: T::of(0.3),
            delta1: T::of(0.05),
            delta2: T::of(0.05),
            tau: T::of(3.0),
            max_n: 36,
            cohort_size: 3,
            eta: T::of(0.95),
            min_complete_for_escalation: 2,
            doses: 6,
        }
    }
}

impl<T: Scalar> DesignParams<T> {
    pub fn with_phi(phi: T) -> Self {
        Self { phi, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let lo = self.phi - self.delta1;
        let hi = self.phi + self.delta2;
        if !(self.delta1 > T::zero() && self.delta2 > T::zero()) {
            return config("delta1 and delta2 must be positive");
        }
        if !(T::zero() < lo && lo < hi && hi < T::one()) {
            return config(format!("target interval ({lo}, {hi}) must lie strictly inside (0, 1)"));
        }
        if !(self.tau > T::zero()) {
            return config("tau must be positive");
        }
        if self.cohort_size == 0 {
            return config("cohort_size must be at least 1");
        }
        if self.max_n == 0 {
            return config("max_n must be at least 1");
        }
        if self.doses == 0 {
            return config("at least one dose is required");
        }
        if !(self.eta > T::zero() && self.eta < T::one()) {
            return config("eta must lie in (0, 1)");
        }
        Ok(())
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.max_n.is_multiple_of(self.cohort_size) {
            out.push(format!(
                "max_n {} is not a multiple of cohort_size {}; the last cohort is truncated",
                self.max_n, self.cohort_size
            ));
        }
        out
    }
}

/// Equal-width probability intervals around the target key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyboard<T> {
    pub keys: Vec<(T, T)>,
    pub target_index: usize,
}

impl<T: Scalar> Keyboard<T> {
    pub fn new(params: &DesignParams<T>) -> Result<Self> {
        params.validate()?;
        let lo = params.phi - params.delta1;
        let hi = params.phi + params.delta2;
        let width = hi - lo;
        let slack = T::of(1e-12);
        let mut left = Vec::new();
        let mut k = 1;
        loop {
            let a = lo - T::of_usize(k) * width;
            if a < -slack {
                break;
            }
            left.push((a.max(T::zero()), lo - T::of_usize(k - 1) * width));
            k += 1;
        }
        left.reverse();
        let target_index = left.len();
        let mut keys = left;
        keys.push((lo, hi));
        let mut k = 1;
        loop {
            let b = hi + T::of_usize(k) * width;
            if b > T::one() + slack {
                break;
            }
            keys.push((hi + T::of_usize(k - 1) * width, b.min(T::one())));
            k += 1;
        }
        Ok(Self { keys, target_index })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Posterior mass of each key under `post`.
    pub fn masses(&self, post: &BetaParams<T>) -> Result<Vec<T>> {
        let mut cdfs = Vec::with_capacity(self.keys.len() + 1);
        cdfs.push(post.cdf(self.keys[0].0)?);
        for &(_, b) in &self.keys {
            cdfs.push(post.cdf(b)?);
        }
        Ok(cdfs.windows(2).map(|w| (w[1] - w[0]).max(T::zero())).collect())
    }

    /// Index of the heaviest key. Near-ties go to the key nearest the
    /// target, then to the higher index.
    pub fn pick(&self, masses: &[T]) -> usize {
        let best = masses.iter().copied().fold(T::neg_infinity(), T::max);
        let eps = T::of(TIE_EPS).max(T::of(64.0) * T::epsilon());
        let kt = self.target_index as isize;
        (0..masses.len())
            .filter(|&k| masses[k] >= best - eps)
            .min_by_key(|&k| ((k as isize - kt).abs(), std::cmp::Reverse(k)))
            .expect("keyboard has at least one key")
    }
}

/// Gap between the heaviest key and the runner-up.
pub(crate) fn top_margin<T: Scalar>(masses: &[T]) -> T {
    let mut first = T::neg_infinity();
    let mut second = T::neg_infinity();
    for &m in masses {
        if m > first {
            second = first;
            first = m;
        } else if m > second {
            second = m;
        }
    }
    if second.is_finite() {
        first - second
    } else {
        first
    }
}

pub fn strongest_key<T: Scalar>(data: &EffectiveData<T>, kb: &Keyboard<T>) -> Result<usize> {
    let post = BetaParams::posterior(T::of_usize(data.y), data.m_eff)?;
    Ok(kb.pick(&kb.masses(&post)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Escalate,
    Stay,
    DeEscalate,
    SuspendAccrual,
    EliminateAndDeEscalate,
    TerminateTrial,
}

impl Action {
    /// Direction code: 1 up, 0 hold, -1 down.
    pub fn code(self) -> i8 {
        match self {
            Action::Escalate => 1,
            Action::Stay | Action::SuspendAccrual => 0,
            Action::DeEscalate | Action::EliminateAndDeEscalate | Action::TerminateTrial => -1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Escalate => "ESCALATE",
            Action::Stay => "STAY",
            Action::DeEscalate => "DE-ESCALATE",
            Action::SuspendAccrual => "SUSPEND ACCRUAL",
            Action::EliminateAndDeEscalate => "ELIMINATE AND DE-ESCALATE",
            Action::TerminateTrial => "TERMINATE TRIAL",
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision<T> {
    pub action: Action,
    /// Direction from the interval rule alone, before safety rules.
    pub raw_action: Action,
    pub strongest_key: Option<usize>,
    /// Lead of the winning interval score over the runner-up.
    pub margin: Option<T>,
    /// Pr(p > phi) under the raw-count posterior.
    pub overdose_prob: T,
}

/// Where the current dose sits in the (non-eliminated) ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DosePosition {
    pub at_lowest: bool,
    pub at_highest: bool,
}

impl DosePosition {
    pub fn of(level: usize, highest: usize) -> Self {
        Self { at_lowest: level <= 1, at_highest: level >= highest }
    }
}

/// Interval-rule outcome before the safety rules are applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDecision<T> {
    pub action: Action,
    pub strongest_key: Option<usize>,
    pub margin: Option<T>,
}

/// Pr(p > phi | Beta(y + 1, n - y + 1)).
pub fn overdose_probability<T: Scalar>(n: usize, y: usize, phi: T) -> Result<T> {
    BetaParams::posterior(T::of_usize(y), T::of_usize(n.saturating_sub(y)))?.sf(phi)
}

/// Elimination, boundary clamping and the completed-patient requirement
/// wrapped around an interval rule.
pub fn apply_safety<T: Scalar>(
    raw: RawDecision<T>,
    data: &EffectiveData<T>,
    params: &DesignParams<T>,
    pos: DosePosition,
) -> Result<Decision<T>> {
    let overdose_prob = overdose_probability(data.n, data.y, params.phi)?;
    let mut action = raw.action;
    if data.n > 0 && overdose_prob > params.eta {
        action = if pos.at_lowest { Action::TerminateTrial } else { Action::EliminateAndDeEscalate };
    } else {
        if (action == Action::Escalate && pos.at_highest) || (action == Action::DeEscalate && pos.at_lowest) {
            action = Action::Stay;
        }
        if action == Action::Escalate && data.completed() < params.min_complete_for_escalation {
            action = if data.n >= params.min_complete_for_escalation {
                Action::SuspendAccrual
            } else {
                Action::Stay
            };
        }
    }
    Ok(Decision {
        action,
        raw_action: raw.action,
        strongest_key: raw.strongest_key,
        margin: raw.margin,
        overdose_prob,
    })
}

fn key_action(k: usize, target: usize) -> Action {
    match k.cmp(&target) {
        std::cmp::Ordering::Less => Action::Escalate,
        std::cmp::Ordering::Equal => Action::Stay,
        std::cmp::Ordering::Greater => Action::DeEscalate,
    }
}

pub fn keyboard_raw<T: Scalar>(data: &EffectiveData<T>, kb: &Keyboard<T>) -> Result<RawDecision<T>> {
    let post = BetaParams::posterior(T::of_usize(data.y), data.m_eff)?;
    let masses = kb.masses(&post)?;
    let k = kb.pick(&masses);
    Ok(RawDecision { action: key_action(k, kb.target_index), strongest_key: Some(k), margin: Some(top_margin(&masses)) })
}

pub fn keyboard_decision<T: Scalar>(
    data: &EffectiveData<T>,
    params: &DesignParams<T>,
    kb: &Keyboard<T>,
    pos: DosePosition,
) -> Result<Decision<T>> {
    apply_safety(keyboard_raw(data, kb)?, data, params, pos)
}

/// Tolerance used by the exact-likelihood quadrature.
pub const EXACT_TOL: f64 = 1e-8;

pub fn keyboard_raw_exact<T: Scalar>(data: &PendingData<T>, kb: &Keyboard<T>) -> Result<RawDecision<T>> {
    if data.weights.is_empty() {
        return keyboard_raw(&data.effective(), kb);
    }
    let post = ExactPosterior::new(data.clone(), T::of(EXACT_TOL))?;
    let masses = kb.keys.iter().map(|&(a, b)| post.interval_prob(a, b)).collect::<Result<Vec<_>>>()?;
    let k = kb.pick(&masses);
    Ok(RawDecision { action: key_action(k, kb.target_index), strongest_key: Some(k), margin: Some(top_margin(&masses)) })
}

/// Same rule as [`keyboard_decision`] with key masses integrated from the
/// exact pending-data likelihood.
pub fn keyboard_decision_exact<T: Scalar>(
    data: &PendingData<T>,
    params: &DesignParams<T>,
    kb: &Keyboard<T>,
    pos: DosePosition,
) -> Result<Decision<T>> {
    apply_safety(keyboard_raw_exact(data, kb)?, &data.effective(), params, pos)
}
