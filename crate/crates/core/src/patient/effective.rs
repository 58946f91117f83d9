use serde::{Deserialize, Serialize};

use super::{OutcomeStatus, PatientRecord, WeightModel};
use crate::error::{domain, Result};
use crate::Scalar;

/// Binomial-equivalent summary of one dose's interim data.
///
/// `m_eff` is the effective number of patients without toxicity: completed
/// non-toxic patients plus the summed weights of pending patients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveData<T> {
    pub n: usize,
    pub y: usize,
    pub pending: usize,
    pub m_eff: T,
    pub n_eff: T,
}

impl<T: Scalar> EffectiveData<T> {
    pub fn new(n: usize, y: usize, pending: usize, m_eff: T) -> Result<Self> {
        if y + pending > n {
            return domain(format!("y ({y}) + pending ({pending}) exceeds n ({n})"));
        }
        let tol = T::of(1e-9);
        let upper = T::of_usize(n - y);
        let lower = T::of_usize(n - y - pending);
        if !(m_eff >= lower - tol) || m_eff > upper + tol {
            return domain(format!(
                "effective non-toxic count {m_eff} outside [{lower}, {upper}] for n={n}, y={y}, pending={pending}"
            ));
        }
        let m_eff = if pending == 0 { upper } else { m_eff.max(lower).min(upper) };
        Ok(Self { n, y, pending, m_eff, n_eff: T::of_usize(y) + m_eff })
    }

    /// Fully ascertained data: `y` toxicities among `n`.
    pub fn complete(n: usize, y: usize) -> Result<Self> {
        Self::new(n, y, 0, T::of_usize(n.saturating_sub(y)))
    }

    /// Effective data for a hypothetical `(y, m_eff)` cell, as enumerated by
    /// the decision table. Only the Beta posterior shape matters there.
    pub(crate) fn cell(n: usize, y: usize, pending: usize, m_eff: T) -> Self {
        Self { n, y, pending, m_eff, n_eff: T::of_usize(y) + m_eff }
    }

    /// Patients whose outcome has been ascertained (toxic or not).
    pub fn completed(&self) -> usize {
        self.n - self.pending
    }

    /// Effective toxicity rate `y / n_eff`; `None` when `n_eff` is zero.
    pub fn rate(&self) -> Option<T> {
        if self.n_eff > T::zero() {
            Some(T::of_usize(self.y) / self.n_eff)
        } else {
            None
        }
    }
}

/// Per-patient interim data at one dose: ascertained counts plus the weight
/// of every pending patient. The exact pending-data likelihood needs the
/// individual weights; the effective data only needs their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingData<T> {
    pub y: usize,
    /// Patients who completed the window without toxicity.
    pub m: usize,
    pub weights: Vec<T>,
}

impl<T: Scalar> PendingData<T> {
    pub fn new(y: usize, m: usize, weights: Vec<T>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= T::zero() && *w <= T::one())) {
            return domain("pending weights must lie in [0, 1]");
        }
        Ok(Self { y, m, weights })
    }

    /// Collects one dose's records at `clock`, weighting pending follow-up
    /// with `model`. All records must share a dose level.
    pub fn collect(records: &[PatientRecord<T>], clock: T, model: &WeightModel<T>) -> Result<Self> {
        let tau = model.tau();
        let mut out = Self { y: 0, m: 0, weights: Vec::new() };
        let dose = records.first().map(|r| r.dose_level);
        for r in records {
            if Some(r.dose_level) != dose {
                return domain("effective data requires records from a single dose");
            }
            let obs = r.observe(clock, tau)?;
            match obs.status {
                OutcomeStatus::Toxicity => out.y += 1,
                OutcomeStatus::Completed => out.m += 1,
                OutcomeStatus::Pending => out.weights.push(model.weight(obs.follow_up)?),
            }
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.y + self.m + self.weights.len()
    }

    pub fn effective(&self) -> EffectiveData<T> {
        let m_eff = self.weights.iter().fold(T::of_usize(self.m), |acc, w| acc + *w);
        EffectiveData::new(self.n(), self.y, self.weights.len(), m_eff)
            .expect("weights in [0,1] keep effective data consistent")
    }
}

/// Effective data for one dose's records at `clock`.
pub fn effective_data<T: Scalar>(records: &[PatientRecord<T>], clock: T, model: &WeightModel<T>) -> Result<EffectiveData<T>> {
    Ok(PendingData::collect(records, clock, model)?.effective())
}

impl<T: Scalar> EffectiveData<T> {
    /// See [`effective_data`].
    pub fn from_records(records: &[PatientRecord<T>], clock: T, model: &WeightModel<T>) -> Result<Self> {
        effective_data(records, clock, model)
    }
}
