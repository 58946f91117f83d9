use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::Scalar;

/// Slack used when comparing clock arithmetic against window and DLT times.
pub const TIME_EPS: f64 = 1e-9;

/// One enrolled subject. Times are in months.
///
/// `dlt_time` is measured from entry. In simulation it holds the (future)
/// time of a toxicity that will occur inside the window; in live conduct it
/// is only set once the DLT has been reported. Either way the toxicity only
/// counts as observed once the clock has passed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord<T> {
    pub id: String,
    /// 1-based dose level.
    pub dose_level: usize,
    pub entry_time: T,
    pub dlt_time: Option<T>,
    /// Assessment explicitly closed without toxicity (live conduct only).
    #[serde(default)]
    pub assessment_closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Toxicity,
    Completed,
    Pending,
}

/// State of a record at a query clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub follow_up: T,
    pub status: OutcomeStatus,
}

impl<T> Observation<T> {
    pub fn ascertained(&self) -> bool {
        self.status != OutcomeStatus::Pending
    }
}

impl<T: Scalar> PatientRecord<T> {
    pub fn new(id: impl Into<String>, dose_level: usize, entry_time: T) -> Self {
        Self {
            id: id.into(),
            dose_level,
            entry_time,
            dlt_time: None,
            assessment_closed: false,
        }
    }

    pub fn with_dlt(mut self, dlt_time: T) -> Self {
        self.dlt_time = Some(dlt_time);
        self
    }

    /// Follow-up and ascertainment status at `clock` for window `tau`.
    pub fn observe(&self, clock: T, tau: T) -> Result<Observation<T>> {
        let eps = T::of(TIME_EPS);
        let elapsed = clock - self.entry_time;
        if elapsed < -eps {
            return domain(format!(
                "patient {} enters at {} after the query clock {clock}",
                self.id, self.entry_time
            ));
        }
        let elapsed = elapsed.max(T::zero());
        if let Some(t) = self.dlt_time {
            if !(t > T::zero()) || t > tau + eps {
                return domain(format!("patient {} has DLT time {t} outside (0, {tau}]", self.id));
            }
            if t <= elapsed + eps {
                return Ok(Observation { follow_up: t.min(tau), status: OutcomeStatus::Toxicity });
            }
        }
        if elapsed >= tau - eps {
            return Ok(Observation { follow_up: tau, status: OutcomeStatus::Completed });
        }
        let status = if self.assessment_closed { OutcomeStatus::Completed } else { OutcomeStatus::Pending };
        Ok(Observation { follow_up: elapsed, status })
    }

    /// Clock at which this patient's outcome becomes ascertained.
    pub fn ascertainment_time(&self, tau: T) -> T {
        self.entry_time + self.dlt_time.map_or(tau, |t| t.min(tau))
    }
}
