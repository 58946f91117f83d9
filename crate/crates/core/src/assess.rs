use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::keyboard::{overdose_probability, Action, Decision, DosePosition};
use crate::patient::{EffectiveData, OutcomeStatus, PatientRecord, PendingData, WeightScheme};

/// Outcome of evaluating a whole trial state at one clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub dose: usize,
    pub data: EffectiveData<f64>,
    pub action: Action,
    pub next_dose: usize,
    /// Highest dose still open after the overdose check.
    pub highest: usize,
    pub decision: Option<Decision<f64>>,
}

/// Lowest dose (up to `highest`) whose raw-count posterior puts more than
/// `eta` on p > phi.
pub fn lowest_overdosed(engine: &Engine<f64>, recs: &[PatientRecord<f64>], clock: f64, highest: usize) -> Result<Option<usize>> {
    let p = &engine.params;
    for j in 1..=highest {
        let (mut n, mut y) = (0, 0);
        for r in recs.iter().filter(|r| r.dose_level == j) {
            n += 1;
            if r.observe(clock, p.tau)?.status == OutcomeStatus::Toxicity {
                y += 1;
            }
        }
        if n > 0 && overdose_probability(n, y, p.phi)? > p.eta {
            return Ok(Some(j));
        }
    }
    Ok(None)
}

/// Ascertained toxicity onsets (from entry) as of `clock`.
pub fn observed_dlt_times(recs: &[PatientRecord<f64>], clock: f64, tau: f64) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for r in recs {
        if r.observe(clock, tau)?.status == OutcomeStatus::Toxicity {
            out.extend(r.dlt_time);
        }
    }
    Ok(out)
}

pub fn dose_data(
    recs: &[PatientRecord<f64>],
    dose: usize,
    clock: f64,
    model: &crate::patient::WeightModel<f64>,
) -> Result<PendingData<f64>> {
    let here: Vec<PatientRecord<f64>> = recs.iter().filter(|r| r.dose_level == dose).cloned().collect();
    PendingData::collect(&here, clock, model)
}

/// Overdose check across the ladder, then the engine at the current dose.
pub fn assess(
    engine: &Engine<f64>,
    weights: &WeightScheme<f64>,
    recs: &[PatientRecord<f64>],
    clock: f64,
    dose: usize,
    highest: usize,
) -> Result<Assessment> {
    let tau = engine.params.tau;
    let model = weights.prepare(tau, &observed_dlt_times(recs, clock, tau)?)?;
    let pending = dose_data(recs, dose, clock, &model)?;
    let data = pending.effective();
    let done = |action, next_dose, highest, decision| Assessment { dose, data, action, next_dose, highest, decision };

    let mut highest = highest;
    if let Some(j) = lowest_overdosed(engine, recs, clock, highest)? {
        if j == 1 {
            return Ok(done(Action::TerminateTrial, dose, 0, None));
        }
        highest = j - 1;
        if dose >= j {
            return Ok(done(Action::EliminateAndDeEscalate, j - 1, highest, None));
        }
    }
    let decision = match engine.decide(&pending, DosePosition::of(dose, highest)) {
        Ok(d) => d,
        Err(Error::InsufficientData(_)) => return Ok(done(Action::Stay, dose, highest, None)),
        Err(e) => return Err(e),
    };
    let next = match decision.action {
        Action::Escalate => dose + 1,
        Action::DeEscalate => dose - 1,
        Action::EliminateAndDeEscalate => {
            highest = highest.min(dose - 1);
            dose - 1
        }
        Action::TerminateTrial => {
            highest = 0;
            dose
        }
        Action::Stay | Action::SuspendAccrual => dose,
    };
    Ok(done(decision.action, next, highest, Some(decision)))
}
