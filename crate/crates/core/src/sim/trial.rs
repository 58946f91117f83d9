use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::mtd::{isotonic_estimates, select_mtd};
use super::scenario::{weibull_calibrate, AccrualModel, Scenario, Weibull};
use crate::assess::{assess, lowest_overdosed};
use crate::engine::{Design, Engine};
use crate::error::{Error, Result};
use crate::keyboard::{Action, DesignParams};
use crate::patient::{EffectiveData, PatientRecord, WeightScheme, TIME_EPS};

/// Design under simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub params: DesignParams<f64>,
    #[serde(default)]
    pub weights: WeightScheme<f64>,
}

impl SimDesign {
    pub fn new(design: Design, params: DesignParams<f64>, weights: WeightScheme<f64>) -> Self {
        Self { design, params, weights }
    }
}

/// Supplies arrivals and outcomes to the trial loop.
pub trait PatientSource {
    /// Months from the previous enrollment (or the trial start) to the next arrival.
    fn next_gap(&mut self) -> f64;
    /// Toxicity onset from entry for a patient treated at `dose`, if it
    /// falls within the window.
    fn toxicity_time(&mut self, dose: usize) -> Option<f64>;
}

pub struct RandomPatients {
    rng: ChaCha8Rng,
    model: AccrualModel,
    rate: f64,
    tau: f64,
    curves: Vec<Option<Weibull>>,
}

impl RandomPatients {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self> {
        let curves = scenario
            .tox_probs
            .iter()
            .map(|&p| {
                if p > 0.0 {
                    weibull_calibrate(p, scenario.tau, scenario.tox_time_model.late_fraction).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            model: scenario.accrual.model,
            rate: scenario.accrual.rate,
            tau: scenario.tau,
            curves,
        })
    }
}

impl PatientSource for RandomPatients {
    fn next_gap(&mut self) -> f64 {
        match self.model {
            AccrualModel::Deterministic => 1.0 / self.rate,
            AccrualModel::Exponential => Exp::new(self.rate).expect("positive rate").sample(&mut self.rng),
        }
    }

    fn toxicity_time(&mut self, dose: usize) -> Option<f64> {
        let u: f64 = self.rng.random_range(f64::MIN_POSITIVE..1.0);
        let curve = self.curves[dose - 1]?;
        let t = curve.quantile_of(u);
        (t <= self.tau).then_some(t)
    }
}

/// Fixed arrivals and per-patient toxicity times, by enrollment order.
#[derive(Debug, Clone)]
pub struct ScriptedPatients {
    pub gap: f64,
    pub toxicity: Vec<Option<f64>>,
    next: usize,
}

impl ScriptedPatients {
    pub fn new(gap: f64, toxicity: Vec<Option<f64>>) -> Self {
        Self { gap, toxicity, next: 0 }
    }
}

impl PatientSource for ScriptedPatients {
    fn next_gap(&mut self) -> f64 {
        self.gap
    }

    fn toxicity_time(&mut self, _dose: usize) -> Option<f64> {
        let t = self.toxicity.get(self.next).copied().flatten();
        self.next += 1;
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub dose: usize,
    pub data: EffectiveData<f64>,
    pub action: Action,
    pub next_dose: usize,
    pub strongest_key: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub selected_dose: Option<usize>,
    pub patients: Vec<usize>,
    pub dlts: Vec<usize>,
    /// First enrollment to the last ascertained outcome (or to termination).
    pub duration: f64,
    pub early_stopped: bool,
    /// Doses removed by the overdose rule, ascending.
    pub eliminated: Vec<usize>,
    pub estimates: Vec<Option<f64>>,
    pub decisions: Vec<DecisionRecord>,
    pub enrollments: Vec<PatientRecord<f64>>,
}

enum Step {
    Move { dose: usize, highest: usize },
    Suspend,
    Terminate,
}

/// A validated scenario and design, ready to run replicates.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub scenario: Scenario,
    pub design: SimDesign,
    pub engine: Engine<f64>,
}

impl Simulator {
    /// The scenario's sample size, cohort size, window and dose count
    /// override the design parameters.
    pub fn new(scenario: &Scenario, design: &SimDesign) -> Result<Self> {
        scenario.validate()?;
        design.weights.validate()?;
        let params = DesignParams {
            max_n: scenario.max_n,
            cohort_size: scenario.cohort_size,
            tau: scenario.tau,
            doses: scenario.doses(),
            ..design.params
        };
        let engine = Engine::new(design.design, params)?;
        Ok(Self {
            scenario: scenario.clone(),
            design: SimDesign { params, ..design.clone() },
            engine,
        })
    }

    pub fn params(&self) -> &DesignParams<f64> {
        &self.engine.params
    }

    pub fn run(&self, seed: u64) -> Result<TrialResult> {
        let mut source = RandomPatients::new(&self.scenario, seed)?;
        self.run_with(&mut source)
    }

    fn decide(
        &self,
        recs: &[PatientRecord<f64>],
        clock: f64,
        dose: usize,
        highest: usize,
        log: &mut Vec<DecisionRecord>,
        quiet_suspend: bool,
    ) -> Result<Step> {
        let a = assess(&self.engine, &self.design.weights, recs, clock, dose, highest)?;
        if a.action == Action::SuspendAccrual && quiet_suspend {
            return Ok(Step::Suspend);
        }
        log.push(DecisionRecord {
            time: clock,
            dose,
            data: a.data,
            action: a.action,
            next_dose: a.next_dose,
            strongest_key: a.decision.and_then(|d| d.strongest_key),
        });
        Ok(match a.action {
            Action::SuspendAccrual => Step::Suspend,
            Action::TerminateTrial => Step::Terminate,
            _ => Step::Move { dose: a.next_dose, highest: a.highest },
        })
    }

    /// Runs one trial drawing arrivals and outcomes from `source`.
    pub fn run_with(&self, source: &mut dyn PatientSource) -> Result<TrialResult> {
        let p = *self.params();
        let tau = p.tau;
        let doses = self.scenario.doses();
        let mut recs: Vec<PatientRecord<f64>> = Vec::with_capacity(p.max_n);
        let mut log = Vec::new();
        let mut dose = self.scenario.start_dose;
        let mut highest = doses;
        let mut last_enroll = 0.0;
        let mut stopped_at = None;

        'enroll: for idx in 0..p.max_n {
            let mut t = last_enroll + source.next_gap();
            if idx > 0 && idx % p.cohort_size == 0 {
                let mut suspended = false;
                loop {
                    match self.decide(&recs, t, dose, highest, &mut log, suspended)? {
                        Step::Move { dose: d, highest: h } => {
                            dose = d;
                            highest = h;
                            break;
                        }
                        Step::Terminate => {
                            stopped_at = Some(t);
                            break 'enroll;
                        }
                        Step::Suspend => {
                            suspended = true;
                            let next = recs
                                .iter()
                                .filter(|r| r.dose_level == dose)
                                .map(|r| r.ascertainment_time(tau))
                                .filter(|&a| a > t + TIME_EPS)
                                .fold(f64::INFINITY, f64::min);
                            if !next.is_finite() {
                                return Err(Error::Consistency(format!(
                                    "accrual suspended at {t} with no pending outcome at dose {dose}"
                                )));
                            }
                            t = next;
                        }
                    }
                }
            }
            let mut rec = PatientRecord::new(format!("{}", idx + 1), dose, t);
            rec.dlt_time = source.toxicity_time(dose);
            recs.push(rec);
            last_enroll = t;
        }

        let first = recs.first().map_or(0.0, |r| r.entry_time);
        let mut patients = vec![0; doses];
        let mut dlts = vec![0; doses];
        for r in &recs {
            patients[r.dose_level - 1] += 1;
            if r.dlt_time.is_some() {
                dlts[r.dose_level - 1] += 1;
            }
        }

        if let Some(t) = stopped_at {
            return Ok(TrialResult {
                selected_dose: None,
                patients,
                dlts,
                duration: t - first,
                early_stopped: true,
                eliminated: (1..=doses).collect(),
                estimates: vec![None; doses],
                decisions: log,
                enrollments: recs,
            });
        }

        let end = recs.iter().map(|r| r.ascertainment_time(tau)).fold(first, f64::max);
        if let Some(j) = lowest_overdosed(&self.engine, &recs, end, highest)? {
            highest = j - 1;
        }
        let eliminated: Vec<usize> = (highest + 1..=doses).collect();
        let counts: Vec<(usize, usize)> = patients.iter().copied().zip(dlts.iter().copied()).collect();
        let selected = if highest == 0 { None } else { select_mtd(&counts, &eliminated, p.phi) };
        Ok(TrialResult {
            selected_dose: selected,
            patients,
            dlts,
            duration: end - first,
            early_stopped: highest == 0,
            estimates: isotonic_estimates(&counts, &eliminated),
            eliminated,
            decisions: log,
            enrollments: recs,
        })
    }
}

/// One trial with a seeded random patient stream.
pub fn simulate_trial(scenario: &Scenario, design: &SimDesign, seed: u64) -> Result<TrialResult> {
    Simulator::new(scenario, design)?.run(seed)
}
