//! Event-sourced trial conduct: a validated event log folded into a
//! recommendation at any query clock.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::assess::{assess, lowest_overdosed, observed_dlt_times};
use crate::engine::{Design, Engine};
use crate::error::{Error, Result};
use crate::keyboard::{Action, Decision, DesignParams};
use crate::patient::{PatientRecord, WeightScheme, TIME_EPS};
use crate::sim::{isotonic_estimates, select_mtd};
use crate::table::{row_for, Region};

/// Days per month used for every time conversion.
pub const DAYS_PER_MONTH: f64 = 30.4375;
/// Version written into the `v` field of every event line.
pub const SCHEMA_VERSION: u32 = 1;

pub fn months_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    let d = to - from;
    let secs = d.num_seconds() as f64 + f64::from(d.subsec_nanos()) * 1e-9;
    secs / 86_400.0 / DAYS_PER_MONTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub params: DesignParams<f64>,
    #[serde(default)]
    pub weights: WeightScheme<f64>,
    #[serde(default)]
    pub dose_labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weights.validate()?;
        if !self.dose_labels.is_empty() && self.dose_labels.len() != self.params.doses {
            return Err(Error::Config(format!(
                "{} dose labels given for {} doses",
                self.dose_labels.len(),
                self.params.doses
            )));
        }
        Engine::new(self.design, self.params)?;
        Ok(())
    }

    pub fn label(&self, dose: usize) -> String {
        self.dose_labels.get(dose.wrapping_sub(1)).cloned().unwrap_or_else(|| format!("dose {dose}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TrialCreated {
        config: TrialConfig,
    },
    PatientEnrolled {
        patient_id: String,
        dose: usize,
    },
    DltObserved {
        patient_id: String,
    },
    AssessmentCompleted {
        patient_id: String,
    },
    DoseDecisionRecorded {
        action: Action,
        dose: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    TrialClosed {
        #[serde(default)]
        selected_dose: Option<usize>,
    },
}

/// An event as submitted, before the log assigns its id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewEvent {
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub v: u32,
    pub event_id: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("timestamp regression: {0}")]
    Regression(String),
    #[error("trial is closed: {0}")]
    Closed(String),
    #[error("unknown patient: {0}")]
    UnknownPatient(String),
    #[error("invalid event: {0}")]
    Invalid(String),
}

impl From<LogError> for Error {
    fn from(e: LogError) -> Self {
        Error::Event(e.to_string())
    }
}

#[derive(Debug, Clone)]
struct Enrolled {
    entry: DateTime<Utc>,
    terminal: bool,
}

/// A validated, append-only trial log.
#[derive(Debug, Clone)]
pub struct TrialLog {
    events: Vec<TrialEvent>,
    config: TrialConfig,
    engine: Engine<f64>,
    patients: BTreeMap<String, Enrolled>,
    closed: bool,
}

impl TrialLog {
    pub fn create(config: TrialConfig, timestamp: DateTime<Utc>) -> Result<Self> {
        config.validate()?;
        let engine = Engine::new(config.design, config.params)?;
        let first = TrialEvent {
            v: SCHEMA_VERSION,
            event_id: 1,
            timestamp,
            kind: EventKind::TrialCreated { config: config.clone() },
        };
        Ok(Self { events: vec![first], config, engine, patients: BTreeMap::new(), closed: false })
    }

    /// Rebuilds a log, validating every event. The error carries the
    /// 0-based index of the first offending event.
    pub fn from_events(events: Vec<TrialEvent>) -> std::result::Result<Self, (usize, Error)> {
        let mut it = events.into_iter();
        let first = it.next().ok_or((0, Error::Event("empty event log".into())))?;
        let config = match &first.kind {
            EventKind::TrialCreated { config } => config.clone(),
            _ => return Err((0, Error::Event("log must start with trial_created".into()))),
        };
        let mut log = Self::create(config, first.timestamp).map_err(|e| (0, e))?;
        log.events[0] = first;
        for (i, ev) in it.enumerate() {
            let idx = i + 1;
            let last = log.events.last().expect("non-empty").event_id;
            if ev.event_id <= last {
                return Err((idx, Error::Event(format!("event id {} does not follow {last}", ev.event_id))));
            }
            log.check(&ev.timestamp, &ev.kind).map_err(|e| (idx, e.into()))?;
            log.apply(ev);
        }
        Ok(log)
    }

    pub fn config(&self) -> &TrialConfig {
        &self.config
    }

    pub fn engine(&self) -> &Engine<f64> {
        &self.engine
    }

    pub fn events(&self) -> &[TrialEvent] {
        &self.events
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.events[0].timestamp
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    fn check(&self, ts: &DateTime<Utc>, kind: &EventKind) -> std::result::Result<(), LogError> {
        if self.closed {
            return Err(LogError::Closed("no events accepted after trial_closed".into()));
        }
        let last = self.events.last().expect("non-empty").timestamp;
        if *ts < last {
            return Err(LogError::Regression(format!("{ts} is earlier than the previous event at {last}")));
        }
        let doses = self.config.params.doses;
        let known = |id: &str| self.patients.get(id).ok_or_else(|| LogError::UnknownPatient(id.to_string()));
        match kind {
            EventKind::TrialCreated { .. } => return Err(LogError::Invalid("trial already created".into())),
            EventKind::PatientEnrolled { patient_id, dose } => {
                if patient_id.is_empty() {
                    return Err(LogError::Invalid("patient id must not be empty".into()));
                }
                if self.patients.contains_key(patient_id) {
                    return Err(LogError::Invalid(format!("patient {patient_id} already enrolled")));
                }
                if *dose == 0 || *dose > doses {
                    return Err(LogError::Invalid(format!("dose {dose} outside 1..={doses}")));
                }
            }
            EventKind::DltObserved { patient_id } => {
                let p = known(patient_id)?;
                if p.terminal {
                    return Err(LogError::Invalid(format!("patient {patient_id} already has a final outcome")));
                }
                let onset = months_between(p.entry, *ts);
                if !(onset > 0.0) {
                    return Err(LogError::Invalid(format!("DLT for {patient_id} at its enrollment instant")));
                }
                if onset > self.config.params.tau + TIME_EPS {
                    return Err(LogError::Invalid(format!("DLT for {patient_id} falls after the assessment window")));
                }
            }
            EventKind::AssessmentCompleted { patient_id } => {
                let p = known(patient_id)?;
                if p.terminal {
                    return Err(LogError::Invalid(format!("patient {patient_id} already has a final outcome")));
                }
            }
            EventKind::DoseDecisionRecorded { dose, .. } => {
                if *dose == 0 || *dose > doses {
                    return Err(LogError::Invalid(format!("dose {dose} outside 1..={doses}")));
                }
            }
            EventKind::TrialClosed { selected_dose } => {
                if let Some(d) = selected_dose {
                    if *d == 0 || *d > doses {
                        return Err(LogError::Invalid(format!("dose {d} outside 1..={doses}")));
                    }
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, ev: TrialEvent) {
        match &ev.kind {
            EventKind::PatientEnrolled { patient_id, .. } => {
                self.patients.insert(patient_id.clone(), Enrolled { entry: ev.timestamp, terminal: false });
            }
            EventKind::DltObserved { patient_id } | EventKind::AssessmentCompleted { patient_id } => {
                if let Some(p) = self.patients.get_mut(patient_id) {
                    p.terminal = true;
                }
            }
            EventKind::TrialClosed { .. } => self.closed = true,
            _ => {}
        }
        self.events.push(ev);
    }

    /// Validates `ev` without appending it; returns advisory warnings.
    pub fn preview(&self, ev: &NewEvent) -> std::result::Result<Vec<String>, LogError> {
        self.check(&ev.timestamp, &ev.kind)?;
        let mut warnings = Vec::new();
        if let EventKind::PatientEnrolled { dose, .. } = &ev.kind {
            if let Ok(snap) = self.snapshot(ev.timestamp) {
                if snap.suspended {
                    warnings.push("accrual is currently suspended".to_string());
                }
                if snap.eliminated.contains(dose) {
                    warnings.push(format!("dose {dose} has been eliminated"));
                }
                if !snap.recommendation.bootstrap
                    && snap.recommendation.next_dose != *dose
                    && !snap.suspended
                    && snap.recommendation.action != Action::TerminateTrial
                {
                    warnings.push(format!("recommended dose is {}", snap.recommendation.next_dose));
                }
            }
        }
        Ok(warnings)
    }

    pub fn append(&mut self, ev: NewEvent) -> std::result::Result<(TrialEvent, Vec<String>), LogError> {
        let warnings = self.preview(&ev)?;
        let event = TrialEvent {
            v: SCHEMA_VERSION,
            event_id: self.events.last().expect("non-empty").event_id + 1,
            timestamp: ev.timestamp,
            kind: ev.kind,
        };
        self.apply(event.clone());
        Ok((event, warnings))
    }

    pub fn snapshot(&self, at: DateTime<Utc>) -> Result<TrialSnapshot> {
        fold(&self.config, &self.engine, &self.events, at)
    }

    /// Decision transcript at every cohort start and every recorded decision.
    pub fn transcript(&self) -> Result<Transcript> {
        transcript(&self.config, &self.engine, &self.events)
    }

    /// Same log replayed under a different design.
    pub fn with_design(&self, design: Design) -> Result<Self> {
        let mut config = self.config.clone();
        config.design = design;
        let engine = Engine::new(design, config.params)?;
        Ok(Self { config, engine, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseState {
    pub level: usize,
    pub label: String,
    pub n: usize,
    pub y: usize,
    pub pending: usize,
    pub completed: usize,
    pub m_eff: f64,
    pub eliminated: bool,
    pub isotonic_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub action: Action,
    pub next_dose: usize,
    pub next_label: String,
    /// No patient enrolled yet: the start dose is a convention, not a decision.
    pub bootstrap: bool,
    pub decision: Option<Decision<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// The decision-table row behind a recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Justification {
    pub n: usize,
    pub y: usize,
    pub c_lo: usize,
    pub c_hi: usize,
    pub m_eff: f64,
    pub regions: Vec<Region<f64>>,
    pub eliminate: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSnapshot {
    pub at: DateTime<Utc>,
    pub clock_months: f64,
    pub events: usize,
    pub doses: Vec<DoseState>,
    pub eliminated: Vec<usize>,
    pub current_dose: Option<usize>,
    pub suspended: bool,
    pub recommendation: Recommendation,
    pub justification: Option<Justification>,
    pub closed: bool,
    pub selected_dose: Option<usize>,
}

fn region_phrase(r: &Region<f64>) -> String {
    let what = match r.action {
        Action::Escalate => "escalate",
        Action::Stay => "stay",
        Action::DeEscalate => "de-escalate",
        Action::SuspendAccrual => "suspend accrual",
        Action::EliminateAndDeEscalate => "eliminate and de-escalate",
        Action::TerminateTrial => "terminate",
    };
    match (r.m_lo, r.m_hi) {
        (Some(a), Some(b)) => format!("{a:.2} < m̃ ≤ {b:.2} {what}"),
        (Some(a), None) => format!("m̃ > {a:.2} {what}"),
        (None, Some(b)) => format!("m̃ ≤ {b:.2} {what}"),
        (None, None) => what.to_string(),
    }
}

/// Decision-table row for the data `(n, y, c, m_eff)` with a one-line summary.
pub fn justify(engine: &Engine<f64>, n: usize, y: usize, c: usize, m_eff: f64) -> Result<Justification> {
    let row = row_for(engine, n, y, c)?;
    let c_text = if row.c_lo == row.c_hi { format!("c̃={}", row.c_lo) } else { format!("{}≤c̃≤{}", row.c_lo, row.c_hi) };
    let rules = row.regions.iter().map(region_phrase).collect::<Vec<_>>().join("; ");
    Ok(Justification {
        n,
        y,
        c_lo: row.c_lo,
        c_hi: row.c_hi,
        m_eff,
        text: format!("({n},{y}) {c_text}: {rules}"),
        eliminate: row.eliminate,
        regions: row.regions,
    })
}

struct Folded {
    recs: Vec<PatientRecord<f64>>,
    highest: usize,
    current: Option<usize>,
    closed: bool,
    selected: Option<usize>,
}

fn replay_records(config: &TrialConfig, engine: &Engine<f64>, events: &[TrialEvent], at: DateTime<Utc>) -> Result<Folded> {
    let origin = events[0].timestamp;
    let mut recs: Vec<PatientRecord<f64>> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Folded { recs: Vec::new(), highest: config.params.doses, current: None, closed: false, selected: None };
    for ev in events.iter().filter(|e| e.timestamp <= at) {
        let clock = months_between(origin, ev.timestamp);
        match &ev.kind {
            EventKind::PatientEnrolled { patient_id, dose } => {
                index.insert(patient_id, recs.len());
                recs.push(PatientRecord::new(patient_id.clone(), *dose, clock));
                out.current = Some(*dose);
            }
            EventKind::DltObserved { patient_id } => {
                if let Some(&i) = index.get(patient_id.as_str()) {
                    recs[i].dlt_time = Some(clock - recs[i].entry_time);
                }
                if let Some(j) = lowest_overdosed(engine, &recs, clock, out.highest)? {
                    out.highest = j - 1;
                }
            }
            EventKind::AssessmentCompleted { patient_id } => {
                if let Some(&i) = index.get(patient_id.as_str()) {
                    recs[i].assessment_closed = true;
                }
            }
            EventKind::TrialClosed { selected_dose } => {
                out.closed = true;
                out.selected = *selected_dose;
            }
            EventKind::TrialCreated { .. } | EventKind::DoseDecisionRecorded { .. } => {}
        }
    }
    out.recs = recs;
    Ok(out)
}

/// Pure fold of `events` at clock `at`.
pub fn fold(config: &TrialConfig, engine: &Engine<f64>, events: &[TrialEvent], at: DateTime<Utc>) -> Result<TrialSnapshot> {
    let origin = events.first().ok_or_else(|| Error::Event("empty event log".into()))?.timestamp;
    if at < origin {
        return Err(Error::Domain(format!("query time {at} precedes trial creation at {origin}")));
    }
    let clock = months_between(origin, at);
    let tau = config.params.tau;
    let mut f = replay_records(config, engine, events, at)?;
    if let Some(j) = lowest_overdosed(engine, &f.recs, clock, f.highest)? {
        f.highest = j - 1;
    }

    let model = config.weights.prepare(tau, &observed_dlt_times(&f.recs, clock, tau)?)?;
    let mut counts = Vec::new();
    let mut doses = Vec::new();
    for level in 1..=config.params.doses {
        let pd = crate::assess::dose_data(&f.recs, level, clock, &model)?;
        let eff = pd.effective();
        counts.push((eff.n, eff.y));
        doses.push(DoseState {
            level,
            label: config.label(level),
            n: eff.n,
            y: eff.y,
            pending: eff.pending,
            completed: eff.completed(),
            m_eff: eff.m_eff,
            eliminated: level > f.highest,
            isotonic_estimate: None,
        });
    }
    let eliminated: Vec<usize> = (f.highest + 1..=config.params.doses).collect();
    for (d, est) in doses.iter_mut().zip(isotonic_estimates(&counts, &eliminated)) {
        d.isotonic_estimate = est;
    }

    let (recommendation, justification) = match f.current {
        None => (
            Recommendation {
                action: Action::Stay,
                next_dose: 1,
                next_label: config.label(1),
                bootstrap: true,
                decision: None,
                note: Some("no patients enrolled yet: start at dose 1".into()),
            },
            None,
        ),
        Some(dose) => {
            let a = assess(engine, &config.weights, &f.recs, clock, dose, f.highest)?;
            let just = justify(engine, a.data.n, a.data.y, a.data.pending, a.data.m_eff)?;
            (
                Recommendation {
                    action: a.action,
                    next_dose: a.next_dose,
                    next_label: config.label(a.next_dose),
                    bootstrap: false,
                    decision: a.decision,
                    note: None,
                },
                Some(just),
            )
        }
    };
    Ok(TrialSnapshot {
        at,
        clock_months: clock,
        events: events.iter().filter(|e| e.timestamp <= at).count(),
        suspended: recommendation.action == Action::SuspendAccrual,
        doses,
        eliminated,
        current_dose: f.current,
        recommendation,
        justification,
        closed: f.closed,
        selected_dose: f.selected,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub at: DateTime<Utc>,
    pub day: f64,
    pub dose: usize,
    pub n: usize,
    pub y: usize,
    pub pending: usize,
    pub m_eff: f64,
    pub action: Action,
    pub next_dose: usize,
    pub doses: Vec<DoseState>,
    /// Decision the investigators recorded at this instant, if any.
    pub recorded: Option<(Action, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
    pub mtd: Option<usize>,
    pub mtd_estimate: Option<f64>,
    pub recorded_mtd: Option<usize>,
}

fn transcript(config: &TrialConfig, engine: &Engine<f64>, events: &[TrialEvent]) -> Result<Transcript> {
    let origin = events[0].timestamp;
    let cohort = config.params.cohort_size;
    let mut instants: Vec<usize> = Vec::new();
    let mut enrolled = 0usize;
    for (i, ev) in events.iter().enumerate() {
        let starts_cohort = match ev.kind {
            EventKind::PatientEnrolled { .. } => {
                enrolled += 1;
                enrolled > 1 && (enrolled - 1).is_multiple_of(cohort)
            }
            EventKind::DoseDecisionRecorded { .. } => true,
            _ => false,
        };
        if starts_cohort && instants.last().is_none_or(|&k| events[k].timestamp != ev.timestamp) {
            instants.push(i);
        }
    }
    let mut entries = Vec::new();
    for &i in &instants {
        let at = events[i].timestamp;
        // events at the same instant that precede the decision (outcomes)
        // are included; the decision and the new enrollment are not
        let prefix = &events[..i];
        let snap = fold(config, engine, prefix, at)?;
        let Some(dose) = snap.current_dose else { continue };
        let d = &snap.doses[dose - 1];
        let recorded = events[i..]
            .iter()
            .take_while(|e| e.timestamp == at)
            .find_map(|e| match e.kind {
                EventKind::DoseDecisionRecorded { action, dose, .. } => Some((action, dose)),
                _ => None,
            });
        entries.push(TranscriptEntry {
            at,
            day: months_between(origin, at) * DAYS_PER_MONTH,
            dose,
            n: d.n,
            y: d.y,
            pending: d.pending,
            m_eff: d.m_eff,
            action: snap.recommendation.action,
            next_dose: snap.recommendation.next_dose,
            doses: snap.doses.clone(),
            recorded,
        });
    }
    let last = events.last().expect("non-empty").timestamp;
    let end = fold(config, engine, events, last)?;
    let counts: Vec<(usize, usize)> = end.doses.iter().map(|d| (d.n, d.y)).collect();
    let mtd = if end.eliminated.contains(&1) { None } else { select_mtd(&counts, &end.eliminated, config.params.phi) };
    Ok(Transcript {
        mtd_estimate: mtd.and_then(|d| end.doses[d - 1].isotonic_estimate),
        mtd,
        recorded_mtd: end.selected_dose,
        entries,
    })
}

impl Transcript {
    pub fn render(&self) -> String {
        if self.entries.is_empty() && self.mtd.is_none() {
            return "no decisions\n".into();
        }
        let mut s = String::new();
        if self.entries.is_empty() {
            s.push_str("no decisions\n");
        }
        for e in &self.entries {
            let _ = write!(
                s,
                "day {:>6.1}  dose {}  n={} y={} c={} m={:.4}  {}",
                e.day,
                e.dose,
                e.n,
                e.y,
                e.pending,
                e.m_eff,
                e.action.label()
            );
            if e.next_dose != e.dose {
                let _ = write!(s, " -> dose {}", e.next_dose);
            }
            if let Some((a, d)) = e.recorded {
                if a != e.action || d != e.next_dose {
                    let _ = write!(s, "  (recorded: {} dose {d})", a.label());
                }
            }
            s.push('\n');
        }
        match (self.mtd, self.mtd_estimate) {
            (Some(d), Some(p)) => {
                let _ = writeln!(s, "SELECT MTD: dose {d} (estimate {p:.4})");
            }
            (Some(d), None) => {
                let _ = writeln!(s, "SELECT MTD: dose {d}");
            }
            (None, _) => s.push_str("SELECT MTD: none\n"),
        }
        s
    }
}

/// Parses an NDJSON log. Blank lines are skipped; the error carries the
/// 1-based line number.
pub fn parse_ndjson(text: &str) -> std::result::Result<Vec<TrialEvent>, (usize, Error)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ev: TrialEvent =
            serde_json::from_str(line).map_err(|e| (i + 1, Error::Event(format!("malformed event: {e}"))))?;
        out.push(ev);
    }
    Ok(out)
}

pub fn to_ndjson_line(ev: &TrialEvent) -> String {
    let mut s = serde_json::to_string(ev).expect("events serialize");
    s.push('\n');
    s
}
