//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use chrono::{DateTime, Duration, TimeZone, Utc};
use titekit_core::conduct::{fold, parse_ndjson, to_ndjson_line, EventKind, NewEvent, TrialConfig, TrialLog};
use titekit_core::patient::{EffectiveData, PendingData, WeightModel, WeightScheme};
use titekit_core::stats::pava_isotonic;
use titekit_core::{Action, Design, DesignParams, DosePosition, Engine, Error};

pub type Check = Result<(), String>;

pub const INTERIOR: DosePosition = DosePosition { at_lowest: false, at_highest: false };

pub fn engine(design: Design) -> Engine<f64> {
    Engine::new(design, DesignParams::default()).unwrap()
}

fn decide(e: &Engine<f64>, d: &PendingData<f64>) -> Result<Option<Action>, String> {
    match e.decide(d, INTERIOR) {
        Ok(x) => Ok(Some(x.action)),
        Err(Error::InsufficientData(_)) => Ok(None),
        Err(err) => Err(err.to_string()),
    }
}

/// a(D^o) <= a(D^s): resolving every pending patient as DLT-free never
/// lowers the action.
pub fn safe_resolution_monotone(e: &Engine<f64>, y: usize, m: usize, w: &[f64]) -> Check {
    if y + m + w.len() == 0 {
        return Ok(());
    }
    let observed = PendingData::new(y, m, w.to_vec()).map_err(|e| e.to_string())?;
    let safe = PendingData::new(y, m + w.len(), vec![]).map_err(|e| e.to_string())?;
    if let (Some(a), Some(b)) = (decide(e, &observed)?, decide(e, &safe)?) {
        if a.code() > b.code() {
            return Err(format!("{}: {a:?} on {observed:?} but {b:?} once resolved", e.design));
        }
    }
    Ok(())
}

/// Action code is non-decreasing in m̃ for fixed (n, ỹ, c̃).
pub fn monotone_in_m(e: &Engine<f64>, n: usize, y: usize, c: usize, m1: f64, m2: f64) -> Check {
    if y as f64 + m1.min(m2) <= 0.0 {
        return Ok(());
    }
    let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
    let a = e.decide_effective(&EffectiveData::new(n, y, c, lo).map_err(|e| e.to_string())?, INTERIOR).map_err(|e| e.to_string())?;
    let b = e.decide_effective(&EffectiveData::new(n, y, c, hi).map_err(|e| e.to_string())?, INTERIOR).map_err(|e| e.to_string())?;
    if a.action.code() > b.action.code() {
        return Err(format!("{}: n={n} y={y} c={c}: m {lo} -> {:?}, m {hi} -> {:?}", e.design, a.action, b.action));
    }
    Ok(())
}

/// With nothing pending the decision is the complete-data decision; the
/// exact design collapses onto the plain keyboard.
pub fn no_pending_reduction(design: Design, n: usize, y: usize) -> Check {
    let e = engine(design);
    let plain = engine(if design == Design::KeyboardExact { Design::Keyboard } else { design });
    let a = e.decide(&PendingData::new(y, n - y, vec![]).unwrap(), INTERIOR).map_err(|e| e.to_string())?;
    let b = plain.decide_effective(&EffectiveData::complete(n, y).unwrap(), INTERIOR).map_err(|e| e.to_string())?;
    if a.action != b.action || a.strongest_key != b.strongest_key {
        return Err(format!("{design}: n={n} y={y}: {:?} vs {:?}", a.action, b.action));
    }
    Ok(())
}

/// Never escalate when ỹ/ñ > φ, never de-escalate when ỹ/ñ < φ, over
/// n <= max_n and m̃ on a quarter-patient grid. Returns the states checked.
pub fn coherence_exhaustive(design: Design, max_n: usize) -> Result<usize, String> {
    let e = engine(design);
    let phi = e.params.phi;
    let mut checked = 0;
    for n in 1..=max_n {
        for y in 0..=n {
            let free = n - y;
            for k in 0..=4 * free {
                let m = k as f64 / 4.0;
                if y as f64 + m == 0.0 {
                    continue;
                }
                let c = free - k / 4;
                let d = EffectiveData::new(n, y, c, m).unwrap();
                let a = e.decide_effective(&d, INTERIOR).map_err(|e| e.to_string())?.action;
                let rate = y as f64 / (y as f64 + m);
                if rate > phi + 1e-12 && a == Action::Escalate {
                    return Err(format!("{design}: escalates at n={n} y={y} m={m}"));
                }
                if rate < phi - 1e-12 && a.code() < 0 {
                    return Err(format!("{design}: {a:?} at n={n} y={y} m={m}"));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// w(0) = 0, w(τ) = 1, non-decreasing on the sorted fractions `us`.
pub fn weights_anchored(model: &WeightModel<f64>, us: &[f64]) -> Check {
    let tau = model.tau();
    let w = |u: f64| model.weight(u).map_err(|e| e.to_string());
    if w(0.0)?.abs() > 1e-9 || (w(tau)? - 1.0).abs() > 1e-9 {
        return Err(format!("{model:?} not anchored"));
    }
    let mut us = us.to_vec();
    us.sort_by(f64::total_cmp);
    let ws = us.iter().map(|u| w(u * tau)).collect::<Result<Vec<_>, _>>()?;
    if ws.windows(2).any(|x| x[0] > x[1] + 1e-9) {
        return Err(format!("{model:?} not monotone: {ws:?}"));
    }
    Ok(())
}

pub fn pava_laws(cells: &[(usize, usize)]) -> Check {
    let rates: Vec<(f64, f64)> = cells.iter().map(|&(e, n)| (e.min(n) as f64, n as f64)).collect();
    let est = pava_isotonic(&rates).map_err(|e| e.to_string())?;
    if est.windows(2).any(|w| w[0] > w[1]) {
        return Err(format!("not monotone: {est:?}"));
    }
    let again = pava_isotonic(&est.iter().zip(&rates).map(|(p, r)| (p * r.1, r.1)).collect::<Vec<_>>()).unwrap();
    if est.iter().zip(&again).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(format!("not idempotent: {est:?} -> {again:?}"));
    }
    let before: f64 = rates.iter().map(|r| r.0).sum();
    let after: f64 = est.iter().zip(&rates).map(|(p, r)| p * r.1).sum();
    if (before - after).abs() > 1e-9 {
        return Err(format!("mean not preserved: {before} vs {after}"));
    }
    Ok(())
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap()
}

pub fn conduct_config() -> TrialConfig {
    TrialConfig {
        design: Design::Keyboard,
        params: DesignParams { tau: 90.0 / 30.4375, max_n: 30, doses: 4, ..DesignParams::default() },
        weights: WeightScheme::Uniform,
        dose_labels: vec![],
        idempotency_key: None,
    }
}

/// Patient `(arrival gap days, dose, DLT onset day, completes)` list turned
/// into a timestamp-ordered event stream.
pub fn build_events(pts: &[(i64, usize, Option<i64>, bool)]) -> Vec<NewEvent> {
    let mut evs: Vec<(i64, u8, EventKind)> = Vec::new();
    let mut clock = 0;
    for (i, &(gap, dose, dlt, completes)) in pts.iter().enumerate() {
        clock += gap;
        let id = format!("p{i}");
        evs.push((clock, 1, EventKind::PatientEnrolled { patient_id: id.clone(), dose }));
        match dlt {
            Some(d) => evs.push((clock + d, 0, EventKind::DltObserved { patient_id: id })),
            None if completes => evs.push((clock + 90, 0, EventKind::AssessmentCompleted { patient_id: id })),
            None => {}
        }
    }
    evs.sort_by_key(|e| (e.0, e.1));
    evs.into_iter().map(|(d, _, kind)| NewEvent { timestamp: t0() + Duration::days(d), kind }).collect()
}

pub fn build_log(evs: Vec<NewEvent>) -> TrialLog {
    let mut log = TrialLog::create(conduct_config(), t0()).unwrap();
    for ev in evs {
        log.append(ev).unwrap();
    }
    log
}

/// Snapshot bytes survive serialization of the log, and a recovered prefix
/// folds exactly like the prefix itself.
pub fn replay_deterministic(log: &TrialLog, at: DateTime<Utc>, k: usize) -> Check {
    let a = serde_json::to_string(&log.snapshot(at).map_err(|e| e.to_string())?).unwrap();
    let text: String = log.events().iter().map(to_ndjson_line).collect();
    let torn = &text[..text.len() - 1];
    let rebuilt = TrialLog::from_events(parse_ndjson(&text).unwrap()).map_err(|(_, e)| e.to_string())?;
    let b = serde_json::to_string(&rebuilt.snapshot(at).unwrap()).unwrap();
    if a != b {
        return Err("snapshot differs after reload".into());
    }
    // a torn final line leaves the previous prefix
    let complete = torn.rfind('\n').map_or(0, |i| i + 1);
    let kept = parse_ndjson(&torn[..complete]).unwrap();
    if kept.len() != log.events().len() - 1 {
        return Err("torn line not isolated".into());
    }
    let k = 1 + k % log.events().len();
    let prefix = TrialLog::from_events(log.events()[..k].to_vec()).map_err(|(_, e)| e.to_string())?;
    let direct = fold(log.config(), log.engine(), &log.events()[..k], at).map_err(|e| e.to_string())?;
    if prefix.snapshot(at).map_err(|e| e.to_string())? != direct {
        return Err(format!("prefix {k} differs"));
    }
    Ok(())
}

/// m̃ never drops as the clock advances with no new event.
pub fn clock_monotone(log: &TrialLog, i: usize, f: f64) -> Check {
    let ts: Vec<DateTime<Utc>> = log.events().iter().map(|e| e.timestamp).collect();
    let i = i % ts.len();
    let start = ts[i];
    let end = ts.get(i + 1).copied().unwrap_or(start + Duration::days(200));
    if end <= start {
        return Ok(());
    }
    let mid = (start + Duration::seconds(((end - start).num_seconds() as f64 * f) as i64)).min(end - Duration::seconds(1)).max(start);
    let a = log.snapshot(start).map_err(|e| e.to_string())?;
    let b = log.snapshot(mid).map_err(|e| e.to_string())?;
    for (x, y) in a.doses.iter().zip(&b.doses) {
        if y.m_eff < x.m_eff - 1e-12 {
            return Err(format!("dose {}: m {} -> {}", x.level, x.m_eff, y.m_eff));
        }
    }
    Ok(())
}
