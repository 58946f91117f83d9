use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{Design, Engine};
use crate::error::{config, domain, Error, Result};
use crate::keyboard::{overdose_probability, Action};
use crate::patient::EffectiveData;
use crate::Scalar;

const MAX_TABLE_N: usize = 100;
const OPEN_EPS: f64 = 1e-9;
const SCAN_POINTS: usize = 64;

/// One action over the m̃ interval `(m_lo, m_hi]`. A missing bound means
/// the feasible limit for the row's pending count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region<T> {
    pub m_lo: Option<T>,
    pub m_hi: Option<T>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow<T> {
    pub n: usize,
    pub y: usize,
    pub c_lo: usize,
    pub c_hi: usize,
    pub regions: Vec<Region<T>>,
    pub eliminate: bool,
    /// Some pending count in the range leaves too few completed patients
    /// for the escalation shown to be allowed.
    pub caveat: bool,
}

impl<T: Scalar> TableRow<T> {
    pub fn actions(&self) -> Vec<Action> {
        self.regions.iter().map(|r| r.action).collect()
    }

    pub fn contains(&self, n: usize, y: usize, c: usize) -> bool {
        self.n == n && self.y == y && self.c_lo <= c && c <= self.c_hi
    }

    /// Action the row prescribes at `m_eff`.
    pub fn action_at(&self, m_eff: T) -> Action {
        self.regions
            .iter()
            .find(|r| r.m_hi.is_none_or(|h| m_eff <= h))
            .or(self.regions.last())
            .map(|r| r.action)
            .expect("rows have at least one region")
    }
}

/// Change points of the interval rule in m̃ for fixed (n, ỹ).
#[derive(Debug, Clone)]
struct Transitions<T> {
    /// (threshold, action just above it), ascending.
    cuts: Vec<(T, Action)>,
    first: Action,
}

fn raw_action<T: Scalar>(engine: &Engine<T>, n: usize, y: usize, m: T) -> Result<Action> {
    Ok(engine.raw(&EffectiveData::cell(n, y, 0, m))?.action)
}

fn transitions<T: Scalar>(engine: &Engine<T>, n: usize, y: usize) -> Result<Transitions<T>> {
    let top = T::of_usize(n - y);
    let bottom = T::of(OPEN_EPS).max(T::of(1e4) * T::epsilon()).min(top);
    let first = raw_action(engine, n, y, bottom)?;
    if n == y {
        return Ok(Transitions { cuts: Vec::new(), first });
    }
    // coarse scan guards the bisection against non-monotone rules
    let mut prev = first;
    for i in 1..=SCAN_POINTS {
        let m = bottom + (top - bottom) * T::of_usize(i) / T::of_usize(SCAN_POINTS);
        let a = raw_action(engine, n, y, m)?;
        if a.code() < prev.code() {
            return Err(Error::Consistency(format!(
                "decision not monotone in m_eff at n={n}, y={y}: {prev} then {a} at {m}"
            )));
        }
        prev = a;
    }
    let mut cuts = Vec::new();
    for level in [0i8, 1] {
        if first.code() >= level || prev.code() < level {
            continue;
        }
        let (mut lo, mut hi) = (bottom, top);
        for _ in 0..200 {
            let mid = T::of(0.5) * (lo + hi);
            if raw_action(engine, n, y, mid)?.code() >= level {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= T::of(1e-12) * (T::one() + hi) {
                break;
            }
        }
        let above = raw_action(engine, n, y, hi)?;
        if !cuts.iter().any(|&(t, _)| t == hi) {
            cuts.push((hi, above));
        }
    }
    Ok(Transitions { cuts, first })
}

fn cell_regions<T: Scalar>(tr: &Transitions<T>, n: usize, y: usize, c: usize) -> Vec<Region<T>> {
    let top = T::of_usize(n - y);
    let lo = T::of_usize(n - y - c);
    let action_at = |m: T| {
        tr.cuts
            .iter()
            .rev()
            .find(|&&(t, _)| m > t)
            .map(|&(_, a)| a)
            .unwrap_or(tr.first)
    };
    if c == 0 {
        return vec![Region { m_lo: None, m_hi: None, action: action_at(top) }];
    }
    let inside: Vec<T> = tr.cuts.iter().map(|&(t, _)| t).filter(|&t| t > lo && t < top).collect();
    let mut regions: Vec<Region<T>> = Vec::new();
    let mut start = None;
    for end in inside.iter().copied().map(Some).chain(std::iter::once(None)) {
        let a = action_at(end.unwrap_or(top));
        match regions.last_mut() {
            Some(last) if last.action == a => last.m_hi = end,
            _ => regions.push(Region { m_lo: start, m_hi: end, action: a }),
        }
        start = end;
    }
    regions
}

/// Safety overlay for one table cell. Suspension is written into the
/// first-cohort rows only; later rows carry the caveat flag instead.
fn apply_cell_rules<T: Scalar>(engine: &Engine<T>, n: usize, c: usize, regions: &mut [Region<T>]) -> bool {
    let p = &engine.params;
    let short = n - c < p.min_complete_for_escalation;
    let has_escalate = regions.iter().any(|r| r.action == Action::Escalate);
    if short && n == p.cohort_size && has_escalate {
        let replacement = if n >= p.min_complete_for_escalation { Action::SuspendAccrual } else { Action::Stay };
        for r in regions.iter_mut().filter(|r| r.action == Action::Escalate) {
            r.action = replacement;
        }
        return false;
    }
    short && has_escalate
}

fn merge_cells<T: Scalar>(cells: Vec<TableRow<T>>) -> Vec<TableRow<T>> {
    let mut out: Vec<TableRow<T>> = Vec::new();
    for row in cells {
        match out.last_mut() {
            Some(prev) if prev.regions == row.regions && prev.c_hi + 1 == row.c_lo => {
                prev.c_hi = row.c_hi;
                prev.caveat |= row.caveat;
            }
            _ => out.push(row),
        }
    }
    out
}

fn rows_for_cell<T: Scalar>(engine: &Engine<T>, n: usize, y: usize) -> Result<Vec<TableRow<T>>> {
    if overdose_probability(n, y, engine.params.phi)? > engine.params.eta {
        return Ok(vec![TableRow {
            n,
            y,
            c_lo: 0,
            c_hi: n - y,
            regions: vec![Region { m_lo: None, m_hi: None, action: Action::EliminateAndDeEscalate }],
            eliminate: true,
            caveat: false,
        }]);
    }
    let tr = transitions(engine, n, y)?;
    let cells = (0..=n - y)
        .map(|c| {
            let mut regions = cell_regions(&tr, n, y, c);
            let caveat = apply_cell_rules(engine, n, c, &mut regions);
            TableRow { n, y, c_lo: c, c_hi: c, regions, eliminate: false, caveat }
        })
        .collect();
    Ok(merge_cells(cells))
}

/// Tabulates the decision for every cohort multiple n up to `max_n`, every
/// toxicity count up to the first eliminating one, and every pending count.
pub fn generate_table<T: Scalar>(engine: &Engine<T>) -> Result<Vec<TableRow<T>>> {
    let p = &engine.params;
    if engine.design == Design::KeyboardExact {
        return config("the exact-likelihood design has no m_eff table");
    }
    if p.max_n > MAX_TABLE_N {
        return config(format!("max_n {} exceeds the table limit of {MAX_TABLE_N}", p.max_n));
    }
    let mut rows = Vec::new();
    let mut n = p.cohort_size;
    while n <= p.max_n {
        for y in 0..=n {
            let block = rows_for_cell(engine, n, y)?;
            let eliminated = block.iter().any(|r| r.eliminate);
            rows.extend(block);
            if eliminated {
                break;
            }
        }
        n += p.cohort_size;
    }
    Ok(rows)
}

/// The table row covering one interim state, for any n.
pub fn row_for<T: Scalar>(engine: &Engine<T>, n: usize, y: usize, c: usize) -> Result<TableRow<T>> {
    if y + c > n {
        return domain(format!("y ({y}) + pending ({c}) exceeds n ({n})"));
    }
    rows_for_cell(engine, n, y)?
        .into_iter()
        .find(|r| r.contains(n, y, c))
        .ok_or_else(|| Error::Consistency(format!("no table row for ({n}, {y}, {c})")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Markdown,
    Json,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown table format '{other}'"))),
        }
    }
}

fn fmt2<T: Scalar>(t: Option<T>) -> String {
    t.map(|v| format!("{:.2}", v.f64())).unwrap_or_default()
}

fn action_key(a: Action) -> &'static str {
    match a {
        Action::Escalate => "escalate",
        Action::Stay => "stay",
        Action::DeEscalate => "de_escalate",
        Action::SuspendAccrual => "suspend_accrual",
        Action::EliminateAndDeEscalate => "eliminate_and_de_escalate",
        Action::TerminateTrial => "terminate_trial",
    }
}

fn c_label(lo: usize, hi: usize) -> String {
    if lo == hi {
        format!("{lo}")
    } else if lo == 0 {
        format!("≤{hi}")
    } else {
        format!("{lo}≤c̃≤{hi}")
    }
}

fn region_text<T: Scalar>(r: &Region<T>, whole: bool) -> String {
    if whole {
        return "Y".into();
    }
    match (r.m_lo, r.m_hi) {
        (Some(a), Some(b)) => format!("{:.2}<m̃≤{:.2}", a.f64(), b.f64()),
        (Some(a), None) => format!("m̃>{:.2}", a.f64()),
        (None, Some(b)) => format!("m̃≤{:.2}", b.f64()),
        (None, None) => "Y".into(),
    }
}

fn markdown_cells<T: Scalar>(row: &TableRow<T>) -> [String; 3] {
    let mut cells: [String; 3] = Default::default();
    if row.eliminate {
        cells[2] = "Y & Eliminate".into();
        return cells;
    }
    let whole = row.regions.len() == 1;
    for r in &row.regions {
        let (col, text) = match r.action {
            Action::Escalate => (0, region_text(r, whole)),
            Action::SuspendAccrual if whole => (0, "Suspend accrual".into()),
            Action::SuspendAccrual => (0, format!("Suspend ({})", region_text(r, false))),
            Action::Stay => (1, region_text(r, whole)),
            _ => (2, region_text(r, whole)),
        };
        cells[col] = text;
    }
    if row.caveat {
        cells[0].push('*');
    }
    cells
}

fn render_markdown<T: Scalar>(rows: &[TableRow<T>]) -> String {
    // consecutive toxicity counts that each occupy a single uniform row are
    // printed together, e.g. "5,6"
    let mut groups: Vec<(Vec<usize>, &TableRow<T>, usize)> = Vec::new();
    let single = |r: &TableRow<T>| r.c_lo == 0 && r.c_hi == r.n - r.y && r.regions.len() == 1 && !r.eliminate;
    for (i, row) in rows.iter().enumerate() {
        let alone = single(row)
            && rows.get(i + 1).is_none_or(|nx| nx.n != row.n || nx.y != row.y)
            && (i == 0 || rows[i - 1].n != row.n || rows[i - 1].y != row.y);
        if let Some((ys, prev, c_hi)) = groups.last_mut() {
            if alone
                && single(prev)
                && prev.n == row.n
                && ys.last() == Some(&(row.y - 1))
                && prev.regions[0].action == row.regions[0].action
                && prev.caveat == row.caveat
            {
                ys.push(row.y);
                *c_hi = (*c_hi).max(row.c_hi);
                continue;
            }
        }
        groups.push((vec![row.y], row, row.c_hi));
    }
    let mut s = String::from("| n | ỹ | c̃ | Escalation | Stay | De-escalation |\n|---|---|---|---|---|---|\n");
    for (ys, row, c_hi) in &groups {
        let y = ys.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        let [e, st, d] = markdown_cells(row);
        let _ = writeln!(s, "| {} | {} | {} | {} | {} | {} |", row.n, y, c_label(row.c_lo, *c_hi), e, st, d);
    }
    if rows.iter().any(|r| r.caveat) {
        s.push_str("\n* Escalation also requires enough patients with completed assessment at the dose.\n");
    }
    s
}

fn render_csv<T: Scalar>(rows: &[TableRow<T>]) -> String {
    let mut s = String::from("n,y,c_lo,c_hi,m_threshold_lo,m_threshold_hi,action\n");
    for row in rows {
        for r in &row.regions {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                row.n,
                row.y,
                row.c_lo,
                row.c_hi,
                fmt2(r.m_lo),
                fmt2(r.m_hi),
                action_key(r.action)
            );
        }
    }
    s
}

pub fn render_table<T: Scalar + Serialize>(rows: &[TableRow<T>], format: TableFormat) -> Result<String> {
    if rows.is_empty() {
        return domain("cannot render an empty table");
    }
    Ok(match format {
        TableFormat::Csv => render_csv(rows),
        TableFormat::Markdown => render_markdown(rows),
        TableFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).map_err(|e| Error::Numeric(e.to_string()))?;
            s.push('\n');
            s
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyboard::DesignParams;

    fn engine(max_n: usize) -> Engine<f64> {
        Engine::new(Design::Keyboard, DesignParams { max_n, ..DesignParams::default() }).unwrap()
    }

    #[test]
    fn stay_everywhere_row_is_one_csv_line() {
        let row = TableRow::<f64> {
            n: 3,
            y: 1,
            c_lo: 0,
            c_hi: 0,
            regions: vec![Region { m_lo: None, m_hi: None, action: Action::Stay }],
            eliminate: false,
            caveat: false,
        };
        let csv = render_table(&[row], TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1), Some("3,1,0,0,,,stay"));
    }

    #[test]
    fn first_cohort_rows() {
        let rows = generate_table(&engine(3)).unwrap();
        let summary: Vec<_> = rows.iter().map(|r| (r.y, r.c_lo, r.c_hi, r.actions())).collect();
        use Action::*;
        assert_eq!(
            summary,
            vec![
                (0, 0, 1, vec![Escalate]),
                (0, 2, 3, vec![SuspendAccrual]),
                (1, 0, 0, vec![Stay]),
                (1, 1, 2, vec![DeEscalate, Stay]),
                (2, 0, 1, vec![DeEscalate]),
                (3, 0, 0, vec![EliminateAndDeEscalate]),
            ]
        );
        assert!((rows[3].regions[0].m_hi.unwrap() - 1.876).abs() < 1e-3);
    }

    #[test]
    fn exact_design_has_no_table() {
        let e = Engine::new(Design::KeyboardExact, DesignParams::<f64>::default()).unwrap();
        assert!(generate_table(&e).is_err());
    }

    #[test]
    fn oversized_table_rejected() {
        assert!(matches!(generate_table(&engine(120)), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_format() {
        assert!("xml".parse::<TableFormat>().is_err());
        assert_eq!("md".parse::<TableFormat>().unwrap(), TableFormat::Markdown);
    }

    #[test]
    fn row_lookup() {
        let e = engine(12);
        let r = row_for(&e, 6, 2, 3).unwrap();
        assert_eq!((r.c_lo, r.c_hi), (1, 4));
        assert_eq!(r.action_at(3.5), Action::DeEscalate);
        assert_eq!(r.action_at(3.9), Action::Stay);
        assert!(row_for(&e, 3, 2, 2).is_err());
    }
}
