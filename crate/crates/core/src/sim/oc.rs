use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::AccrualModel;
use super::trial::{SimDesign, Simulator, TrialResult};
use super::Scenario;
use crate::error::{config, Result};

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub design: String,
    pub accrual_model: AccrualModel,
    pub replicates: usize,
    pub master_seed: u64,
    pub true_mtd: usize,
    pub tox_probs: Vec<f64>,
    pub selection_pct: Vec<f64>,
    pub allocation_pct: Vec<f64>,
    pub mean_patients: Vec<f64>,
    pub mean_dlts: Vec<f64>,
    pub mean_duration: f64,
    pub stop_pct: f64,
    pub poor_allocation_pct: f64,
    /// Trials treating more than `max_n / 2` patients above the true MTD.
    pub overdose_pct: f64,
    /// Same with "at least half" in place of "more than half".
    pub overdose_inclusive_pct: f64,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    trials: usize,
    selected: Vec<usize>,
    patients: Vec<usize>,
    dlts: Vec<usize>,
    duration: f64,
    stopped: usize,
    poor: usize,
    overdose: usize,
    overdose_inclusive: usize,
}

impl Tally {
    fn new(doses: usize) -> Self {
        Self { selected: vec![0; doses], patients: vec![0; doses], dlts: vec![0; doses], ..Self::default() }
    }

    fn add(mut self, r: &TrialResult, mtd: usize, max_n: usize) -> Self {
        self.trials += 1;
        match r.selected_dose {
            Some(d) => self.selected[d - 1] += 1,
            None => self.stopped += 1,
        }
        for j in 0..self.patients.len() {
            self.patients[j] += r.patients[j];
            self.dlts[j] += r.dlts[j];
        }
        self.duration += r.duration;
        if r.patients[mtd - 1] < 6 {
            self.poor += 1;
        }
        let above: usize = r.patients[mtd..].iter().sum();
        if 2 * above > max_n {
            self.overdose += 1;
        }
        if 2 * above >= max_n {
            self.overdose_inclusive += 1;
        }
        self
    }

    fn merge(mut self, o: Tally) -> Self {
        self.trials += o.trials;
        for j in 0..self.selected.len() {
            self.selected[j] += o.selected[j];
            self.patients[j] += o.patients[j];
            self.dlts[j] += o.dlts[j];
        }
        self.duration += o.duration;
        self.stopped += o.stopped;
        self.poor += o.poor;
        self.overdose += o.overdose;
        self.overdose_inclusive += o.overdose_inclusive;
        self
    }
}

/// Runs `replicates` seeded trials in parallel and aggregates them.
pub fn run_oc(scenario: &Scenario, design: &SimDesign, replicates: usize, master_seed: u64) -> Result<OperatingCharacteristics> {
    if replicates == 0 {
        return config("at least one replicate is required");
    }
    let sim = Simulator::new(scenario, design)?;
    let doses = scenario.doses();
    let phi = sim.params().phi;
    let mtd = scenario.true_mtd(phi);
    let max_n = scenario.max_n;
    let tally = (0..replicates as u64)
        .into_par_iter()
        .map(|i| sim.run(replicate_seed(master_seed, i)))
        .try_fold(|| Tally::new(doses), |acc, r| r.map(|r| acc.add(&r, mtd, max_n)))
        .try_reduce(|| Tally::new(doses), |a, b| Ok(a.merge(b)))?;
    let reps = tally.trials as f64;
    let total: usize = tally.patients.iter().sum();
    let pct = |k: usize| 100.0 * k as f64 / reps;
    Ok(OperatingCharacteristics {
        design: design.design.name().to_string(),
        accrual_model: scenario.accrual.model,
        replicates,
        master_seed,
        true_mtd: mtd,
        tox_probs: scenario.tox_probs.clone(),
        selection_pct: tally.selected.iter().map(|&k| pct(k)).collect(),
        allocation_pct: tally
            .patients
            .iter()
            .map(|&k| if total > 0 { 100.0 * k as f64 / total as f64 } else { 0.0 })
            .collect(),
        mean_patients: tally.patients.iter().map(|&k| k as f64 / reps).collect(),
        mean_dlts: tally.dlts.iter().map(|&k| k as f64 / reps).collect(),
        mean_duration: tally.duration / reps,
        stop_pct: pct(tally.stopped),
        poor_allocation_pct: pct(tally.poor),
        overdose_pct: pct(tally.overdose),
        overdose_inclusive_pct: pct(tally.overdose_inclusive),
    })
}

impl OperatingCharacteristics {
    /// Long-format CSV: `metric,dose,value`, dose blank for trial-level rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,dose,value\n");
        let per_dose: [(&str, &Vec<f64>); 5] = [
            ("tox_prob", &self.tox_probs),
            ("selection_pct", &self.selection_pct),
            ("allocation_pct", &self.allocation_pct),
            ("mean_patients", &self.mean_patients),
            ("mean_dlts", &self.mean_dlts),
        ];
        for (name, values) in per_dose {
            for (j, v) in values.iter().enumerate() {
                let _ = writeln!(s, "{name},{},{v:.4}", j + 1);
            }
        }
        for (name, v) in [
            ("mean_duration", self.mean_duration),
            ("stop_pct", self.stop_pct),
            ("poor_allocation_pct", self.poor_allocation_pct),
            ("overdose_pct", self.overdose_pct),
            ("overdose_inclusive_pct", self.overdose_inclusive_pct),
        ] {
            let _ = writeln!(s, "{name},,{v:.4}");
        }
        let _ = writeln!(s, "true_mtd,,{}", self.true_mtd);
        let _ = writeln!(s, "replicates,,{}", self.replicates);
        let _ = writeln!(s, "master_seed,,{}", self.master_seed);
        let model = match self.accrual_model {
            AccrualModel::Deterministic => "deterministic",
            AccrualModel::Exponential => "exponential",
        };
        let _ = writeln!(s, "accrual_model,,{model}");
        let _ = writeln!(s, "design,,{}", self.design);
        s
    }
}
