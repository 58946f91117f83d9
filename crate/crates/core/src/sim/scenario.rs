use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccrualModel {
    #[default]
    Deterministic,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accrual {
    /// Patients per month.
    pub rate: f64,
    #[serde(default)]
    pub model: AccrualModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeFamily {
    #[default]
    Weibull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToxTimeModel {
    #[serde(default)]
    pub family: TimeFamily,
    /// Share of toxicities falling in the second half of the window.
    #[serde(default = "half")]
    pub late_fraction: f64,
}

fn half() -> f64 {
    0.5
}

fn one() -> usize {
    1
}

impl Default for ToxTimeModel {
    fn default() -> Self {
        Self { family: TimeFamily::Weibull, late_fraction: 0.5 }
    }
}

/// Simulation truth: toxicity probabilities, window, accrual and sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub tox_probs: Vec<f64>,
    pub tau: f64,
    pub accrual: Accrual,
    #[serde(default)]
    pub tox_time_model: ToxTimeModel,
    pub max_n: usize,
    pub cohort_size: usize,
    #[serde(default = "one")]
    pub start_dose: usize,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.tox_probs.is_empty() {
            return config("scenario needs at least one dose");
        }
        if self.tox_probs.iter().any(|p| !(0.0..1.0).contains(p)) {
            return config("toxicity probabilities must lie in [0, 1)");
        }
        if self.tox_probs.windows(2).any(|w| w[1] < w[0]) {
            return config("toxicity probabilities must be non-decreasing in dose");
        }
        if !(self.tau > 0.0) {
            return config("tau must be positive");
        }
        if !(self.accrual.rate > 0.0 && self.accrual.rate.is_finite()) {
            return config("accrual rate must be positive");
        }
        let lf = self.tox_time_model.late_fraction;
        if !(lf > 0.0 && lf < 1.0) {
            return config("late_fraction must lie in (0, 1)");
        }
        if self.max_n == 0 || self.cohort_size == 0 {
            return config("max_n and cohort_size must be positive");
        }
        if self.start_dose == 0 || self.start_dose > self.tox_probs.len() {
            return config(format!("start_dose {} outside 1..={}", self.start_dose, self.tox_probs.len()));
        }
        Ok(())
    }

    pub fn doses(&self) -> usize {
        self.tox_probs.len()
    }

    /// Dose whose toxicity probability is closest to `phi` (lower on ties).
    pub fn true_mtd(&self, phi: f64) -> usize {
        let mut best = 0;
        for (j, p) in self.tox_probs.iter().enumerate() {
            if (p - phi).abs() < (self.tox_probs[best] - phi).abs() - 1e-12 {
                best = j;
            }
        }
        best + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl Weibull {
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            -(-(t / self.scale).powf(self.shape)).exp_m1()
        }
    }

    /// Inverse-transform draw from a uniform variate in (0, 1).
    pub fn quantile_of(&self, u: f64) -> f64 {
        self.scale * (-(u.ln())).powf(1.0 / self.shape)
    }
}

/// Weibull with `F(tau) = p` and `F(tau / 2) = (1 - late_fraction) p`.
pub fn weibull_calibrate(p: f64, tau: f64, late_fraction: f64) -> Result<Weibull> {
    if !(p > 0.0 && p < 1.0) {
        return config(format!("toxicity probability {p} outside (0, 1)"));
    }
    if !(tau > 0.0) {
        return config("tau must be positive");
    }
    let a = -(-p).ln_1p();
    let b = -(-(1.0 - late_fraction) * p).ln_1p();
    let shape = (a / b).log2();
    if !(shape.is_finite() && shape > 0.0) {
        return config(format!("late_fraction {late_fraction} gives no valid Weibull shape"));
    }
    Ok(Weibull { shape, scale: tau / a.powf(1.0 / shape) })
}
