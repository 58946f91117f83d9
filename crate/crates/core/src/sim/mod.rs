//! Whole-trial simulation and operating characteristics.

mod mtd;
mod oc;
mod scenario;
mod trial;

pub use mtd::{isotonic_estimates, select_mtd};
pub use oc::{replicate_seed, run_oc, splitmix64, OperatingCharacteristics};
pub use scenario::{weibull_calibrate, Accrual, AccrualModel, Scenario, TimeFamily, ToxTimeModel, Weibull};
pub use trial::{
    simulate_trial, DecisionRecord, PatientSource, RandomPatients, ScriptedPatients, SimDesign, Simulator,
    TrialResult,
};
