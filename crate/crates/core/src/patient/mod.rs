//! Patient records, follow-up weights and the effective binomial data that
//! summarise pending toxicity outcomes at one dose.

mod effective;
mod likelihood;
mod record;
mod weights;

pub use effective::{EffectiveData, PendingData};
pub use likelihood::{approximation_error_bound, exact_log_likelihood, ExactPosterior};
pub use record::{Observation, OutcomeStatus, PatientRecord, TIME_EPS};
pub use weights::{
    weight_adaptive, weight_piecewise, weight_uniform, AdaptivePosterior, AdaptivePrior,
    PiecewiseWeights, WeightModel, WeightScheme,
};
