//! Special functions, Beta interval probabilities, quadrature and isotonic
//! regression shared by every dose-finding engine.

mod pava;
pub mod quadrature;
mod special;

pub use pava::pava_isotonic;
pub use special::{beta_cdf, interval_prob, ln_gamma, log_beta, BetaParams};
