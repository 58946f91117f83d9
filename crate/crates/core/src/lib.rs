//! Time-to-event keyboard dose finding.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
mod scalar;

pub mod alt;
pub mod assess;
pub mod conduct;
pub mod engine;
pub mod keyboard;
pub mod patient;
pub mod sim;
pub mod stats;
pub mod table;

pub use alt::{boin_boundaries, boin_decision, mtpi_decision, BoinBoundaries, MtpiIntervals};
pub use engine::{Design, Engine};
pub use error::{Error, Result};
pub use keyboard::{
    keyboard_decision, keyboard_decision_exact, strongest_key, Action, Decision, DesignParams, DosePosition, Keyboard,
};
pub use scalar::Scalar;
pub use table::{generate_table, render_table, row_for, Region, TableFormat, TableRow};

pub type F64 = f64;
pub type F32 = f32;
pub type EngineF64 = Engine<f64>;
pub type EngineF32 = Engine<f32>;
pub type ParamsF64 = DesignParams<f64>;
pub type ParamsF32 = DesignParams<f32>;
