use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alt::{boin_raw, mtpi_raw, BoinBoundaries, MtpiIntervals};
use crate::error::{Error, Result};
use crate::keyboard::{
    apply_safety, keyboard_raw, keyboard_raw_exact, Decision, DesignParams, DosePosition, Keyboard, RawDecision,
};
use crate::patient::{EffectiveData, PendingData};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Keyboard,
    Mtpi,
    Boin,
    KeyboardExact,
}

impl Design {
    pub fn name(self) -> &'static str {
        match self {
            Design::Keyboard => "keyboard",
            Design::Mtpi => "mtpi",
            Design::Boin => "boin",
            Design::KeyboardExact => "keyboard_exact",
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "keyboard" => Ok(Design::Keyboard),
            "mtpi" => Ok(Design::Mtpi),
            "boin" => Ok(Design::Boin),
            "keyboard_exact" | "exact" => Ok(Design::KeyboardExact),
            other => Err(Error::Config(format!("unknown design '{other}'"))),
        }
    }
}

/// A design with its interval structures built once.
#[derive(Debug, Clone)]
pub struct Engine<T> {
    pub design: Design,
    pub params: DesignParams<T>,
    pub keyboard: Keyboard<T>,
    pub mtpi: MtpiIntervals<T>,
    pub boin: BoinBoundaries<T>,
}

impl<T: Scalar> Engine<T> {
    pub fn new(design: Design, params: DesignParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            design,
            keyboard: Keyboard::new(&params)?,
            mtpi: MtpiIntervals::new(&params)?,
            boin: BoinBoundaries::default_for(params.phi)?,
            params,
        })
    }

    pub fn with_boin(mut self, boin: BoinBoundaries<T>) -> Self {
        self.boin = boin;
        self
    }

    /// Interval rule on effective data. The exact design falls back to
    /// the keyboard rule, which it equals whenever nothing is pending.
    pub fn raw(&self, data: &EffectiveData<T>) -> Result<RawDecision<T>> {
        match self.design {
            Design::Keyboard | Design::KeyboardExact => keyboard_raw(data, &self.keyboard),
            Design::Mtpi => mtpi_raw(data, &self.mtpi),
            Design::Boin => boin_raw(data, &self.boin),
        }
    }

    pub fn decide_effective(&self, data: &EffectiveData<T>, pos: DosePosition) -> Result<Decision<T>> {
        apply_safety(self.raw(data)?, data, &self.params, pos)
    }

    pub fn decide(&self, data: &PendingData<T>, pos: DosePosition) -> Result<Decision<T>> {
        let eff = data.effective();
        let raw = match self.design {
            Design::KeyboardExact => keyboard_raw_exact(data, &self.keyboard)?,
            _ => self.raw(&eff)?,
        };
        apply_safety(raw, &eff, &self.params, pos)
    }
}
