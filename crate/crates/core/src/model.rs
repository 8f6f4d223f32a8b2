//! Domain types and the per-cell mathematics.
//!
//! Everything here is a pure function over plain values: signal
//! transduction, context assessment and migration-threshold derivation.
//! The engine composes these into the population loop.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcaError, Result};

/// Four-category signal state of the tissue at one tick.
///
/// Each of `pamp`, `danger` and `safe` is the pre-summed aggregate over all
/// member signals of that category. `inflammation` is a dimensionless
/// amplifier applied to the whole weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalSnapshot {
    pub pamp: f64,
    pub danger: f64,
    pub safe: f64,
    pub inflammation: f64,
    pub tick: u64,
}

impl SignalSnapshot {
    pub fn new(pamp: f64, danger: f64, safe: f64, inflammation: f64, tick: u64) -> Result<Self> {
        let s = Self {
            pamp,
            danger,
            safe,
            inflammation,
            tick,
        };
        s.validate()?;
        Ok(s)
    }

    /// All-zero snapshot at `tick`.
    pub fn quiet(tick: u64) -> Self {
        Self {
            tick,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pamp", self.pamp),
            ("danger", self.danger),
            ("safe", self.safe),
            ("inflammation", self.inflammation),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(DcaError::InvalidParameter {
                    name,
                    reason: format!("signal value must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Checks the per-category upper bounds on top of [`Self::validate`].
    pub fn validate_within(&self, maxima: SignalMaxima) -> Result<()> {
        self.validate()?;
        for (name, v, max) in [
            ("pamp", self.pamp, maxima.pamp),
            ("danger", self.danger, maxima.danger),
            ("safe", self.safe, maxima.safe),
        ] {
            if v > max {
                return Err(DcaError::InvalidParameter {
                    name,
                    reason: format!("signal value {v} exceeds category maximum {max}"),
                });
            }
        }
        Ok(())
    }
}

/// Expected maximum level per input category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMaxima {
    pub pamp: f64,
    pub danger: f64,
    pub safe: f64,
}

impl SignalMaxima {
    pub const fn new(pamp: f64, danger: f64, safe: f64) -> Self {
        Self { pamp, danger, safe }
    }
}

impl Default for SignalMaxima {
    fn default() -> Self {
        Self::new(100.0, 100.0, 100.0)
    }
}

/// One output row of the weight matrix, ordered (PAMP, danger, safe).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightRow {
    pub pamp: f64,
    pub danger: f64,
    pub safe: f64,
}

impl WeightRow {
    #[inline]
    fn weighted_sum(&self, s: &SignalSnapshot) -> f64 {
        s.pamp * self.pamp + s.danger * self.danger + s.safe * self.safe
    }
}

/// The 3x3 transduction weights, generated from the two PAMP base weights.
///
/// Only `w1` and `w2` are stored; the rows are recomputed on access so the
/// fixed ratios between PAMP, danger and safe weights cannot drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMatrix {
    w1: f64,
    w2: f64,
}

impl WeightMatrix {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        for (name, w) in [("w1", w1), ("w2", w2)] {
            if !w.is_finite() || w <= 0.0 {
                return Err(DcaError::InvalidParameter {
                    name,
                    reason: format!("weight must be finite and > 0, got {w}"),
                });
            }
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> f64 {
        self.w1
    }

    pub fn w2(&self) -> f64 {
        self.w2
    }

    /// Costimulatory row: (W1, W1/2, 1.5*W1).
    pub fn csm(&self) -> WeightRow {
        WeightRow {
            pamp: self.w1,
            danger: self.w1 / 2.0,
            safe: self.w1 * 1.5,
        }
    }

    /// Semi-mature row, constant (0, 0, 1).
    pub fn semi(&self) -> WeightRow {
        WeightRow {
            pamp: 0.0,
            danger: 0.0,
            safe: 1.0,
        }
    }

    /// Mature row: (W2, W2/2, -1.5*W2).
    pub fn mature(&self) -> WeightRow {
        WeightRow {
            pamp: self.w2,
            danger: self.w2 / 2.0,
            safe: -self.w2 * 1.5,
        }
    }
}

impl Default for WeightMatrix {
    fn default() -> Self {
        Self { w1: 2.0, w2: 2.0 }
    }
}

/// Shorthand for [`WeightMatrix::new`].
pub fn derive_weight_matrix(w1: f64, w2: f64) -> Result<WeightMatrix> {
    WeightMatrix::new(w1, w2)
}

/// Cumulative (or interim) costimulatory, semi-mature and mature outputs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSignals {
    pub csm: f64,
    pub semi: f64,
    pub mature: f64,
}

impl std::ops::AddAssign for OutputSignals {
    fn add_assign(&mut self, rhs: Self) {
        self.csm += rhs.csm;
        self.semi += rhs.semi;
        self.mature += rhs.mature;
    }
}

/// One tick's interim outputs: each row's weighted sum, amplified by `1 + I`.
pub fn process_signals(s: &SignalSnapshot, w: &WeightMatrix) -> OutputSignals {
    let amp = 1.0 + s.inflammation;
    OutputSignals {
        csm: w.csm().weighted_sum(s) * amp,
        semi: w.semi().weighted_sum(s) * amp,
        mature: w.mature().weighted_sum(s) * amp,
    }
}

/// Binary context a migrated cell attaches to its antigen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Context {
    /// 0: semi-mature won.
    Normal = 0,
    /// 1: mature won or tied.
    Anomalous = 1,
}

impl Context {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl From<Context> for u8 {
    fn from(c: Context) -> u8 {
        c.as_u8()
    }
}

impl TryFrom<u8> for Context {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Context::Normal),
            1 => Ok(Context::Anomalous),
            other => Err(format!("context must be 0 or 1, got {other}")),
        }
    }
}

/// Semi-mature strictly greater than mature gives 0; anything else gives 1.
pub fn assign_context(cumulative: &OutputSignals) -> Context {
    if cumulative.semi > cumulative.mature {
        Context::Normal
    } else {
        Context::Anomalous
    }
}

/// Median migration threshold: half the CSM output produced by the maximum
/// expected signal in every category. Inflammation does not enter.
pub fn median_migration_threshold(maxima: SignalMaxima, w: &WeightMatrix) -> Result<f64> {
    for (name, v) in [
        ("signal_maxima.pamp", maxima.pamp),
        ("signal_maxima.danger", maxima.danger),
        ("signal_maxima.safe", maxima.safe),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(DcaError::InvalidConfig {
                field: name.to_string(),
                reason: format!("maximum must be finite and >= 0, got {v}"),
            });
        }
    }
    if maxima.pamp == 0.0 && maxima.danger == 0.0 && maxima.safe == 0.0 {
        return Err(DcaError::InvalidConfig {
            field: "signal_maxima".to_string(),
            reason: "all category maxima are zero".to_string(),
        });
    }
    let row = w.csm();
    Ok(0.5 * (maxima.pamp * row.pamp + maxima.danger * row.danger + maxima.safe * row.safe))
}

/// Uniform draw on `[0.5, 1.5] * t_median`. Consumes exactly one `f64`.
pub fn draw_migration_threshold<R: Rng + ?Sized>(t_median: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    t_median * (0.5 + u)
}

/// Opaque antigen type identifier, for example a process or flow id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AntigenType(String);

impl AntigenType {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(DcaError::InvalidParameter {
                name: "antigen_type",
                reason: "identifier must be non-empty".to_string(),
            });
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AntigenType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for AntigenType {
    type Error = DcaError;

    fn try_from(s: String) -> Result<Self> {
        Self::new(s)
    }
}

impl From<AntigenType> for String {
    fn from(a: AntigenType) -> String {
        a.0
    }
}

/// One antigen instance. Instances of the same type are not merged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntigenEvent {
    pub antigen_type: AntigenType,
    pub arrival_tick: u64,
}

impl AntigenEvent {
    pub fn new(antigen_type: impl Into<String>, arrival_tick: u64) -> Result<Self> {
        Ok(Self {
            antigen_type: AntigenType::new(antigen_type)?,
            arrival_tick,
        })
    }
}

/// Antigen presented in the lymph node together with its cell's context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationRecord {
    pub antigen_type: AntigenType,
    pub context: Context,
    pub migration_tick: u64,
    pub cell_lifespan_ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Immature,
    SemiMature,
    Mature,
}

/// One artificial dendritic cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DendriticCell {
    state: CellState,
    cumulative: OutputSignals,
    antigen_store: Vec<AntigenEvent>,
    antigen_capacity: usize,
    migration_threshold: f64,
    birth_tick: u64,
}

impl DendriticCell {
    pub fn new(migration_threshold: f64, birth_tick: u64, antigen_capacity: usize) -> Self {
        Self {
            state: CellState::Immature,
            cumulative: OutputSignals::default(),
            antigen_store: Vec::with_capacity(antigen_capacity),
            antigen_capacity,
            migration_threshold,
            birth_tick,
        }
    }

    pub fn state(&self) -> CellState {
        self.state
    }

    pub fn cumulative(&self) -> OutputSignals {
        self.cumulative
    }

    pub fn antigen(&self) -> &[AntigenEvent] {
        &self.antigen_store
    }

    pub fn migration_threshold(&self) -> f64 {
        self.migration_threshold
    }

    pub fn birth_tick(&self) -> u64 {
        self.birth_tick
    }

    pub fn free_capacity(&self) -> usize {
        self.antigen_capacity - self.antigen_store.len()
    }

    /// Stores `event` unless the cell is already full.
    pub fn store_antigen(&mut self, event: AntigenEvent) -> bool {
        if self.free_capacity() == 0 {
            return false;
        }
        self.antigen_store.push(event);
        true
    }

    pub fn accumulate(&mut self, interim: OutputSignals) {
        self.cumulative += interim;
    }

    pub fn should_migrate(&self) -> bool {
        self.cumulative.csm >= self.migration_threshold
    }

    /// Moves the cell into its terminal state and hands back its antigen with
    /// the assessed context.
    pub fn migrate(&mut self) -> (Context, Vec<AntigenEvent>) {
        let context = assign_context(&self.cumulative);
        self.state = match context {
            Context::Normal => CellState::SemiMature,
            Context::Anomalous => CellState::Mature,
        };
        (context, std::mem::take(&mut self.antigen_store))
    }
}
