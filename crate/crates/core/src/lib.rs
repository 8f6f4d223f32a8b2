//! Dendritic Cell Algorithm engine.
//!
//! A population of artificial dendritic cells fuses four categories of input
//! signal (PAMP, danger, safe, inflammation) while collecting antigen from a
//! shared tissue pool. Each cell migrates once its costimulatory output
//! crosses a per-cell threshold and labels its antigen with a binary context.
//! Aggregating those labels per antigen type yields the MCAV anomaly
//! coefficient.
//!
//! Layering: [`model`] holds the per-cell maths, [`engine`] the population
//! loop, [`analysis`] the MCAV aggregation, [`ingestion`] the stream formats,
//! [`replay`] the stream-driven run loop and [`scenarios`] synthetic traces
//! plus an independent reference oracle.

pub mod analysis;
pub mod engine;
pub mod error;
pub mod ingestion;
pub mod model;
pub mod replay;
pub mod scenarios;

pub use analysis::{
    classify, compute_mcav, Label, McavEntry, McavReport, ReportDocument, RunMetadata,
};
pub use engine::{AntigenLedger, Engine, EngineConfig, LymphLog, StepSummary};
pub use error::{DcaError, Result};
pub use ingestion::{RawMetricRecord, SignalMapping};
pub use model::{
    AntigenEvent, AntigenType, Context, DendriticCell, OutputSignals, PresentationRecord,
    SignalMaxima, SignalSnapshot, WeightMatrix,
};
pub use replay::{replay, ReplayOutcome};
pub use scenarios::{generate, oracle_run, Scenario, ScenarioSpec};
