//! Drives an [`Engine`] from recorded signal and antigen streams.

use crate::analysis::McavReport;
use crate::engine::{Engine, EngineConfig, StepSummary};
use crate::error::{invalid_config, Result};
use crate::ingestion::{group_by_tick, map_to_snapshot, RawMetricRecord, SignalMapping};
use crate::model::AntigenEvent;

/// Outcome of a replay: the final report and one summary per executed tick.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub report: McavReport,
    pub steps: Vec<StepSummary>,
}

/// Checks that the mapping's clamp agrees with the engine's maxima.
pub fn check_mapping(config: &EngineConfig, mapping: &SignalMapping) -> Result<()> {
    mapping.validate()?;
    if mapping.maxima != config.signal_maxima {
        return Err(invalid_config(
            "mapping.maxima",
            "must equal engine signal_maxima",
        ));
    }
    Ok(())
}

/// Feeds one input tick: moves the clock, deposits the mapped snapshot (if
/// any metric arrived), deposits antigen, and steps once.
pub fn feed_tick(
    engine: &mut Engine,
    mapping: &SignalMapping,
    tick: u64,
    metrics: &[RawMetricRecord],
    antigen: &[AntigenEvent],
) -> Result<StepSummary> {
    engine.advance_clock(tick)?;
    if !metrics.is_empty() {
        engine.deposit_signals(map_to_snapshot(tick, metrics, mapping)?)?;
    }
    for a in antigen {
        engine.deposit_antigen(a.clone());
    }
    Ok(engine.step())
}

/// Replays both streams, stepping once per distinct input tick.
///
/// `observe` runs after every step with the engine in its post-step state.
pub fn replay<F>(
    config: &EngineConfig,
    mapping: &SignalMapping,
    signals: &[RawMetricRecord],
    antigen: &[AntigenEvent],
    mut observe: F,
) -> Result<ReplayOutcome>
where
    F: FnMut(&Engine, &StepSummary),
{
    check_mapping(config, mapping)?;
    let mut engine = Engine::new(config.clone())?;
    let signal_groups = group_by_tick(signals);
    let antigen_groups: Vec<(u64, &[AntigenEvent])> = antigen
        .chunk_by(|a, b| a.arrival_tick == b.arrival_tick)
        .map(|c| (c[0].arrival_tick, c))
        .collect();

    let mut steps = Vec::new();
    let (mut si, mut ai) = (0, 0);
    while si < signal_groups.len() || ai < antigen_groups.len() {
        let next_s = signal_groups.get(si).map(|g| g.0);
        let next_a = antigen_groups.get(ai).map(|g| g.0);
        let tick = match (next_s, next_a) {
            (Some(s), Some(a)) => s.min(a),
            (Some(s), None) => s,
            (None, Some(a)) => a,
            (None, None) => unreachable!(),
        };
        let metrics = if next_s == Some(tick) {
            si += 1;
            signal_groups[si - 1].1
        } else {
            &[]
        };
        let arrivals = if next_a == Some(tick) {
            ai += 1;
            antigen_groups[ai - 1].1
        } else {
            &[]
        };
        let summary = feed_tick(&mut engine, mapping, tick, metrics, arrivals)?;
        observe(&engine, &summary);
        steps.push(summary);
    }
    Ok(ReplayOutcome {
        report: engine.report(),
        steps,
    })
}
