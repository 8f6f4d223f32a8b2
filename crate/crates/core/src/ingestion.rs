//! Signal and antigen stream parsing, and aggregation of raw metrics into
//! the four signal categories.
//!
//! Signal lines are `tick,metric_name,value`; antigen lines are
//! `tick,antigen_type`. Blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, DcaError, Result};
use crate::model::{AntigenEvent, AntigenType, SignalMaxima, SignalSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMetricRecord {
    pub tick: u64,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Pamp,
    Danger,
    Safe,
    Inflammation,
}

/// Raw value to category contribution. Both forms clamp to `[0, clamp_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// `scale * x`
    Linear { scale: f64, clamp_max: f64 },
    /// `scale * (x - pivot)`; `pivot` is the expected baseline level.
    InverseLinear {
        pivot: f64,
        scale: f64,
        clamp_max: f64,
    },
}

impl Transform {
    pub fn apply(&self, x: f64) -> f64 {
        let (raw, max) = match *self {
            Transform::Linear { scale, clamp_max } => (scale * x, clamp_max),
            Transform::InverseLinear {
                pivot,
                scale,
                clamp_max,
            } => (scale * (x - pivot), clamp_max),
        };
        raw.clamp(0.0, max)
    }

    fn validate(&self, metric: &str) -> Result<()> {
        let (scale, max, pivot) = match *self {
            Transform::Linear { scale, clamp_max } => (scale, clamp_max, 0.0),
            Transform::InverseLinear {
                pivot,
                scale,
                clamp_max,
            } => (scale, clamp_max, pivot),
        };
        let field = |leaf: &str| format!("mapping.{metric}.{leaf}");
        if !scale.is_finite() || scale < 0.0 {
            return Err(invalid_config(field("scale"), "must be finite and >= 0"));
        }
        if !max.is_finite() || max < 0.0 {
            return Err(invalid_config(
                field("clamp_max"),
                "must be finite and >= 0",
            ));
        }
        if !pivot.is_finite() {
            return Err(invalid_config(field("pivot"), "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricMapping {
    pub category: Category,
    pub transform: Transform,
}

/// Metric-to-category routing plus the per-category clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalMapping {
    pub metrics: BTreeMap<String, MetricMapping>,
    pub maxima: SignalMaxima,
}

impl SignalMapping {
    pub fn new(maxima: SignalMaxima) -> Self {
        Self {
            metrics: BTreeMap::new(),
            maxima,
        }
    }

    pub fn with(
        mut self,
        metric: impl Into<String>,
        category: Category,
        transform: Transform,
    ) -> Self {
        self.metrics.insert(
            metric.into(),
            MetricMapping {
                category,
                transform,
            },
        );
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in &self.metrics {
            m.transform.validate(name)?;
        }
        Ok(())
    }
}

fn parse_tick(field: &str, line: usize) -> Result<u64> {
    field.trim().parse().map_err(|_| DcaError::Parse {
        line,
        reason: format!(
            "field `tick`: expected a non-negative integer, got `{}`",
            field.trim()
        ),
    })
}

/// Parses a single signal line. `line` is 1-based and used for errors.
pub fn parse_signal_line(text: &str, line: usize) -> Result<RawMetricRecord> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 3 {
        return Err(DcaError::Parse {
            line,
            reason: format!(
                "expected `tick,metric_name,value`, got {} fields",
                fields.len()
            ),
        });
    }
    let tick = parse_tick(fields[0], line)?;
    let metric_name = fields[1].trim();
    if metric_name.is_empty() {
        return Err(DcaError::Parse {
            line,
            reason: "field `metric_name` is empty".to_string(),
        });
    }
    let value: f64 = fields[2]
        .trim()
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| DcaError::Parse {
            line,
            reason: format!(
                "field `value`: expected a finite real, got `{}`",
                fields[2].trim()
            ),
        })?;
    Ok(RawMetricRecord {
        tick,
        metric_name: metric_name.to_string(),
        value,
    })
}

pub fn parse_antigen_line(text: &str, line: usize) -> Result<AntigenEvent> {
    let fields: Vec<&str> = text.split(',').collect();
    if fields.len() != 2 {
        return Err(DcaError::Parse {
            line,
            reason: format!("expected `tick,antigen_type`, got {} fields", fields.len()),
        });
    }
    let tick = parse_tick(fields[0], line)?;
    let antigen_type = AntigenType::new(fields[1].trim()).map_err(|_| DcaError::Parse {
        line,
        reason: "field `antigen_type` is empty".to_string(),
    })?;
    Ok(AntigenEvent {
        antigen_type,
        arrival_tick: tick,
    })
}

/// A line of a combined stream, told apart by field count.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Signal(RawMetricRecord),
    Antigen(AntigenEvent),
}

impl StreamItem {
    pub fn tick(&self) -> u64 {
        match self {
            StreamItem::Signal(r) => r.tick,
            StreamItem::Antigen(a) => a.arrival_tick,
        }
    }
}

pub fn parse_stream_line(text: &str, line: usize) -> Result<StreamItem> {
    match text.matches(',').count() {
        2 => parse_signal_line(text, line).map(StreamItem::Signal),
        1 => parse_antigen_line(text, line).map(StreamItem::Antigen),
        n => Err(DcaError::Parse {
            line,
            reason: format!("expected a signal or antigen line, got {} fields", n + 1),
        }),
    }
}

fn parse_lines<R, T, F>(source: R, mut parse: F, tick_of: fn(&T) -> u64) -> Result<Vec<T>>
where
    R: BufRead,
    F: FnMut(&str, usize) -> Result<T>,
{
    let mut out = Vec::new();
    let mut previous = 0u64;
    for (i, text) in source.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(|e| DcaError::Parse {
            line,
            reason: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let item = parse(&text, line)?;
        let tick = tick_of(&item);
        if tick < previous {
            return Err(DcaError::NonMonotoneTick {
                line,
                tick,
                previous,
            });
        }
        previous = tick;
        out.push(item);
    }
    Ok(out)
}

/// Whole signal stream in order. Ticks must be non-decreasing.
pub fn parse_signal_stream<R: BufRead>(source: R) -> Result<Vec<RawMetricRecord>> {
    parse_lines(source, parse_signal_line, |r| r.tick)
}

/// Whole antigen stream in order. Ticks must be non-decreasing.
pub fn parse_antigen_stream<R: BufRead>(source: R) -> Result<Vec<AntigenEvent>> {
    parse_lines(source, parse_antigen_line, |a| a.arrival_tick)
}

pub fn write_signal_stream(records: &[RawMetricRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.tick, r.metric_name, r.value);
    }
    out
}

pub fn write_antigen_stream(events: &[AntigenEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 12);
    for a in events {
        let _ = writeln!(out, "{},{}", a.arrival_tick, a.antigen_type);
    }
    out
}

/// Aggregates one tick's records into a snapshot: transform, sum per
/// category, clamp to the category maximum. Missing categories are zero.
pub fn map_to_snapshot(
    tick: u64,
    records: &[RawMetricRecord],
    mapping: &SignalMapping,
) -> Result<SignalSnapshot> {
    let mut sums = [0.0f64; 4];
    for r in records {
        if r.tick != tick {
            return Err(DcaError::InvalidParameter {
                name: "records",
                reason: format!("record for tick {} in batch for tick {tick}", r.tick),
            });
        }
        let m = mapping
            .metrics
            .get(&r.metric_name)
            .ok_or_else(|| DcaError::UnmappedMetric(r.metric_name.clone()))?;
        let slot = match m.category {
            Category::Pamp => 0,
            Category::Danger => 1,
            Category::Safe => 2,
            Category::Inflammation => 3,
        };
        sums[slot] += m.transform.apply(r.value);
    }
    let max = mapping.maxima;
    Ok(SignalSnapshot {
        pamp: sums[0].min(max.pamp),
        danger: sums[1].min(max.danger),
        safe: sums[2].min(max.safe),
        inflammation: sums[3],
        tick,
    })
}

/// Splits an ordered record stream into per-tick batches.
pub fn group_by_tick(records: &[RawMetricRecord]) -> Vec<(u64, &[RawMetricRecord])> {
    records
        .chunk_by(|a, b| a.tick == b.tick)
        .map(|chunk| (chunk[0].tick, chunk))
        .collect()
}
