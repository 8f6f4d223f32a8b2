//! Seeded synthetic traces with known ground truth.
//!
//! Attack phases carry high error and packet rates with small packets;
//! normal phases the reverse. Each antigen type is emitted only while one
//! of its phases is active, and is anomalous in the ground truth iff every
//! one of those phases is an attack phase.

mod oracle;

pub use oracle::oracle_run;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::Label;
use crate::error::{DcaError, Result};
use crate::ingestion::{Category, RawMetricRecord, SignalMapping, Transform};
use crate::model::{AntigenEvent, AntigenType, SignalMaxima};

pub const ERROR_RATE: &str = "error_rate";
pub const PACKET_RATE: &str = "packet_rate";
pub const PACKET_SIZE: &str = "packet_size";

/// Expected packet size under normal load, in bytes.
pub const PACKET_SIZE_PIVOT: f64 = 64.0;
/// Safe-signal units per byte above the pivot.
pub const PACKET_SIZE_SCALE: f64 = 0.1;

/// RNG stream id for generation, so an engine and a scenario can share one seed.
const SCENARIO_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalProfile {
    Normal,
    Attack,
    Mixed,
}

/// Half-open tick range `[start_tick, end_tick)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub start_tick: u64,
    pub end_tick: u64,
    pub profile: SignalProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntigenSchedule {
    pub antigen_type: String,
    pub active_phases: Vec<usize>,
    /// Mean events per tick. The fractional part is a per-tick Bernoulli draw.
    pub emission_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub duration_ticks: u64,
    pub phases: Vec<Phase>,
    pub antigen_schedule: Vec<AntigenSchedule>,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub signal_maxima: SignalMaxima,
}

/// Generated streams plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub signals: Vec<RawMetricRecord>,
    pub antigen: Vec<AntigenEvent>,
    pub truth: BTreeMap<AntigenType, Label>,
    pub mapping: SignalMapping,
}

impl Scenario {
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("antigen_type,label\n");
        for (t, l) in &self.truth {
            let _ = writeln!(out, "{t},{}", l.as_str());
        }
        out
    }
}

/// Mapping that inverts the generator's metric encoding.
pub fn default_mapping(maxima: SignalMaxima) -> SignalMapping {
    SignalMapping::new(maxima)
        .with(
            ERROR_RATE,
            Category::Pamp,
            Transform::Linear {
                scale: 1.0,
                clamp_max: maxima.pamp,
            },
        )
        .with(
            PACKET_RATE,
            Category::Danger,
            Transform::Linear {
                scale: 1.0,
                clamp_max: maxima.danger,
            },
        )
        .with(
            PACKET_SIZE,
            Category::Safe,
            Transform::InverseLinear {
                pivot: PACKET_SIZE_PIVOT,
                scale: PACKET_SIZE_SCALE,
                clamp_max: maxima.safe,
            },
        )
}

impl ScenarioSpec {
    /// One phase spanning the whole run, with every type active in it.
    pub fn single_phase(profile: SignalProfile, duration: u64, types: &[&str], rate: f64) -> Self {
        Self {
            duration_ticks: duration,
            phases: vec![Phase {
                start_tick: 0,
                end_tick: duration,
                profile,
            }],
            antigen_schedule: types
                .iter()
                .map(|t| AntigenSchedule {
                    antigen_type: t.to_string(),
                    active_phases: vec![0],
                    emission_rate: rate,
                })
                .collect(),
            noise_amplitude: 0.0,
            seed: 0,
            signal_maxima: SignalMaxima::default(),
        }
    }

    /// Attack phase then normal phase of `phase_len` ticks each, with type
    /// `attack_type` active in the first and `normal_type` in the second.
    pub fn split(phase_len: u64, attack_type: &str, normal_type: &str, rate: f64) -> Self {
        Self {
            duration_ticks: 2 * phase_len,
            phases: vec![
                Phase {
                    start_tick: 0,
                    end_tick: phase_len,
                    profile: SignalProfile::Attack,
                },
                Phase {
                    start_tick: phase_len,
                    end_tick: 2 * phase_len,
                    profile: SignalProfile::Normal,
                },
            ],
            antigen_schedule: vec![
                AntigenSchedule {
                    antigen_type: attack_type.to_string(),
                    active_phases: vec![0],
                    emission_rate: rate,
                },
                AntigenSchedule {
                    antigen_type: normal_type.to_string(),
                    active_phases: vec![1],
                    emission_rate: rate,
                },
            ],
            noise_amplitude: 0.0,
            seed: 0,
            signal_maxima: SignalMaxima::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DcaError::InvalidScenario(m));
        if self.duration_ticks == 0 {
            return bad("duration_ticks must be positive".into());
        }
        if self.phases.is_empty() {
            return bad("at least one phase is required".into());
        }
        let mut expected_start = 0;
        for (i, p) in self.phases.iter().enumerate() {
            if p.start_tick != expected_start {
                return bad(format!(
                    "phase {i} starts at {} but must start at {expected_start}",
                    p.start_tick
                ));
            }
            if p.end_tick <= p.start_tick {
                return bad(format!("phase {i} is empty"));
            }
            expected_start = p.end_tick;
        }
        if expected_start != self.duration_ticks {
            return bad(format!(
                "phases end at {expected_start} but duration_ticks is {}",
                self.duration_ticks
            ));
        }
        for s in &self.antigen_schedule {
            if s.antigen_type.is_empty() || s.antigen_type.contains(',') {
                return bad(format!("bad antigen type `{}`", s.antigen_type));
            }
            if !s.emission_rate.is_finite() || s.emission_rate <= 0.0 {
                return bad(format!("emission_rate of `{}` must be > 0", s.antigen_type));
            }
            if s.active_phases.is_empty() {
                return bad(format!("`{}` has no active phases", s.antigen_type));
            }
            if let Some(&i) = s.active_phases.iter().find(|&&i| i >= self.phases.len()) {
                return bad(format!("`{}` refers to missing phase {i}", s.antigen_type));
            }
        }
        if !self.noise_amplitude.is_finite() || self.noise_amplitude < 0.0 {
            return bad("noise_amplitude must be finite and >= 0".into());
        }
        let m = self.signal_maxima;
        if [m.pamp, m.danger, m.safe]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return bad("signal_maxima must be finite and >= 0".into());
        }
        Ok(())
    }

    fn phase_at(&self, tick: u64) -> usize {
        self.phases
            .iter()
            .position(|p| tick < p.end_tick)
            .expect("validated phases cover the run")
    }

    pub fn ground_truth(&self) -> BTreeMap<AntigenType, Label> {
        let mut truth = BTreeMap::new();
        for s in &self.antigen_schedule {
            let attack = s
                .active_phases
                .iter()
                .all(|&i| self.phases[i].profile == SignalProfile::Attack);
            let label = if attack {
                Label::Anomalous
            } else {
                Label::Normal
            };
            let key = AntigenType::new(s.antigen_type.clone()).expect("validated");
            // A type listed twice is anomalous only if both entries say so.
            truth
                .entry(key)
                .and_modify(|l| {
                    if label == Label::Normal {
                        *l = Label::Normal
                    }
                })
                .or_insert(label);
        }
        truth
    }
}

fn noisy(level: f64, max: f64, amplitude: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen();
    (level + amplitude * (2.0 * u - 1.0)).clamp(0.0, max)
}

/// Generates the scenario's streams. Deterministic in `spec`.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SCENARIO_STREAM);
    let m = spec.signal_maxima;
    let mut signals = Vec::with_capacity(3 * spec.duration_ticks as usize);
    let mut antigen = Vec::new();
    let types: Vec<AntigenType> = spec
        .antigen_schedule
        .iter()
        .map(|s| AntigenType::new(s.antigen_type.clone()))
        .collect::<Result<_>>()?;

    for tick in 0..spec.duration_ticks {
        let phase = spec.phase_at(tick);
        let (p, d, s) = match spec.phases[phase].profile {
            SignalProfile::Attack => (m.pamp, m.danger, 0.0),
            SignalProfile::Normal => (0.0, 0.0, m.safe),
            SignalProfile::Mixed => (m.pamp / 2.0, m.danger / 2.0, m.safe / 2.0),
        };
        let a = spec.noise_amplitude;
        let (p, d, s) = if a > 0.0 {
            (
                noisy(p, m.pamp, a, &mut rng),
                noisy(d, m.danger, a, &mut rng),
                noisy(s, m.safe, a, &mut rng),
            )
        } else {
            (p, d, s)
        };
        for (name, value) in [
            (ERROR_RATE, p),
            (PACKET_RATE, d),
            (PACKET_SIZE, PACKET_SIZE_PIVOT + s / PACKET_SIZE_SCALE),
        ] {
            signals.push(RawMetricRecord {
                tick,
                metric_name: name.to_string(),
                value,
            });
        }

        for (sched, ty) in spec.antigen_schedule.iter().zip(&types) {
            if !sched.active_phases.contains(&phase) {
                continue;
            }
            let whole = sched.emission_rate.floor();
            let frac = sched.emission_rate - whole;
            let mut n = whole as u64;
            if frac > 0.0 && rng.gen::<f64>() < frac {
                n += 1;
            }
            for _ in 0..n {
                antigen.push(AntigenEvent {
                    antigen_type: ty.clone(),
                    arrival_tick: tick,
                });
            }
        }
    }

    Ok(Scenario {
        signals,
        antigen,
        truth: spec.ground_truth(),
        mapping: default_mapping(m),
    })
}
