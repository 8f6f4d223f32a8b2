//! Run configuration: TOML file plus command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use dca_core::analysis::{check_threshold, DEFAULT_ANOMALY_THRESHOLD};
use dca_core::ingestion::{MetricMapping, SignalMapping};
use dca_core::scenarios::{default_mapping, ScenarioSpec};
use dca_core::EngineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_threshold() -> f64 {
    DEFAULT_ANOMALY_THRESHOLD
}

fn default_tick_interval_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antigen: Option<PathBuf>,
    /// Read interleaved signal and antigen lines from standard input.
    #[serde(default)]
    pub stream: bool,
    /// Path to a scenario spec file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Per-tick diagnostics CSV. Defaults to `<report stem>.ticks.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_tick_interval_ms")]
    pub tick_interval_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            tick_interval_ms: default_tick_interval_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_threshold")]
    pub anomaly_threshold: f64,
    #[serde(default)]
    pub engine: EngineConfig,
    /// Metric routing. Empty means the built-in scenario mapping.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mapping: BTreeMap<String, MetricMapping>,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub live: LiveConfig,
    /// Inline scenario; counts as an input source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    /// Seed from the command line; replaces the seed of a scenario file.
    #[serde(skip)]
    pub seed_override: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            anomaly_threshold: default_threshold(),
            engine: EngineConfig::default(),
            mapping: BTreeMap::new(),
            input: InputConfig::default(),
            output: OutputConfig::default(),
            live: LiveConfig::default(),
            scenario: None,
            seed_override: None,
        }
    }
}

/// Which inputs a run reads from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Files {
        signals: PathBuf,
        antigen: Option<PathBuf>,
    },
    Stream,
    Scenario(ScenarioSpec),
}

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub signals: Option<PathBuf>,
    pub antigen: Option<PathBuf>,
    pub stream: bool,
    pub scenario: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threshold: Option<f64>,
    pub live: bool,
    pub diagnostics: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("malformed config")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.signals.is_some() {
            self.input.signals.clone_from(&o.signals);
        }
        if o.antigen.is_some() {
            self.input.antigen.clone_from(&o.antigen);
        }
        self.input.stream |= o.stream;
        if o.scenario.is_some() {
            self.input.scenario.clone_from(&o.scenario);
        }
        if let Some(seed) = o.seed {
            self.seed_override = Some(seed);
            self.engine.rng_seed = seed;
            if let Some(s) = self.scenario.as_mut() {
                s.seed = seed;
            }
        }
        if o.out.is_some() {
            self.output.path.clone_from(&o.out);
        }
        if o.format.is_some() {
            self.output.format = o.format;
        }
        if let Some(t) = o.threshold {
            self.anomaly_threshold = t;
        }
        self.live.enabled |= o.live;
        if o.diagnostics.is_some() {
            self.output.diagnostics.clone_from(&o.diagnostics);
        }
    }

    /// Resolves the single input source.
    pub fn source(&self) -> Result<Source> {
        let mut chosen = Vec::new();
        if self.input.signals.is_some() || self.input.antigen.is_some() {
            chosen.push("signal/antigen files");
        }
        if self.input.stream {
            chosen.push("stdin stream");
        }
        if self.input.scenario.is_some() {
            chosen.push("scenario file");
        }
        if self.scenario.is_some() {
            chosen.push("inline scenario");
        }
        match chosen.len() {
            0 => bail!(
                "config error: no input source selected (use --signals, --stream or --scenario)"
            ),
            1 => {}
            _ => bail!(
                "config error: more than one input source selected: {}",
                chosen.join(", ")
            ),
        }
        if self.input.stream {
            return Ok(Source::Stream);
        }
        if let Some(path) = &self.input.scenario {
            let mut spec = load_scenario(path)?;
            if let Some(seed) = self.seed_override {
                spec.seed = seed;
            }
            return Ok(Source::Scenario(spec));
        }
        if let Some(spec) = &self.scenario {
            return Ok(Source::Scenario(spec.clone()));
        }
        match &self.input.signals {
            Some(signals) => Ok(Source::Files {
                signals: signals.clone(),
                antigen: self.input.antigen.clone(),
            }),
            None => bail!("config error: --antigen given without --signals"),
        }
    }

    pub fn mapping(&self) -> SignalMapping {
        let maxima = self.engine.signal_maxima;
        if self.mapping.is_empty() {
            return default_mapping(maxima);
        }
        SignalMapping {
            metrics: self.mapping.clone(),
            maxima,
        }
    }

    pub fn format(&self) -> Format {
        if let Some(f) = self.output.format {
            return f;
        }
        match self.output.path.as_ref().and_then(|p| p.extension()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        }
    }

    pub fn diagnostics_path(&self) -> Option<PathBuf> {
        if let Some(p) = &self.output.diagnostics {
            return Some(p.clone());
        }
        let out = self.output.path.as_ref()?;
        let stem = out.file_stem()?.to_string_lossy();
        Some(out.with_file_name(format!("{stem}.ticks.csv")))
    }

    pub fn validate(&self) -> Result<()> {
        check_threshold(self.anomaly_threshold).context("config error")?;
        self.engine.validate().context("config error")?;
        self.mapping().validate().context("config error")?;
        if self.live.enabled && self.live.tick_interval_ms == 0 {
            bail!("config error: live.tick_interval_ms must be positive");
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading scenario {}", path.display()))?;
    let spec: ScenarioSpec =
        toml::from_str(&text).with_context(|| format!("malformed scenario {}", path.display()))?;
    Ok(spec)
}
