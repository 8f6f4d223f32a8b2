//! Subcommand implementations, kept out of `main` so tests can drive them.

use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, Context as _};
use dca_core::analysis::ReportDocument;
use dca_core::ingestion::{
    parse_antigen_stream, parse_signal_stream, parse_stream_line, write_antigen_stream,
    write_signal_stream, RawMetricRecord, SignalMapping, StreamItem,
};
use dca_core::replay::{check_mapping, feed_tick, replay};
use dca_core::scenarios::{generate, oracle_run};
use dca_core::{AntigenEvent, DcaError, Engine, McavReport, StepSummary};

use crate::config::{load_scenario, Format, RunConfig, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Config,
    Input,
    Output,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: FailureKind::Config,
            error: error.into(),
        }
    }

    pub fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: FailureKind::Input,
            error: error.into(),
        }
    }

    pub fn output(error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind: FailureKind::Output,
            error: error.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => 2,
            FailureKind::Input => 3,
            FailureKind::Output => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult<T> = Result<T, Failure>;

/// Engine errors split into config and input failures.
fn classify_core(e: DcaError) -> Failure {
    match e {
        DcaError::InvalidConfig { .. }
        | DcaError::InvalidParameter { .. }
        | DcaError::UnmappedMetric(_)
        | DcaError::InvalidScenario(_) => Failure::config(e),
        _ => Failure::input(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Runner {
    Engine,
    Oracle,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: McavReport,
    /// Per-tick diagnostics; empty for the oracle.
    pub steps: Vec<StepSummary>,
}

fn open(path: &Path) -> CmdResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(Failure::input)
}

fn load_files(
    signals: &Path,
    antigen: Option<&Path>,
) -> CmdResult<(Vec<RawMetricRecord>, Vec<AntigenEvent>)> {
    let s = parse_signal_stream(open(signals)?)
        .with_context(|| format!("in signal stream {}", signals.display()))
        .map_err(Failure::input)?;
    let a = match antigen {
        Some(path) => parse_antigen_stream(open(path)?)
            .with_context(|| format!("in antigen stream {}", path.display()))
            .map_err(Failure::input)?,
        None => Vec::new(),
    };
    Ok((s, a))
}

/// Reads a whole interleaved stream into separate signal and antigen lists.
fn buffer_stream<R: BufRead>(input: R) -> CmdResult<(Vec<RawMetricRecord>, Vec<AntigenEvent>)> {
    let mut signals = Vec::new();
    let mut antigen = Vec::new();
    let mut previous = 0;
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let text = line.context("reading stdin").map_err(Failure::input)?;
        if text.trim().is_empty() {
            continue;
        }
        let item = parse_stream_line(&text, line_no)
            .context("in stdin stream")
            .map_err(Failure::input)?;
        check_order(item.tick(), previous, line_no)?;
        previous = item.tick();
        match item {
            StreamItem::Signal(r) => signals.push(r),
            StreamItem::Antigen(a) => antigen.push(a),
        }
    }
    Ok((signals, antigen))
}

fn check_order(tick: u64, previous: u64, line: usize) -> CmdResult<()> {
    if tick < previous {
        let e = DcaError::NonMonotoneTick {
            line,
            tick,
            previous,
        };
        return Err(Failure::input(anyhow!(e).context("in stdin stream")));
    }
    Ok(())
}

/// Drives the engine from an interleaved stream as lines arrive.
///
/// A reader thread parses lines and hands them over in order; a tick is fed
/// to the engine once a line for a later tick (or end of input) is seen.
fn run_stream<R, F>(
    cfg: &RunConfig,
    mapping: &SignalMapping,
    input: R,
    mut after_tick: F,
) -> CmdResult<RunOutcome>
where
    R: BufRead + Send + 'static,
    F: FnMut(&Engine, &StepSummary),
{
    check_mapping(&cfg.engine, mapping).map_err(classify_core)?;
    let mut engine = Engine::new(cfg.engine.clone()).map_err(classify_core)?;
    let (tx, rx) = mpsc::sync_channel::<CmdResult<(usize, StreamItem)>>(1024);
    let reader = thread::spawn(move || {
        for (i, line) in input.lines().enumerate() {
            let line_no = i + 1;
            let item = match line {
                Ok(text) if text.trim().is_empty() => continue,
                Ok(text) => parse_stream_line(&text, line_no)
                    .map(|it| (line_no, it))
                    .context("in stdin stream")
                    .map_err(Failure::input),
                Err(e) => Err(Failure::input(anyhow!(e).context("reading stdin"))),
            };
            let stop = item.is_err();
            if tx.send(item).is_err() || stop {
                break;
            }
        }
    });

    let mut steps = Vec::new();
    let mut pending_tick: Option<u64> = None;
    let mut metrics = Vec::new();
    let mut arrivals = Vec::new();
    let mut flush = |engine: &mut Engine,
                     tick: u64,
                     metrics: &mut Vec<RawMetricRecord>,
                     arrivals: &mut Vec<AntigenEvent>|
     -> CmdResult<()> {
        let s = feed_tick(engine, mapping, tick, metrics, arrivals).map_err(classify_core)?;
        metrics.clear();
        arrivals.clear();
        after_tick(engine, &s);
        steps.push(s);
        Ok(())
    };

    let mut result = Ok(());
    for received in rx {
        let (line_no, item) = match received {
            Ok(v) => v,
            Err(e) => {
                result = Err(e);
                break;
            }
        };
        let tick = item.tick();
        match pending_tick {
            Some(p) if tick < p => {
                result = check_order(tick, p, line_no);
                break;
            }
            Some(p) if tick > p => {
                if let Err(e) = flush(&mut engine, p, &mut metrics, &mut arrivals) {
                    result = Err(e);
                    break;
                }
            }
            _ => {}
        }
        pending_tick = Some(tick);
        match item {
            StreamItem::Signal(r) => metrics.push(r),
            StreamItem::Antigen(a) => arrivals.push(a),
        }
    }
    if result.is_ok() {
        if let Some(p) = pending_tick {
            result = flush(&mut engine, p, &mut metrics, &mut arrivals);
        }
    }
    let _ = reader.join();
    result?;
    Ok(RunOutcome {
        report: engine.report(),
        steps,
    })
}

/// Runs the engine (or the oracle) on the configured source. Nothing is
/// written; see [`write_outputs`].
pub fn execute<R>(cfg: &RunConfig, runner: Runner, stdin: R) -> CmdResult<RunOutcome>
where
    R: BufRead + Send + 'static,
{
    cfg.validate().map_err(Failure::config)?;
    let source = cfg.source().map_err(Failure::config)?;
    let mapping = cfg.mapping();
    let pause = cfg
        .live
        .enabled
        .then(|| Duration::from_millis(cfg.live.tick_interval_ms));
    let pace = |_: &Engine, _: &StepSummary| {
        if let Some(d) = pause {
            thread::sleep(d);
        }
    };

    let (signals, antigen) = match (source, runner) {
        (Source::Stream, Runner::Engine) => return run_stream(cfg, &mapping, stdin, pace),
        (Source::Stream, Runner::Oracle) => buffer_stream(stdin)?,
        (Source::Files { signals, antigen }, _) => load_files(&signals, antigen.as_deref())?,
        (Source::Scenario(spec), _) => {
            let sc = generate(&spec).map_err(classify_core)?;
            (sc.signals, sc.antigen)
        }
    };
    match runner {
        Runner::Engine => {
            let out =
                replay(&cfg.engine, &mapping, &signals, &antigen, pace).map_err(classify_core)?;
            Ok(RunOutcome {
                report: out.report,
                steps: out.steps,
            })
        }
        Runner::Oracle => {
            let report =
                oracle_run(&cfg.engine, &mapping, &signals, &antigen).map_err(classify_core)?;
            Ok(RunOutcome {
                report,
                steps: Vec::new(),
            })
        }
    }
}

pub fn render_report(doc: &ReportDocument, format: Format) -> String {
    match format {
        Format::Json => doc.to_json(),
        Format::Csv => doc.to_csv(),
    }
}

pub const DIAGNOSTICS_HEADER: &str =
    "tick,mean_csm,mean_semi,mean_mature,migrations,empty_migrations,presented,pool_len";

pub fn render_diagnostics(steps: &[StepSummary]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for s in steps {
        let m = s.mean_cumulative;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.tick,
            m.csm,
            m.semi,
            m.mature,
            s.migrations,
            s.empty_migrations,
            s.presented,
            s.pool_len
        );
    }
    out
}

fn summary_text(doc: &ReportDocument) -> String {
    let m = &doc.metadata;
    let presented: u64 = doc.antigens.iter().map(|r| r.antigen_count).sum();
    format!(
        "{}ticks={} seed={} presented={} empty_migrations={} overflow={}\n",
        doc.render_table(),
        m.ticks,
        m.seed,
        presented,
        m.empty_migrations,
        m.overflow
    )
}

/// Files written by a run.
#[derive(Debug, Clone, Default)]
pub struct Written {
    pub report: Option<PathBuf>,
    pub diagnostics: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> CmdResult<()> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::output)
}

/// Writes the report and diagnostics. Without an output path the report
/// goes to stdout and the summary to stderr.
pub fn write_outputs(
    cfg: &RunConfig,
    outcome: &RunOutcome,
    with_diagnostics: bool,
) -> CmdResult<Written> {
    let doc =
        ReportDocument::new(&outcome.report, cfg.anomaly_threshold).map_err(Failure::config)?;
    let body = render_report(&doc, cfg.format());
    let mut written = Written::default();
    match &cfg.output.path {
        Some(path) => {
            write_file(path, &body)?;
            written.report = Some(path.clone());
            print!("{}", summary_text(&doc));
        }
        None => {
            print!("{body}");
            eprint!("{}", summary_text(&doc));
        }
    }
    if with_diagnostics {
        if let Some(path) = cfg.diagnostics_path() {
            write_file(&path, &render_diagnostics(&outcome.steps))?;
            written.diagnostics = Some(path);
        }
    }
    Ok(written)
}

pub fn run<R>(cfg: &RunConfig, runner: Runner, stdin: R) -> CmdResult<Written>
where
    R: BufRead + Send + 'static,
{
    let outcome = execute(cfg, runner, stdin)?;
    write_outputs(cfg, &outcome, runner == Runner::Engine)
}

/// Writes `signals.csv`, `antigen.csv` and `truth.csv` into `dir`.
pub fn generate_to(scenario: &Path, seed: Option<u64>, dir: &Path) -> CmdResult<[PathBuf; 3]> {
    let mut spec = load_scenario(scenario).map_err(Failure::config)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let sc = generate(&spec).map_err(classify_core)?;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create {}", dir.display()))
        .map_err(Failure::output)?;
    let paths = [
        dir.join("signals.csv"),
        dir.join("antigen.csv"),
        dir.join("truth.csv"),
    ];
    write_file(&paths[0], &write_signal_stream(&sc.signals))?;
    write_file(&paths[1], &write_antigen_stream(&sc.antigen))?;
    write_file(&paths[2], &sc.truth_csv())?;
    Ok(paths)
}

/// Reads a JSON or CSV report and renders it as a table.
pub fn inspect(path: &Path) -> CmdResult<String> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::input)?;
    let doc = if text.trim_start().starts_with('{') {
        ReportDocument::from_json(&text)
    } else {
        ReportDocument::from_csv(&text)
    }
    .with_context(|| format!("in report {}", path.display()))
    .map_err(Failure::input)?;
    let mut out = doc.render_table();
    if !doc.metadata.config_digest.is_empty() {
        let m = &doc.metadata;
        let _ = writeln!(
            out,
            "ticks={} seed={} empty_migrations={} overflow={} config={}",
            m.ticks, m.seed, m.empty_migrations, m.overflow, m.config_digest
        );
    }
    Ok(out)
}
