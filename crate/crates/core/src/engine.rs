//! Tissue compartment, DC population loop and lymph-node log.
//!
//! The engine is a single-writer state machine. Callers deposit signals and
//! antigen for the current tick, then call [`Engine::step`]; cells only see
//! what was deposited before the step began.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{compute_mcav, McavReport};
use crate::error::{invalid_config, DcaError, Result};
use crate::model::{
    draw_migration_threshold, median_migration_threshold, process_signals, AntigenEvent, CellState,
    DendriticCell, OutputSignals, PresentationRecord, SignalMaxima, SignalSnapshot, WeightMatrix,
};

fn default_population() -> usize {
    100
}
fn default_antigen_capacity() -> usize {
    50
}
fn default_max_antigen_per_update() -> usize {
    1
}
fn default_pool_capacity() -> usize {
    500
}
fn default_weight() -> f64 {
    2.0
}
fn default_threshold_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_population")]
    pub population_size: usize,
    /// Maximum antigen a single cell can hold.
    #[serde(default = "default_antigen_capacity")]
    pub antigen_capacity: usize,
    /// Antigen a cell may take from the pool per update.
    #[serde(default = "default_max_antigen_per_update")]
    pub max_antigen_per_update: usize,
    #[serde(default = "default_pool_capacity")]
    pub pool_capacity: usize,
    #[serde(default = "default_weight")]
    pub w1: f64,
    #[serde(default = "default_weight")]
    pub w2: f64,
    #[serde(default)]
    pub signal_maxima: SignalMaxima,
    /// Multiplier on the median migration threshold. 1.0 keeps the derived
    /// median; larger values lengthen every cell's sampling window.
    #[serde(default = "default_threshold_scale")]
    pub threshold_scale: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            population_size: default_population(),
            antigen_capacity: default_antigen_capacity(),
            max_antigen_per_update: default_max_antigen_per_update(),
            pool_capacity: default_pool_capacity(),
            w1: default_weight(),
            w2: default_weight(),
            signal_maxima: SignalMaxima::default(),
            threshold_scale: default_threshold_scale(),
            rng_seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("population_size", self.population_size),
            ("antigen_capacity", self.antigen_capacity),
            ("max_antigen_per_update", self.max_antigen_per_update),
            ("pool_capacity", self.pool_capacity),
        ] {
            if v == 0 {
                return Err(invalid_config(field, "must be positive"));
            }
        }
        if self.max_antigen_per_update > self.antigen_capacity {
            return Err(invalid_config(
                "max_antigen_per_update",
                format!(
                    "{} exceeds antigen_capacity {}",
                    self.max_antigen_per_update, self.antigen_capacity
                ),
            ));
        }
        if !self.threshold_scale.is_finite() || self.threshold_scale <= 0.0 {
            return Err(invalid_config(
                "threshold_scale",
                format!("must be finite and > 0, got {}", self.threshold_scale),
            ));
        }
        self.weights()?;
        self.median_threshold()?;
        Ok(())
    }

    pub fn weights(&self) -> Result<WeightMatrix> {
        WeightMatrix::new(self.w1, self.w2).map_err(|e| match e {
            DcaError::InvalidParameter { name, reason } => invalid_config(name, reason),
            other => other,
        })
    }

    /// Median threshold derived from the maxima, times `threshold_scale`.
    pub fn median_threshold(&self) -> Result<f64> {
        Ok(
            median_migration_threshold(self.signal_maxima, &self.weights()?)?
                * self.threshold_scale,
        )
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("engine config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Running totals used to check antigen conservation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AntigenLedger {
    pub deposited: u64,
    pub consumed: u64,
    pub evicted: u64,
    pub in_pool: u64,
}

impl AntigenLedger {
    pub fn is_conserved(&self) -> bool {
        self.deposited == self.consumed + self.in_pool + self.evicted
    }
}

/// Signal slot plus antigen pool.
#[derive(Debug, Clone)]
pub struct Tissue {
    current_signals: SignalSnapshot,
    antigen_pool: VecDeque<AntigenEvent>,
    pool_capacity: usize,
    tick: u64,
}

impl Tissue {
    fn new(pool_capacity: usize) -> Self {
        Self {
            current_signals: SignalSnapshot::quiet(0),
            antigen_pool: VecDeque::with_capacity(pool_capacity),
            pool_capacity,
            tick: 0,
        }
    }

    pub fn current_signals(&self) -> &SignalSnapshot {
        &self.current_signals
    }

    pub fn pool_len(&self) -> usize {
        self.antigen_pool.len()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Takes up to `n` events from the pool front.
    fn take(&mut self, n: usize) -> impl Iterator<Item = AntigenEvent> + '_ {
        let n = n.min(self.antigen_pool.len());
        self.antigen_pool.drain(..n)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LymphLog {
    records: Vec<PresentationRecord>,
    empty_migrations: u64,
}

impl LymphLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[PresentationRecord] {
        &self.records
    }

    pub fn empty_migrations(&self) -> u64 {
        self.empty_migrations
    }

    pub fn push(&mut self, record: PresentationRecord) {
        self.records.push(record);
    }

    pub fn record_empty_migration(&mut self) {
        self.empty_migrations += 1;
    }
}

impl FromIterator<PresentationRecord> for LymphLog {
    fn from_iter<I: IntoIterator<Item = PresentationRecord>>(iter: I) -> Self {
        Self {
            records: iter.into_iter().collect(),
            empty_migrations: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellOutcome {
    StillImmature,
    Migrated(Vec<PresentationRecord>),
}

/// One Algorithm-1 iteration for a single immature cell at `tick`.
///
/// Collects antigen, reads the current signals, adds the interim outputs and
/// migrates if the CSM total has reached the cell's threshold.
pub fn update_cell(
    cell: &mut DendriticCell,
    tissue: &mut Tissue,
    weights: &WeightMatrix,
    max_antigen_per_update: usize,
    tick: u64,
) -> CellOutcome {
    debug_assert_eq!(cell.state(), CellState::Immature);
    let want = max_antigen_per_update.min(cell.free_capacity());
    for event in tissue.take(want) {
        cell.store_antigen(event);
    }
    let interim = process_signals(&tissue.current_signals, weights);
    cell.accumulate(interim);
    if !cell.should_migrate() {
        return CellOutcome::StillImmature;
    }
    let lifespan = tick - cell.birth_tick() + 1;
    let (context, antigen) = cell.migrate();
    CellOutcome::Migrated(
        antigen
            .into_iter()
            .map(|a| PresentationRecord {
                antigen_type: a.antigen_type,
                context,
                migration_tick: tick,
                cell_lifespan_ticks: lifespan,
            })
            .collect(),
    )
}

/// Per-tick diagnostics, suitable for plotting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub tick: u64,
    /// Population mean of the cumulative outputs after replacement.
    pub mean_cumulative: OutputSignals,
    pub migrations: u64,
    pub empty_migrations: u64,
    pub presented: u64,
    pub pool_len: u64,
}

pub struct Engine {
    config: EngineConfig,
    weights: WeightMatrix,
    t_median: f64,
    rng: ChaCha8Rng,
    cells: Vec<DendriticCell>,
    tissue: Tissue,
    lymph: LymphLog,
    ledger: AntigenLedger,
    steps: u64,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let weights = config.weights()?;
        let t_median = config.median_threshold()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let cells = (0..config.population_size)
            .map(|_| {
                DendriticCell::new(
                    draw_migration_threshold(t_median, &mut rng),
                    0,
                    config.antigen_capacity,
                )
            })
            .collect();
        Ok(Self {
            tissue: Tissue::new(config.pool_capacity),
            weights,
            t_median,
            rng,
            cells,
            lymph: LymphLog::new(),
            ledger: AntigenLedger::default(),
            steps: 0,
            config,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn median_threshold(&self) -> f64 {
        self.t_median
    }

    pub fn cells(&self) -> &[DendriticCell] {
        &self.cells
    }

    pub fn tissue(&self) -> &Tissue {
        &self.tissue
    }

    pub fn lymph(&self) -> &LymphLog {
        &self.lymph
    }

    pub fn tick(&self) -> u64 {
        self.tissue.tick
    }

    /// Steps executed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn antigen_ledger(&self) -> AntigenLedger {
        AntigenLedger {
            in_pool: self.tissue.antigen_pool.len() as u64,
            ..self.ledger
        }
    }

    /// Replaces the signal slot. The snapshot must be stamped with the
    /// current tissue tick and lie within the configured maxima.
    pub fn deposit_signals(&mut self, s: SignalSnapshot) -> Result<()> {
        if s.tick < self.tissue.tick {
            return Err(DcaError::StaleSignal {
                got: s.tick,
                current: self.tissue.tick,
            });
        }
        if s.tick > self.tissue.tick {
            return Err(DcaError::FutureSignal {
                got: s.tick,
                current: self.tissue.tick,
            });
        }
        s.validate_within(self.config.signal_maxima)?;
        self.tissue.current_signals = s;
        Ok(())
    }

    /// Appends to the antigen pool, evicting the oldest event when full.
    pub fn deposit_antigen(&mut self, a: AntigenEvent) {
        if self.tissue.antigen_pool.len() == self.tissue.pool_capacity {
            self.tissue.antigen_pool.pop_front();
            self.ledger.evicted += 1;
        }
        self.tissue.antigen_pool.push_back(a);
        self.ledger.deposited += 1;
    }

    /// Moves the clock forward without updating any cell.
    pub fn advance_clock(&mut self, tick: u64) -> Result<()> {
        if tick < self.tissue.tick {
            return Err(DcaError::ClockRewind {
                current: self.tissue.tick,
                requested: tick,
            });
        }
        self.tissue.tick = tick;
        Ok(())
    }

    /// Puts a fresh immature cell in slot `index`.
    pub fn replace_cell(&mut self, index: usize) {
        let threshold = draw_migration_threshold(self.t_median, &mut self.rng);
        self.cells[index] = DendriticCell::new(
            threshold,
            self.tissue.tick + 1,
            self.config.antigen_capacity,
        );
    }

    /// Updates every cell once in index order, logs presentations, then
    /// replaces migrated cells and advances the tick.
    pub fn step(&mut self) -> StepSummary {
        let tick = self.tissue.tick;
        let pool_before = self.tissue.antigen_pool.len();
        let mut migrated = Vec::new();
        let mut presented = 0u64;
        let mut empty = 0u64;

        for (index, cell) in self.cells.iter_mut().enumerate() {
            match update_cell(
                cell,
                &mut self.tissue,
                &self.weights,
                self.config.max_antigen_per_update,
                tick,
            ) {
                CellOutcome::StillImmature => {}
                CellOutcome::Migrated(records) => {
                    migrated.push(index);
                    if records.is_empty() {
                        self.lymph.record_empty_migration();
                        empty += 1;
                    }
                    presented += records.len() as u64;
                    self.lymph.records.extend(records);
                }
            }
        }
        self.ledger.consumed += (pool_before - self.tissue.antigen_pool.len()) as u64;

        for &index in &migrated {
            self.replace_cell(index);
        }

        let n = self.cells.len() as f64;
        let mut total = OutputSignals::default();
        for cell in &self.cells {
            total += cell.cumulative();
        }
        let summary = StepSummary {
            tick,
            mean_cumulative: OutputSignals {
                csm: total.csm / n,
                semi: total.semi / n,
                mature: total.mature / n,
            },
            migrations: migrated.len() as u64,
            empty_migrations: empty,
            presented,
            pool_len: self.tissue.antigen_pool.len() as u64,
        };
        self.tissue.tick += 1;
        self.steps += 1;
        summary
    }

    /// MCAV report over everything presented so far, with run metadata.
    pub fn report(&self) -> McavReport {
        let mut report = compute_mcav(&self.lymph);
        report.metadata.ticks = self.steps;
        report.metadata.seed = self.config.rng_seed;
        report.metadata.config_digest = self.config.digest();
        report.metadata.overflow = self.ledger.evicted;
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Context;

    fn cfg(pop: usize) -> EngineConfig {
        EngineConfig {
            population_size: pop,
            rng_seed: 7,
            ..EngineConfig::default()
        }
    }

    fn signals(tick: u64, p: f64, d: f64, s: f64) -> SignalSnapshot {
        SignalSnapshot::new(p, d, s, 0.0, tick).unwrap()
    }

    #[test]
    fn init_draws_one_threshold_per_cell() {
        let engine = Engine::new(cfg(100)).unwrap();
        assert_eq!(engine.cells().len(), 100);
        assert!(engine
            .cells()
            .iter()
            .all(|c| c.state() == CellState::Immature));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let expected: Vec<f64> = (0..100)
            .map(|_| draw_migration_threshold(300.0, &mut rng))
            .collect();
        let got: Vec<f64> = engine
            .cells()
            .iter()
            .map(|c| c.migration_threshold())
            .collect();
        assert_eq!(got, expected);
        assert_eq!(engine.tissue().pool_len(), 0);
        assert!(engine.lymph().records().is_empty());
    }

    #[test]
    fn equal_seeds_equal_thresholds() {
        let a = Engine::new(cfg(20)).unwrap();
        let b = Engine::new(cfg(20)).unwrap();
        let ta: Vec<f64> = a.cells().iter().map(|c| c.migration_threshold()).collect();
        let tb: Vec<f64> = b.cells().iter().map(|c| c.migration_threshold()).collect();
        assert_eq!(ta, tb);
    }

    #[test]
    fn zero_maxima_is_config_error() {
        let mut c = cfg(3);
        c.signal_maxima = SignalMaxima::new(0.0, 0.0, 0.0);
        let err = Engine::new(c).err().unwrap();
        assert!(
            matches!(err, DcaError::InvalidConfig { ref field, .. } if field == "signal_maxima")
        );
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut c = cfg(3);
        c.max_antigen_per_update = 60;
        let err = Engine::new(c).err().unwrap();
        assert!(
            matches!(err, DcaError::InvalidConfig { ref field, .. } if field == "max_antigen_per_update")
        );
        let mut c = cfg(0);
        c.population_size = 0;
        assert!(matches!(
            Engine::new(c).err().unwrap(),
            DcaError::InvalidConfig { ref field, .. } if field == "population_size"
        ));
        let mut c = cfg(3);
        c.w1 = 0.0;
        assert!(matches!(
            Engine::new(c).err().unwrap(),
            DcaError::InvalidConfig { ref field, .. } if field == "w1"
        ));
    }

    #[test]
    fn deposit_signals_ordering() {
        let mut engine = Engine::new(cfg(2)).unwrap();
        engine.advance_clock(5).unwrap();
        engine.deposit_signals(signals(5, 1.0, 0.0, 0.0)).unwrap();
        engine.deposit_signals(signals(5, 2.0, 0.0, 0.0)).unwrap();
        assert_eq!(engine.tissue().current_signals().pamp, 2.0);
        assert_eq!(
            engine.deposit_signals(signals(3, 0.0, 0.0, 0.0)),
            Err(DcaError::StaleSignal { got: 3, current: 5 })
        );
        assert_eq!(
            engine.deposit_signals(signals(6, 0.0, 0.0, 0.0)),
            Err(DcaError::FutureSignal { got: 6, current: 5 })
        );
        assert!(engine.advance_clock(4).is_err());
    }

    #[test]
    fn deposit_then_step_reads_new_snapshot() {
        let mut engine = Engine::new(cfg(1)).unwrap();
        engine.deposit_signals(signals(0, 1.0, 1.0, 1.0)).unwrap();
        engine.step();
        assert_eq!(engine.cells()[0].cumulative().csm, 6.0);
    }

    #[test]
    fn bounded_pool_evicts_oldest() {
        let mut c = cfg(1);
        c.pool_capacity = 3;
        let mut engine = Engine::new(c).unwrap();
        engine.deposit_antigen(AntigenEvent::new("a", 0).unwrap());
        assert_eq!(engine.tissue().pool_len(), 1);
        for t in ["b", "c", "d"] {
            engine.deposit_antigen(AntigenEvent::new(t, 0).unwrap());
        }
        assert_eq!(engine.tissue().pool_len(), 3);
        assert_eq!(engine.antigen_ledger().evicted, 1);
        assert_eq!(
            engine
                .tissue()
                .antigen_pool
                .front()
                .unwrap()
                .antigen_type
                .as_str(),
            "b"
        );
        assert!(engine.antigen_ledger().is_conserved());
    }

    #[test]
    fn same_type_instances_stay_distinct() {
        let mut engine = Engine::new(cfg(1)).unwrap();
        for _ in 0..10 {
            engine.deposit_antigen(AntigenEvent::new("proc", 0).unwrap());
        }
        assert_eq!(engine.tissue().pool_len(), 10);
    }

    #[test]
    fn update_cell_migrates_on_second_tick() {
        // P=1,D=1,S=1 with the default matrix gives csm 6 per tick.
        let mut tissue = Tissue::new(10);
        tissue.current_signals = signals(0, 1.0, 1.0, 1.0);
        let w = WeightMatrix::default();
        let mut cell = DendriticCell::new(10.0, 0, 5);
        assert_eq!(
            update_cell(&mut cell, &mut tissue, &w, 1, 0),
            CellOutcome::StillImmature
        );
        match update_cell(&mut cell, &mut tissue, &w, 1, 1) {
            CellOutcome::Migrated(records) => assert!(records.is_empty()),
            other => panic!("expected migration, got {other:?}"),
        }
        assert_eq!(cell.cumulative().csm, 12.0);
    }

    #[test]
    fn migration_labels_every_stored_antigen() {
        let mut tissue = Tissue::new(10);
        for t in ["A", "A", "B"] {
            tissue
                .antigen_pool
                .push_back(AntigenEvent::new(t, 0).unwrap());
        }
        tissue.current_signals = signals(0, 10.0, 0.0, 0.0);
        let w = WeightMatrix::default();
        let mut cell = DendriticCell::new(1.0, 0, 5);
        let CellOutcome::Migrated(records) = update_cell(&mut cell, &mut tissue, &w, 3, 0) else {
            panic!("expected migration");
        };
        let got: Vec<(&str, Context)> = records
            .iter()
            .map(|r| (r.antigen_type.as_str(), r.context))
            .collect();
        assert_eq!(
            got,
            vec![
                ("A", Context::Anomalous),
                ("A", Context::Anomalous),
                ("B", Context::Anomalous)
            ]
        );
        assert!(records.iter().all(|r| r.cell_lifespan_ticks == 1));
    }

    #[test]
    fn full_cell_keeps_sampling_signals() {
        let mut tissue = Tissue::new(10);
        for _ in 0..4 {
            tissue
                .antigen_pool
                .push_back(AntigenEvent::new("x", 0).unwrap());
        }
        tissue.current_signals = signals(0, 1.0, 0.0, 0.0);
        let w = WeightMatrix::default();
        let mut cell = DendriticCell::new(1e9, 0, 2);
        for tick in 0..3 {
            update_cell(&mut cell, &mut tissue, &w, 2, tick);
        }
        assert_eq!(cell.antigen().len(), 2);
        assert_eq!(tissue.pool_len(), 2);
        assert_eq!(cell.cumulative().csm, 6.0);
    }

    #[test]
    fn empty_migration_is_counted() {
        let mut engine = Engine::new(cfg(2)).unwrap();
        engine
            .deposit_signals(signals(0, 100.0, 100.0, 100.0))
            .unwrap();
        let s = engine.step();
        // csm 600 per tick exceeds every threshold in [150, 450].
        assert_eq!(s.migrations, 2);
        assert_eq!(s.empty_migrations, 2);
        assert_eq!(engine.lymph().empty_migrations(), 2);
        assert_eq!(engine.cells().len(), 2);
        assert!(engine
            .cells()
            .iter()
            .all(|c| c.cumulative() == OutputSignals::default()));
        assert!(engine.cells().iter().all(|c| c.birth_tick() == 1));
    }

    #[test]
    fn replacement_thresholds_continue_rng_stream() {
        let mut engine = Engine::new(cfg(2)).unwrap();
        engine
            .deposit_signals(signals(0, 100.0, 100.0, 100.0))
            .unwrap();
        engine.step();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws: Vec<f64> = (0..4)
            .map(|_| draw_migration_threshold(300.0, &mut rng))
            .collect();
        let got: Vec<f64> = engine
            .cells()
            .iter()
            .map(|c| c.migration_threshold())
            .collect();
        assert_eq!(got, draws[2..]);
    }

    #[test]
    fn quiet_step_changes_nothing() {
        let mut engine = Engine::new(cfg(10)).unwrap();
        let s = engine.step();
        assert_eq!(s.migrations, 0);
        assert!(engine
            .cells()
            .iter()
            .all(|c| c.cumulative() == OutputSignals::default()));
        assert_eq!(engine.tick(), 1);
    }

    #[test]
    fn single_antigen_goes_to_one_cell() {
        let mut engine = Engine::new(cfg(100)).unwrap();
        engine.deposit_antigen(AntigenEvent::new("solo", 0).unwrap());
        engine.step();
        let holders: usize = engine.cells().iter().map(|c| c.antigen().len()).sum();
        assert_eq!(holders, 1);
        assert_eq!(engine.cells()[0].antigen().len(), 1);
        let ledger = engine.antigen_ledger();
        assert_eq!(
            (ledger.deposited, ledger.consumed, ledger.in_pool),
            (1, 1, 0)
        );
    }

    #[test]
    fn digest_tracks_config() {
        let a = cfg(3);
        let mut b = cfg(3);
        assert_eq!(a.digest(), b.digest());
        b.rng_seed = 8;
        assert_ne!(a.digest(), b.digest());
    }
}
