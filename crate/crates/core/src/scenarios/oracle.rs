//! Reference implementation of the full pipeline.
//!
//! Written as one flat loop without touching the engine or the cell types,
//! so that agreement with [`crate::replay::replay`] is a meaningful check.
//! Arithmetic is kept in the same evaluation order as the engine so the two
//! agree bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{McavEntry, McavReport, RunMetadata};
use crate::engine::EngineConfig;
use crate::error::{invalid_config, Result};
use crate::ingestion::{map_to_snapshot, RawMetricRecord, SignalMapping};
use crate::model::{AntigenEvent, AntigenType};

struct Cell {
    threshold: f64,
    csm: f64,
    semi: f64,
    mature: f64,
    antigen: Vec<AntigenType>,
}

fn fresh(rng: &mut ChaCha8Rng, t_median: f64) -> Cell {
    let u: f64 = rng.gen();
    Cell {
        threshold: t_median * (0.5 + u),
        csm: 0.0,
        semi: 0.0,
        mature: 0.0,
        antigen: Vec::new(),
    }
}

/// Runs the complete algorithm directly over the raw streams.
pub fn oracle_run(
    cfg: &EngineConfig,
    mapping: &SignalMapping,
    signals: &[RawMetricRecord],
    antigen: &[AntigenEvent],
) -> Result<McavReport> {
    cfg.validate()?;
    mapping.validate()?;
    if mapping.maxima != cfg.signal_maxima {
        return Err(invalid_config(
            "mapping.maxima",
            "must equal engine signal_maxima",
        ));
    }

    let (w1, w2) = (cfg.w1, cfg.w2);
    let m = cfg.signal_maxima;
    let t_median =
        0.5 * (m.pamp * w1 + m.danger * (w1 / 2.0) + m.safe * (w1 * 1.5)) * cfg.threshold_scale;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut cells: Vec<Cell> = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.population_size {
        cells.push(fresh(&mut rng, t_median));
    }

    let ticks: BTreeSet<u64> = signals
        .iter()
        .map(|r| r.tick)
        .chain(antigen.iter().map(|a| a.arrival_tick))
        .collect();

    let mut pool: Vec<AntigenType> = Vec::new();
    let mut overflow = 0u64;
    let mut empty = 0u64;
    let mut presented: Vec<(AntigenType, bool)> = Vec::new();
    let (mut p, mut d, mut s, mut inflam) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut si = 0;
    let mut ai = 0;

    for &tick in &ticks {
        let start = si;
        while si < signals.len() && signals[si].tick == tick {
            si += 1;
        }
        if si > start {
            let snap = map_to_snapshot(tick, &signals[start..si], mapping)?;
            p = snap.pamp;
            d = snap.danger;
            s = snap.safe;
            inflam = snap.inflammation;
        }
        while ai < antigen.len() && antigen[ai].arrival_tick == tick {
            if pool.len() == cfg.pool_capacity {
                pool.remove(0);
                overflow += 1;
            }
            pool.push(antigen[ai].antigen_type.clone());
            ai += 1;
        }

        let amp = 1.0 + inflam;
        let csm_step = (p * w1 + d * (w1 / 2.0) + s * (w1 * 1.5)) * amp;
        let semi_step = (p * 0.0 + d * 0.0 + s * 1.0) * amp;
        let mature_step = (p * w2 + d * (w2 / 2.0) + s * -(w2 * 1.5)) * amp;

        let mut dead = Vec::new();
        for (i, cell) in cells.iter_mut().enumerate() {
            let mut take = cfg.max_antigen_per_update;
            while take > 0 && cell.antigen.len() < cfg.antigen_capacity && !pool.is_empty() {
                cell.antigen.push(pool.remove(0));
                take -= 1;
            }
            cell.csm += csm_step;
            cell.semi += semi_step;
            cell.mature += mature_step;
            if cell.csm < cell.threshold {
                continue;
            }
            let mature_ctx = cell.semi <= cell.mature;
            if cell.antigen.is_empty() {
                empty += 1;
            }
            for a in cell.antigen.drain(..) {
                presented.push((a, mature_ctx));
            }
            dead.push(i);
        }
        for i in dead {
            cells[i] = fresh(&mut rng, t_median);
        }
    }

    let mut counts: BTreeMap<AntigenType, (u64, u64)> = BTreeMap::new();
    for (a, mature_ctx) in presented {
        let c = counts.entry(a).or_insert((0, 0));
        c.0 += 1;
        if mature_ctx {
            c.1 += 1;
        }
    }
    Ok(McavReport {
        metadata: RunMetadata {
            ticks: ticks.len() as u64,
            seed: cfg.rng_seed,
            config_digest: cfg.digest(),
            empty_migrations: empty,
            overflow,
        },
        entries: counts
            .into_iter()
            .map(|(antigen_type, (n, k))| McavEntry {
                antigen_type,
                antigen_count: n,
                mature_count: k,
                mcav: k as f64 / n as f64,
            })
            .collect(),
    })
}
