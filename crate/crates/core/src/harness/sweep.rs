//! Parallel hyperparameter sweeps with a resumable ledger of finished cells.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copilots::{train, MethodSpec};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learners::LearnerConfig;
use crate::pilots::{Pilot, PilotSpec};
use crate::rng::{derive_seed, stream};

use super::{evaluate, kendall_tau};

/// One method trained at every grid value for every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub env: EnvSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot: Option<PilotSpec>,
    /// Template whose swept parameter is replaced by each grid value.
    pub method: MethodSpec,
    /// Training length comes from `learner.training_frames`.
    pub learner: LearnerConfig,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "parameter grid is empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "seed list is empty"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be positive"));
        }
        if self.learner.training_frames == 0 {
            return Err(Error::config("learner.training_frames", "must be positive"));
        }
        for (i, v) in self.values.iter().enumerate() {
            self.method
                .with_param(*v)
                .map_err(|e| Error::config(format!("values[{i}]"), e.to_string()))?;
        }
        Ok(())
    }
}

/// One results-table row. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub param_name: String,
    pub param_value: f64,
    pub seed: u64,
    pub mean_return: f64,
    pub stderr_return: f64,
    pub intervention_rate: f64,
    pub success_rate: f64,
    pub final_lambda: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct LedgerHeader {
    sweep: SweepSpec,
}

#[derive(Serialize, Deserialize)]
struct LedgerEntry {
    cell: usize,
    seed: u64,
    row: SweepRow,
}

/// Trains and evaluates a single `(grid value, seed)` cell.
fn run_cell(spec: &SweepSpec, param_index: usize, seed: u64) -> Result<SweepRow> {
    let method = spec.method.with_param(spec.values[param_index])?;
    let cell_seed = derive_seed(seed, stream::CELL, param_index as u64);
    let env = spec.env.build(0)?;
    let mut pilot = match (&spec.pilot, method.needs_pilot()) {
        (Some(p), true) => Some(p.build(&env, cell_seed)?),
        _ => None,
    };
    let (trained, _) = train(
        &method,
        &spec.env,
        pilot.as_deref_mut().map(|p| p as &mut dyn Pilot),
        &spec.learner,
        spec.learner.training_frames,
        cell_seed,
    )?;
    let (metrics, _) = evaluate(
        Some(&trained),
        pilot.as_deref_mut().map(|p| p as &mut dyn Pilot),
        &spec.env,
        spec.eval_episodes,
        derive_seed(cell_seed, stream::EVALUATION, 0),
        None,
    )?;
    let (param_name, param_value) = method.param();
    Ok(SweepRow {
        method: method.name().to_string(),
        param_name: param_name.to_string(),
        param_value,
        seed,
        mean_return: metrics.mean_return,
        stderr_return: metrics.stderr_return,
        intervention_rate: metrics.intervention_rate,
        success_rate: metrics.success_rate,
        final_lambda: trained.final_lambda,
    })
}

/// Parses ledger text into its sweep and the finished `(cell, seed)` rows.
/// Parsing stops at the first unreadable line, which is how a torn final
/// line from an interrupted write is dropped.
pub fn parse_ledger(text: &str) -> Result<Option<(SweepSpec, BTreeMap<(usize, u64), SweepRow>)>> {
    let mut lines = text.lines();
    let Some(first) = lines.next() else {
        return Ok(None);
    };
    let header: LedgerHeader =
        serde_json::from_str(first).map_err(|e| Error::config("ledger", format!("bad ledger header: {e}")))?;
    let mut done = BTreeMap::new();
    for line in lines {
        let Ok(entry) = serde_json::from_str::<LedgerEntry>(line) else {
            break;
        };
        done.insert((entry.cell, entry.seed), entry.row);
    }
    Ok(Some((header.sweep, done)))
}

/// Reads finished cells from an existing ledger; a ledger for a different
/// sweep is an error.
fn read_ledger(path: &Path, spec: &SweepSpec) -> Result<BTreeMap<(usize, u64), SweepRow>> {
    let text = match std::fs::read(path) {
        Ok(bytes) => String::from_utf8_lossy(&bytes).into_owned(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e.into()),
    };
    let Some((sweep, mut done)) = parse_ledger(&text).map_err(|e| match e {
        Error::Config { message, .. } => Error::config(path.display().to_string(), message),
        other => other,
    })?
    else {
        return Ok(BTreeMap::new());
    };
    if sweep != *spec {
        return Err(Error::config(
            path.display().to_string(),
            "ledger belongs to a different sweep; remove it or change --out",
        ));
    }
    done.retain(|&(cell, seed), _| cell < spec.values.len() && spec.seeds.contains(&seed));
    Ok(done)
}

/// Runs every `(value, seed)` cell on `workers` threads. With a ledger path,
/// finished cells are appended as they complete and skipped on rerun.
/// Rows come back sorted by grid position, then seed position, so the
/// table does not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, workers: usize, ledger: Option<&Path>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if workers == 0 {
        return Err(Error::config("workers", "must be positive"));
    }
    let done = match ledger {
        Some(path) => read_ledger(path, spec)?,
        None => BTreeMap::new(),
    };
    // The ledger is rewritten from the recovered cells, which drops any
    // torn tail before new entries are appended.
    let writer = match ledger {
        Some(path) => {
            let mut file = File::create(path)?;
            serde_json::to_writer(&mut file, &LedgerHeader { sweep: spec.clone() })?;
            file.write_all(b"\n")?;
            for (&(cell, seed), row) in &done {
                serde_json::to_writer(&mut file, &LedgerEntry { cell, seed, row: row.clone() })?;
                file.write_all(b"\n")?;
            }
            file.flush()?;
            Some(Mutex::new(file))
        }
        None => None,
    };

    let cells: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|p| (0..spec.seeds.len()).map(move |s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;
    let rows: Result<Vec<((usize, usize), SweepRow)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, s)| {
                let seed = spec.seeds[s];
                if let Some(row) = done.get(&(p, seed)) {
                    return Ok(((p, s), row.clone()));
                }
                let row = run_cell(spec, p, seed)?;
                tracing::info!(cell = p, seed, rate = row.intervention_rate, "sweep cell finished");
                if let Some(w) = &writer {
                    let mut line = serde_json::to_vec(&LedgerEntry {
                        cell: p,
                        seed,
                        row: row.clone(),
                    })?;
                    line.push(b'\n');
                    let mut file = w.lock().expect("ledger writer poisoned");
                    file.write_all(&line)?;
                    file.flush()?;
                }
                Ok(((p, s), row))
            })
            .collect()
    });
    let mut rows = rows?;
    rows.sort_by_key(|(k, _)| *k);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_rows<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Kendall's tau between the swept parameter and the intervention rate.
pub fn intervention_trend(rows: &[SweepRow]) -> f64 {
    let x: Vec<f64> = rows.iter().map(|r| r.param_value).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.intervention_rate).collect();
    kendall_tau(&x, &y)
}
