//! Parallel experiment runner and the table grids.

use rayon::prelude::*;

use vlearn_core::basis::BasisKind;
use vlearn_core::evalkit::{
    aggregate, run_replication, summarize, ExperimentConfig, Method, OnlineExperiment, OnlineMode,
    ReplicationOutcome, ResultRow,
};
use vlearn_core::ggq::GgqConfig;
use vlearn_core::rng::derive_seed;
use vlearn_core::simenv::SimEnv;
use vlearn_core::vlearn::SearchConfig;

use crate::error::CliError;
use crate::io::ReplicationValue;

/// A worker pool capped at `threads` (all cores when `None`).
pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Validation("threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    builder.build().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs every replication on `pool`; results come back in replication
/// order, so output does not depend on the thread count.
pub fn run_offline(
    config: &ExperimentConfig,
    pool: &rayon::ThreadPool,
) -> Result<(Vec<ResultRow>, Vec<ReplicationOutcome>), CliError> {
    config.validate()?;
    let outcomes = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|r| run_replication(config, r))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok((aggregate(config, &outcomes), outcomes))
}

/// Realized online values, one per replication, in replication order.
/// A failed replication is `None`.
pub fn run_online(experiment: &OnlineExperiment, replications: usize, pool: &rayon::ThreadPool) -> Vec<Option<f64>> {
    pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|r| match experiment.run(r) {
                Ok(v) => Some(v),
                Err(e) => {
                    log::warn!("online replication {r} failed: {e}");
                    None
                }
            })
            .collect()
    })
}

/// The (n, T) grid used by every table.
pub const GRID: [(usize, usize); 9] = [
    (25, 24),
    (25, 36),
    (25, 48),
    (50, 24),
    (50, 36),
    (50, 48),
    (100, 24),
    (100, 36),
    (100, 48),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableKind {
    Offline,
    Online,
    Individualized,
}

#[derive(Debug, Clone)]
pub struct TableSpec {
    pub id: usize,
    pub title: &'static str,
    pub env: SimEnv,
    pub kind: TableKind,
    pub grid: Vec<(usize, usize)>,
}

pub fn table_spec(id: usize) -> Result<TableSpec, CliError> {
    let (title, env, kind) = match id {
        1 => ("Offline estimation, two-covariate model", "toy", TableKind::Offline),
        2 => ("Offline estimation, glucose model", "t1d", TableKind::Offline),
        3 => ("Online estimation, two-covariate model", "toy", TableKind::Online),
        4 => ("Online estimation, glucose model", "t1d", TableKind::Online),
        5 => (
            "Online universal vs patient-specific policies, heterogeneous two-covariate model",
            "toy_hetero",
            TableKind::Individualized,
        ),
        other => return Err(CliError::Usage(format!("unknown table {other} (expected 1 to 5)"))),
    };
    Ok(TableSpec {
        id,
        title,
        env: SimEnv::from_name(env).expect("built-in env"),
        kind,
        grid: GRID.to_vec(),
    })
}

/// Columns of a table: `(id, label)`.
pub fn table_columns(kind: TableKind) -> Vec<(String, String)> {
    match kind {
        TableKind::Offline => Method::OFFLINE.iter().map(|m| (m.id(), m.label().to_string())).collect(),
        TableKind::Online => Method::OFFLINE
            .iter()
            .filter(|m| **m != Method::Observed)
            .map(|m| (m.id(), m.label().to_string()))
            .collect(),
        TableKind::Individualized => vec![
            ("universal".into(), "Universal policy".into()),
            ("individualized".into(), "Patient-specific policy".into()),
        ],
    }
}

/// Basis used for the universal/individualized comparison.
pub const INDIVIDUALIZED_BASIS: BasisKind = BasisKind::Linear;

/// Knobs shared by every cell of a table run.
#[derive(Debug, Clone, Copy)]
pub struct TableOptions {
    pub replications: usize,
    pub seed: u64,
    pub gamma: f64,
    pub n_eval: usize,
    pub t_eval: usize,
}

#[derive(Debug, Clone)]
pub struct TableResult {
    pub spec: TableSpec,
    pub columns: Vec<(String, String)>,
    /// Grid-major, then column order.
    pub rows: Vec<ResultRow>,
    pub values: Vec<ReplicationValue>,
}

/// Runs one cell of a table.
pub fn run_cell(
    spec: &TableSpec,
    cell: usize,
    options: &TableOptions,
    pool: &rayon::ThreadPool,
) -> Result<(Vec<ResultRow>, Vec<ReplicationValue>), CliError> {
    let (n, horizon) = spec.grid[cell];
    let seed = derive_seed(options.seed, cell as u64);
    match spec.kind {
        TableKind::Offline => {
            let config = ExperimentConfig {
                gamma: options.gamma,
                n_eval: options.n_eval,
                t_eval: options.t_eval,
                ..ExperimentConfig::new(spec.env, n, horizon, options.replications, seed)
            };
            let (rows, outcomes) = run_offline(&config, pool)?;
            let values = outcomes
                .iter()
                .flat_map(|o| ReplicationValue::from_outcome(n, horizon, o))
                .collect();
            Ok((rows, values))
        }
        TableKind::Online | TableKind::Individualized => {
            let runs: Vec<(String, Method, OnlineMode)> = match spec.kind {
                TableKind::Online => Method::OFFLINE
                    .iter()
                    .filter(|m| **m != Method::Observed)
                    .map(|m| (m.id(), *m, OnlineMode::Universal))
                    .collect(),
                _ => vec![
                    ("universal".into(), Method::VLearn(INDIVIDUALIZED_BASIS), OnlineMode::Universal),
                    (
                        "individualized".into(),
                        Method::VLearn(INDIVIDUALIZED_BASIS),
                        OnlineMode::Individualized,
                    ),
                ],
            };
            let mut rows = Vec::new();
            let mut values = Vec::new();
            for (id, method, mode) in runs {
                let experiment = OnlineExperiment {
                    env: spec.env,
                    method,
                    mode,
                    n,
                    horizon,
                    gamma: options.gamma,
                    seed,
                    search: SearchConfig::default(),
                    ggq: GgqConfig::default(),
                };
                let vals = run_online(&experiment, options.replications, pool);
                let ok: Vec<f64> = vals.iter().flatten().copied().collect();
                rows.push(summarize(&id, n, horizon, options.gamma, &ok));
                values.extend(vals.into_iter().enumerate().map(|(r, v)| ReplicationValue {
                    method: id.clone(),
                    n,
                    horizon,
                    replication: r,
                    value: v,
                }));
            }
            Ok((rows, values))
        }
    }
}

pub fn run_table(id: usize, options: &TableOptions, pool: &rayon::ThreadPool) -> Result<TableResult, CliError> {
    if options.replications == 0 {
        return Err(CliError::Validation("replication count must be at least 1".into()));
    }
    let spec = table_spec(id)?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for cell in 0..spec.grid.len() {
        let (n, horizon) = spec.grid[cell];
        log::info!("table {id}: n = {n}, T = {horizon}");
        let (r, v) = run_cell(&spec, cell, options, pool)?;
        rows.extend(r);
        values.extend(v);
    }
    Ok(TableResult {
        columns: table_columns(spec.kind),
        spec,
        rows,
        values,
    })
}

/// Wide layout: one row per (n, T), one `mean (sd)` cell per column.
pub fn wide_grid(result: &TableResult) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut header = vec!["n".to_string(), "T".to_string()];
    header.extend(result.columns.iter().map(|(_, label)| label.clone()));
    out.push(header);
    for &(n, horizon) in &result.spec.grid {
        let mut line = vec![n.to_string(), horizon.to_string()];
        for (id, _) in &result.columns {
            let cell = result
                .rows
                .iter()
                .find(|r| r.n == n && r.horizon == horizon && &r.method == id)
                .map(|r| {
                    if r.replications == 0 {
                        "NA".to_string()
                    } else {
                        format!("{:.4} ({:.4})", r.mean_value, r.mc_sd)
                    }
                })
                .unwrap_or_else(|| "NA".into());
            line.push(cell);
        }
        out.push(line);
    }
    out
}
