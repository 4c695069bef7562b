//! Batch experiments: normalized reward across occupancy, CCR and
//! processor-count grids, with CSV output for plotting.
//!
//! Every cell is a pure function of the sweep config, so cells run in
//! parallel and the merged result is identical for any worker count. Within
//! one grid the same DAGs are reused across values (paired design), which
//! keeps the trend comparisons noise-free.

use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

use crate::generator::{
    apply_ccr, generate_dag, generate_preoccupation, GenError, GenParams, OccupancyParams,
};
use crate::metrics::{normalized_reward, MetricsError};
use crate::periodic::{schedule_periodic, PeriodicError, SchedulerOptions};
use crate::types::{mix_seed, Rat, Tick};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Scheduling(#[from] PeriodicError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {source}")]
    Csv {
        path: String,
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Axis {
    Occupancy,
    Ccr,
    Processors,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Occupancy => "occupancy",
            Axis::Ccr => "ccr",
            Axis::Processors => "processors",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub axes: Vec<Axis>,
    pub dag_sizes: Vec<usize>,
    pub dags_per_size: usize,
    /// Occupancy grid in percent.
    pub occupancy_grid: Vec<u64>,
    pub ccr_grid: Vec<Rat>,
    pub processor_grid: Vec<usize>,
    /// Held fixed while another axis varies.
    pub fixed_occupancy: u64,
    pub fixed_ccr: Rat,
    pub fixed_processors: usize,
    pub background_period: Tick,
    pub min_slot: Tick,
    pub base_seed: u64,
    /// Populate wall_ms. Off by default so output bytes are reproducible.
    pub timings: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axes: vec![Axis::Occupancy, Axis::Ccr, Axis::Processors],
            dag_sizes: vec![10, 20, 30, 40, 50],
            dags_per_size: 100,
            occupancy_grid: vec![10, 20, 30, 40, 50, 60],
            ccr_grid: vec![
                Rat::new(1, 4),
                Rat::new(1, 2),
                Rat::new(1, 1),
                Rat::new(3, 2),
                Rat::new(2, 1),
            ],
            processor_grid: (2..=10).collect(),
            fixed_occupancy: 30,
            fixed_ccr: Rat::new(1, 2),
            fixed_processors: 4,
            background_period: 40,
            min_slot: 2,
            base_seed: 0,
            timings: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::BadConfig(m.to_string()));
        if self.axes.is_empty() {
            return bad("no axes selected");
        }
        if self.dag_sizes.is_empty() {
            return bad("dag_sizes is empty");
        }
        if self.dags_per_size == 0 {
            return bad("dags_per_size must be at least 1");
        }
        if self.axes.contains(&Axis::Occupancy) && self.occupancy_grid.is_empty() {
            return bad("occupancy grid is empty");
        }
        if self.axes.contains(&Axis::Ccr) && self.ccr_grid.is_empty() {
            return bad("ccr grid is empty");
        }
        if self.axes.contains(&Axis::Processors) && self.processor_grid.is_empty() {
            return bad("processor grid is empty");
        }
        Ok(())
    }
}

/// One (axis, value, size, replicate) measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub n_tasks: usize,
    /// Percent.
    pub occupancy: u64,
    pub ccr: f64,
    pub n_processors: usize,
    pub seed: u64,
    pub nr_percent: f64,
    pub failed_instances: u64,
    pub wall_ms: u64,
}

/// Mean and standard deviation of NR per (axis, value, size).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub axis: String,
    pub value: f64,
    pub n_tasks: usize,
    pub samples: usize,
    pub mean_nr: f64,
    pub std_nr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub raw: Vec<SweepRow>,
    pub aggregate: Vec<AggregateRow>,
}

/// Sub-seed tags; disjoint from the generator's internal stream tags by
/// construction since they feed a different mix level.
const TAG_DAG: u64 = 101;
const TAG_PLATFORM: u64 = 102;

#[derive(Debug, Clone, Copy)]
struct Cell {
    axis: Axis,
    value_index: usize,
    size: usize,
    replicate: u64,
}

fn rat_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn run_cell(config: &SweepConfig, cell: Cell) -> Result<SweepRow, SweepError> {
    let (occupancy, ccr, processors, value) = match cell.axis {
        Axis::Occupancy => {
            let occ = config.occupancy_grid[cell.value_index];
            (occ, config.fixed_ccr, config.fixed_processors, occ as f64)
        }
        Axis::Ccr => {
            let c = config.ccr_grid[cell.value_index];
            (config.fixed_occupancy, c, config.fixed_processors, rat_f64(c))
        }
        Axis::Processors => {
            let p = config.processor_grid[cell.value_index];
            (config.fixed_occupancy, config.fixed_ccr, p, p as f64)
        }
    };
    let _ = value;

    let started = Instant::now();
    let dag_seed = mix_seed(config.base_seed, TAG_DAG, (cell.size as u64) << 32 | cell.replicate);
    // The platform seed is shared across grid values: within one axis the
    // replicates see the same busy layouts and link speeds while only the
    // swept parameter changes, which keeps the trend comparisons paired.
    let platform_seed = mix_seed(
        config.base_seed,
        TAG_PLATFORM,
        ((cell.axis as u64) << 48) | cell.replicate,
    );

    let dag = generate_dag(&GenParams {
        n_tasks: cell.size,
        seed: dag_seed,
        // Periods snap to the background period so the hyperperiod stays
        // equal to the DAG period instead of exploding via the LCM.
        period_round_to: config.background_period,
        ..GenParams::default()
    })?;
    let platform = generate_preoccupation(&OccupancyParams {
        n_vms: processors,
        occupancy_fraction: Rat::new(occupancy, 100),
        background_period: config.background_period,
        min_slot: config.min_slot,
        seed: platform_seed,
    })?;
    let dag = if dag.edges.is_empty() {
        dag
    } else {
        apply_ccr(&dag, ccr, &platform)?
    };

    let hs = schedule_periodic(&[dag.clone()], &platform, SchedulerOptions::default())?;
    let report = normalized_reward(&hs, &[dag])?;

    Ok(SweepRow {
        axis: cell.axis.as_str().to_string(),
        n_tasks: cell.size,
        occupancy,
        ccr: rat_f64(ccr),
        n_processors: processors,
        seed: dag_seed,
        nr_percent: report.nr_as_f64(),
        failed_instances: report.nullified_instances,
        wall_ms: if config.timings {
            started.elapsed().as_millis() as u64
        } else {
            0
        },
    })
}

/// Run every cell of the configured grids. Deterministic for a given config
/// (modulo `wall_ms` when timings are enabled), independent of thread count.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, SweepError> {
    config.validate()?;
    let mut cells = Vec::new();
    for &axis in &config.axes {
        let n_values = match axis {
            Axis::Occupancy => config.occupancy_grid.len(),
            Axis::Ccr => config.ccr_grid.len(),
            Axis::Processors => config.processor_grid.len(),
        };
        for value_index in 0..n_values {
            for &size in &config.dag_sizes {
                for replicate in 0..config.dags_per_size as u64 {
                    cells.push(Cell {
                        axis,
                        value_index,
                        size,
                        replicate,
                    });
                }
            }
        }
    }

    let mut indexed: Vec<(usize, SweepRow)> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &cell)| run_cell(config, cell).map(|row| (i, row)))
        .collect::<Result<_, _>>()?;
    indexed.sort_by_key(|&(i, _)| i);
    let raw: Vec<SweepRow> = indexed.into_iter().map(|(_, row)| row).collect();

    Ok(SweepResult {
        aggregate: aggregate_rows(&raw),
        raw,
    })
}

/// Recompute the aggregates from raw rows; the sweep itself uses this same
/// function, so the two files can never drift apart.
pub fn aggregate_rows(raw: &[SweepRow]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for row in raw {
        let value = match row.axis.as_str() {
            "occupancy" => row.occupancy as f64,
            "ccr" => row.ccr,
            _ => row.n_processors as f64,
        };
        // Key on the printed value so float keys stay orderable.
        groups
            .entry((row.axis.clone(), format!("{value:020.6}"), row.n_tasks))
            .or_default()
            .push(row.nr_percent);
    }
    groups
        .into_iter()
        .map(|((axis, value_key, n_tasks), nrs)| {
            let samples = nrs.len();
            let mean = nrs.iter().sum::<f64>() / samples as f64;
            let var = if samples > 1 {
                nrs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64
            } else {
                0.0
            };
            AggregateRow {
                axis,
                value: value_key.parse().expect("formatted above"),
                n_tasks,
                samples,
                mean_nr: mean,
                std_nr: var.sqrt(),
            }
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SweepError> {
    let wrap = |source: csv::Error| SweepError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for row in rows {
        w.serialize(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| SweepError::Csv {
        path: path.display().to_string(),
        source: e.into(),
    })
}

/// Write `<stem>.csv` (raw rows) and `<stem>_aggregate.csv`.
pub fn write_sweep_csv(result: &SweepResult, stem: &Path) -> Result<(), SweepError> {
    let raw_path = stem.with_extension("csv");
    let agg_path = stem.with_file_name(format!(
        "{}_aggregate.csv",
        stem.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep")
    ));
    write_csv(&raw_path, &result.raw)?;
    write_csv(&agg_path, &result.aggregate)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vs: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vs.len()).collect();
        idx.sort_by(|&a, &b| vs[a].total_cmp(&vs[b]));
        let mut ranks = vec![0.0; vs.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vs[idx[j + 1]] == vs[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            axes: vec![Axis::Occupancy],
            dag_sizes: vec![10],
            dags_per_size: 5,
            occupancy_grid: vec![10, 30],
            base_seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn row_counts_match_grid() {
        let result = run_sweep(&tiny_config()).unwrap();
        assert_eq!(result.raw.len(), 2 * 5); // 2 grid points x 5 DAGs
        assert_eq!(result.aggregate.len(), 2);
        for agg in &result.aggregate {
            assert_eq!(agg.samples, 5);
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let config = tiny_config();
        let a = run_sweep(&config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_sweep(&config)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregates_recompute_from_raw() {
        let result = run_sweep(&tiny_config()).unwrap();
        assert_eq!(result.aggregate, aggregate_rows(&result.raw));
    }

    #[test]
    fn csv_files_written_and_stable() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("sweep");
        let result = run_sweep(&tiny_config()).unwrap();
        write_sweep_csv(&result, &stem).unwrap();
        let raw1 = std::fs::read(dir.path().join("sweep.csv")).unwrap();
        assert!(dir.path().join("sweep_aggregate.csv").exists());
        write_sweep_csv(&result, &stem).unwrap();
        assert_eq!(std::fs::read(dir.path().join("sweep.csv")).unwrap(), raw1);
        // wall_ms stays zero without timings.
        let text = String::from_utf8(raw1).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.ends_with(",0"), "{line}");
        }
    }

    #[test]
    fn empty_axis_grid_rejected() {
        let config = SweepConfig {
            occupancy_grid: vec![],
            ..tiny_config()
        };
        assert!(matches!(run_sweep(&config), Err(SweepError::BadConfig(_))));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[30.0, 20.0, 10.0]), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
    }
}
