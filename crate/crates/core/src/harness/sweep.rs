//! Seeded replication sweeps and their aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use super::{run_once, RunConfig, RunResult, SCHEMA_LINE};
use crate::error::{Error, Result};

/// One `(policy, seed)` replication; failures are kept, not propagated.
#[derive(Debug)]
pub struct SweepCell {
    pub policy: String,
    pub seed: u64,
    pub outcome: std::result::Result<RunResult, String>,
}

impl SweepCell {
    pub fn file_stem(&self) -> String {
        format!("{}-seed{}", self.policy, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStats {
    pub policy: String,
    pub checkpoint: usize,
    pub runs: usize,
    pub median_cum_regret: f64,
    pub mean_cum_regret: f64,
}

#[derive(Debug)]
pub struct SweepSummary {
    /// Sorted by `(policy, seed)`.
    pub cells: Vec<SweepCell>,
    pub checkpoints: Vec<CheckpointStats>,
    /// Fraction of successful runs per policy whose acting set always held the truth.
    pub coverage: BTreeMap<String, f64>,
}

impl SweepSummary {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }

    pub fn results(&self) -> impl Iterator<Item = &RunResult> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    /// Every run succeeded with zero degeneracy events and zero failed assertions.
    pub fn is_clean(&self) -> bool {
        self.failures() == 0 && self.results().all(RunResult::is_clean)
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SCHEMA_LINE}\npolicy,checkpoint,runs,median_cum_regret,mean_cum_regret,coverage\n");
        for c in &self.checkpoints {
            let coverage = self.coverage.get(&c.policy).copied().unwrap_or(f64::NAN);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.policy, c.checkpoint, c.runs, c.median_cum_regret, c.mean_cum_regret, coverage
            );
        }
        for cell in &self.cells {
            if let Err(e) = &cell.outcome {
                let _ = writeln!(out, "#failed {} {}: {}", cell.policy, cell.seed, e.replace('\n', " "));
            }
        }
        out
    }

    /// Writes one steps file per successful cell, one `.err` file per failed
    /// cell, and `summary.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for cell in &self.cells {
            let (path, body) = match &cell.outcome {
                Ok(r) => (dir.join(format!("{}.csv", cell.file_stem())), r.steps_csv()),
                Err(e) => (dir.join(format!("{}.err", cell.file_stem())), format!("{e}\n")),
            };
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("summary.csv");
        fs::write(&path, self.summary_csv()).map_err(|e| Error::io(&path, e))
    }
}

/// Checkpoints `{T/4, T/2, T}` (clamped to at least round 1, deduplicated).
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let set: BTreeSet<usize> = [horizon / 4, horizon / 2, horizon]
        .into_iter()
        .map(|c| c.max(1))
        .collect();
    set.into_iter().collect()
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Runs every `(policy, seed)` pair on `parallel` worker threads.
pub fn run_sweep(
    base: &RunConfig,
    seeds: &[u64],
    policies: &[String],
    parallel: usize,
) -> Result<SweepSummary> {
    let distinct: BTreeSet<u64> = seeds.iter().copied().collect();
    if distinct.len() != seeds.len() {
        return Err(Error::Config("sweep seeds must be distinct".into()));
    }
    let names: BTreeSet<String> = policies.iter().cloned().collect();
    if names.is_empty() || distinct.is_empty() {
        return Err(Error::Config("sweep needs at least one policy and one seed".into()));
    }
    let mut jobs = Vec::new();
    for name in &names {
        let config = base.with_policy(name)?;
        for &seed in &distinct {
            jobs.push((name.clone(), seed, config.with_seed(seed)));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        jobs.into_par_iter()
            .map(|(policy, seed, config)| SweepCell {
                policy,
                seed,
                outcome: run_once(&config).map_err(|e| e.to_string()),
            })
            .collect()
    });

    Ok(summarize(cells, base.horizon))
}

/// Aggregates cells; the output does not depend on the input order.
pub fn summarize(mut cells: Vec<SweepCell>, horizon: usize) -> SweepSummary {
    cells.sort_by(|a, b| (&a.policy, a.seed).cmp(&(&b.policy, b.seed)));
    let mut checkpoints_out = Vec::new();
    let mut by_policy: BTreeMap<String, Vec<&RunResult>> = BTreeMap::new();
    for cell in &cells {
        let entry = by_policy.entry(cell.policy.clone()).or_default();
        if let Ok(r) = &cell.outcome {
            entry.push(r);
        }
    }
    for (policy, results) in &by_policy {
        for cp in checkpoints(horizon) {
            let mut values: Vec<f64> = results.iter().map(|r| r.cum_regret_at(cp)).collect();
            let mean = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            checkpoints_out.push(CheckpointStats {
                policy: policy.clone(),
                checkpoint: cp,
                runs: values.len(),
                median_cum_regret: median(&mut values),
                mean_cum_regret: mean,
            });
        }
    }
    let results: Vec<&RunResult> = cells.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
    let coverage = audit_optimism(results.iter().copied());
    SweepSummary {
        cells,
        checkpoints: checkpoints_out,
        coverage,
    }
}

/// Per-policy fraction of runs with zero rounds where the truth left the acting set.
pub fn audit_optimism<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in results {
        let e = counts.entry(r.summary.policy.name().to_string()).or_default();
        e.1 += 1;
        if r.optimism_clean() {
            e.0 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(k, (ok, n))| (k, ok as f64 / n as f64))
        .collect()
}

/// Parses `a..b` (exclusive), `a..=b` (inclusive) or a comma list.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = |e: std::num::ParseIntError| Error::Config(format!("bad seed list {spec:?}: {e}"));
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..=") {
        let (a, b) = (a.trim().parse::<u64>().map_err(bad)?, b.trim().parse::<u64>().map_err(bad)?);
        return Ok((a..=b).collect());
    }
    if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().map_err(bad)?, b.trim().parse::<u64>().map_err(bad)?);
        return Ok((a..b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(bad))
        .collect()
}
