//! The systems × alphas × seeds suite.
//!
//! ```text
//! <root>/config.json
//! <root>/cells/<system>_a<alpha>_s<seed>/{config.json, dataset/, model/, analysis/}
//! <root>/summary.json   per-cell records and per-(system, alpha) rows
//! <root>/summary.txt    the same rows as three tables
//! <root>/meta.json      wall-clock times, the only non-deterministic file
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use icode::analysis::export::save_json;
use icode::ode::SystemKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{at, cmd_analyze, cmd_simulate, cmd_train, write_config};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::CellMetrics;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TABLE_FILE: &str = "summary.txt";
pub const META_FILE: &str = "meta.json";
pub const CELLS_DIR: &str = "cells";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub name: String,
    pub system: SystemKind,
    pub alpha: f64,
    pub seed: u64,
    pub status: CellStatus,
    pub error: Option<String>,
    pub exit_code: Option<i32>,
    pub final_loss: Option<f64>,
    pub metrics: Option<CellMetrics>,
}

/// Seed means for one (system, alpha) pair over the cells that succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub system: SystemKind,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub top1: Option<f64>,
    pub top3: Option<f64>,
    pub top5: Option<f64>,
    pub accuracy: Option<f64>,
    /// Analysed segments summed over seeds.
    pub segments: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub rows: Vec<SummaryRow>,
    pub cells: Vec<CellRecord>,
}

impl BenchmarkSummary {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn row(&self, system: SystemKind, alpha: f64) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.system == system && r.alpha == alpha)
    }
}

pub fn cell_name(system: SystemKind, alpha: f64, seed: u64) -> String {
    format!("{}_a{alpha}_s{seed}", system.name())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Table rows in suite order, recomputed from the cell records alone.
pub fn summarize(cells: &[CellRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(SystemKind, f64)> = Vec::new();
    for c in cells {
        if !keys.iter().any(|&(s, a)| s == c.system && a == c.alpha) {
            keys.push((c.system, c.alpha));
        }
    }
    keys.into_iter()
        .map(|(system, alpha)| {
            let group: Vec<&CellRecord> = cells.iter().filter(|c| c.system == system && c.alpha == alpha).collect();
            let ok: Vec<&CellMetrics> = group.iter().filter_map(|c| c.metrics.as_ref()).collect();
            let avg = |f: fn(&CellMetrics) -> f64| mean(ok.iter().map(|m| f(m)));
            SummaryRow {
                system,
                alpha,
                seeds: group.iter().filter(|c| c.status == CellStatus::Ok).map(|c| c.seed).collect(),
                failed_seeds: group.iter().filter(|c| c.status == CellStatus::Failed).map(|c| c.seed).collect(),
                precision: avg(|m| m.detection.precision),
                recall: avg(|m| m.detection.recall),
                f1: avg(|m| m.detection.f1),
                top1: avg(|m| m.topk.top1),
                top3: avg(|m| m.topk.top3),
                top5: avg(|m| m.topk.top5),
                accuracy: avg(|m| m.accuracy),
                segments: ok.iter().map(|m| m.segments).sum(),
            }
        })
        .collect()
}

/// Detection, localization and classification tables as plain text.
pub fn render_tables(rows: &[SummaryRow]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    let tables: [(&str, &[&str], fn(&SummaryRow) -> Vec<Option<f64>>); 3] = [
        ("Detection", &["precision", "recall", "F1"], |r| vec![r.precision, r.recall, r.f1]),
        ("Root cause localization", &["top-1", "top-3", "top-5"], |r| vec![r.top1, r.top3, r.top5]),
        ("Anomaly type classification", &["accuracy"], |r| vec![r.accuracy]),
    ];
    for (title, columns, values) in tables {
        let _ = writeln!(out, "{title}");
        let _ = write!(out, "{:<20} {:>6} {:>6}", "system", "alpha", "seeds");
        for c in columns {
            let _ = write!(out, " {c:>10}");
        }
        out.push('\n');
        for r in rows {
            let _ = write!(out, "{:<20} {:>6} {:>6}", r.system.name(), r.alpha, r.seeds.len());
            for v in values(r) {
                let _ = write!(out, " {:>10}", cell(v));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.failed_seeds.is_empty())
        .map(|r| format!("{} alpha {} seeds {:?}", r.system.name(), r.alpha, r.failed_seeds))
        .collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "Failed cells: {}", failed.join("; "));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellTiming {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkMeta {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub wall_seconds: f64,
    pub workers: usize,
    pub cells: Vec<CellTiming>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn cell_dir(root: &Path, name: &str) -> PathBuf {
    root.join(CELLS_DIR).join(name)
}

fn run_cell(cfg: &ExperimentConfig, dir: &Path) -> CliResult<(Option<f64>, CellMetrics)> {
    write_config(dir, cfg)?;
    let data = cmd_simulate(cfg, &dir.join("dataset"))?;
    let trained = cmd_train(&data, cfg, &dir.join("model"))?;
    let analysis = cmd_analyze(&data, &trained.model, cfg, &dir.join("analysis"))?;
    Ok((trained.final_loss(), analysis.metrics))
}

/// Runs every cell, writes the summary files and returns the summary. A
/// failed cell is recorded and the suite carries on; the caller decides the
/// exit status from [`BenchmarkSummary::failed`].
pub fn run_benchmark(cfg: &ExperimentConfig, root: &Path) -> CliResult<BenchmarkSummary> {
    let suite = &cfg.suite;
    if suite.systems.is_empty() || suite.alphas.is_empty() || suite.seeds.is_empty() {
        return Err(CliError::Validation("suite: systems, alphas and seeds must be non-empty".into()));
    }
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    write_config(root, cfg)?;
    let mut jobs = Vec::new();
    for &system in &suite.systems {
        for &alpha in &suite.alphas {
            for &seed in &suite.seeds {
                jobs.push((system, alpha, seed));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(suite.workers.max(1))
        .build()
        .map_err(|e| CliError::Failed(format!("worker pool: {e}")))?;
    let started = unix_now();
    let clock = Instant::now();
    let results: Vec<(CellRecord, f64)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(system, alpha, seed)| {
                let name = cell_name(system, alpha, seed);
                let t = Instant::now();
                let cell_cfg = cfg.cell(system, alpha, seed);
                let outcome = cell_cfg.validate().and_then(|()| run_cell(&cell_cfg, &cell_dir(root, &name)));
                let mut record = CellRecord {
                    name,
                    system,
                    alpha,
                    seed,
                    status: CellStatus::Ok,
                    error: None,
                    exit_code: None,
                    final_loss: None,
                    metrics: None,
                };
                match outcome {
                    Ok((loss, metrics)) => {
                        record.final_loss = loss;
                        record.metrics = Some(metrics);
                    }
                    Err(e) => {
                        record.status = CellStatus::Failed;
                        record.exit_code = Some(e.exit_code());
                        record.error = Some(e.to_string());
                    }
                }
                (record, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let meta = BenchmarkMeta {
        started_unix: started,
        finished_unix: unix_now(),
        wall_seconds: clock.elapsed().as_secs_f64(),
        workers: suite.workers.max(1),
        cells: results.iter().map(|(r, s)| CellTiming { name: r.name.clone(), seconds: *s }).collect(),
    };
    let cells: Vec<CellRecord> = results.into_iter().map(|(r, _)| r).collect();
    let summary = BenchmarkSummary { rows: summarize(&cells), cells };
    let path = root.join(SUMMARY_FILE);
    save_json(&path, &summary).map_err(|e| at(&path, e))?;
    let path = root.join(TABLE_FILE);
    fs::write(&path, render_tables(&summary.rows)).map_err(|e| CliError::io(&path, e))?;
    let path = root.join(META_FILE);
    save_json(&path, &meta).map_err(|e| at(&path, e))?;
    Ok(summary)
}
