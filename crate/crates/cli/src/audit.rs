//! Recomputes every reported number from the persisted artefacts.
//!
//! Detection flags and metrics come from the stored window scores and the
//! dataset labels; classification, localization and the Theorem-1 checks
//! come from each segment's `diff.csv` and the stored graph; cell metrics
//! and summary rows are re-aggregated from those. Any difference is listed.

use std::path::Path;

use icode::analysis::export::{load_grid, load_json};
use icode::analysis::{
    binarize_causality, classify, localize, pick_threshold, theorem1_check, top_m_concentration, DetectionMetrics,
    DetectionReport, WindowScores,
};
use icode::anomaly::{DatasetTriple, LabeledDataset};
use icode::ode::DependencyGraph;
use icode::Tensor64;
use serde::Serialize;

use crate::benchmark::{cell_dir, summarize, BenchmarkSummary, CellStatus, SUMMARY_FILE};
use crate::commands::{at, load_dataset, CONFIG_FILE};
use crate::config::{ExperimentConfig, NeighborGraph};
use crate::error::{CliError, CliResult};
use crate::pipeline::{aggregate, load_detection, load_metrics, load_records, CellMetrics, TopkHits};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    /// Individual values compared.
    pub checked: usize,
    pub mismatches: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    fn compare<V: PartialEq + std::fmt::Debug>(&mut self, what: impl FnOnce() -> String, stored: &V, recomputed: &V) {
        self.checked += 1;
        if stored != recomputed {
            self.mismatches.push(format!("{}: stored {stored:?}, recomputed {recomputed:?}", what()));
        }
    }

    fn absorb(&mut self, prefix: &str, other: AuditReport) {
        self.checked += other.checked;
        self.mismatches.extend(other.mismatches.into_iter().map(|m| format!("{prefix}: {m}")));
    }
}

fn grid(path: &Path) -> CliResult<Tensor64> {
    load_grid(path).map_err(|e| at(path, e))
}

fn read_config(dir: &Path) -> CliResult<ExperimentConfig> {
    let path = dir.join(CONFIG_FILE);
    load_json(&path).map_err(|e| at(&path, e))
}

fn graph_from_grid(g: &Tensor64) -> DependencyGraph {
    let p = g.rows();
    DependencyGraph::from_fn(p, |i, j| g.data()[i * p + j] != 0.0)
}

fn period<'a>(data: &'a DatasetTriple<f64>, name: &str) -> CliResult<&'a LabeledDataset<f64>> {
    match name {
        "cyber" => Ok(&data.cyber),
        "measurement" => Ok(&data.measurement),
        other => Err(CliError::Io(format!("unknown period {other:?} in stored records"))),
    }
}

/// Audits one `analysis/` directory against its dataset and returns the
/// recomputed cell metrics.
pub fn audit_analysis(dataset: &Path, analysis: &Path) -> CliResult<(CellMetrics, AuditReport)> {
    let cfg = read_config(analysis)?;
    let a = &cfg.analysis;
    let data = load_dataset(dataset)?;
    let mut report = AuditReport::default();

    let detection = load_detection(analysis)?;
    let threshold = pick_threshold(&detection.normal_scores, detection.quantile)?.max(f64::MIN_POSITIVE);
    report.compare(|| "detection threshold".into(), &detection.threshold, &threshold);
    let mut parts = Vec::new();
    for p in &detection.periods {
        let ds = period(&data, &p.period)?;
        let scores = WindowScores {
            window: detection.window,
            residuals: vec![0.0; ds.trajectory.len()],
            scores: p.report.scores.clone(),
        };
        let again = DetectionReport::new(&scores, threshold, Some(&ds.labels))?;
        report.compare(|| format!("{} flags", p.period), &p.report.flags, &again.flags);
        report.compare(|| format!("{} detection metrics", p.period), &p.report.metrics, &again.metrics);
        parts.extend(again.metrics);
    }
    let pooled = DetectionMetrics::pooled(parts.iter());
    report.compare(|| "pooled detection".into(), &detection.pooled, &pooled);

    let normal_graph = graph_from_grid(&grid(&analysis.join("graph.csv"))?);
    let truth = data.normal.spec.ground_truth_graph();
    let records = load_records(analysis)?;
    for r in &records {
        let seg = period(&data, &r.period)?
            .segments
            .get(r.index)
            .ok_or_else(|| CliError::Io(format!("{}: no segment {} in the dataset", r.id, r.index)))?;
        report.compare(|| format!("{} true kind", r.id), &r.true_kind, &seg.kind);
        report.compare(|| format!("{} true root", r.id), &r.true_root, &seg.root);
        report.compare(|| format!("{} start", r.id), &r.start, &seg.start);

        let dir = analysis.join("segments").join(&r.id);
        let d = grid(&dir.join("diff.csv"))?;
        let ms = top_m_concentration(&d, a.top_m)?;
        let kind = classify(ms.score, a.cutoff);
        let graph = match a.neighbor_graph {
            NeighborGraph::Normal => normal_graph.clone(),
            NeighborGraph::Retrained => binarize_causality(&grid(&dir.join("c_prime.csv"))?)?.graph,
        };
        let loc = localize(kind, &d, &graph)?;
        report.compare(|| format!("{} M", r.id), &r.measurement_score, &ms.score);
        report.compare(|| format!("{} predicted kind", r.id), &r.predicted_kind, &kind);
        report.compare(|| format!("{} scores", r.id), &r.scores, &loc.scores);
        report.compare(|| format!("{} ranking", r.id), &r.ranking, &loc.ranking);
        report.compare(|| format!("{} hits", r.id), &r.hits, &TopkHits::of(&loc.ranking, seg.root));
        let th = theorem1_check(&d, seg.kind, seg.root, &truth, a.top_m)?;
        report.compare(|| format!("{} theorem1", r.id), &r.theorem1, &th);
    }

    let metrics = aggregate(&pooled, &records)?;
    report.compare(|| "metrics.json".into(), &load_metrics(analysis)?, &metrics);
    Ok((metrics, report))
}

/// Audits every successful cell of a benchmark root and the summary rows.
pub fn audit_benchmark(root: &Path) -> CliResult<AuditReport> {
    let path = root.join(SUMMARY_FILE);
    let summary: BenchmarkSummary = load_json(&path).map_err(|e| at(&path, e))?;
    let mut report = AuditReport::default();
    let mut cells = summary.cells.clone();
    for cell in cells.iter_mut().filter(|c| c.status == CellStatus::Ok) {
        let dir = cell_dir(root, &cell.name);
        let (metrics, sub) = audit_analysis(&dir.join("dataset"), &dir.join("analysis"))?;
        report.absorb(&cell.name, sub);
        report.compare(|| format!("{} summary metrics", cell.name), &cell.metrics, &Some(metrics.clone()));
        cell.metrics = Some(metrics);
    }
    let rows = summarize(&cells);
    report.compare(|| "summary rows".into(), &summary.rows, &rows);
    Ok(report)
}
