//! Simulate, train on the normal period, then detect, classify and localize
//! every anomaly segment.

use std::fs;
use std::path::Path;

use icode::analysis::export::{load_json, save_grid, save_json};
use icode::analysis::{
    anomaly_scores, binarize_causality, causality_matrix, diff_matrix, pick_threshold, root_cause, theorem1_check,
    topk_summary, accuracy, Binarized, CheckStatus, DetectionMetrics, DetectionReport, Theorem1Report, TopK,
};
use icode::anomaly::{build_dataset, AnomalyKind, AnomalySegment, DatasetTriple, LabeledDataset};
use icode::model::{train, train_pairs, IcodeModel, PairSet, TrainOutcome};
use icode::ode::DependencyGraph;
use icode::Tensor64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Baseline, ExperimentConfig, NeighborGraph};
use crate::error::{CliError, CliResult};

pub fn simulate(cfg: &ExperimentConfig) -> CliResult<DatasetTriple<f64>> {
    let spec = cfg.system.build()?;
    Ok(build_dataset(&spec, &cfg.protocol)?)
}

pub fn train_normal(data: &DatasetTriple<f64>, cfg: &ExperimentConfig) -> CliResult<TrainOutcome<f64>> {
    Ok(train(&data.normal.trajectory, &cfg.train)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDetection {
    pub period: String,
    pub report: DetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub window: usize,
    pub quantile: f64,
    pub threshold: f64,
    pub normal_scores: Vec<f64>,
    /// The cyber and measurement periods.
    pub periods: Vec<PeriodDetection>,
    /// Per-sample counts summed over `periods`.
    pub pooled: DetectionMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopkHits {
    pub top1: bool,
    pub top3: bool,
    pub top5: bool,
}

impl TopkHits {
    pub fn of(ranking: &[usize], root: usize) -> Self {
        let within = |k: usize| ranking.iter().take(k).any(|&v| v == root);
        Self { top1: within(1), top3: within(3), top5: within(5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    pub period: String,
    /// Position in the period's `segments.json`.
    pub index: usize,
    pub true_kind: AnomalyKind,
    pub true_root: usize,
    pub alpha: f64,
    pub offset: f64,
    pub start: usize,
    pub length: usize,
    pub measurement_score: f64,
    pub degenerate: bool,
    pub predicted_kind: AnomalyKind,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
    pub hits: TopkHits,
    pub theorem1: Theorem1Report,
    pub retrain_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Tally {
    pub measurement_pass: usize,
    pub measurement_total: usize,
    pub cyber_pass: usize,
    pub cyber_total: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub detection: DetectionMetrics,
    pub topk: TopK,
    pub accuracy: f64,
    pub segments: usize,
    pub theorem1: Theorem1Tally,
}

/// Recomputes the cell-level numbers from the per-segment records.
pub fn aggregate(detection: &DetectionMetrics, records: &[SegmentRecord]) -> CliResult<CellMetrics> {
    let rankings: Vec<Vec<usize>> = records.iter().map(|r| r.ranking.clone()).collect();
    let roots: Vec<usize> = records.iter().map(|r| r.true_root).collect();
    let predicted: Vec<AnomalyKind> = records.iter().map(|r| r.predicted_kind).collect();
    let truth: Vec<AnomalyKind> = records.iter().map(|r| r.true_kind).collect();
    let mut t = Theorem1Tally::default();
    for r in records {
        let pass = r.theorem1.status == CheckStatus::Pass;
        if r.theorem1.status == CheckStatus::Inconclusive {
            t.inconclusive += 1;
        }
        match r.true_kind {
            AnomalyKind::Measurement => {
                t.measurement_total += 1;
                t.measurement_pass += pass as usize;
            }
            AnomalyKind::Cyber => {
                t.cyber_total += 1;
                t.cyber_pass += pass as usize;
            }
        }
    }
    Ok(CellMetrics {
        detection: detection.clone(),
        topk: topk_summary(&rankings, &roots)?,
        accuracy: accuracy(&predicted, &truth)?,
        segments: records.len(),
        theorem1: t,
    })
}

pub struct SegmentAnalysis {
    pub record: SegmentRecord,
    pub c_prime: Tensor64,
    pub diff: Tensor64,
}

pub struct Analysis {
    pub detection: DetectionSummary,
    /// Causality matrix of the normal-period model.
    pub causality: Tensor64,
    pub graph: Binarized,
    pub segments: Vec<SegmentAnalysis>,
    pub metrics: CellMetrics,
}

/// Per-window detection on one period against the shared threshold.
fn detect_period(
    model: &IcodeModel<f64>,
    ds: &LabeledDataset<f64>,
    threshold: f64,
    cfg: &ExperimentConfig,
) -> CliResult<DetectionReport> {
    let scores = anomaly_scores(model, &ds.trajectory, cfg.analysis.window, &cfg.train)?;
    Ok(DetectionReport::new(&scores, threshold, Some(&ds.labels))?)
}

pub fn detect(model: &IcodeModel<f64>, data: &DatasetTriple<f64>, cfg: &ExperimentConfig) -> CliResult<DetectionSummary> {
    let a = &cfg.analysis;
    let normal = anomaly_scores(model, &data.normal.trajectory, a.window, &cfg.train)?;
    // A window the model predicts exactly is never anomalous, even when the
    // quantile of the normal scores is 0.
    let threshold = pick_threshold(&normal.scores, a.quantile)?.max(f64::MIN_POSITIVE);
    let mut periods = Vec::new();
    for (name, ds) in [("cyber", &data.cyber), ("measurement", &data.measurement)] {
        periods.push(PeriodDetection { period: name.into(), report: detect_period(model, ds, threshold, cfg)? });
    }
    let pooled = DetectionMetrics::pooled(periods.iter().filter_map(|p| p.report.metrics.as_ref()));
    Ok(DetectionSummary { window: a.window, quantile: a.quantile, threshold, normal_scores: normal.scores, periods, pooled })
}

struct SegmentJob<'a> {
    period: &'static str,
    index: usize,
    data: &'a LabeledDataset<f64>,
    segment: &'a AnomalySegment<f64>,
}

fn analyze_segment(
    job: &SegmentJob,
    model: &IcodeModel<f64>,
    c_normal: &Tensor64,
    graph: &DependencyGraph,
    truth: &DependencyGraph,
    cfg: &ExperimentConfig,
) -> CliResult<SegmentAnalysis> {
    let seg = job.segment;
    let traj = job.data.trajectory.slice(seg.start..seg.end())?;
    let pairs = PairSet::from_trajectory(&traj)?;
    let retrain_cfg = cfg.analysis.retrain_config(&cfg.train);
    let outcome = train_pairs(model.clone(), &pairs, &retrain_cfg)?;
    let c_prime = causality_matrix(&outcome.model, &traj)?;
    let c_segment;
    let c = match cfg.analysis.baseline {
        Baseline::Normal => c_normal,
        Baseline::Segment => {
            c_segment = causality_matrix(model, &traj)?;
            &c_segment
        }
    };
    let diff = diff_matrix(c, &c_prime)?;
    let neighbours = match cfg.analysis.neighbor_graph {
        NeighborGraph::Normal => graph.clone(),
        NeighborGraph::Retrained => binarize_causality(&c_prime)?.graph,
    };
    let a = &cfg.analysis;
    let rca = root_cause(c, &c_prime, &neighbours, a.top_m, a.cutoff, Some(seg.root))?;
    let theorem1 = theorem1_check(&diff, seg.kind, seg.root, truth, a.top_m)?;
    let record = SegmentRecord {
        id: format!("{}_{:02}", job.period, job.index),
        period: job.period.to_string(),
        index: job.index,
        true_kind: seg.kind,
        true_root: seg.root,
        alpha: seg.alpha,
        offset: seg.offset,
        start: seg.start,
        length: seg.length,
        measurement_score: rca.measurement_score,
        degenerate: rca.degenerate,
        predicted_kind: rca.kind,
        hits: TopkHits::of(&rca.ranking, seg.root),
        scores: rca.scores,
        ranking: rca.ranking,
        theorem1,
        retrain_loss: outcome.final_loss(),
    };
    Ok(SegmentAnalysis { record, c_prime, diff })
}

/// Detection on both anomalous periods, then retraining, classification,
/// localization and the Theorem-1 checks for every segment.
pub fn analyze(data: &DatasetTriple<f64>, model: &IcodeModel<f64>, cfg: &ExperimentConfig) -> CliResult<Analysis> {
    cfg.analysis.validate()?;
    let p = data.normal.trajectory.p();
    if model.p() != p {
        return Err(CliError::Validation(format!("checkpoint has p = {}, dataset has p = {p}", model.p())));
    }
    let detection = detect(model, data, cfg)?;
    let causality = causality_matrix(model, &data.normal.trajectory)?;
    let graph = binarize_causality(&causality)?;
    let truth = data.normal.spec.ground_truth_graph();

    let mut jobs = Vec::new();
    for (period, ds) in [("cyber", &data.cyber), ("measurement", &data.measurement)] {
        for (index, segment) in ds.segments.iter().enumerate() {
            jobs.push(SegmentJob { period, index, data: ds, segment });
        }
    }
    let segments = jobs
        .par_iter()
        .map(|job| analyze_segment(job, model, &causality, &graph.graph, &truth, cfg))
        .collect::<CliResult<Vec<_>>>()?;
    let records: Vec<SegmentRecord> = segments.iter().map(|s| s.record.clone()).collect();
    let metrics = aggregate(&detection.pooled, &records)?;
    Ok(Analysis { detection, causality, graph, segments, metrics })
}

pub fn graph_grid(g: &DependencyGraph) -> Tensor64 {
    let p = g.p();
    Tensor64::matrix(p, p, g.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).expect("square")
}

pub const DETECTION_FILE: &str = "detection.json";
pub const RECORDS_FILE: &str = "rca.json";
pub const METRICS_FILE: &str = "metrics.json";

impl Analysis {
    /// `detection.json`, `rca.json`, `metrics.json`, `causality.csv`,
    /// `graph.csv` and `segments/<id>/{c_prime,diff}.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let io = |e: icode::Error| CliError::io(dir, e);
        fs::create_dir_all(dir.join("segments")).map_err(|e| CliError::io(dir, e))?;
        save_json(&dir.join(DETECTION_FILE), &self.detection).map_err(io)?;
        let records: Vec<&SegmentRecord> = self.segments.iter().map(|s| &s.record).collect();
        save_json(&dir.join(RECORDS_FILE), &records).map_err(io)?;
        save_json(&dir.join(METRICS_FILE), &self.metrics).map_err(io)?;
        save_grid(&dir.join("causality.csv"), &self.causality).map_err(io)?;
        save_grid(&dir.join("graph.csv"), &graph_grid(&self.graph.graph)).map_err(io)?;
        for s in &self.segments {
            let d = dir.join("segments").join(&s.record.id);
            fs::create_dir_all(&d).map_err(|e| CliError::io(&d, e))?;
            save_grid(&d.join("c_prime.csv"), &s.c_prime).map_err(io)?;
            save_grid(&d.join("diff.csv"), &s.diff).map_err(io)?;
        }
        Ok(())
    }
}

pub fn load_records(dir: &Path) -> CliResult<Vec<SegmentRecord>> {
    load_json(&dir.join(RECORDS_FILE)).map_err(|e| CliError::io(&dir.join(RECORDS_FILE), e))
}

pub fn load_detection(dir: &Path) -> CliResult<DetectionSummary> {
    load_json(&dir.join(DETECTION_FILE)).map_err(|e| CliError::io(&dir.join(DETECTION_FILE), e))
}

pub fn load_metrics(dir: &Path) -> CliResult<CellMetrics> {
    load_json(&dir.join(METRICS_FILE)).map_err(|e| CliError::io(&dir.join(METRICS_FILE), e))
}
