//! Experiment configuration: one JSON document with full defaulting.
//!
//! ```json
//! {
//!   "system":   { "kind": "reaction_diffusion", "p": 20, "forcing": 10.0, "seed": 0 },
//!   "protocol": { "points_per_period": 20000, "downsample_to": 2000, "n_segments": 20, "alpha": 1.0, ... },
//!   "train":    { "lambda": 0.01, "epochs": 200, "batch_size": 128, "lr": 0.001, ... },
//!   "analysis": { "window": 25, "quantile": 0.99, "top_m": 10, "cutoff": 0.8, "retrain_epochs": 50, ... },
//!   "suite":    { "systems": ["reaction_diffusion"], "alphas": [1.0], "seeds": [0], "workers": 1 },
//!   "output_dir": "runs"
//! }
//! ```
//!
//! Every field may be omitted. `--set a.b=value` overrides one field; the
//! value is parsed as JSON and falls back to a plain string.

use std::path::{Path, PathBuf};

use icode::anomaly::Protocol;
use icode::model::TrainConfig;
use icode::ode::{SystemKind, SystemSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "ICODE_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "icode-runs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    pub p: usize,
    /// Lorenz-96 forcing `F`.
    pub forcing: f64,
    /// Draws the random Lotka-Volterra coefficients.
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { kind: SystemKind::ReactionDiffusion, p: 20, forcing: 10.0, seed: 0 }
    }
}

impl SystemConfig {
    pub fn build(&self) -> CliResult<SystemSpec<f64>> {
        let spec = match self.kind {
            SystemKind::Lorenz96 => SystemSpec::lorenz96(self.p, self.forcing),
            kind => SystemSpec::standard(kind, self.p, self.seed),
        };
        spec.map_err(|e| CliError::validation("system", e))
    }
}

/// Which causality graph supplies the neighbourhoods of the cyber rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborGraph {
    /// Binarized `C` of the normal-period model.
    #[default]
    Normal,
    /// Binarized `C'` of the retrained model.
    Retrained,
}

/// States on which the normal model's `C` is evaluated before differencing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The anomalous segment itself, the same states as `C'`.
    #[default]
    Segment,
    /// The whole normal period.
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Samples per detection window.
    pub window: usize,
    /// Quantile of normal-period window scores used as the threshold.
    pub quantile: f64,
    pub top_m: usize,
    pub cutoff: f64,
    /// Warm-start epochs on each anomalous segment.
    pub retrain_epochs: usize,
    /// Learning rate for the warm start; `None` keeps `train.lr`.
    pub retrain_lr: Option<f64>,
    /// Minibatch size for the warm start; `None` keeps `train.batch_size`.
    pub retrain_batch_size: Option<usize>,
    pub neighbor_graph: NeighborGraph,
    pub baseline: Baseline,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: 25,
            quantile: 0.99,
            top_m: icode::analysis::DEFAULT_TOP_M,
            cutoff: icode::analysis::DEFAULT_CUTOFF,
            retrain_epochs: 50,
            retrain_lr: None,
            retrain_batch_size: None,
            neighbor_graph: NeighborGraph::Normal,
            baseline: Baseline::Segment,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Validation(format!("analysis: {m}")));
        if self.window == 0 {
            return bad("window must be >= 1".into());
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return bad(format!("quantile must lie in (0, 1), got {}", self.quantile));
        }
        if self.top_m == 0 {
            return bad("top_m must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return bad(format!("cutoff must lie in [0, 1], got {}", self.cutoff));
        }
        if self.retrain_lr.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
            return bad(format!("retrain_lr must be positive, got {:?}", self.retrain_lr));
        }
        if self.retrain_batch_size == Some(0) {
            return bad("retrain_batch_size must be >= 1".into());
        }
        Ok(())
    }

    /// Training settings for the warm start on one anomalous segment.
    pub fn retrain_config(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            epochs: self.retrain_epochs,
            lr: self.retrain_lr.unwrap_or(base.lr),
            batch_size: self.retrain_batch_size.unwrap_or(base.batch_size),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub systems: Vec<SystemKind>,
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Cells run concurrently.
    pub workers: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { systems: vec![SystemKind::ReactionDiffusion], alphas: vec![1.0], seeds: vec![0], workers: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub protocol: Protocol,
    pub train: TrainConfig,
    pub analysis: AnalysisConfig,
    pub suite: SuiteConfig,
    /// Defaults to `$ICODE_OUTPUT_ROOT`, then `icode-runs`.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            protocol: Protocol::desk(),
            train: TrainConfig::default(),
            analysis: AnalysisConfig::default(),
            suite: SuiteConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (defaults when `None`) and applies `key=value` overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        // Partial sections merge into the defaults field by field, so
        // `{"protocol": {"alpha": 5}}` keeps the rest of the desk protocol.
        let mut doc = serde_json::to_value(Self::default()).expect("default config serializes");
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let file = serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
            if !file.is_object() {
                return Err(CliError::Validation(format!("{}: top level must be an object", p.display())));
            }
            merge(&mut doc, file);
        }
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.system.build()?;
        self.protocol.validate().map_err(|e| CliError::validation("protocol", e))?;
        self.train.validate().map_err(|e| CliError::validation("train", e))?;
        self.analysis.validate()
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
    }

    /// The same experiment on another system, alpha and seed. The seed drives
    /// the data, the training and (for Lotka-Volterra) the coefficients.
    pub fn cell(&self, kind: SystemKind, alpha: f64, seed: u64) -> Self {
        let mut c = self.clone();
        c.system.kind = kind;
        c.system.seed = seed;
        c.protocol.alpha = alpha;
        c.protocol.seed = seed;
        c.train.seed = seed;
        c
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(doc: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Validation(format!("override key {key:?} has an empty component")));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}
