//! Measurement and cyber anomalies, and labelled experiment datasets.
//!
//! Both anomaly kinds shift one variable by an offset `a ~ N(alpha, 1)`.
//! A measurement anomaly edits recorded readings after simulation; a cyber
//! anomaly feeds the shifted value into the dynamics so it propagates along
//! the dependency graph.

mod dataset;
pub(crate) mod io;

pub use dataset::{build_dataset, DatasetTriple, Protocol};
pub use io::DatasetMeta;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{integrate_perturbed, DependencyGraph, Method, SystemSpec, Trajectory};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Measurement,
    Cyber,
}

impl std::fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AnomalyKind::Measurement => "measurement",
            AnomalyKind::Cyber => "cyber",
        })
    }
}

/// Whether the offset is drawn once per segment or afresh at every step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    #[default]
    PerSegment,
    PerStep,
}

/// One anomaly instance on rows `[start, start + length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySegment<T> {
    pub kind: AnomalyKind,
    pub root: usize,
    pub alpha: T,
    pub offset: T,
    pub start: usize,
    pub length: usize,
}

impl<T: Scalar> AnomalySegment<T> {
    /// Segment with an offset drawn from `N(alpha, 1)`.
    pub fn draw(
        kind: AnomalyKind,
        root: usize,
        alpha: T,
        start: usize,
        length: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let offset = T::of(unit_normal(alpha.as_f64()).sample(rng));
        Self { kind, root, alpha, offset, start, length }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, row: usize) -> bool {
        (self.start..self.end()).contains(&row)
    }

    fn check_window(&self, rows: usize, p: usize) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidArgument("anomaly segment length must be >= 1".into()));
        }
        if self.end() > rows {
            return Err(Error::InvalidArgument(format!(
                "anomaly window [{}, {}) exceeds {rows} rows",
                self.start,
                self.end()
            )));
        }
        if self.root >= p {
            return Err(Error::InvalidArgument(format!("root {} out of range for p = {p}", self.root)));
        }
        Ok(())
    }
}

fn unit_normal(mean: f64) -> Normal<f64> {
    Normal::new(mean, 1.0).expect("unit variance is valid")
}

/// Per-row offsets of `seg`: constant, or one fresh draw per row.
fn offsets<T: Scalar>(seg: &AnomalySegment<T>, mode: OffsetMode, seed: u64) -> Vec<T> {
    match mode {
        OffsetMode::PerSegment => vec![seg.offset; seg.length],
        OffsetMode::PerStep => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dist = unit_normal(seg.alpha.as_f64());
            (0..seg.length).map(|_| T::of(dist.sample(&mut rng))).collect()
        }
    }
}

/// Adds the segment's offset to column `root` on the window rows; every other
/// entry is copied unchanged.
pub fn inject_measurement<T: Scalar>(
    traj: &Trajectory<T>,
    segment: &AnomalySegment<T>,
    mode: OffsetMode,
    seed: u64,
) -> Result<Trajectory<T>> {
    segment.check_window(traj.len(), traj.p())?;
    let mut out = traj.clone();
    for (r, a) in (segment.start..segment.end()).zip(offsets(segment, mode, seed)) {
        let v = &mut out.row_mut(r)[segment.root];
        *v = *v + a;
    }
    Ok(out)
}

/// Simulates `steps` steps from `x0`; while inside the segment window every
/// derivative evaluation sees `x + a·e_root`.
pub fn inject_cyber<T: Scalar>(
    spec: &SystemSpec<T>,
    x0: &[T],
    segment: &AnomalySegment<T>,
    dt: T,
    steps: usize,
    method: Method,
    mode: OffsetMode,
    seed: u64,
) -> Result<Trajectory<T>> {
    simulate_cyber(spec, x0, std::slice::from_ref(segment), dt, steps, method, mode, seed)
}

/// Multi-segment form of [`inject_cyber`]; segments must not overlap.
#[allow(clippy::too_many_arguments)]
pub(crate) fn simulate_cyber<T: Scalar>(
    spec: &SystemSpec<T>,
    x0: &[T],
    segments: &[AnomalySegment<T>],
    dt: T,
    steps: usize,
    method: Method,
    mode: OffsetMode,
    seed: u64,
) -> Result<Trajectory<T>> {
    let rows = steps + 1;
    let mut shift: Vec<Option<(usize, T)>> = vec![None; rows];
    for (i, seg) in segments.iter().enumerate() {
        seg.check_window(rows, spec.p())?;
        let seg_seed = seed.wrapping_add(i as u64);
        for (r, a) in (seg.start..seg.end()).zip(offsets(seg, mode, seg_seed)) {
            if shift[r].is_some() {
                return Err(Error::InvalidArgument(format!("anomaly segments overlap at row {r}")));
            }
            shift[r] = Some((seg.root, a));
        }
    }
    integrate_perturbed(spec, x0, dt, steps, method, |n| shift[n])
}

/// A trajectory with per-row anomaly labels and the segments that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    pub trajectory: Trajectory<T>,
    pub labels: Vec<u8>,
    pub segments: Vec<AnomalySegment<T>>,
    pub spec: SystemSpec<T>,
    pub graph: DependencyGraph,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Labels are rebuilt from the segments.
    pub fn new(trajectory: Trajectory<T>, segments: Vec<AnomalySegment<T>>, spec: SystemSpec<T>) -> Result<Self> {
        let labels = labels_for(trajectory.len(), &segments)?;
        let graph = spec.ground_truth_graph();
        Ok(Self { trajectory, labels, segments, spec, graph })
    }

    pub fn anomalous_rows(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

pub(crate) fn labels_for<T>(rows: usize, segments: &[AnomalySegment<T>]) -> Result<Vec<u8>> {
    let mut labels = vec![0u8; rows];
    for seg in segments {
        if seg.start + seg.length > rows {
            return Err(Error::InvalidArgument(format!(
                "segment [{}, {}) exceeds {rows} rows",
                seg.start,
                seg.start + seg.length
            )));
        }
        for l in &mut labels[seg.start..seg.start + seg.length] {
            if *l == 1 {
                return Err(Error::InvalidArgument(format!("segments overlap near row {}", seg.start)));
            }
            *l = 1;
        }
    }
    Ok(labels)
}
