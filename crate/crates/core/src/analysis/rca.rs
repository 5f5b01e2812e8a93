use serde::{Deserialize, Serialize};

use super::causality::diff_matrix;
use crate::anomaly::AnomalyKind;
use crate::error::{Error, Result};
use crate::ode::DependencyGraph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_TOP_M: usize = 10;
pub const DEFAULT_CUTOFF: f64 = 0.8;

/// Concentration of the largest entries of `D = |C - C'|` on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementScore {
    /// Largest fraction of the selected entries sharing a row or a column.
    pub score: f64,
    /// The m-th largest entry; every entry at or above it is selected.
    pub gamma: f64,
    /// Row-major `p×p` selection mask.
    pub top_mask: Vec<bool>,
    pub selected: usize,
    /// `D` is identically zero.
    pub degenerate: bool,
}

fn square<T: Scalar>(d: &Tensor<T>, op: &'static str) -> Result<usize> {
    if d.rank() != 2 || d.rows() != d.cols() {
        return Err(Error::shape(op, format!("{:?} is not square", d.shape())));
    }
    Ok(d.rows())
}

/// Score of `D = |C - C'|`; see [`top_m_concentration`].
pub fn measurement_score<T: Scalar>(c: &Tensor<T>, c_prime: &Tensor<T>, m: usize) -> Result<MeasurementScore> {
    top_m_concentration(&diff_matrix(c, c_prime)?, m)
}

/// Selects the `m` largest entries of `d` (all ties at the cut) and returns
/// the best row or column share of the selection.
pub fn top_m_concentration<T: Scalar>(d: &Tensor<T>, m: usize) -> Result<MeasurementScore> {
    let p = square(d, "measurement_score")?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let v: Vec<f64> = d.data().iter().map(|x| x.as_f64()).collect();
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument("difference matrix must be finite and nonnegative".into()));
    }
    if v.iter().all(|&x| x == 0.0) {
        return Ok(MeasurementScore { score: 0.0, gamma: 0.0, top_mask: vec![false; p * p], selected: 0, degenerate: true });
    }
    let mut sorted = v.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    let gamma = sorted[m.min(sorted.len()) - 1];
    let top_mask: Vec<bool> = v.iter().map(|&x| x >= gamma).collect();
    let selected = top_mask.iter().filter(|&&b| b).count();
    let mut best = 0;
    for line in 0..p {
        let row = (0..p).filter(|&j| top_mask[line * p + j]).count();
        let col = (0..p).filter(|&i| top_mask[i * p + line]).count();
        best = best.max(row).max(col);
    }
    Ok(MeasurementScore { score: best as f64 / selected as f64, gamma, top_mask, selected, degenerate: false })
}

/// Measurement iff `score >= cutoff`.
pub fn classify(score: f64, cutoff: f64) -> AnomalyKind {
    if score >= cutoff {
        AnomalyKind::Measurement
    } else {
        AnomalyKind::Cyber
    }
}

/// `S(i) = Σ_j D(i,j) + Σ_j D(j,i)`.
pub fn root_cause_measurement<T: Scalar>(d: &Tensor<T>) -> Result<Vec<T>> {
    let p = square(d, "root_cause_measurement")?;
    let mut s = vec![T::zero(); p];
    for i in 0..p {
        for j in 0..p {
            let v = d.at(i, j);
            s[i] = s[i] + v;
            s[j] = s[j] + v;
        }
    }
    Ok(s)
}

/// `S'(i) = Σ S(k)` over `k` adjacent to `i` in either direction; `i` itself
/// counts only through a self-loop.
pub fn root_cause_cyber<T: Scalar>(s: &[T], graph: &DependencyGraph) -> Result<Vec<T>> {
    let p = graph.p();
    if s.len() != p {
        return Err(Error::shape("root_cause_cyber", format!("{} scores for a {p}-node graph", s.len())));
    }
    Ok((0..p)
        .map(|i| (0..p).filter(|&k| graph.get(i, k) || graph.get(k, i)).map(|k| s[k]).sum())
        .collect())
}

/// Indices by descending score; equal scores keep ascending index order.
pub fn ranking<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub kind: AnomalyKind,
    /// `S` for measurement anomalies, `S'` for cyber anomalies.
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
}

/// Ranks candidate root causes for an anomaly of the given kind; `graph` is
/// the binarized causality graph used by the cyber rule.
pub fn localize<T: Scalar>(kind: AnomalyKind, d: &Tensor<T>, graph: &DependencyGraph) -> Result<Localization> {
    let s = root_cause_measurement(d)?;
    let scores = match kind {
        AnomalyKind::Measurement => s,
        AnomalyKind::Cyber => {
            if graph.p() != d.rows() {
                return Err(Error::shape("localize", format!("graph p = {} for {}×{} D", graph.p(), d.rows(), d.rows())));
            }
            root_cause_cyber(&s, graph)?
        }
    };
    Ok(Localization { kind, ranking: ranking(&scores), scores: scores.iter().map(|v| v.as_f64()).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaResult {
    pub kind: AnomalyKind,
    pub measurement_score: f64,
    pub degenerate: bool,
    pub scores: Vec<f64>,
    pub ranking: Vec<usize>,
    pub true_root: Option<usize>,
}

/// Classifies the change from `c` to `c_prime` and ranks root causes.
pub fn root_cause<T: Scalar>(
    c: &Tensor<T>,
    c_prime: &Tensor<T>,
    graph: &DependencyGraph,
    m: usize,
    cutoff: f64,
    true_root: Option<usize>,
) -> Result<RcaResult> {
    let d = diff_matrix(c, c_prime)?;
    let ms = top_m_concentration(&d, m)?;
    let kind = classify(ms.score, cutoff);
    let loc = localize(kind, &d, graph)?;
    Ok(RcaResult {
        kind,
        measurement_score: ms.score,
        degenerate: ms.degenerate,
        scores: loc.scores,
        ranking: loc.ranking,
        true_root,
    })
}
