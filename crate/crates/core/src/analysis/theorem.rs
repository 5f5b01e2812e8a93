use serde::{Deserialize, Serialize};

use super::rca::top_m_concentration;
use crate::anomaly::AnomalyKind;
use crate::error::{Error, Result};
use crate::ode::DependencyGraph;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

/// Where the largest entries of `|C - C'|` sit relative to the true root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub kind: AnomalyKind,
    pub root: usize,
    pub status: CheckStatus,
    /// Share of the selected entries on row `root` or column `root`.
    pub root_line_fraction: f64,
    /// Largest share of the selected entries on any single row or column.
    pub max_line_fraction: f64,
    /// Share of the selected entries that are true edges touching the
    /// root's closed neighbourhood.
    pub neighborhood_edge_fraction: f64,
}

const CONCENTRATED: f64 = 0.8;
const ON_EDGES: f64 = 0.5;

/// Measurement: at least 80% of the top-`m` selection lies on the root's row
/// or column. Cyber: no line holds 80% of the selection and at least half of
/// it lies on true edges incident to the root's closed neighbourhood.
pub fn theorem1_check<T: Scalar>(
    d: &Tensor<T>,
    kind: AnomalyKind,
    root: usize,
    truth: &DependencyGraph,
    m: usize,
) -> Result<Theorem1Report> {
    let p = d.rows();
    if truth.p() != p || root >= p {
        return Err(Error::shape("theorem1_check", format!("root {root}, graph p = {}, D is {p}×{p}", truth.p())));
    }
    let sel = top_m_concentration(d, m)?;
    if sel.degenerate {
        return Ok(Theorem1Report {
            kind,
            root,
            status: CheckStatus::Inconclusive,
            root_line_fraction: 0.0,
            max_line_fraction: 0.0,
            neighborhood_edge_fraction: 0.0,
        });
    }
    let hood = truth.closed_neighborhood(root);
    let (mut on_root, mut on_edges) = (0usize, 0usize);
    for i in 0..p {
        for j in 0..p {
            if !sel.top_mask[i * p + j] {
                continue;
            }
            if i == root || j == root {
                on_root += 1;
            }
            if truth.get(i, j) && (hood.contains(&i) || hood.contains(&j)) {
                on_edges += 1;
            }
        }
    }
    let n = sel.selected as f64;
    let root_line_fraction = on_root as f64 / n;
    let neighborhood_edge_fraction = on_edges as f64 / n;
    let pass = match kind {
        AnomalyKind::Measurement => root_line_fraction >= CONCENTRATED,
        AnomalyKind::Cyber => sel.score < CONCENTRATED && neighborhood_edge_fraction >= ON_EDGES,
    };
    Ok(Theorem1Report {
        kind,
        root,
        status: if pass { CheckStatus::Pass } else { CheckStatus::Fail },
        root_line_fraction,
        max_line_fraction: sel.score,
        neighborhood_edge_fraction,
    })
}
