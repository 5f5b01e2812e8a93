use serde::{Deserialize, Serialize};

/// Square boolean adjacency; `(i, j)` set means variable `j` influences the
/// evolution of variable `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    p: usize,
    adjacency: Vec<bool>,
}

impl DependencyGraph {
    pub fn empty(p: usize) -> Self {
        Self { p, adjacency: vec![false; p * p] }
    }

    pub fn complete(p: usize) -> Self {
        Self { p, adjacency: vec![true; p * p] }
    }

    pub fn identity(p: usize) -> Self {
        Self::from_fn(p, |i, j| i == j)
    }

    pub fn from_fn(p: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let adjacency = (0..p * p).map(|k| f(k / p, k % p)).collect();
        Self { p, adjacency }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.p + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.adjacency[i * self.p + j] = v;
    }

    pub fn row_degree(&self, i: usize) -> usize {
        (0..self.p).filter(|&j| self.get(i, j)).count()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&b| b).count()
    }

    /// Variables `k` with an edge `(i, k)` or `(k, i)`; `i` itself only when
    /// the self-loop is present.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.p).filter(|&k| self.get(i, k) || self.get(k, i)).collect()
    }

    /// `neighbors(i)` plus `i`.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        (0..self.p).filter(|&k| k == i || self.get(i, k) || self.get(k, i)).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.adjacency
    }

    /// Relabels variables: old index `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = Self::empty(self.p);
        for i in 0..self.p {
            for j in 0..self.p {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        out
    }
}

impl std::fmt::Display for DependencyGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.p {
            let row: String = (0..self.p).map(|j| if self.get(i, j) { '1' } else { '.' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}
