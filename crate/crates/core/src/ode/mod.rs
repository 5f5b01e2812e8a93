//! Benchmark dynamical systems: Lotka-Volterra, Lorenz-96 and a Fisher
//! reaction-diffusion ring.

mod graph;
mod integrate;
mod trajectory;

pub use graph::DependencyGraph;
pub use integrate::{integrate, integrate_perturbed, Method, DIVERGENCE_LIMIT};
pub use trajectory::{add_sensor_noise, Trajectory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    LotkaVolterra,
    Lorenz96,
    ReactionDiffusion,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::LotkaVolterra => "lotka_volterra",
            SystemKind::Lorenz96 => "lorenz96",
            SystemKind::ReactionDiffusion => "reaction_diffusion",
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully parameterised system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec<T> {
    /// `dx_i/dt = r_i x_i (1 - Σ_j β_ij x_j / K_i)`
    LotkaVolterra { growth: Vec<T>, capacity: Vec<T>, interaction: Vec<Vec<T>> },
    /// `dx_i/dt = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F` on a ring.
    Lorenz96 { p: usize, forcing: T },
    /// `dx_i/dt = (x_{i-1} - x_i) + (x_{i+1} - x_i) + x_i (1 - x_i)` on a ring.
    ReactionDiffusion { p: usize },
}

impl<T: Scalar> SystemSpec<T> {
    pub fn lorenz96(p: usize, forcing: T) -> Result<Self> {
        let s = SystemSpec::Lorenz96 { p, forcing };
        s.validate()?;
        Ok(s)
    }

    pub fn reaction_diffusion(p: usize) -> Result<Self> {
        let s = SystemSpec::ReactionDiffusion { p };
        s.validate()?;
        Ok(s)
    }

    pub fn lotka_volterra(growth: Vec<T>, capacity: Vec<T>, interaction: Vec<Vec<T>>) -> Result<Self> {
        let s = SystemSpec::LotkaVolterra { growth, capacity, interaction };
        s.validate()?;
        Ok(s)
    }

    /// Random Lotka-Volterra instance: unit self-interaction, off-diagonal
    /// couplings present with probability 0.2 and uniform in [-0.1, 0.1],
    /// `r_i ~ U[0.5, 1.5]`, `K_i ~ U[5, 15]`.
    pub fn lotka_volterra_random(p: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let growth = (0..p).map(|_| T::of(rng.random_range(0.5..1.5))).collect();
        let capacity = (0..p).map(|_| T::of(rng.random_range(5.0..15.0))).collect();
        let interaction = (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        if i == j {
                            T::one()
                        } else if rng.random_bool(0.2) {
                            let mut v = 0.0;
                            while v == 0.0 {
                                v = rng.random_range(-0.1..0.1);
                            }
                            T::of(v)
                        } else {
                            T::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        Self::lotka_volterra(growth, capacity, interaction)
    }

    /// Default instance of `kind` with `p` variables. Lorenz-96 uses `F = 10`.
    pub fn standard(kind: SystemKind, p: usize, seed: u64) -> Result<Self> {
        match kind {
            SystemKind::LotkaVolterra => Self::lotka_volterra_random(p, seed),
            SystemKind::Lorenz96 => Self::lorenz96(p, T::of(10.0)),
            SystemKind::ReactionDiffusion => Self::reaction_diffusion(p),
        }
    }

    pub fn kind(&self) -> SystemKind {
        match self {
            SystemSpec::LotkaVolterra { .. } => SystemKind::LotkaVolterra,
            SystemSpec::Lorenz96 { .. } => SystemKind::Lorenz96,
            SystemSpec::ReactionDiffusion { .. } => SystemKind::ReactionDiffusion,
        }
    }

    pub fn p(&self) -> usize {
        match self {
            SystemSpec::LotkaVolterra { growth, .. } => growth.len(),
            SystemSpec::Lorenz96 { p, .. } | SystemSpec::ReactionDiffusion { p } => *p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::Lorenz96 { p, forcing } => {
                if *p < 4 {
                    return Err(Error::InvalidSpec(format!(
                        "lorenz96 needs p >= 4 so that neighbours i-2, i-1, i+1 are distinct, got p = {p}"
                    )));
                }
                if !forcing.is_finite() {
                    return Err(Error::InvalidSpec("lorenz96 forcing must be finite".into()));
                }
            }
            SystemSpec::ReactionDiffusion { p } => {
                if *p < 3 {
                    return Err(Error::InvalidSpec(format!(
                        "reaction_diffusion ring needs p >= 3, got p = {p}"
                    )));
                }
            }
            SystemSpec::LotkaVolterra { growth, capacity, interaction } => {
                let p = growth.len();
                if p == 0 {
                    return Err(Error::InvalidSpec("lotka_volterra needs p >= 1".into()));
                }
                if capacity.len() != p || interaction.len() != p || interaction.iter().any(|r| r.len() != p) {
                    return Err(Error::InvalidSpec(format!(
                        "lotka_volterra parameter shapes disagree with p = {p}"
                    )));
                }
                if capacity.iter().any(|&k| !(k > T::zero()) || !k.is_finite()) {
                    return Err(Error::InvalidSpec("lotka_volterra capacities must be strictly positive".into()));
                }
                let all = growth.iter().chain(interaction.iter().flatten());
                if all.into_iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("lotka_volterra parameters must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Right-hand side `dx/dt` at state `x`.
    pub fn derivative(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.p() {
            return Err(Error::shape("derivative", format!("state has {} entries, system has p = {}", x.len(), self.p())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("derivative input".into()));
        }
        let mut out = vec![T::zero(); x.len()];
        self.derivative_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked right-hand side used by the integrator.
    pub(crate) fn derivative_into(&self, x: &[T], out: &mut [T]) {
        let p = x.len();
        match self {
            SystemSpec::Lorenz96 { forcing, .. } => {
                for i in 0..p {
                    let next = x[(i + 1) % p];
                    let prev = x[(i + p - 1) % p];
                    let prev2 = x[(i + p - 2) % p];
                    out[i] = (next - prev2) * prev - x[i] + *forcing;
                }
            }
            SystemSpec::ReactionDiffusion { .. } => {
                for i in 0..p {
                    let left = x[(i + p - 1) % p];
                    let right = x[(i + 1) % p];
                    out[i] = (left - x[i]) + (right - x[i]) + x[i] * (T::one() - x[i]);
                }
            }
            SystemSpec::LotkaVolterra { growth, capacity, interaction } => {
                for i in 0..p {
                    let pressure: T = interaction[i].iter().zip(x).map(|(&b, &xj)| b * xj).sum();
                    out[i] = growth[i] * x[i] * (T::one() - pressure / capacity[i]);
                }
            }
        }
    }

    /// Ground-truth adjacency: `(i, j)` is an edge iff `x_j` enters `f_i`.
    pub fn ground_truth_graph(&self) -> DependencyGraph {
        let p = self.p();
        match self {
            SystemSpec::Lorenz96 { .. } => DependencyGraph::from_fn(p, |i, j| {
                j == (i + p - 2) % p || j == (i + p - 1) % p || j == i || j == (i + 1) % p
            }),
            SystemSpec::ReactionDiffusion { .. } => {
                DependencyGraph::from_fn(p, |i, j| j == (i + p - 1) % p || j == i || j == (i + 1) % p)
            }
            SystemSpec::LotkaVolterra { interaction, .. } => {
                DependencyGraph::from_fn(p, |i, j| i == j || interaction[i][j] != T::zero())
            }
        }
    }

    /// Seeded initial condition: Lorenz-96 at `F + U[-0.5, 0.5]`,
    /// reaction-diffusion in `U(0.1, 0.9)`, Lotka-Volterra in `U(K_i/2, K_i)`.
    pub fn initial_state(&self, seed: u64) -> Vec<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = self.p();
        match self {
            SystemSpec::Lorenz96 { forcing, .. } => {
                (0..p).map(|_| *forcing + T::of(rng.random_range(-0.5..0.5))).collect()
            }
            SystemSpec::ReactionDiffusion { .. } => (0..p).map(|_| T::of(rng.random_range(0.1..0.9))).collect(),
            SystemSpec::LotkaVolterra { capacity, .. } => capacity
                .iter()
                .map(|&k| {
                    let k = k.as_f64();
                    T::of(rng.random_range(0.5 * k..k))
                })
                .collect(),
        }
    }
}
