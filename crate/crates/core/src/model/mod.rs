//! The interpretable causality ODE model `dX/dt = Φθ(X)·X + b`.
//!
//! `Φθ` is a one-hidden-layer tanh network whose `p²` outputs are read as a
//! row-major `p×p` matrix: entry `(i, j)` weighs the influence of `x_j` on
//! the derivative of `x_i`.

mod checkpoint;
pub mod graph;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use graph::ParamVars;
pub use train::{train, train_pairs, Adam, PairSet, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{Method, Trajectory};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_HIDDEN: usize = 64;

/// Which entries of `Φ` the sparsity penalty covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    #[default]
    L1All,
    L1OffDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub penalty: Penalty,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub integrator: Method,
    /// Integration steps per unit prediction interval.
    pub substeps: usize,
    pub hidden: usize,
    /// Standardize network inputs with the training data's column statistics.
    pub normalize_inputs: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            penalty: Penalty::L1All,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 200,
            batch_size: 128,
            integrator: Method::Euler,
            substeps: 5,
            hidden: DEFAULT_HIDDEN,
            normalize_inputs: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.substeps == 0 {
            return bad("substeps must be >= 1".into());
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("moment decays must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.hidden == 0 {
            return bad("hidden must be >= 1".into());
        }
        Ok(())
    }
}

/// `Φθ`: `x ↦ reshape(W2ᵀ·tanh(W1ᵀ·x̂ + c1) + c2, p×p)` with
/// `x̂ = (x - shift) / scale`.
///
/// Weights are stored input-major (`w1` is `p×h`, `w2` is `h×p²`) so a batch
/// of row states multiplies them directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiNetwork<T> {
    pub w1: Tensor<T>,
    pub c1: Tensor<T>,
    pub w2: Tensor<T>,
    pub c2: Tensor<T>,
    pub input_shift: Vec<T>,
    pub input_scale: Vec<T>,
}

impl<T: Scalar> PhiNetwork<T> {
    pub fn zeros(p: usize, hidden: usize) -> Self {
        Self {
            w1: Tensor::zeros(&[p, hidden]),
            c1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden, p * p]),
            c2: Tensor::zeros(&[p * p]),
            input_shift: vec![T::zero(); p],
            input_scale: vec![T::one(); p],
        }
    }

    /// Glorot-uniform hidden layer; output layer scaled down by 10 so the
    /// initial dynamics are close to `dX/dt = b`.
    pub fn init(p: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize], limit: f64| {
            let n = shape.iter().product();
            let data = (0..n).map(|_| T::of(rng.random_range(-limit..limit))).collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches data")
        };
        let l1 = (6.0 / (p + hidden) as f64).sqrt();
        let l2 = 0.1 * (6.0 / (hidden + p * p) as f64).sqrt();
        Self {
            w1: uniform(&[p, hidden], l1),
            c1: Tensor::zeros(&[hidden]),
            w2: uniform(&[hidden, p * p], l2),
            c2: Tensor::zeros(&[p * p]),
            input_shift: vec![T::zero(); p],
            input_scale: vec![T::one(); p],
        }
    }

    pub fn p(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    /// Sets the input standardization from the column statistics of `rows`
    /// (flat, `p` per row). Spreads below 1 are not amplified.
    pub fn fit_normalization(&mut self, rows: &[T], p: usize) {
        let n = rows.len() / p;
        if n == 0 {
            return;
        }
        for j in 0..p {
            let col = rows.iter().skip(j).step_by(p).map(|v| v.as_f64());
            let mean = col.clone().sum::<f64>() / n as f64;
            let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            self.input_shift[j] = T::of(mean);
            self.input_scale[j] = T::of(sd.max(1.0));
        }
    }

    fn validate(&self) -> Result<()> {
        let (p, h) = (self.p(), self.hidden());
        let ok = self.w1.shape() == [p, h]
            && self.c1.shape() == [h]
            && self.w2.shape() == [h, p * p]
            && self.c2.shape() == [p * p]
            && self.input_shift.len() == p
            && self.input_scale.len() == p;
        if !ok {
            return Err(Error::shape("phi", format!("inconsistent layer shapes for p = {p}, h = {h}")));
        }
        if self.input_scale.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::InvalidArgument("input scales must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcodeModel<T> {
    pub phi: PhiNetwork<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> IcodeModel<T> {
    pub fn new(p: usize, hidden: usize, seed: u64) -> Self {
        Self { phi: PhiNetwork::init(p, hidden, seed), bias: Tensor::zeros(&[p]) }
    }

    pub fn zeros(p: usize, hidden: usize) -> Self {
        Self { phi: PhiNetwork::zeros(p, hidden), bias: Tensor::zeros(&[p]) }
    }

    pub fn p(&self) -> usize {
        self.phi.p()
    }

    pub fn hidden(&self) -> usize {
        self.phi.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        self.phi.validate()?;
        if self.bias.shape() != [self.p()] {
            return Err(Error::shape("model", format!("bias {:?} for p = {}", self.bias.shape(), self.p())));
        }
        let finite = self.bias.is_finite()
            && self.phi.w1.is_finite()
            && self.phi.c1.is_finite()
            && self.phi.w2.is_finite()
            && self.phi.c2.is_finite();
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    /// Trainable tensors in [`ParamVars`] order: `w1, c1, w2, c2, bias`.
    pub fn params(&self) -> [&Tensor<T>; 5] {
        [&self.phi.w1, &self.phi.c1, &self.phi.w2, &self.phi.c2, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor<T>; 5] {
        [&mut self.phi.w1, &mut self.phi.c1, &mut self.phi.w2, &mut self.phi.c2, &mut self.bias]
    }

    fn check_rows(&self, xs: &Tensor<T>, what: &str) -> Result<()> {
        if xs.rank() != 2 || xs.cols() != self.p() {
            return Err(Error::shape("model", format!("{what} {:?} for p = {}", xs.shape(), self.p())));
        }
        if !xs.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(())
    }

    /// `Φθ(x)` as a `p×p` matrix.
    pub fn phi_forward(&self, x: &[T]) -> Result<Tensor<T>> {
        let p = self.p();
        if x.len() != p {
            return Err(Error::shape("phi_forward", format!("x has {} entries, p = {p}", x.len())));
        }
        let out = self.phi_batch(&Tensor::matrix(1, p, x.to_vec())?)?;
        out.reshape(&[p, p])
    }

    /// `Φθ` at each row of `xs` (`B×p`), flattened to `B×p²`.
    pub fn phi_batch(&self, xs: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_rows(xs, "states")?;
        self.chunked(xs, self.p() * self.p(), |tape, vars, x| graph::phi(tape, vars, x))
    }

    /// Evaluates `f` on blocks of rows so inference tapes stay small.
    fn chunked(
        &self,
        xs: &Tensor<T>,
        width: usize,
        f: impl Fn(&mut Tape<T>, &ParamVars, Var) -> Result<Var>,
    ) -> Result<Tensor<T>> {
        const CHUNK: usize = 256;
        let p = self.p();
        let mut out = Vec::with_capacity(xs.rows() * width);
        for block in xs.data().chunks(CHUNK * p) {
            let mut tape = Tape::new();
            let vars = ParamVars::constants(&mut tape, self);
            let x = tape.constant(Tensor::matrix(block.len() / p, p, block.to_vec())?);
            let y = f(&mut tape, &vars, x)?;
            out.extend_from_slice(tape.value(y).data());
        }
        Tensor::matrix(xs.rows(), width, out)
    }

    pub fn predict_next(&self, x: &[T], cfg: &TrainConfig) -> Result<Vec<T>> {
        let p = self.p();
        if x.len() != p {
            return Err(Error::shape("predict_next", format!("x has {} entries, p = {p}", x.len())));
        }
        Ok(self.predict_batch(&Tensor::matrix(1, p, x.to_vec())?, cfg)?.into_data())
    }

    /// One-unit-interval predictions for every row of `xs`.
    pub fn predict_batch(&self, xs: &Tensor<T>, cfg: &TrainConfig) -> Result<Tensor<T>> {
        cfg.validate()?;
        self.check_rows(xs, "states")?;
        self.chunked(xs, self.p(), |tape, vars, x| graph::predict(tape, vars, x, cfg))
    }

    /// Predictions for rows `0..n-1` of a trajectory, targeting rows `1..n`.
    pub fn predict_trajectory(&self, traj: &Trajectory<T>, cfg: &TrainConfig) -> Result<Tensor<T>> {
        if traj.len() < 2 {
            return Err(Error::InvalidArgument("need at least two rows to predict".into()));
        }
        let p = traj.p();
        let xs = Tensor::matrix(traj.len() - 1, p, traj.states()[..(traj.len() - 1) * p].to_vec())?;
        self.predict_batch(&xs, cfg)
    }

    /// Training objective on the pairs `(xs[b], ys[b])`.
    pub fn loss(&self, xs: &Tensor<T>, ys: &Tensor<T>, cfg: &TrainConfig) -> Result<T> {
        cfg.validate()?;
        self.check_rows(xs, "inputs")?;
        self.check_rows(ys, "targets")?;
        if xs.rows() != ys.rows() {
            return Err(Error::shape("loss", format!("{} inputs vs {} targets", xs.rows(), ys.rows())));
        }
        if xs.rows() == 0 {
            return Err(Error::InvalidArgument("loss needs a nonempty batch".into()));
        }
        let mut tape = Tape::new();
        let vars = ParamVars::constants(&mut tape, self);
        let (x, y) = (tape.constant(xs.clone()), tape.constant(ys.clone()));
        let l = graph::loss(&mut tape, &vars, x, y, cfg)?;
        Ok(tape.value(l).item())
    }
}
