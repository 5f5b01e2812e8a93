use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{self, ParamVars};
use super::{IcodeModel, TrainConfig};
use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::scalar::Scalar;
use crate::tensor::{GradientSet, ParamId, Tape, Tensor};

/// Consecutive-sample training pairs `(x_t, x_{t+1})`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet<T> {
    p: usize,
    xs: Vec<T>,
    ys: Vec<T>,
}

impl<T: Scalar> PairSet<T> {
    pub fn new(p: usize, xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        if p == 0 || xs.len() != ys.len() || xs.len() % p != 0 {
            return Err(Error::shape("pairs", format!("{} inputs, {} targets, p = {p}", xs.len(), ys.len())));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training pairs".into()));
        }
        Ok(Self { p, xs, ys })
    }

    pub fn from_trajectory(traj: &Trajectory<T>) -> Result<Self> {
        Self::from_trajectories(std::slice::from_ref(traj))
    }

    /// Pairs from several trajectories; no pair spans two of them.
    pub fn from_trajectories(trajs: &[Trajectory<T>]) -> Result<Self> {
        let p = trajs.first().map(|t| t.p()).ok_or_else(|| Error::InvalidArgument("no trajectories".into()))?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for t in trajs {
            if t.p() != p {
                return Err(Error::shape("pairs", format!("trajectories with p = {p} and p = {}", t.p())));
            }
            if t.len() < 2 {
                return Err(Error::InvalidArgument(format!("trajectory has {} rows, need at least 2", t.len())));
            }
            let s = t.states();
            xs.extend_from_slice(&s[..(t.len() - 1) * p]);
            ys.extend_from_slice(&s[p..]);
        }
        Self::new(p, xs, ys)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.xs.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn inputs(&self) -> Tensor<T> {
        Tensor::matrix(self.len(), self.p, self.xs.clone()).expect("validated in new")
    }

    pub fn targets(&self) -> Tensor<T> {
        Tensor::matrix(self.len(), self.p, self.ys.clone()).expect("validated in new")
    }

    fn gather(&self, idx: &[usize]) -> (Tensor<T>, Tensor<T>) {
        let p = self.p;
        let mut xs = Vec::with_capacity(idx.len() * p);
        let mut ys = Vec::with_capacity(idx.len() * p);
        for &i in idx {
            xs.extend_from_slice(&self.xs[i * p..(i + 1) * p]);
            ys.extend_from_slice(&self.ys[i * p..(i + 1) * p]);
        }
        (
            Tensor::matrix(idx.len(), p, xs).expect("rows of width p"),
            Tensor::matrix(idx.len(), p, ys).expect("rows of width p"),
        )
    }
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &IcodeModel<T>, cfg: &TrainConfig) -> Self {
        let zeros: Vec<Tensor<T>> = model.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            lr: T::of(cfg.lr),
            beta1: T::of(cfg.beta1),
            beta2: T::of(cfg.beta2),
            eps: T::of(cfg.eps),
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut IcodeModel<T>, grads: &GradientSet<T>) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        for (i, param) in model.params_mut().into_iter().enumerate() {
            let Some(g) = grads.get(ParamId(i)) else { continue };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &g), m), v) in param.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = self.beta1 * *m + (one - self.beta1) * g;
                *v = self.beta2 * *v + (one - self.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *w = *w - self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: IcodeModel<T>,
    /// Mean training loss of each epoch.
    pub history: Vec<f64>,
}

impl<T> TrainOutcome<T> {
    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().copied()
    }
}

/// Fits a freshly initialised model to the consecutive pairs of `data`.
pub fn train<T: Scalar>(data: &Trajectory<T>, cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let pairs = PairSet::from_trajectory(data)?;
    let mut model = IcodeModel::new(data.p(), cfg.hidden, cfg.seed);
    if cfg.normalize_inputs {
        model.phi.fit_normalization(data.states(), data.p());
    }
    train_pairs(model, &pairs, cfg)
}

/// Runs `cfg.epochs` of mini-batch Adam from `model` (warm start when the
/// model is already trained).
pub fn train_pairs<T: Scalar>(
    mut model: IcodeModel<T>,
    pairs: &PairSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    if pairs.p() != model.p() {
        return Err(Error::shape("train", format!("pairs have p = {}, model p = {}", pairs.p(), model.p())));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let mut adam = Adam::new(&model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (xs, ys) = pairs.gather(idx);
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &model)?;
            let (x, y) = (tape.constant(xs), tape.constant(ys));
            let l = graph::loss(&mut tape, &vars, x, y, cfg).map_err(|e| at_step(e, epoch, b))?;
            let value = tape.value(l).item();
            if !value.is_finite() {
                return Err(at_step(Error::Divergence { step: 0, context: format!("loss {value}") }, epoch, b));
            }
            let grads = tape.backward(l)?;
            adam.step(&mut model, &grads);
            total += value.as_f64() * idx.len() as f64;
        }
        history.push(total / pairs.len() as f64);
    }
    if model.validate().is_err() {
        return Err(Error::Divergence { step: cfg.epochs, context: "parameters became non-finite".into() });
    }
    Ok(TrainOutcome { model, history })
}

fn at_step(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::Divergence { context, .. } => {
            Error::Divergence { step: batch, context: format!("epoch {epoch}, batch {batch}: {context}") }
        }
        other => other,
    }
}
