//! Tape graphs for `Φθ`, the unrolled integrator and the training loss.

use super::{IcodeModel, Penalty, TrainConfig};
use crate::error::{Error, Result};
use crate::ode::{Method, DIVERGENCE_LIMIT};
use crate::scalar::Scalar;
use crate::tensor::{ParamId, Tape, Tensor, Var};

/// Model parameters recorded on a tape, with the input standardization
/// folded into the first layer.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub w1: Var,
    pub c1: Var,
    pub w2: Var,
    pub c2: Var,
    pub bias: Var,
    w1_eff: Var,
    c1_eff: Var,
    p: usize,
}

impl ParamVars {
    /// Registers the model's tensors as parameters `ParamId(0..5)`.
    pub fn register<T: Scalar>(tape: &mut Tape<T>, model: &IcodeModel<T>) -> Result<Self> {
        let vars: Vec<Var> =
            model.params().iter().enumerate().map(|(i, t)| tape.param(ParamId(i), (*t).clone())).collect();
        Self::from_vars(tape, &vars, model)
    }

    pub(crate) fn constants<T: Scalar>(tape: &mut Tape<T>, model: &IcodeModel<T>) -> Self {
        let vars: Vec<Var> = model.params().iter().map(|t| tape.constant((*t).clone())).collect();
        Self::from_vars(tape, &vars, model).expect("model shapes were validated")
    }

    /// Wraps five already-recorded vars (`w1, c1, w2, c2, bias`); `model`
    /// supplies the input standardization.
    pub fn from_vars<T: Scalar>(tape: &mut Tape<T>, vars: &[Var], model: &IcodeModel<T>) -> Result<Self> {
        let &[w1, c1, w2, c2, bias] = vars else {
            return Err(Error::InvalidArgument(format!("expected 5 parameter vars, got {}", vars.len())));
        };
        let p = model.p();
        let shift = &model.phi.input_shift;
        let scale = &model.phi.input_scale;
        let identity = shift.iter().all(|&s| s == T::zero()) && scale.iter().all(|&s| s == T::one());
        let (w1_eff, c1_eff) = if identity {
            (w1, c1)
        } else {
            // W1ᵀ·((x - s) / σ) + c1 = (diag(1/σ)·W1)ᵀ·x + (c1 - W1ᵀ·(s/σ))
            let mut d = Tensor::zeros(&[p, p]);
            for i in 0..p {
                d.data_mut()[i * p + i] = T::one() / scale[i];
            }
            let d = tape.constant(d);
            let w1_eff = tape.matmul(d, w1)?;
            let ratio: Vec<T> = shift.iter().zip(scale).map(|(&s, &c)| s / c).collect();
            let ratio = tape.constant(Tensor::matrix(1, p, ratio)?);
            let offset = tape.matmul(ratio, w1)?;
            let offset = tape.reshape(offset, &[model.hidden()])?;
            (w1_eff, tape.sub(c1, offset)?)
        };
        Ok(Self { w1, c1, w2, c2, bias, w1_eff, c1_eff, p })
    }
}

/// `Φθ` at each row of `x` (`B×p`), as `B×p²`.
pub fn phi<T: Scalar>(tape: &mut Tape<T>, v: &ParamVars, x: Var) -> Result<Var> {
    let pre = tape.matmul(x, v.w1_eff)?;
    let pre = tape.add_row(pre, v.c1_eff)?;
    let hidden = tape.tanh(pre);
    let out = tape.matmul(hidden, v.w2)?;
    tape.add_row(out, v.c2)
}

/// `Φθ(x)·x + b` for each row of `x`.
pub fn rhs<T: Scalar>(tape: &mut Tape<T>, v: &ParamVars, x: Var) -> Result<Var> {
    let m = phi(tape, v, x)?;
    let fx = tape.batch_matvec(m, x)?;
    tape.add_row(fx, v.bias)
}

fn check_state<T: Scalar>(tape: &Tape<T>, x: Var, substep: usize) -> Result<()> {
    let limit = T::of(DIVERGENCE_LIMIT);
    if let Some((i, &val)) = tape.value(x).data().iter().enumerate().find(|(_, v)| !v.is_finite() || v.abs() > limit) {
        let p = tape.value(x).cols();
        return Err(Error::Divergence {
            step: 0,
            context: format!("substep {substep}: row {} variable {} reached {val}", i / p, i % p),
        });
    }
    Ok(())
}

/// Integrates the model over one unit interval from every row of `x`.
///
/// Divergence errors carry `step: 0`; callers that know the batch index
/// replace it.
pub fn predict<T: Scalar>(tape: &mut Tape<T>, v: &ParamVars, x: Var, cfg: &TrainConfig) -> Result<Var> {
    let h = T::one() / T::of(cfg.substeps as f64);
    let mut state = x;
    for s in 0..cfg.substeps {
        state = match cfg.integrator {
            Method::Euler => {
                let d = rhs(tape, v, state)?;
                let d = tape.scale(d, h);
                tape.add(state, d)?
            }
            Method::Rk4 => {
                let half = h / T::of(2.0);
                let k1 = rhs(tape, v, state)?;
                let s1 = tape.scale(k1, half);
                let x2 = tape.add(state, s1)?;
                let k2 = rhs(tape, v, x2)?;
                let s2 = tape.scale(k2, half);
                let x3 = tape.add(state, s2)?;
                let k3 = rhs(tape, v, x3)?;
                let s3 = tape.scale(k3, h);
                let x4 = tape.add(state, s3)?;
                let k4 = rhs(tape, v, x4)?;
                let k23 = tape.add(k2, k3)?;
                let k23 = tape.scale(k23, T::of(2.0));
                let acc = tape.add(k1, k23)?;
                let acc = tape.add(acc, k4)?;
                let incr = tape.scale(acc, h / T::of(6.0));
                tape.add(state, incr)?
            }
        };
        check_state(tape, state, s + 1)?;
    }
    Ok(state)
}

/// Mean squared one-step error plus `λ·R(Φθ(y))`, where `R` is the mean
/// absolute value of the penalised entries.
pub fn loss<T: Scalar>(tape: &mut Tape<T>, v: &ParamVars, x: Var, y: Var, cfg: &TrainConfig) -> Result<Var> {
    let pred = predict(tape, v, x, cfg)?;
    let diff = tape.sub(pred, y)?;
    let sq = tape.square(diff);
    let mse = tape.mean(sq);
    if cfg.lambda == 0.0 {
        return Ok(mse);
    }
    let m = phi(tape, v, y)?;
    let a = tape.abs(m);
    let p = v.p;
    let penalty = match cfg.penalty {
        Penalty::L1All => tape.mean(a),
        Penalty::L1OffDiagonal => {
            let batch = tape.value(y).rows();
            let mut mask = Tensor::full(&[batch, p * p], T::one());
            for b in 0..batch {
                for i in 0..p {
                    mask.data_mut()[b * p * p + i * p + i] = T::zero();
                }
            }
            let mask = tape.constant(mask);
            let off = tape.mul(a, mask)?;
            let total = tape.sum(off);
            let count = (batch * (p * p - p)).max(1);
            tape.scale(total, T::one() / T::of(count as f64))
        }
    };
    let penalty = tape.scale(penalty, T::of(cfg.lambda));
    tape.add(mse, penalty)
}
