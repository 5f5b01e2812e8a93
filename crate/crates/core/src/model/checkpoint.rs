use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IcodeModel, PhiNetwork, TrainConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Weights<T> {
    /// `p×h`, input-major.
    w1: Vec<Vec<T>>,
    c1: Vec<T>,
    /// `h×p²`, input-major.
    w2: Vec<Vec<T>>,
    c2: Vec<T>,
    input_shift: Vec<T>,
    input_scale: Vec<T>,
}

/// Serialized model: `{version, p, hidden, weights, bias, train_config, final_loss}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub version: u32,
    pub p: usize,
    pub hidden: usize,
    weights: Weights<T>,
    pub bias: Vec<T>,
    pub train_config: TrainConfig,
    pub final_loss: Option<f64>,
}

fn matrix<T: Scalar>(rows: &[Vec<T>], what: &str, r: usize, c: usize) -> Result<Tensor<T>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Checkpoint(format!("{what} must be {r}×{c}")));
    }
    Tensor::from_rows(rows)
}

fn vector<T: Scalar>(v: &[T], what: &str, n: usize) -> Result<Tensor<T>> {
    if v.len() != n {
        return Err(Error::Checkpoint(format!("{what} must have {n} entries, found {}", v.len())));
    }
    Ok(Tensor::vector(v.to_vec()))
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_model(model: &IcodeModel<T>, train_config: &TrainConfig, final_loss: Option<f64>) -> Self {
        let phi = &model.phi;
        Self {
            version: CHECKPOINT_VERSION,
            p: model.p(),
            hidden: model.hidden(),
            weights: Weights {
                w1: phi.w1.to_rows(),
                c1: phi.c1.data().to_vec(),
                w2: phi.w2.to_rows(),
                c2: phi.c2.data().to_vec(),
                input_shift: phi.input_shift.clone(),
                input_scale: phi.input_scale.clone(),
            },
            bias: model.bias.data().to_vec(),
            train_config: train_config.clone(),
            final_loss: final_loss.filter(|l| l.is_finite()),
        }
    }

    pub fn to_model(&self) -> Result<IcodeModel<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}, expected {CHECKPOINT_VERSION}",
                self.version
            )));
        }
        let (p, h, w) = (self.p, self.hidden, &self.weights);
        if p == 0 || h == 0 {
            return Err(Error::Checkpoint(format!("p = {p} and hidden = {h} must be positive")));
        }
        let input_shift = vector(&w.input_shift, "input_shift", p)?.into_data();
        let input_scale = vector(&w.input_scale, "input_scale", p)?.into_data();
        let model = IcodeModel {
            phi: PhiNetwork {
                w1: matrix(&w.w1, "w1", p, h)?,
                c1: vector(&w.c1, "c1", h)?,
                w2: matrix(&w.w2, "w2", h, p * p)?,
                c2: vector(&w.c2, "c2", p * p)?,
                input_shift,
                input_scale,
            },
            bias: vector(&self.bias, "bias", p)?,
        };
        model.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
