use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ModelParams;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd-momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            _ => Err(Error::Config(format!(
                "unknown optimizer {s:?}; expected adam or sgd-momentum"
            ))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Adam β1, or the momentum coefficient for SGD.
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers mirroring the parameter tensors, plus the step count.
#[derive(Debug, Clone)]
pub struct OptimState<T> {
    pub settings: OptimizerSettings,
    pub step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(settings: OptimizerSettings, params: &ModelParams<T>) -> Self {
        let zeros = |p: &ModelParams<T>| -> Vec<Tensor<T>> {
            p.tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect()
        };
        let second = match settings.kind {
            OptimizerKind::Adam => zeros(params),
            OptimizerKind::SgdMomentum => Vec::new(),
        };
        OptimState {
            settings,
            step: 0,
            first: zeros(params),
            second,
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        let grads = grads.tensors();
        let mut params = params.tensors_mut();
        if grads.len() != params.len() || params.len() != self.first.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {} params and {} gradients",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(&grads) {
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "parameter {:?} and gradient {:?} differ",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let s = self.settings;
        let lr = T::from_f64_lossy(s.lr);
        let b1 = T::from_f64_lossy(s.beta1);
        match s.kind {
            OptimizerKind::Adam => {
                let b2 = T::from_f64_lossy(s.beta2);
                let eps = T::from_f64_lossy(s.eps);
                let c1 = T::from_f64_lossy(1.0 - s.beta1.powi(self.step as i32));
                let c2 = T::from_f64_lossy(1.0 - s.beta2.powi(self.step as i32));
                for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let (m, v) = (&mut self.first[i], &mut self.second[i]);
                    let it = p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut().zip(v.data_mut()));
                    for ((pv, &gv), (mv, vv)) in it {
                        *mv = b1 * *mv + (T::one() - b1) * gv;
                        *vv = b2 * *vv + (T::one() - b2) * gv * gv;
                        let mhat = *mv / c1;
                        let vhat = *vv / c2;
                        *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            OptimizerKind::SgdMomentum => {
                for (i, (p, g)) in params.iter_mut().zip(&grads).enumerate() {
                    let m = &mut self.first[i];
                    let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut());
                    for ((pv, &gv), mv) in it {
                        *mv = b1 * *mv + gv;
                        *pv = *pv - lr * *mv;
                    }
                }
            }
        }
        Ok(())
    }
}
