use serde::{Deserialize, Serialize};

use super::GcnModel;
use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OptimizerState<T: Scalar = f32> {
    Sgd,
    Adam {
        m: Vec<DenseMatrix<T>>,
        v: Vec<DenseMatrix<T>>,
        t: u64,
    },
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, model: &GcnModel<T>) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam {
                m: model.zeros_like(),
                v: model.zeros_like(),
                t: 0,
            },
        }
    }

    /// One update with `weight_decay` added to the gradient as an L2 term.
    pub fn step(
        &mut self,
        model: &mut GcnModel<T>,
        grads: &[DenseMatrix<T>],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        let decayed;
        let grads = if weight_decay > 0.0 {
            let wd = T::of(weight_decay);
            decayed = grads
                .iter()
                .zip(&model.weights)
                .map(|(g, w)| g.zip_map(w, |gv, wv| gv + wd * wv))
                .collect::<Result<Vec<_>>>()?;
            &decayed[..]
        } else {
            grads
        };
        match self {
            OptimizerState::Sgd => sgd_step(model, grads, lr),
            OptimizerState::Adam { .. } => adam_step(model, grads, self, lr, AdamParams::default()),
        }
    }
}

fn check_grads<T: Scalar>(model: &GcnModel<T>, grads: &[DenseMatrix<T>], op: &'static str) -> Result<()> {
    if grads.len() != model.weights.len() {
        return Err(Error::shape(op, format!("{} gradients for {} weights", grads.len(), model.weights.len())));
    }
    for (l, (g, w)) in grads.iter().zip(&model.weights).enumerate() {
        if g.shape() != w.shape() {
            return Err(Error::shape(op, format!("layer {l}: gradient {:?} vs weight {:?}", g.shape(), w.shape())));
        }
    }
    Ok(())
}

/// `Θ ← Θ − lr · grad`
pub fn sgd_step<T: Scalar>(model: &mut GcnModel<T>, grads: &[DenseMatrix<T>], lr: f64) -> Result<()> {
    check_grads(model, grads, "sgd_step")?;
    let lr = T::of(lr);
    for (w, g) in model.weights.iter_mut().zip(grads) {
        w.axpy(-lr, g)?;
    }
    Ok(())
}

/// Adam with bias correction. A state created for another optimizer or
/// model shape is rejected.
pub fn adam_step<T: Scalar>(
    model: &mut GcnModel<T>,
    grads: &[DenseMatrix<T>],
    state: &mut OptimizerState<T>,
    lr: f64,
    params: AdamParams,
) -> Result<()> {
    check_grads(model, grads, "adam_step")?;
    let OptimizerState::Adam { m, v, t } = state else {
        return Err(Error::InvalidArgument("adam_step needs an Adam optimizer state".into()));
    };
    if m.len() != grads.len() || m.iter().zip(grads).any(|(a, g)| a.shape() != g.shape()) {
        return Err(Error::shape("adam_step", "optimizer state does not match the model"));
    }
    *t += 1;
    let (b1, b2) = (T::of(params.beta1), T::of(params.beta2));
    let c1 = T::of(1.0 - params.beta1.powi(*t as i32));
    let c2 = T::of(1.0 - params.beta2.powi(*t as i32));
    let (lr, eps) = (T::of(lr), T::of(params.eps));
    let one = T::one();
    for l in 0..grads.len() {
        let w = model.weights[l].data_mut();
        let (ml, vl) = (m[l].data_mut(), v[l].data_mut());
        for (j, &g) in grads[l].data().iter().enumerate() {
            ml[j] = b1 * ml[j] + (one - b1) * g;
            vl[j] = b2 * vl[j] + (one - b2) * g * g;
            let mhat = ml[j] / c1;
            let vhat = vl[j] / c2;
            w[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Step decay: `base` before half of training, `base/10` until three
/// quarters, `base/100` afterwards.
pub fn lr_schedule(base: f64, epoch: usize, total: usize) -> f64 {
    let e = epoch as f64;
    let t = total as f64;
    if e < 0.5 * t {
        base
    } else if e < 0.75 * t {
        base / 10.0
    } else {
        base / 100.0
    }
}
