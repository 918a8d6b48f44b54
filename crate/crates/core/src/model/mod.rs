//! GCN and GraphSAGE-mean networks with hand-written forward and backward
//! passes.
//!
//! A GCN layer computes `Z = Ā · (H · Θ)`; a GraphSAGE-mean layer computes
//! `Z = [H ‖ N·H] · Θ = H·Θ_self + N·(H·Θ_neigh)`, where `N` is the
//! neighbour-mean operator. Hidden layers apply ReLU, the last layer is linear.
//! There are no bias terms.

mod checkpoint;
mod loss;
mod optim;

use std::borrow::Cow;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{accuracy, loss_ce, loss_sq};
pub use optim::{adam_step, lr_schedule, sgd_step, AdamParams, OptimizerKind, OptimizerState};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph};
use crate::tensor::{DenseMatrix, Scalar, SparseMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Gcn,
    #[value(name = "sage")]
    #[serde(alias = "sage")]
    SageMean,
}

impl Arch {
    /// Number of weight rows consumed per input feature.
    pub fn row_multiplier(self) -> usize {
        match self {
            Arch::Gcn => 1,
            Arch::SageMean => 2,
        }
    }

    /// The sparse operator a layer aggregates with: `Ā` for GCN, the
    /// neighbour-mean operator for GraphSAGE.
    pub fn propagation<T: Scalar>(self, g: &Graph, mode: AdjacencyMode) -> SparseMatrix<T> {
        match self {
            Arch::Gcn => g.normalized_adjacency(mode),
            Arch::SageMean => g.mean_neighbor_operator(),
        }
    }
}

/// Node features as seen by the first layer. Bag-of-words inputs are mostly
/// zero, so they are kept in CSR form for the input product.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeFeatures<T: Scalar = f32> {
    Dense(DenseMatrix<T>),
    Sparse(SparseMatrix<T>),
}

impl<T: Scalar> NodeFeatures<T> {
    /// Picks CSR storage when fewer than a quarter of the entries are nonzero.
    pub fn auto(x: DenseMatrix<T>) -> Self {
        let nnz = x.data().iter().filter(|v| **v != T::zero()).count();
        if x.len() > 0 && nnz * 4 < x.len() {
            NodeFeatures::Sparse(SparseMatrix::from_dense(&x))
        } else {
            NodeFeatures::Dense(x)
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            NodeFeatures::Dense(x) => x.rows(),
            NodeFeatures::Sparse(x) => x.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            NodeFeatures::Dense(x) => x.cols(),
            NodeFeatures::Sparse(x) => x.cols(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        match self {
            NodeFeatures::Dense(x) => x.clone(),
            NodeFeatures::Sparse(x) => x.to_dense(),
        }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Result<Self> {
        Ok(match self {
            NodeFeatures::Dense(x) => {
                let rows: Vec<usize> = (0..x.rows()).collect();
                NodeFeatures::Dense(x.slice(&rows, idx)?)
            }
            NodeFeatures::Sparse(x) => NodeFeatures::Sparse(x.select_columns(idx)?),
        })
    }

    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        Ok(match self {
            NodeFeatures::Dense(x) => NodeFeatures::Dense(x.select_rows(idx)?),
            NodeFeatures::Sparse(x) => {
                let mut triplets = Vec::new();
                for (new, &old) in idx.iter().enumerate() {
                    if old >= x.rows() {
                        return Err(Error::Index {
                            op: "select_rows",
                            index: old,
                            len: x.rows(),
                        });
                    }
                    triplets.extend(x.row_entries(old).map(|(c, v)| (new, c, v)));
                }
                NodeFeatures::Sparse(SparseMatrix::from_triplets(idx.len(), x.cols(), &triplets)?)
            }
        })
    }

    /// `X · w`
    fn mul(&self, w: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        match self {
            NodeFeatures::Dense(x) => x.matmul(w),
            NodeFeatures::Sparse(x) => x.spmm(w),
        }
    }

    /// `Xᵀ · g`
    fn tmul(&self, g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        match self {
            NodeFeatures::Dense(x) => x.matmul_tn(g),
            NodeFeatures::Sparse(x) => x.spmm_t(g),
        }
    }

    fn dropout(&self, p: f64, rng: &mut impl Rng) -> (Self, Option<DenseMatrix<T>>) {
        let keep = 1.0 - p;
        let scale = T::of(1.0 / keep);
        match self {
            NodeFeatures::Dense(x) => {
                let mask = DenseMatrix::from_fn(x.rows(), x.cols(), |_, _| {
                    if rng.gen::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                });
                let dropped = x.zip_map(&mask, |a, m| a * m).expect("same shape");
                (NodeFeatures::Dense(dropped), Some(mask))
            }
            NodeFeatures::Sparse(x) => {
                let dropped = x.map_entries(|_, _, v| {
                    if rng.gen::<f64>() < keep {
                        v * scale
                    } else {
                        T::zero()
                    }
                });
                (NodeFeatures::Sparse(dropped), None)
            }
        }
    }
}

impl<T: Scalar> From<DenseMatrix<T>> for NodeFeatures<T> {
    fn from(x: DenseMatrix<T>) -> Self {
        NodeFeatures::Dense(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnModel<T: Scalar = f32> {
    pub arch: Arch,
    pub dims: Vec<usize>,
    pub weights: Vec<DenseMatrix<T>>,
}

impl<T: Scalar> GcnModel<T> {
    /// Builds a model from explicit weights, checking every shape against
    /// `dims` and `arch`.
    pub fn from_weights(arch: Arch, dims: Vec<usize>, weights: Vec<DenseMatrix<T>>) -> Result<Self> {
        validate_dims(&dims)?;
        if weights.len() != dims.len() - 1 {
            return Err(Error::shape(
                "GcnModel::from_weights",
                format!("{} weights for {} layers", weights.len(), dims.len() - 1),
            ));
        }
        for (l, w) in weights.iter().enumerate() {
            let want = (arch.row_multiplier() * dims[l], dims[l + 1]);
            if w.shape() != want {
                return Err(Error::shape(
                    "GcnModel::from_weights",
                    format!("layer {l} weight is {:?}, expected {want:?}", w.shape()),
                ));
            }
        }
        Ok(Self { arch, dims, weights })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> GcnModel<U> {
        GcnModel {
            arch: self.arch,
            dims: self.dims.clone(),
            weights: self.weights.iter().map(|w| w.cast()).collect(),
        }
    }

    pub fn zeros_like(&self) -> Vec<DenseMatrix<T>> {
        self.weights
            .iter()
            .map(|w| DenseMatrix::zeros(w.rows(), w.cols()))
            .collect()
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "model needs at least an input and an output dimension, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!(
            "model dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Glorot-uniform initialisation: every entry of `Θ_ℓ` is drawn from
/// `U(-s, s)` with `s = sqrt(6 / (fan_in + fan_out))`.
pub fn init_glorot<T: Scalar>(dims: &[usize], arch: Arch, rng: &mut impl Rng) -> Result<GcnModel<T>> {
    validate_dims(dims)?;
    let weights = dims
        .windows(2)
        .map(|w| {
            let fan_in = arch.row_multiplier() * w[0];
            let fan_out = w[1];
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            DenseMatrix::from_fn(fan_in, fan_out, |_, _| T::of(rng.gen_range(-s..s)))
        })
        .collect();
    Ok(GcnModel {
        arch,
        dims: dims.to_vec(),
        weights,
    })
}

/// Intermediate values recorded by the forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTape<'a, T: Scalar> {
    /// Input of layer 0 (after dropout, if any).
    input: Cow<'a, NodeFeatures<T>>,
    /// `hidden[ℓ-1]` is the input of layer `ℓ ≥ 1` after dropout.
    hidden: Vec<DenseMatrix<T>>,
    /// Dropout scale masks applied to `hidden`.
    masks: Vec<Option<DenseMatrix<T>>>,
    /// Pre-activations `Z_ℓ`.
    pre_activations: Vec<DenseMatrix<T>>,
    dims: Vec<usize>,
    arch: Arch,
}

impl<T: Scalar> ForwardTape<'_, T> {
    pub fn pre_activations(&self) -> &[DenseMatrix<T>] {
        &self.pre_activations
    }

    /// Post-activation outputs `H_ℓ` of the hidden layers (before dropout).
    pub fn activations(&self) -> Vec<DenseMatrix<T>> {
        self.pre_activations[..self.pre_activations.len().saturating_sub(1)]
            .iter()
            .map(relu)
            .collect()
    }
}

fn relu<T: Scalar>(z: &DenseMatrix<T>) -> DenseMatrix<T> {
    z.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Dropout applied to the input of every layer during training.
pub struct Dropout<'r, R: Rng> {
    pub rate: f64,
    pub rng: &'r mut R,
}

/// Inference forward pass.
pub fn forward<'a, T: Scalar>(
    model: &GcnModel<T>,
    op: &SparseMatrix<T>,
    x: &'a NodeFeatures<T>,
) -> Result<(DenseMatrix<T>, ForwardTape<'a, T>)> {
    forward_with::<T, rand_chacha::ChaCha8Rng>(model, op, x, None)
}

/// Forward pass with optional dropout; the tape records everything
/// [`backward`] needs.
pub fn forward_with<'a, T: Scalar, R: Rng>(
    model: &GcnModel<T>,
    op: &SparseMatrix<T>,
    x: &'a NodeFeatures<T>,
    mut dropout: Option<Dropout<'_, R>>,
) -> Result<(DenseMatrix<T>, ForwardTape<'a, T>)> {
    let n = x.rows();
    if op.rows() != n || op.cols() != n {
        return Err(Error::shape(
            "forward",
            format!("operator is {}x{} for {n} nodes", op.rows(), op.cols()),
        ));
    }
    if x.cols() != model.dims[0] {
        return Err(Error::shape(
            "forward",
            format!("{} input features, model expects {}", x.cols(), model.dims[0]),
        ));
    }
    let active = dropout.as_ref().is_some_and(|d| d.rate > 0.0);
    let input: Cow<'a, NodeFeatures<T>> = match dropout.as_mut() {
        Some(d) if d.rate > 0.0 => Cow::Owned(x.dropout(d.rate, d.rng).0),
        _ => Cow::Borrowed(x),
    };
    let layers = model.num_layers();
    let mut hidden = Vec::with_capacity(layers.saturating_sub(1));
    let mut masks = Vec::with_capacity(layers.saturating_sub(1));
    let mut pre_activations = Vec::with_capacity(layers);
    for (l, w) in model.weights.iter().enumerate() {
        let z = if l == 0 {
            layer_forward(model.arch, op, &input, w, model.dims[0])?
        } else {
            let h: &DenseMatrix<T> = &hidden[l - 1];
            layer_forward_dense(model.arch, op, h, w, model.dims[l])?
        };
        if l + 1 < layers {
            let mut h = relu(&z);
            let mut mask = None;
            if active {
                let d = dropout.as_mut().expect("active implies dropout");
                let (dropped, m) = NodeFeatures::Dense(h).dropout(d.rate, d.rng);
                h = match dropped {
                    NodeFeatures::Dense(h) => h,
                    NodeFeatures::Sparse(_) => unreachable!("dense stays dense"),
                };
                mask = m;
            }
            hidden.push(h);
            masks.push(mask);
        }
        pre_activations.push(z);
    }
    let logits = pre_activations.last().expect("at least one layer").clone();
    Ok((
        logits,
        ForwardTape {
            input,
            hidden,
            masks,
            pre_activations,
            dims: model.dims.clone(),
            arch: model.arch,
        },
    ))
}

fn layer_forward<T: Scalar>(
    arch: Arch,
    op: &SparseMatrix<T>,
    h: &NodeFeatures<T>,
    w: &DenseMatrix<T>,
    d_in: usize,
) -> Result<DenseMatrix<T>> {
    match arch {
        Arch::Gcn => op.spmm(&h.mul(w)?),
        Arch::SageMean => {
            let (w_self, w_neigh) = w.split_rows(d_in)?;
            let mut z = h.mul(&w_self)?;
            z.add_assign(&op.spmm(&h.mul(&w_neigh)?)?)?;
            Ok(z)
        }
    }
}

fn layer_forward_dense<T: Scalar>(
    arch: Arch,
    op: &SparseMatrix<T>,
    h: &DenseMatrix<T>,
    w: &DenseMatrix<T>,
    d_in: usize,
) -> Result<DenseMatrix<T>> {
    match arch {
        Arch::Gcn => op.spmm(&h.matmul(w)?),
        Arch::SageMean => {
            let (w_self, w_neigh) = w.split_rows(d_in)?;
            let mut z = h.matmul(&w_self)?;
            z.add_assign(&op.spmm(&h.matmul(&w_neigh)?)?)?;
            Ok(z)
        }
    }
}

/// Gradients of the loss with respect to every weight matrix, given
/// `dlogits = ∂L/∂logits`. ReLU's derivative at exactly zero is taken as 0.
pub fn backward<T: Scalar>(
    model: &GcnModel<T>,
    op: &SparseMatrix<T>,
    tape: &ForwardTape<'_, T>,
    dlogits: &DenseMatrix<T>,
) -> Result<Vec<DenseMatrix<T>>> {
    let layers = model.num_layers();
    if tape.dims != model.dims || tape.arch != model.arch || tape.pre_activations.len() != layers {
        return Err(Error::shape(
            "backward",
            "tape was recorded for a different model".to_string(),
        ));
    }
    let last = &tape.pre_activations[layers - 1];
    if dlogits.shape() != last.shape() {
        return Err(Error::shape(
            "backward",
            format!("dlogits {:?} vs logits {:?}", dlogits.shape(), last.shape()),
        ));
    }
    let mut grads: Vec<DenseMatrix<T>> = Vec::with_capacity(layers);
    let mut g = dlogits.clone();
    for l in (0..layers).rev() {
        let w = &model.weights[l];
        let d_in = model.dims[l];
        let need_dh = l > 0;
        let (dw, dh) = if l == 0 {
            layer_backward(model.arch, op, &tape.input, w, d_in, &g, false)?
        } else {
            let h = NodeFeatures::Dense(tape.hidden[l - 1].clone());
            layer_backward(model.arch, op, &h, w, d_in, &g, need_dh)?
        };
        grads.push(dw);
        if let Some(mut dh) = dh {
            if let Some(mask) = &tape.masks[l - 1] {
                dh = dh.zip_map(mask, |a, m| a * m)?;
            }
            let z = &tape.pre_activations[l - 1];
            g = dh.zip_map(z, |a, zv| if zv > T::zero() { a } else { T::zero() })?;
        }
    }
    grads.reverse();
    Ok(grads)
}

fn layer_backward<T: Scalar>(
    arch: Arch,
    op: &SparseMatrix<T>,
    h: &NodeFeatures<T>,
    w: &DenseMatrix<T>,
    d_in: usize,
    g: &DenseMatrix<T>,
    need_dh: bool,
) -> Result<(DenseMatrix<T>, Option<DenseMatrix<T>>)> {
    match arch {
        Arch::Gcn => {
            // Z = Ā (H Θ):  dΘ = Hᵀ (Āᵀ G),  dH = (Āᵀ G) Θᵀ
            let p = op.spmm_t(g)?;
            let dw = h.tmul(&p)?;
            let dh = if need_dh { Some(p.matmul_nt(w)?) } else { None };
            Ok((dw, dh))
        }
        Arch::SageMean => {
            // Z = H Θs + N (H Θn):  dΘs = Hᵀ G,  dΘn = Hᵀ (Nᵀ G),  dH = G Θsᵀ + (Nᵀ G) Θnᵀ
            let (w_self, w_neigh) = w.split_rows(d_in)?;
            let q = op.spmm_t(g)?;
            let dw = h.tmul(g)?.vstack(&h.tmul(&q)?)?;
            let dh = if need_dh {
                let mut dh = g.matmul_nt(&w_self)?;
                dh.add_assign(&q.matmul_nt(&w_neigh)?)?;
                Some(dh)
            } else {
                None
            };
            Ok((dw, dh))
        }
    }
}
