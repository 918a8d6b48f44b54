//! Disjoint feature partitions, sub-network extraction and write-back.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Arch, GcnModel};
use crate::tensor::Scalar;

/// Per-dimension index blocks `D_ℓ^(i)` for `m` sub-networks.
///
/// Unpartitioned dimensions (the input unless requested, and always the
/// output) hold a single block with every index, shared by all sub-networks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeaturePartition {
    m: usize,
    dims: Vec<usize>,
    partitioned: Vec<bool>,
    blocks: Vec<Vec<Vec<usize>>>,
}

impl FeaturePartition {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn is_partitioned(&self, dim: usize) -> bool {
        self.partitioned[dim]
    }

    /// Indices of dimension `dim` owned by sub-network `i`.
    pub fn block(&self, dim: usize, i: usize) -> &[usize] {
        if self.partitioned[dim] {
            &self.blocks[dim][i]
        } else {
            &self.blocks[dim][0]
        }
    }

    /// Dimensions `[b_0, …, b_L]` of sub-network `i`.
    pub fn sub_dims(&self, i: usize) -> Vec<usize> {
        (0..self.dims.len()).map(|l| self.block(l, i).len()).collect()
    }

    fn check_worker(&self, i: usize) -> Result<()> {
        if i >= self.m {
            return Err(Error::Index {
                op: "sub-network id",
                index: i,
                len: self.m,
            });
        }
        Ok(())
    }

    fn weight_rows(&self, arch: Arch, l: usize, i: usize) -> Vec<usize> {
        let block = self.block(l, i);
        match arch {
            Arch::Gcn => block.to_vec(),
            Arch::SageMean => {
                let d = self.dims[l];
                block.iter().copied().chain(block.iter().map(|&r| r + d)).collect()
            }
        }
    }

    fn check_model<T: Scalar>(&self, model: &GcnModel<T>) -> Result<()> {
        if model.dims != self.dims {
            return Err(Error::shape(
                "partition",
                format!("partition dims {:?} vs model dims {:?}", self.dims, model.dims),
            ));
        }
        Ok(())
    }
}

/// Samples a balanced random partition: each partitioned dimension is a
/// uniform permutation of `0..d_ℓ` cut into `m` contiguous chunks whose sizes
/// differ by at most one.
pub fn sample_partition(
    dims: &[usize],
    m: usize,
    partition_input: bool,
    rng: &mut impl Rng,
) -> Result<FeaturePartition> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two dims, got {dims:?}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("sub-network count must be at least 1".into()));
    }
    let last = dims.len() - 1;
    let partitioned: Vec<bool> = (0..dims.len())
        .map(|l| m > 1 && l != last && (l != 0 || partition_input))
        .collect();
    let mut blocks = Vec::with_capacity(dims.len());
    for (l, &d) in dims.iter().enumerate() {
        if !partitioned[l] {
            blocks.push(vec![(0..d).collect()]);
            continue;
        }
        if m > d {
            return Err(Error::InvalidArgument(format!(
                "cannot split dimension {l} of size {d} into {m} non-empty blocks"
            )));
        }
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        let (base, extra) = (d / m, d % m);
        let mut start = 0;
        let mut dim_blocks = Vec::with_capacity(m);
        for i in 0..m {
            let len = base + usize::from(i < extra);
            dim_blocks.push(perm[start..start + len].to_vec());
            start += len;
        }
        blocks.push(dim_blocks);
    }
    Ok(FeaturePartition {
        m,
        dims: dims.to_vec(),
        partitioned,
        blocks,
    })
}

/// Sub-network `i`: `Θ_ℓ^(i) = Θ_ℓ[D_ℓ^(i), D_{ℓ+1}^(i)]`.
pub fn extract_sub_model<T: Scalar>(model: &GcnModel<T>, p: &FeaturePartition, i: usize) -> Result<GcnModel<T>> {
    p.check_model(model)?;
    p.check_worker(i)?;
    let weights = model
        .weights
        .iter()
        .enumerate()
        .map(|(l, w)| w.slice(&p.weight_rows(model.arch, l, i), p.block(l + 1, i)))
        .collect::<Result<Vec<_>>>()?;
    GcnModel::from_weights(model.arch, p.sub_dims(i), weights)
}

/// Writes every sub-network back into its blocks of the global model and
/// returns, per layer, how often each weight entry was written (row-major).
/// A second write to any entry is an error; entries outside every block are
/// left untouched.
pub fn aggregate_counted<T: Scalar>(
    model: &mut GcnModel<T>,
    subs: &[GcnModel<T>],
    p: &FeaturePartition,
) -> Result<Vec<Vec<u32>>> {
    p.check_model(model)?;
    if subs.len() != p.m {
        return Err(Error::shape("aggregate", format!("{} sub-networks for m = {}", subs.len(), p.m)));
    }
    for (i, sub) in subs.iter().enumerate() {
        if sub.arch != model.arch || sub.dims != p.sub_dims(i) {
            return Err(Error::shape(
                "aggregate",
                format!("sub-network {i} has dims {:?}, partition expects {:?}", sub.dims, p.sub_dims(i)),
            ));
        }
    }
    let mut counts: Vec<Vec<u32>> = model.weights.iter().map(|w| vec![0; w.len()]).collect();
    for (i, sub) in subs.iter().enumerate() {
        for (l, w) in model.weights.iter_mut().enumerate() {
            let rows = p.weight_rows(model.arch, l, i);
            let cols = p.block(l + 1, i);
            let stride = w.cols();
            for &r in &rows {
                for &c in cols {
                    let k = r * stride + c;
                    counts[l][k] += 1;
                    if counts[l][k] > 1 {
                        return Err(Error::InvalidArgument(format!(
                            "aggregate: entry ({r}, {c}) of layer {l} written twice"
                        )));
                    }
                }
            }
            w.scatter(&rows, cols, &sub.weights[l])?;
        }
    }
    Ok(counts)
}

pub fn aggregate<T: Scalar>(model: &mut GcnModel<T>, subs: &[GcnModel<T>], p: &FeaturePartition) -> Result<()> {
    aggregate_counted(model, subs, p).map(|_| ())
}

/// Boolean matrix of the weight entries some sub-network owns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coverage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl Coverage {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn fraction(&self) -> f64 {
        self.data.iter().filter(|&&b| b).count() as f64 / self.data.len() as f64
    }
}

/// `mask[ℓ][r][c]` is true iff `(r, c)` lies in `D_ℓ^(i) × D_{ℓ+1}^(i)` for
/// some `i`.
pub fn coverage_mask(p: &FeaturePartition, arch: Arch) -> Vec<Coverage> {
    (0..p.dims.len() - 1)
        .map(|l| {
            let rows = arch.row_multiplier() * p.dims[l];
            let cols = p.dims[l + 1];
            let mut data = vec![false; rows * cols];
            for i in 0..p.m {
                for r in p.weight_rows(arch, l, i) {
                    for &c in p.block(l + 1, i) {
                        data[r * cols + c] = true;
                    }
                }
            }
            Coverage { rows, cols, data }
        })
        .collect()
}
