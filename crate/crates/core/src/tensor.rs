//! Row-major dense matrices and CSR sparse matrices.
//!
//! Every kernel accumulates each output element sequentially in index order,
//! so results are bit-reproducible for a given input regardless of how the
//! caller schedules work.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real scalar used by the kernels: `f32` on the training path, `f64` for
/// gradient checks and spectral work.
pub trait Scalar:
    Float
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DenseMatrix {}x{} ", self.rows, self.cols)?;
        f.debug_list()
            .entries(self.data.chunks(self.cols.max(1)).take(8))
            .finish()
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::new",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds a matrix from nested rows; all rows must have equal length.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::shape(
                    "DenseMatrix::from_rows",
                    format!("row {i} has {} entries, expected {cols}", r.len()),
                ));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// `self · b`.
    pub fn matmul(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != b.rows {
            return Err(Error::shape(
                "matmul",
                format!("{}x{} times {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        let n = b.cols;
        let mut out = DenseMatrix::zeros(self.rows, n);
        if n == 0 {
            return Ok(out);
        }
        for (arow, orow) in self
            .data
            .chunks_exact(self.cols.max(1))
            .zip(out.data.chunks_exact_mut(n))
        {
            if self.cols == 0 {
                break;
            }
            for (p, &av) in arow.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let brow = &b.data[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · b` without materialising the transpose.
    pub fn matmul_tn(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != b.rows {
            return Err(Error::shape(
                "matmul_tn",
                format!("({}x{})ᵀ times {}x{}", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        let n = b.cols;
        let mut out = DenseMatrix::zeros(self.cols, n);
        if n == 0 || self.cols == 0 {
            return Ok(out);
        }
        for r in 0..self.rows {
            let brow = b.row(r);
            for (i, &av) in self.row(r).iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let orow = &mut out.data[i * n..(i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        Ok(out)
    }

    /// `self · bᵀ`.
    pub fn matmul_nt(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != b.cols {
            return Err(Error::shape(
                "matmul_nt",
                format!("{}x{} times ({}x{})ᵀ", self.rows, self.cols, b.rows, b.cols),
            ));
        }
        self.matmul(&b.transpose())
    }

    pub fn transpose(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    pub fn zip_map(&self, other: &DenseMatrix<T>, f: impl Fn(T, T) -> T) -> Result<DenseMatrix<T>> {
        self.check_same_shape("zip_map", other)?;
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &DenseMatrix<T>) -> Result<()> {
        self.check_same_shape("add_assign", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha · other`
    pub fn axpy(&mut self, alpha: T, other: &DenseMatrix<T>) -> Result<()> {
        self.check_same_shape("axpy", other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: T) -> DenseMatrix<T> {
        self.map(|v| v * s)
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    /// Numerically stable row-wise softmax.
    pub fn softmax_rows(&self) -> DenseMatrix<T> {
        let mut out = self.clone();
        if self.cols == 0 {
            return out;
        }
        for row in out.data.chunks_exact_mut(self.cols) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        out
    }

    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// `result[i][j] = self[row_idx[i]][col_idx[j]]`
    pub fn slice(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<DenseMatrix<T>> {
        check_indices("slice", row_idx, self.rows)?;
        check_indices("slice", col_idx, self.cols)?;
        let mut data = Vec::with_capacity(row_idx.len() * col_idx.len());
        for &r in row_idx {
            let row = self.row(r);
            data.extend(col_idx.iter().map(|&c| row[c]));
        }
        Ok(DenseMatrix {
            rows: row_idx.len(),
            cols: col_idx.len(),
            data,
        })
    }

    pub fn select_rows(&self, row_idx: &[usize]) -> Result<DenseMatrix<T>> {
        check_indices("select_rows", row_idx, self.rows)?;
        let mut data = Vec::with_capacity(row_idx.len() * self.cols);
        for &r in row_idx {
            data.extend_from_slice(self.row(r));
        }
        Ok(DenseMatrix {
            rows: row_idx.len(),
            cols: self.cols,
            data,
        })
    }

    /// `self[row_idx[i]][col_idx[j]] = src[i][j]`; all other entries are untouched.
    pub fn scatter(&mut self, row_idx: &[usize], col_idx: &[usize], src: &DenseMatrix<T>) -> Result<()> {
        if src.rows != row_idx.len() || src.cols != col_idx.len() {
            return Err(Error::shape(
                "scatter",
                format!(
                    "source is {}x{} but index sets are {}x{}",
                    src.rows,
                    src.cols,
                    row_idx.len(),
                    col_idx.len()
                ),
            ));
        }
        check_indices("scatter", row_idx, self.rows)?;
        check_indices("scatter", col_idx, self.cols)?;
        for (i, &r) in row_idx.iter().enumerate() {
            let srow = src.row(i);
            let drow = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (j, &c) in col_idx.iter().enumerate() {
                drow[c] = srow[j];
            }
        }
        Ok(())
    }

    /// `[self | other]`
    pub fn hstack(&self, other: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "hstack",
                format!("{} rows vs {} rows", self.rows, other.rows),
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Splits columns at `at`: `(self[:, ..at], self[:, at..])`.
    pub fn split_cols(&self, at: usize) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        if at > self.cols {
            return Err(Error::Index {
                op: "split_cols",
                index: at,
                len: self.cols,
            });
        }
        let left: Vec<usize> = (0..at).collect();
        let right: Vec<usize> = (at..self.cols).collect();
        let all: Vec<usize> = (0..self.rows).collect();
        Ok((self.slice(&all, &left)?, self.slice(&all, &right)?))
    }

    /// Splits rows at `at`: `(self[..at, :], self[at.., :])`.
    pub fn split_rows(&self, at: usize) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        if at > self.rows {
            return Err(Error::Index {
                op: "split_rows",
                index: at,
                len: self.rows,
            });
        }
        let (a, b) = self.data.split_at(at * self.cols);
        Ok((
            DenseMatrix {
                rows: at,
                cols: self.cols,
                data: a.to_vec(),
            },
            DenseMatrix {
                rows: self.rows - at,
                cols: self.cols,
                data: b.to_vec(),
            },
        ))
    }

    pub fn vstack(&self, other: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != other.cols {
            return Err(Error::shape(
                "vstack",
                format!("{} cols vs {} cols", self.cols, other.cols),
            ));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DenseMatrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Largest `|a_ij - a_ji|`; errors if the matrix is not square.
    pub fn asymmetry(&self) -> Result<f64> {
        if self.rows != self.cols {
            return Err(Error::shape(
                "asymmetry",
                format!("{}x{} is not square", self.rows, self.cols),
            ));
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs().as_f64());
            }
        }
        Ok(worst)
    }

    fn check_same_shape(&self, op: &'static str, other: &DenseMatrix<T>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{} vs {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        Ok(())
    }
}

fn check_indices(op: &'static str, idx: &[usize], len: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::Index { op, index, len }),
        None => Ok(()),
    }
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix<T = f32> {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Validates the CSR invariants: monotone `row_ptr`, strictly increasing
    /// in-range column indices per row, and parallel `col_idx`/`values`.
    pub fn new(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_ptr.len() != rows + 1 {
            return Err(Error::InvalidSparse(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                rows + 1
            )));
        }
        if row_ptr[0] != 0 {
            return Err(Error::InvalidSparse("row_ptr[0] must be 0".into()));
        }
        if col_idx.len() != values.len() || row_ptr[rows] != col_idx.len() {
            return Err(Error::InvalidSparse(format!(
                "nnz mismatch: row_ptr[rows]={}, col_idx={}, values={}",
                row_ptr[rows],
                col_idx.len(),
                values.len()
            )));
        }
        for r in 0..rows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(Error::InvalidSparse(format!("row_ptr decreases at row {r}")));
            }
            let cols_r = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            for w in cols_r.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidSparse(format!(
                        "column indices not strictly increasing in row {r}"
                    )));
                }
            }
            if let Some(&c) = cols_r.last() {
                if c >= cols {
                    return Err(Error::InvalidSparse(format!(
                        "column index {c} out of range in row {r}"
                    )));
                }
            }
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; explicit zeros are kept.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows {
                return Err(Error::Index {
                    op: "from_triplets",
                    index: r,
                    len: rows,
                });
            }
            if c >= cols {
                return Err(Error::Index {
                    op: "from_triplets",
                    index: c,
                    len: cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            col_idx.push(c);
            values.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::new(rows, cols, row_ptr, col_idx, values)
    }

    pub fn from_dense(a: &DenseMatrix<T>) -> Self {
        let mut row_ptr = Vec::with_capacity(a.rows() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..a.rows() {
            for (c, &v) in a.row(r).iter().enumerate() {
                if v != T::zero() {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            rows: a.rows(),
            cols: a.cols(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(col, value)` pairs of row `r` in increasing column order.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> SparseMatrix<U> {
        SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn transpose(&self) -> SparseMatrix<T> {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                let slot = next[c];
                col_idx[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// Keeps only the listed columns, renumbered in the given order.
    pub fn select_columns(&self, col_idx: &[usize]) -> Result<SparseMatrix<T>> {
        check_indices("select_columns", col_idx, self.cols)?;
        let mut remap = vec![usize::MAX; self.cols];
        for (new, &old) in col_idx.iter().enumerate() {
            remap[old] = new;
        }
        let mut triplets = Vec::new();
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                if remap[c] != usize::MAX {
                    triplets.push((r, remap[c], v));
                }
            }
        }
        SparseMatrix::from_triplets(self.rows, col_idx.len(), &triplets)
    }

    /// Same sparsity pattern with values replaced by `f(row, col, value)`.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, T) -> T) -> SparseMatrix<T> {
        let mut out = self.clone();
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.values[k] = f(r, self.col_idx[k], self.values[k]);
            }
        }
        out
    }

    /// `self · b` with `self` sparse.
    pub fn spmm(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != b.rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} times {}x{}", self.rows, self.cols, b.rows(), b.cols()),
            ));
        }
        let n = b.cols();
        let mut out = DenseMatrix::zeros(self.rows, n);
        if n == 0 {
            return Ok(out);
        }
        for r in 0..self.rows {
            let orow = out.row_mut(r);
            for (c, v) in self.row_entries(r) {
                for (o, &bv) in orow.iter_mut().zip(b.row(c)) {
                    *o += v * bv;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · b` with `self` sparse, without building the transpose.
    pub fn spmm_t(&self, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != b.rows() {
            return Err(Error::shape(
                "spmm_t",
                format!("({}x{})ᵀ times {}x{}", self.rows, self.cols, b.rows(), b.cols()),
            ));
        }
        let n = b.cols();
        let mut out = DenseMatrix::zeros(self.cols, n);
        if n == 0 {
            return Ok(out);
        }
        for r in 0..self.rows {
            let brow = b.row(r);
            for (c, v) in self.row_entries(r) {
                for (o, &bv) in out.row_mut(c).iter_mut().zip(brow) {
                    *o += v * bv;
                }
            }
        }
        Ok(out)
    }

    /// Sum of all stored values.
    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }
}
