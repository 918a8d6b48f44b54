use crate::error::{Error, Result};
use crate::tensor::{DenseMatrix, Scalar};

/// Mean softmax cross-entropy over the rows selected by `mask`, with its
/// gradient. Rows outside the mask get a zero gradient.
pub fn loss_ce<T: Scalar>(
    logits: &DenseMatrix<T>,
    labels: &[usize],
    mask: &[bool],
) -> Result<(T, DenseMatrix<T>)> {
    let (n, k) = logits.shape();
    if labels.len() != n || mask.len() != n {
        return Err(Error::shape(
            "loss_ce",
            format!("{n} logit rows, {} labels, {} mask entries", labels.len(), mask.len()),
        ));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::InvalidArgument("loss_ce: empty mask".into()));
    }
    let inv = T::one() / T::of(count as f64);
    let mut grad = DenseMatrix::zeros(n, k);
    let mut total = T::zero();
    for i in (0..n).filter(|&i| mask[i]) {
        let y = labels[i];
        if y >= k {
            return Err(Error::Index {
                op: "loss_ce",
                index: y,
                len: k,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[y];
        let g = grad.row_mut(i);
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] - log_z).exp();
            *gj = (p - if j == y { T::one() } else { T::zero() }) * inv;
        }
    }
    Ok((total * inv, grad))
}

/// Squared residual norm `‖y − ŷ‖²` and its gradient `−2(y − ŷ)` with
/// respect to `ŷ`.
pub fn loss_sq<T: Scalar>(yhat: &[T], y: &[T]) -> Result<(T, Vec<T>)> {
    if yhat.len() != y.len() {
        return Err(Error::shape(
            "loss_sq",
            format!("prediction length {} vs target length {}", yhat.len(), y.len()),
        ));
    }
    let two = T::of(2.0);
    let mut loss = T::zero();
    let grad = yhat
        .iter()
        .zip(y)
        .map(|(&p, &t)| {
            let r = t - p;
            loss += r * r;
            -two * r
        })
        .collect();
    Ok((loss, grad))
}

/// Fraction of masked rows whose argmax matches the label; 0 for an empty mask.
pub fn accuracy<T: Scalar>(logits: &DenseMatrix<T>, labels: &[usize], mask: &[bool]) -> f64 {
    let pred = logits.argmax_rows();
    let (mut hit, mut total) = (0usize, 0usize);
    for i in (0..pred.len()).filter(|&i| mask[i]) {
        total += 1;
        hit += usize::from(pred[i] == labels[i]);
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
