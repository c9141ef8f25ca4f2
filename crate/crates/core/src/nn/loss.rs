use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Mean softmax cross-entropy over the rows selected by `mask`, and its
/// gradient with respect to the logits (zero on unselected rows).
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n || mask.len() != n {
        return Err(Error::dim(format!(
            "{n} logit rows, {} labels, {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, c);
    for i in (0..n).filter(|&i| mask[i]) {
        let y = labels[i];
        if y >= c {
            return Err(Error::Range {
                what: "label",
                index: y,
                limit: c,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (j, (g, v)) in grad.row_mut(i).iter_mut().zip(row).enumerate() {
            let p = (v - log_z).exp();
            *g = (p - if j == y { 1.0 } else { 0.0 }) * inv;
        }
    }
    Ok((loss * inv, grad))
}
