use super::Matrix;
use crate::{Error, Result};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
///
/// Rows are shifted by their max before exponentiation. The returned gradient
/// is already divided by the batch size.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != n {
        return Err(Error::shape("softmax_cross_entropy labels", n, labels.len()));
    }
    let mut grad = Matrix::zeros(n, k);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: k,
            });
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = sum_exp.ln();
        total += log_sum - (row[label] - max);
        for (j, &v) in row.iter().enumerate() {
            let p = (v - max - log_sum).exp();
            let target = if j == label { 1.0 } else { 0.0 };
            grad.set(i, j, (p - target) * inv_n);
        }
    }
    let loss = total * inv_n;
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite("softmax_cross_entropy"));
    }
    Ok((loss, grad))
}

/// Number of rows whose argmax (first maximum on ties) equals the label.
pub fn count_correct(logits: &Matrix, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &label)| argmax(logits.row(i)) == label)
        .count()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Matrix::zeros(3, 4);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn confident_correct_logit_is_near_zero() {
        let logits = Matrix::new(1, 3, vec![0.0, 100.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn two_class_scalar_case() {
        let logits = Matrix::new(1, 2, vec![1.0, 2.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1]).unwrap();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((loss - expected).abs() < 1e-12);
        assert!((loss - 0.3133).abs() < 1e-4);
        // gradient of a row sums to zero
        assert!((grad.data().iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            softmax_cross_entropy(&Matrix::zeros(1, 2), &[]),
            Err(Error::EmptyBatch)
        ));
        assert!(softmax_cross_entropy(&Matrix::zeros(1, 2), &[2]).is_err());
    }

    #[test]
    fn counts_correct_predictions() {
        let logits = Matrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(count_correct(&logits, &[0, 0]), 1);
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }
}
