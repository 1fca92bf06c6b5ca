//! Softmax cross-entropy.

use ndarray::Array2;

/// Numerically stable row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean cross-entropy over rows. Returns `(loss, probs, dlogits)` where
/// `dlogits = (probs - onehot) / N` is the gradient of the mean loss.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
) -> (f64, Array2<f64>, Array2<f64>) {
    let n = logits.nrows();
    assert_eq!(n, labels.len(), "one label per logit row");
    assert!(n > 0, "cross entropy over empty batch");
    let probs = softmax(logits);
    let mut loss = 0.0;
    let mut dlogits = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        assert!(label < logits.ncols(), "label {label} out of range");
        loss -= probs[(i, label)].max(1e-300).ln();
        dlogits[(i, label)] -= 1.0;
    }
    dlogits.mapv_inplace(|v| v / n as f64);
    (loss / n as f64, probs, dlogits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use ndarray::{Axis, Ix2};

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let logits =
            Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1000.0, 0.0, 1000.0]).unwrap();
        let p = softmax(&logits);
        for row in p.axis_iter(Axis(0)) {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        let shifted = softmax(&logits.mapv(|v| v + 100.0));
        for (a, b) in p.iter().zip(shifted.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_logits_give_ln_classes() {
        let logits = Array2::zeros((4, 2));
        let (loss, probs, _) = cross_entropy(&logits, &[0, 1, 0, 1]);
        assert!((loss - (2.0f64).ln()).abs() < 1e-12);
        assert!(probs.iter().all(|&p| (p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits =
            Array2::from_shape_vec((3, 2), vec![0.3, -0.7, 1.2, 0.4, -0.1, 0.0]).unwrap();
        let labels = [0usize, 1, 1];
        let (_, _, dlogits) = cross_entropy(&logits, &labels);
        let mut flat = logits.clone().into_dyn();
        gradcheck::check_param(
            &mut flat,
            &dlogits.into_dyn(),
            |lv| {
                let l2 = lv.view().into_dimensionality::<Ix2>().unwrap().to_owned();
                cross_entropy(&l2, &labels).0
            },
            1e-3,
        );
    }
}
