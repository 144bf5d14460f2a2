//! Softmax and cross-entropy over `[K x 2]` score matrices.

/// Row-wise softmax with max-subtraction for overflow safety.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    debug_assert!(scores.len() % 2 == 0);
    let mut out = vec![0.0; scores.len()];
    for (row_in, row_out) in scores.chunks_exact(2).zip(out.chunks_exact_mut(2)) {
        let m = row_in[0].max(row_in[1]);
        let e0 = (row_in[0] - m).exp();
        let e1 = (row_in[1] - m).exp();
        let z = e0 + e1;
        row_out[0] = e0 / z;
        row_out[1] = e1 / z;
    }
    out
}

/// Probability floor used inside the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Mean over the batch of -log p[label].
pub fn cross_entropy(probabilities: &[f64], labels: &[usize]) -> f64 {
    debug_assert_eq!(probabilities.len(), labels.len() * 2);
    let mut loss = 0.0;
    for (row, &y) in probabilities.chunks_exact(2).zip(labels) {
        loss += -(row[y].max(PROB_CLAMP)).ln();
    }
    loss / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_scores_give_half() {
        let p = softmax(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn large_scores_do_not_overflow() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shift_invariance_holds() {
        // Shifted inputs hit different rounding, so compare to a few ulps.
        for c in [-5.0, 0.0, 123.456] {
            let a = softmax(&[1.2, -0.4]);
            let b = softmax(&[1.2 + c, -0.4 + c]);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let p = softmax(&[3.0, -1.0, 0.2, 0.3]);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!((p[2] + p[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        assert_eq!(cross_entropy(&[1.0, 0.0], &[0]), 0.0);
    }

    #[test]
    fn uniform_prediction_is_ln_two() {
        let loss = cross_entropy(&[0.5, 0.5], &[1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let loss = cross_entropy(&[0.0, 1.0], &[0]);
        assert!((loss - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(loss.is_finite());
        assert!(loss > 27.0 && loss < 28.0);
    }
}
