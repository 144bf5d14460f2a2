//! Component-specific batch normalization. Training and target evaluation
//! standardize with the current batch's statistics; source evaluation uses
//! the running statistics accumulated during training.

use super::{NetworkError, Phase};

/// Per-map running statistics plus the standardization epsilon. The affine
/// gamma/beta live with the trainable parameters, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct CsbnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
}

impl CsbnState {
    pub fn new(maps: usize, epsilon: f64, momentum: f64) -> CsbnState {
        CsbnState {
            running_mean: vec![0.0; maps],
            running_var: vec![1.0; maps],
            epsilon,
            momentum,
        }
    }
}

/// Result of a normalization pass.
#[derive(Debug, Clone)]
pub struct CsbnOutput {
    /// gamma * standardized + beta, same layout as the input.
    pub output: Vec<f64>,
    /// Pre-affine standardized features (cached for backprop and tests).
    pub standardized: Vec<f64>,
    /// Per-map mean/variance actually used for standardization.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// True when a target-eval batch was too small and running statistics
    /// were substituted.
    pub fallback_to_running: bool,
}

/// Minimum target-eval batch for trustworthy batch statistics.
pub const MIN_TARGET_BATCH: usize = 8;

/// Normalize `features` laid out `[K x maps x len]`, one statistic pair per
/// map over the K*len entries.
pub fn csbn_normalize(
    features: &[f64],
    k: usize,
    maps: usize,
    len: usize,
    gamma: &[f64],
    beta: &[f64],
    state: &mut CsbnState,
    phase: Phase,
) -> Result<CsbnOutput, NetworkError> {
    if features.len() != k * maps * len || gamma.len() != maps || beta.len() != maps {
        return Err(NetworkError::ShapeError {
            what: "csbn features",
            expected: k * maps * len,
            found: features.len(),
        });
    }
    let use_batch = match phase {
        Phase::Train => {
            if k < 2 {
                return Err(NetworkError::BatchTooSmall(k));
            }
            true
        }
        Phase::SourceEval => false,
        Phase::TargetEval => {
            if k < 2 {
                return Err(NetworkError::BatchTooSmall(k));
            }
            k >= MIN_TARGET_BATCH
        }
    };

    let n = (k * len) as f64;
    let mut mean = vec![0.0; maps];
    let mut var = vec![0.0; maps];
    if use_batch {
        for m in 0..maps {
            let mut sum = 0.0;
            for s in 0..k {
                let base = (s * maps + m) * len;
                sum += features[base..base + len].iter().sum::<f64>();
            }
            let mu = sum / n;
            let mut sq = 0.0;
            for s in 0..k {
                let base = (s * maps + m) * len;
                for &v in &features[base..base + len] {
                    sq += (v - mu) * (v - mu);
                }
            }
            mean[m] = mu;
            var[m] = sq / n;
        }
        if phase == Phase::Train {
            let mom = state.momentum;
            for m in 0..maps {
                state.running_mean[m] = (1.0 - mom) * state.running_mean[m] + mom * mean[m];
                state.running_var[m] = (1.0 - mom) * state.running_var[m] + mom * var[m];
            }
        }
    } else {
        mean.copy_from_slice(&state.running_mean);
        var.copy_from_slice(&state.running_var);
    }

    let mut standardized = vec![0.0; features.len()];
    let mut output = vec![0.0; features.len()];
    for m in 0..maps {
        let inv_std = 1.0 / (var[m] + state.epsilon).sqrt();
        for s in 0..k {
            let base = (s * maps + m) * len;
            for i in base..base + len {
                let xh = (features[i] - mean[m]) * inv_std;
                standardized[i] = xh;
                output[i] = gamma[m] * xh + beta[m];
            }
        }
    }
    Ok(CsbnOutput {
        output,
        standardized,
        mean,
        var,
        fallback_to_running: phase == Phase::TargetEval && !use_batch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(maps: usize) -> CsbnState {
        CsbnState::new(maps, 1e-8, 0.1)
    }

    #[test]
    fn constant_map_standardizes_to_zero() {
        let features = vec![3.0; 2 * 1 * 4];
        let mut st = state(1);
        let out =
            csbn_normalize(&features, 2, 1, 4, &[1.0], &[0.0], &mut st, Phase::Train).unwrap();
        for v in &out.output {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn affine_shifts_moments() {
        // Standardized input (mean 0, var 1) through gamma=2, beta=3.
        let features = vec![-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let mut st = state(1);
        let out =
            csbn_normalize(&features, 4, 1, 2, &[2.0], &[3.0], &mut st, Phase::Train).unwrap();
        let n = out.output.len() as f64;
        let mean = out.output.iter().sum::<f64>() / n;
        let var = out.output.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((mean - 3.0).abs() < 1e-5);
        assert!((var - 4.0).abs() < 1e-3);
    }

    #[test]
    fn target_eval_is_deterministic() {
        let features: Vec<f64> = (0..8 * 2 * 3).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut st1 = state(2);
        let mut st2 = state(2);
        let g = [1.3, 0.8];
        let b = [0.1, -0.2];
        let a = csbn_normalize(&features, 8, 2, 3, &g, &b, &mut st1, Phase::TargetEval).unwrap();
        let c = csbn_normalize(&features, 8, 2, 3, &g, &b, &mut st2, Phase::TargetEval).unwrap();
        assert_eq!(a.output, c.output);
    }

    #[test]
    fn target_eval_invariant_to_scale() {
        let features: Vec<f64> = (0..16 * 2 * 5).map(|i| (i as f64 * 0.11).cos()).collect();
        let scaled: Vec<f64> = features.iter().map(|v| v * 37.5).collect();
        let g = [1.0, 2.0];
        let b = [0.5, -0.5];
        let mut st1 = state(2);
        let mut st2 = state(2);
        let a = csbn_normalize(&features, 16, 2, 5, &g, &b, &mut st1, Phase::TargetEval).unwrap();
        let c = csbn_normalize(&scaled, 16, 2, 5, &g, &b, &mut st2, Phase::TargetEval).unwrap();
        for (x, y) in a.output.iter().zip(&c.output) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn small_target_batch_falls_back_to_running() {
        let features: Vec<f64> = (0..4 * 1 * 3).map(|i| i as f64).collect();
        let mut st = state(1);
        st.running_mean[0] = 1.0;
        st.running_var[0] = 4.0;
        let out =
            csbn_normalize(&features, 4, 1, 3, &[1.0], &[0.0], &mut st, Phase::TargetEval)
                .unwrap();
        assert!(out.fallback_to_running);
        assert_eq!(out.mean[0], 1.0);
    }

    #[test]
    fn batch_of_one_is_rejected_in_train() {
        let mut st = state(1);
        assert!(matches!(
            csbn_normalize(&[1.0, 2.0], 1, 1, 2, &[1.0], &[0.0], &mut st, Phase::Train),
            Err(NetworkError::BatchTooSmall(1))
        ));
    }

    #[test]
    fn standardized_moments_are_unit() {
        let features: Vec<f64> = (0..10 * 3 * 7)
            .map(|i| (i as f64 * 0.73).sin() * 2.0 + 1.5)
            .collect();
        let mut st = state(3);
        let out = csbn_normalize(
            &features,
            10,
            3,
            7,
            &[1.0, 1.0, 1.0],
            &[0.0, 0.0, 0.0],
            &mut st,
            Phase::Train,
        )
        .unwrap();
        let n = (10 * 7) as f64;
        for m in 0..3 {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for s in 0..10 {
                let base = (s * 3 + m) * 7;
                for &v in &out.standardized[base..base + 7] {
                    sum += v;
                    sq += v * v;
                }
            }
            let mu = sum / n;
            let var = sq / n - mu * mu;
            assert!(mu.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
