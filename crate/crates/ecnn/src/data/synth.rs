//! Synthetic EEG generation for desk-scale verification: fatigued epochs
//! carry elevated theta/alpha tone power, alert epochs elevated beta power,
//! optionally shifted per subject to mimic cross-subject covariate shift.

use super::DataError;
use crate::epoch::{Epoch, EpochSet, Label};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub subjects: usize,
    /// Epochs per class per subject; balance is exact.
    pub epochs_per_class: usize,
    pub channels: usize,
    pub samples: usize,
    pub sample_rate_hz: f64,
    /// Standard deviation of additive white noise.
    pub noise_sigma: f64,
    /// Per-subject multiplicative gain and additive offset shifts.
    pub subject_shift: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> SyntheticSpec {
        SyntheticSpec {
            subjects: 3,
            epochs_per_class: 40,
            channels: 4,
            samples: 384,
            sample_rate_hz: 128.0,
            noise_sigma: 0.1,
            subject_shift: true,
            seed: 0,
        }
    }
}

/// Dominant and suppressed tone amplitudes for the two classes.
const STRONG: f64 = 1.0;
const WEAK: f64 = 0.15;
/// Tone frequencies: theta, alpha carry fatigue; beta carries alertness.
const THETA_HZ: f64 = 6.0;
const ALPHA_HZ: f64 = 10.0;
const BETA_HZ: f64 = 21.0;

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<EpochSet, DataError> {
    if spec.subjects == 0
        || spec.epochs_per_class == 0
        || spec.channels == 0
        || spec.samples < 2
        || !(spec.sample_rate_hz > 0.0)
        || spec.noise_sigma < 0.0
    {
        return Err(DataError::BadSpec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut set = EpochSet::new();
    let t = spec.samples;
    let rate = spec.sample_rate_hz;
    for subject in 0..spec.subjects {
        let (gain, offset) = if spec.subject_shift {
            (1.0 + 0.3 * rng.gen_range(-1.0..1.0), 0.3 * rng.gen_range(-1.0..1.0))
        } else {
            (1.0, 0.0)
        };
        for class in [Label::Alert, Label::Fatigue] {
            for _ in 0..spec.epochs_per_class {
                let mut data = Vec::with_capacity(spec.channels * t);
                for _ in 0..spec.channels {
                    let phases: [f64; 3] =
                        [rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI)];
                    let (a_theta, a_alpha, a_beta) = match class {
                        Label::Fatigue => (STRONG, STRONG, WEAK),
                        _ => (WEAK, WEAK, STRONG),
                    };
                    for i in 0..t {
                        let tt = i as f64 / rate;
                        let clean = a_theta * (2.0 * PI * THETA_HZ * tt + phases[0]).sin()
                            + a_alpha * (2.0 * PI * ALPHA_HZ * tt + phases[1]).sin()
                            + a_beta * (2.0 * PI * BETA_HZ * tt + phases[2]).sin();
                        let noise = if spec.noise_sigma > 0.0 {
                            // Box-Muller keeps the generator free of extra
                            // distribution dependencies.
                            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                            let u2: f64 = rng.gen_range(0.0..1.0);
                            spec.noise_sigma
                                * (-2.0 * u1.ln()).sqrt()
                                * (2.0 * PI * u2).cos()
                        } else {
                            0.0
                        };
                        data.push(gain * (clean + noise) + offset);
                    }
                }
                let epoch =
                    Epoch::new(data, spec.channels, t, rate, subject as u32, class)?;
                set.push(epoch)?;
            }
        }
    }
    Ok(set)
}
