//! Epoch containers: one fixed-length multichannel EEG segment per sample.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EpochError {
    #[error("epoch data contains non-finite values")]
    InvalidSignal,
    #[error("epoch shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("sample rate must be positive, got {0}")]
    BadSampleRate(f64),
    #[error("epoch needs C >= 1 and T >= 2, got C={0}, T={1}")]
    TooSmall(usize, usize),
    #[error("epoch sample rate {0} differs from set rate {1}")]
    RateMismatch(f64, f64),
}

/// Class label of an epoch. Alert is class 0, fatigue class 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Alert,
    Fatigue,
    Unlabeled,
}

impl Label {
    pub fn class_index(self) -> Option<usize> {
        match self {
            Label::Alert => Some(0),
            Label::Fatigue => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Alert => "alert",
            Label::Fatigue => "fatigue",
            Label::Unlabeled => "unlabeled",
        }
    }

    pub fn from_class_index(i: usize) -> Label {
        if i == 0 {
            Label::Alert
        } else {
            Label::Fatigue
        }
    }
}

/// One multichannel EEG segment, `channels x samples`, row-major.
#[derive(Debug, Clone)]
pub struct Epoch {
    data: Vec<f64>,
    channels: usize,
    samples: usize,
    pub sample_rate_hz: f64,
    pub subject_id: u32,
    pub label: Label,
}

impl Epoch {
    pub fn new(
        data: Vec<f64>,
        channels: usize,
        samples: usize,
        sample_rate_hz: f64,
        subject_id: u32,
        label: Label,
    ) -> Result<Epoch, EpochError> {
        if channels < 1 || samples < 2 {
            return Err(EpochError::TooSmall(channels, samples));
        }
        if data.len() != channels * samples {
            return Err(EpochError::ShapeMismatch {
                expected: (channels, samples),
                found: (data.len() / samples.max(1), samples),
            });
        }
        if !(sample_rate_hz > 0.0) {
            return Err(EpochError::BadSampleRate(sample_rate_hz));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EpochError::InvalidSignal);
        }
        Ok(Epoch { data, channels, samples, sample_rate_hz, subject_id, label })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A uniformly-shaped batch of epochs. Subject ids partition the set for
/// leave-one-subject-out splitting.
#[derive(Debug, Clone, Default)]
pub struct EpochSet {
    epochs: Vec<Epoch>,
}

impl EpochSet {
    pub fn new() -> EpochSet {
        EpochSet { epochs: Vec::new() }
    }

    pub fn push(&mut self, epoch: Epoch) -> Result<(), EpochError> {
        if let Some(first) = self.epochs.first() {
            if epoch.channels != first.channels || epoch.samples != first.samples {
                return Err(EpochError::ShapeMismatch {
                    expected: (first.channels, first.samples),
                    found: (epoch.channels, epoch.samples),
                });
            }
            if epoch.sample_rate_hz != first.sample_rate_hz {
                return Err(EpochError::RateMismatch(
                    epoch.sample_rate_hz,
                    first.sample_rate_hz,
                ));
            }
        }
        self.epochs.push(epoch);
        Ok(())
    }

    pub fn from_epochs(epochs: Vec<Epoch>) -> Result<EpochSet, EpochError> {
        let mut set = EpochSet::new();
        for e in epochs {
            set.push(e)?;
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    /// (channels, samples, rate) of the set; None when empty.
    pub fn shape(&self) -> Option<(usize, usize, f64)> {
        self.epochs
            .first()
            .map(|e| (e.channels, e.samples, e.sample_rate_hz))
    }

    /// Distinct subject ids in ascending order.
    pub fn subject_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.epochs.iter().map(|e| e.subject_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}
