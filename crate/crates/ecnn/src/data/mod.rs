//! Dataset plumbing: reaction-time labeling, LOSO splitting, synthetic EEG
//! generation, and the on-disk epoch container.

pub mod io;
pub mod labeling;
pub mod synth;

pub use io::{load_epochs, save_epochs};
pub use labeling::{label_trials, parse_rt_csv, LabelingResult, RtTrialRecord, TrialLabel};
pub use synth::{generate_synthetic, SyntheticSpec};

use crate::epoch::{EpochError, EpochSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("LOSO needs at least 2 subjects")]
    NotEnoughSubjects,
    #[error("subject {subject_id} has only {count} trials (need >= 20)")]
    SubjectTooSparse { subject_id: u32, count: usize },
    #[error("subject {subject_id} trials are not time-ordered")]
    TrialsNotTimeOrdered { subject_id: u32 },
    #[error("invalid trial for subject {subject_id}: response must follow deviation")]
    BadTrial { subject_id: u32 },
    #[error("invalid synthetic data specification")]
    BadSpec,
    #[error("cannot save an empty epoch set")]
    EmptySet,
    #[error("malformed file at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("epoch {epoch_index}: {message}")]
    Shape { epoch_index: usize, message: String },
    #[error(transparent)]
    Epoch(#[from] EpochError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One fold per subject: (train = everyone else, test = that subject), in
/// ascending subject-id order.
pub fn loso_splits(set: &EpochSet) -> Result<Vec<(EpochSet, EpochSet)>, DataError> {
    let subjects = set.subject_ids();
    if subjects.len() < 2 {
        return Err(DataError::NotEnoughSubjects);
    }
    let mut folds = Vec::with_capacity(subjects.len());
    for &held_out in &subjects {
        let mut train = EpochSet::new();
        let mut test = EpochSet::new();
        for e in set.epochs() {
            if e.subject_id == held_out {
                test.push(e.clone())?;
            } else {
                train.push(e.clone())?;
            }
        }
        folds.push((train, test));
    }
    Ok(folds)
}
