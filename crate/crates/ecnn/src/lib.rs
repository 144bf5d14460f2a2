//! Decomposition-based ensemble CNN pipeline for cross-subject EEG fatigue
//! classification: four signal decomposition methods, one compact trunk CNN
//! per component with component-specific batch normalization, two ensemble
//! output modes, and a leave-one-subject-out evaluation driver.

pub mod data;
pub mod decompose;
pub mod ensemble;
pub mod epoch;
pub mod eval;
pub mod features;
pub mod network;
pub mod signal;
