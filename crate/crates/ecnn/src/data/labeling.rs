//! Reaction-time based trial labeling: the alert-RT is the 5th percentile of
//! a subject's local RTs; a trial is alert when both its local RT and its
//! 90-second windowed mean RT are short relative to the alert-RT, fatigued
//! when both are long, and excluded otherwise.

use super::DataError;
use std::collections::BTreeMap;
use std::io::BufRead;

/// One lane-deviation trial: the driver reacts `local_rt_s` seconds after the
/// deviation onset.
#[derive(Debug, Clone, PartialEq)]
pub struct RtTrialRecord {
    pub subject_id: u32,
    pub deviation_onset_s: f64,
    pub response_onset_s: f64,
}

impl RtTrialRecord {
    pub fn new(
        subject_id: u32,
        deviation_onset_s: f64,
        response_onset_s: f64,
    ) -> Result<RtTrialRecord, DataError> {
        if !deviation_onset_s.is_finite()
            || !response_onset_s.is_finite()
            || response_onset_s <= deviation_onset_s
        {
            return Err(DataError::BadTrial { subject_id });
        }
        Ok(RtTrialRecord { subject_id, deviation_onset_s, response_onset_s })
    }

    pub fn local_rt_s(&self) -> f64 {
        self.response_onset_s - self.deviation_onset_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialLabel {
    Alert,
    Fatigue,
    /// Between the alert and fatigue thresholds; not used for training.
    Excluded,
}

impl TrialLabel {
    pub fn name(self) -> &'static str {
        match self {
            TrialLabel::Alert => "alert",
            TrialLabel::Fatigue => "fatigue",
            TrialLabel::Excluded => "excluded",
        }
    }
}

/// Per-trial labels aligned with the input order, plus the quantities that
/// produced them.
#[derive(Debug, Clone)]
pub struct LabelingResult {
    pub labels: Vec<TrialLabel>,
    /// Windowed mean RT per trial, aligned with the input order.
    pub global_rt_s: Vec<f64>,
    /// Alert-RT per subject.
    pub alert_rt_s: BTreeMap<u32, f64>,
}

/// Linearly interpolated percentile between order statistics; `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Minimum trials per subject for the percentile to have support.
pub const MIN_TRIALS_PER_SUBJECT: usize = 20;

/// Label trials by the two-threshold rule. Trials must be time-ordered within
/// each subject; subjects may be interleaved.
pub fn label_trials(
    trials: &[RtTrialRecord],
    window_s: f64,
) -> Result<LabelingResult, DataError> {
    // Group indices by subject, preserving input order.
    let mut by_subject: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, t) in trials.iter().enumerate() {
        by_subject.entry(t.subject_id).or_default().push(i);
    }

    let mut labels = vec![TrialLabel::Excluded; trials.len()];
    let mut global_rt = vec![0.0; trials.len()];
    let mut alert_rt = BTreeMap::new();
    for (&subject, indices) in &by_subject {
        if indices.len() < MIN_TRIALS_PER_SUBJECT {
            return Err(DataError::SubjectTooSparse { subject_id: subject, count: indices.len() });
        }
        for pair in indices.windows(2) {
            if trials[pair[1]].deviation_onset_s < trials[pair[0]].deviation_onset_s {
                return Err(DataError::TrialsNotTimeOrdered { subject_id: subject });
            }
        }
        let rts: Vec<f64> = indices.iter().map(|&i| trials[i].local_rt_s()).collect();
        let mut sorted = rts.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let alert = percentile(&sorted, 0.05);
        alert_rt.insert(subject, alert);

        for (pos, &i) in indices.iter().enumerate() {
            let onset = trials[i].deviation_onset_s;
            // Window covers onsets in [onset - window_s, onset], including
            // the trial itself, so it is never empty.
            let mut sum = 0.0;
            let mut count = 0usize;
            for (prev_pos, &j) in indices[..=pos].iter().enumerate() {
                if onset - trials[j].deviation_onset_s <= window_s {
                    sum += rts[prev_pos];
                    count += 1;
                }
            }
            let global = sum / count as f64;
            global_rt[i] = global;
            let local = rts[pos];
            labels[i] = if local < 1.5 * alert && global < 1.5 * alert {
                TrialLabel::Alert
            } else if local > 2.5 * alert && global > 2.5 * alert {
                TrialLabel::Fatigue
            } else {
                TrialLabel::Excluded
            };
        }
    }
    Ok(LabelingResult { labels, global_rt_s: global_rt, alert_rt_s: alert_rt })
}

/// Parse the RT trial CSV: header `subject,deviation_onset_s,response_onset_s`
/// followed by one trial per line.
pub fn parse_rt_csv(reader: impl BufRead) -> Result<Vec<RtTrialRecord>, DataError> {
    let mut trials = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(DataError::Io)?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if lineno == 0 {
            if text != "subject,deviation_onset_s,response_onset_s" {
                return Err(DataError::Format {
                    line: 1,
                    message: "expected header 'subject,deviation_onset_s,response_onset_s'"
                        .into(),
                });
            }
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 3 {
            return Err(DataError::Format {
                line: lineno + 1,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let bad = |what: &str| DataError::Format {
            line: lineno + 1,
            message: format!("unparseable {what}"),
        };
        let subject: u32 = fields[0].trim().parse().map_err(|_| bad("subject id"))?;
        let onset: f64 = fields[1].trim().parse().map_err(|_| bad("deviation onset"))?;
        let response: f64 = fields[2].trim().parse().map_err(|_| bad("response onset"))?;
        trials.push(RtTrialRecord::new(subject, onset, response)?);
    }
    Ok(trials)
}
