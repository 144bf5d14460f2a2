//! LOSO experiment driver: decompose, train the ensemble per fold, evaluate
//! the held-out subject under target-eval normalization, and aggregate
//! metrics. Also hosts the component-count sensitivity sweep and the paired
//! significance test.

pub mod wilcoxon;

pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

use crate::data::{loso_splits, DataError};
use crate::decompose::{decompose_epoch, ComponentStack, DecomposeError, DecompositionConfig};
use crate::ensemble::{
    e1_train, e2_train, predict, predict_classes, EnsembleError, EnsembleMode, EnsembleModel,
    TrainConfig,
};
use crate::epoch::EpochSet;
use crate::network::{ComponentBatch, Phase, TrunkConfig};
use rayon::prelude::*;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("no labeled epochs in a fold split")]
    NoLabeledEpochs,
    #[error("sample lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("need at least 5 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all paired differences are zero; the test is undefined")]
    UndefinedTest,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Confusion counts with Alert (class 0) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, actual: usize, predicted: usize) {
        match (actual, predicted) {
            (0, 0) => self.tp += 1,
            (1, 1) => self.tn += 1,
            (1, 0) => self.fp += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fp) as f64
    }

    pub fn sensitivity(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn specificity(&self) -> f64 {
        self.tn as f64 / (self.tn + self.fp) as f64
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let s = self.sensitivity();
        2.0 * p * s / (p + s)
    }
}

#[derive(Debug, Clone)]
pub struct SubjectResult {
    pub subject_id: u32,
    pub confusion: Confusion,
    pub seed: u64,
    /// True when any target-eval batch fell back to running statistics.
    pub csbn_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub per_subject: Vec<SubjectResult>,
    pub pooled: Confusion,
    /// Mean of per-subject accuracies (the LOSO average convention).
    pub avg_accuracy: f64,
    pub method: &'static str,
    pub components_requested: usize,
    pub components_used: usize,
    pub mode: EnsembleMode,
    pub base_seed: u64,
    pub elapsed_s: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct LosoConfig {
    pub decomposition: DecompositionConfig,
    pub mode: EnsembleMode,
    pub train: TrainConfig,
    pub trunk: Option<TrunkConfig>,
}

/// Decompose every epoch of a set; returns per-epoch stacks plus flags.
fn decompose_set(
    set: &EpochSet,
    config: &DecompositionConfig,
) -> Result<(Vec<ComponentStack>, Vec<usize>, bool), EvalError> {
    let mut stacks = Vec::new();
    let mut labels = Vec::new();
    let mut clamped = false;
    for epoch in set.epochs() {
        let Some(class) = epoch.label.class_index() else {
            continue; // unlabeled epochs carry no training signal
        };
        let stack = decompose_epoch(epoch, config)?;
        clamped |= stack.clamped;
        stacks.push(stack);
        labels.push(class);
    }
    if stacks.is_empty() {
        return Err(EvalError::NoLabeledEpochs);
    }
    Ok((stacks, labels, clamped))
}

/// Reduce a stack to exactly `depth` components by summing the surplus tail
/// into the last kept component (preserves completeness).
fn fold_to_depth(stack: &ComponentStack, depth: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = stack.components[..depth].to_vec();
    for extra in &stack.components[depth..] {
        for (o, v) in out[depth - 1].iter_mut().zip(extra) {
            *o += v;
        }
    }
    out
}

/// Stack per-epoch components into one `[K x C x T]` batch per component.
fn batches_from_stacks(
    stacks: &[ComponentStack],
    depth: usize,
    channels: usize,
    samples: usize,
) -> Vec<ComponentBatch> {
    let k = stacks.len();
    let stride = channels * samples;
    let mut batches = vec![
        ComponentBatch {
            data: Vec::with_capacity(k * stride),
            batch: k,
            channels,
            samples,
        };
        depth
    ];
    for stack in stacks {
        let folded = fold_to_depth(stack, depth);
        for (d, comp) in folded.into_iter().enumerate() {
            batches[d].data.extend_from_slice(&comp);
        }
    }
    batches
}

struct FoldOutcome {
    result: SubjectResult,
    depth: usize,
    clamped: bool,
}

fn run_fold(
    fold_index: usize,
    train_set: &EpochSet,
    test_set: &EpochSet,
    config: &LosoConfig,
) -> Result<FoldOutcome, EvalError> {
    let (c, t, _) = train_set.shape().ok_or(EvalError::NoLabeledEpochs)?;
    let (train_stacks, train_labels, clamp_a) = decompose_set(train_set, &config.decomposition)?;
    let (test_stacks, test_labels, clamp_b) = decompose_set(test_set, &config.decomposition)?;

    // Uniform depth across the fold; clamping can shrink individual epochs.
    let depth = train_stacks
        .iter()
        .chain(&test_stacks)
        .map(|s| s.depth())
        .min()
        .unwrap();
    let train_batches = batches_from_stacks(&train_stacks, depth, c, t);
    let test_batches = batches_from_stacks(&test_stacks, depth, c, t);

    let fold_seed = config.train.seed + fold_index as u64;
    let trunk_config = config
        .trunk
        .clone()
        .unwrap_or_else(|| TrunkConfig::compact(c, t));
    let mut model = EnsembleModel::new(
        config.mode,
        config.decomposition.clone(),
        trunk_config,
        depth,
        fold_seed,
    )?;
    let fold_train = TrainConfig { seed: fold_seed, ..config.train.clone() };
    match config.mode {
        EnsembleMode::E1 => {
            e1_train(&mut model, &train_batches, &train_labels, &fold_train)?;
        }
        EnsembleMode::E2 => {
            e2_train(&mut model, &train_batches, &train_labels, &fold_train)?;
        }
    }

    let probs = predict(&mut model, &test_batches, Phase::TargetEval)?;
    let predicted = predict_classes(&probs);
    let mut confusion = Confusion::default();
    for (&actual, &pred) in test_labels.iter().zip(&predicted) {
        confusion.add(actual, pred);
    }
    let subject_id = test_set.subject_ids()[0];
    // A fold-level fallback shows up as every test batch being smaller than
    // the CSBN minimum; recorded per subject.
    let fallback = test_labels.len() < crate::network::MIN_TARGET_BATCH;
    Ok(FoldOutcome {
        result: SubjectResult { subject_id, confusion, seed: fold_seed, csbn_fallback: fallback },
        depth,
        clamped: clamp_a || clamp_b,
    })
}

/// Full leave-one-subject-out evaluation. Folds run in parallel.
pub fn run_loso(dataset: &EpochSet, config: &LosoConfig) -> Result<MetricsReport, EvalError> {
    let started = std::time::Instant::now();
    let folds = loso_splits(dataset)?;
    let outcomes: Result<Vec<FoldOutcome>, EvalError> = folds
        .par_iter()
        .enumerate()
        .map(|(i, (train, test))| {
            run_fold(i, train, test, config).map_err(|e| EvalError::Fold {
                fold: i,
                source: Box::new(e),
            })
        })
        .collect();
    let outcomes = outcomes?;

    let mut pooled = Confusion::default();
    let mut per_subject = Vec::with_capacity(outcomes.len());
    let mut depth_used = usize::MAX;
    let mut clamped = false;
    for o in outcomes {
        pooled.merge(&o.result.confusion);
        depth_used = depth_used.min(o.depth);
        clamped |= o.clamped;
        per_subject.push(o.result);
    }
    let avg_accuracy = per_subject
        .iter()
        .map(|s| s.confusion.accuracy())
        .sum::<f64>()
        / per_subject.len() as f64;
    Ok(MetricsReport {
        per_subject,
        pooled,
        avg_accuracy,
        method: config.decomposition.method.name(),
        components_requested: config.decomposition.components,
        components_used: depth_used,
        mode: config.mode,
        base_seed: config.train.seed,
        elapsed_s: started.elapsed().as_secs_f64(),
        clamped,
    })
}

/// One row of the sensitivity sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub requested_d: usize,
    pub effective_d: usize,
    pub clamped: bool,
    pub avg_accuracy: f64,
}

/// Run LOSO once per requested component count.
pub fn sensitivity_sweep(
    dataset: &EpochSet,
    base: &LosoConfig,
    d_range: &[usize],
) -> Result<Vec<SweepRow>, EvalError> {
    let mut rows = Vec::with_capacity(d_range.len());
    for &d in d_range {
        let mut config = base.clone();
        config.decomposition =
            DecompositionConfig::new(base.decomposition.method, d).map_err(EvalError::from)?;
        config.decomposition.params = base.decomposition.params.clone();
        let report = run_loso(dataset, &config)?;
        rows.push(SweepRow {
            requested_d: d,
            effective_d: report.components_used,
            clamped: report.clamped || report.components_used < d,
            avg_accuracy: report.avg_accuracy,
        });
    }
    Ok(rows)
}

/// Human-readable report table.
pub fn write_report_text(report: &MetricsReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        w,
        "LOSO report: method={} D={} (used {}) mode={} seed={} elapsed={:.1}s{}",
        report.method,
        report.components_requested,
        report.components_used,
        report.mode.name(),
        report.base_seed,
        report.elapsed_s,
        if report.clamped { " [component count clamped]" } else { "" },
    )?;
    writeln!(w, "subject  accuracy  tp  tn  fp  fn  seed")?;
    for s in &report.per_subject {
        let c = &s.confusion;
        writeln!(
            w,
            "{:>7}  {:>8.4}  {:>2}  {:>2}  {:>2}  {:>2}  {}{}",
            s.subject_id,
            c.accuracy(),
            c.tp,
            c.tn,
            c.fp,
            c.fn_,
            s.seed,
            if s.csbn_fallback { "  [csbn fallback]" } else { "" },
        )?;
    }
    let p = &report.pooled;
    writeln!(w, "average accuracy: {:.4}", report.avg_accuracy)?;
    writeln!(
        w,
        "pooled: acc={:.4} precision={:.4} sensitivity={:.4} specificity={:.4} f1={:.4}",
        p.accuracy(),
        p.precision(),
        p.sensitivity(),
        p.specificity(),
        p.f1()
    )
}

/// Machine-readable key=value report.
pub fn write_report_kv(report: &MetricsReport, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "method={}", report.method)?;
    writeln!(w, "components_requested={}", report.components_requested)?;
    writeln!(w, "components_used={}", report.components_used)?;
    writeln!(w, "mode={}", report.mode.name())?;
    writeln!(w, "seed={}", report.base_seed)?;
    writeln!(w, "clamped={}", report.clamped)?;
    writeln!(w, "avg_accuracy={}", report.avg_accuracy)?;
    let p = &report.pooled;
    writeln!(w, "pooled_tp={}", p.tp)?;
    writeln!(w, "pooled_tn={}", p.tn)?;
    writeln!(w, "pooled_fp={}", p.fp)?;
    writeln!(w, "pooled_fn={}", p.fn_)?;
    writeln!(w, "pooled_accuracy={}", p.accuracy())?;
    writeln!(w, "pooled_precision={}", p.precision())?;
    writeln!(w, "pooled_sensitivity={}", p.sensitivity())?;
    writeln!(w, "pooled_specificity={}", p.specificity())?;
    writeln!(w, "pooled_f1={}", p.f1())?;
    for s in &report.per_subject {
        writeln!(
            w,
            "subject_{}_accuracy={}",
            s.subject_id,
            s.confusion.accuracy()
        )?;
        writeln!(w, "subject_{}_seed={}", s.subject_id, s.seed)?;
    }
    Ok(())
}

/// Sweep CSV: one row per requested D.
pub fn write_sweep_csv(rows: &[SweepRow], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "requested_d,effective_d,clamped,avg_accuracy")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.requested_d, r.effective_d, r.clamped, r.avg_accuracy
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};
    use crate::decompose::Method;

    #[test]
    fn confusion_metrics_match_hand_computation() {
        let mut c = Confusion::default();
        for _ in 0..6 {
            c.add(0, 0);
        }
        for _ in 0..8 {
            c.add(1, 1);
        }
        for _ in 0..2 {
            c.add(1, 0);
        }
        for _ in 0..4 {
            c.add(0, 1);
        }
        assert_eq!(c.total(), 20);
        assert!((c.accuracy() - 0.7).abs() < 1e-12);
        assert!((c.precision() - 6.0 / 8.0).abs() < 1e-12);
        assert!((c.sensitivity() - 0.6).abs() < 1e-12);
        assert!((c.specificity() - 0.8).abs() < 1e-12);
        let f1 = 2.0 * 0.75 * 0.6 / (0.75 + 0.6);
        assert!((c.f1() - f1).abs() < 1e-12);
    }

    #[test]
    fn constant_class0_predictor_on_balanced_set() {
        // Simulated: every epoch predicted alert on a balanced subject.
        let mut c = Confusion::default();
        for i in 0..40 {
            c.add(i % 2, 0);
        }
        assert!((c.accuracy() - 0.5).abs() < 1e-12);
        assert_eq!(c.specificity(), 0.0);
    }

    fn small_loso_config(method: Method, d: usize, epochs: usize) -> LosoConfig {
        LosoConfig {
            decomposition: DecompositionConfig::new(method, d).unwrap(),
            mode: EnsembleMode::E2,
            train: TrainConfig {
                epochs,
                batch_size: 20,
                learning_rate: 0.001,
                seed: 11,
            },
            trunk: None,
        }
    }

    fn small_dataset() -> EpochSet {
        generate_synthetic(&SyntheticSpec {
            subjects: 2,
            epochs_per_class: 10,
            channels: 2,
            samples: 128,
            noise_sigma: 0.05,
            subject_shift: true,
            seed: 3,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn loso_is_deterministic() {
        let set = small_dataset();
        let config = small_loso_config(Method::Dwt, 3, 3);
        let a = run_loso(&set, &config).unwrap();
        let b = run_loso(&set, &config).unwrap();
        assert_eq!(a.avg_accuracy, b.avg_accuracy);
        assert_eq!(a.pooled, b.pooled);
        for (x, y) in a.per_subject.iter().zip(&b.per_subject) {
            assert_eq!(x.confusion, y.confusion);
            assert_eq!(x.seed, y.seed);
        }
    }

    #[test]
    fn pooled_counts_equal_subject_sums() {
        let set = small_dataset();
        let config = small_loso_config(Method::Dwt, 3, 2);
        let report = run_loso(&set, &config).unwrap();
        let mut sum = Confusion::default();
        for s in &report.per_subject {
            sum.merge(&s.confusion);
        }
        assert_eq!(sum, report.pooled);
        assert_eq!(sum.total(), set.len());
    }

    #[test]
    fn sweep_clamps_dwt_requests_beyond_maximum() {
        let set = small_dataset();
        let config = small_loso_config(Method::Dwt, 3, 1);
        // T=128, db4: max levels = floor stages of len/(L-1) halving = 4,
        // so 5 components; requests beyond that clamp together.
        let rows = sensitivity_sweep(&set, &config, &[6, 8]).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].effective_d, rows[1].effective_d);
        assert!(rows[1].clamped);
        assert_eq!(rows[0].avg_accuracy, rows[1].avg_accuracy);
    }

    #[test]
    fn report_writers_produce_parseable_output() {
        let set = small_dataset();
        let config = small_loso_config(Method::Dwt, 3, 1);
        let report = run_loso(&set, &config).unwrap();
        let mut text = Vec::new();
        write_report_text(&report, &mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.contains("average accuracy"));
        let mut kv = Vec::new();
        write_report_kv(&report, &mut kv).unwrap();
        let kv = String::from_utf8(kv).unwrap();
        assert!(kv.lines().all(|l| l.contains('=')));
        assert!(kv.contains("avg_accuracy="));
    }
}
