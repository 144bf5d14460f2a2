//! Ensemble of per-component trunks with two output modes: E1 averages
//! pre-softmax scores under a joint loss, E2 trains trunks independently and
//! soft-votes their probabilities.

use crate::decompose::{DecompositionConfig, Method, Wavelet};
use crate::network::{
    adam_step, checkpoint, cross_entropy, softmax, AdamState, ComponentBatch, NetworkError,
    Phase, TrunkNetwork,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("expected {expected} component batches, got {found}")]
    ComponentCountMismatch { expected: usize, found: usize },
    #[error("component batches have inconsistent sample counts")]
    BatchSizeMismatch,
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed ensemble manifest: {0}")]
    BadManifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleMode {
    /// Joint training; scores averaged before a single softmax.
    E1,
    /// Independent training; per-trunk softmax averaged (soft voting).
    E2,
}

impl std::str::FromStr for EnsembleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<EnsembleMode, String> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(EnsembleMode::E1),
            "e2" => Ok(EnsembleMode::E2),
            other => Err(format!("unknown mode '{other}' (expected e1|e2)")),
        }
    }
}

impl EnsembleMode {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleMode::E1 => "e1",
            EnsembleMode::E2 => "e2",
        }
    }
}

/// Shared training configuration, defaults matching the reference setup:
/// 50 epochs, minibatch 50, learning rate 0.001.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig { epochs: 50, batch_size: 50, learning_rate: 0.001, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleModel {
    pub trunks: Vec<TrunkNetwork>,
    pub mode: EnsembleMode,
    pub decomposition: DecompositionConfig,
}

impl EnsembleModel {
    /// Build D trunks with per-trunk seeds `base_seed + d`.
    pub fn new(
        mode: EnsembleMode,
        decomposition: DecompositionConfig,
        trunk_config: crate::network::TrunkConfig,
        depth: usize,
        base_seed: u64,
    ) -> Result<EnsembleModel, EnsembleError> {
        let trunks = (0..depth)
            .map(|d| TrunkNetwork::new(trunk_config.clone(), base_seed + d as u64))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EnsembleModel { trunks, mode, decomposition })
    }

    pub fn depth(&self) -> usize {
        self.trunks.len()
    }

    fn check_components(&self, components: &[ComponentBatch]) -> Result<usize, EnsembleError> {
        if components.len() != self.depth() {
            return Err(EnsembleError::ComponentCountMismatch {
                expected: self.depth(),
                found: components.len(),
            });
        }
        let k = components[0].batch;
        if components.iter().any(|b| b.batch != k) {
            return Err(EnsembleError::BatchSizeMismatch);
        }
        Ok(k)
    }
}

/// Average the per-trunk values at each position, accumulating each position
/// in value-sorted order so the result is bit-identical under any permutation
/// of the (trunk, component) pairs.
fn order_free_average(per_trunk: &[Vec<f64>]) -> Vec<f64> {
    let d = per_trunk.len() as f64;
    let width = per_trunk[0].len();
    let mut avg = Vec::with_capacity(width);
    let mut column = vec![0.0; per_trunk.len()];
    for i in 0..width {
        for (c, row) in column.iter_mut().zip(per_trunk) {
            *c = row[i];
        }
        column.sort_by(f64::total_cmp);
        avg.push(column.iter().sum::<f64>() / d);
    }
    avg
}

/// E1 forward: average per-trunk scores, then one softmax.
pub fn e1_forward(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    phase: Phase,
) -> Result<Vec<f64>, EnsembleError> {
    model.check_components(components)?;
    let mut scores = Vec::with_capacity(model.depth());
    for (trunk, batch) in model.trunks.iter_mut().zip(components) {
        scores.push(trunk.forward(batch, phase)?.scores);
    }
    Ok(softmax(&order_free_average(&scores)))
}

/// One synchronized E1 minibatch step: joint loss through the shared softmax;
/// every trunk receives `(1/D)` of the score gradient and all are updated in
/// the same step. Returns the batch loss.
pub fn e1_train_step(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    labels: &[usize],
    optimizers: &mut [AdamState],
) -> Result<f64, EnsembleError> {
    model.check_components(components)?;
    let d = model.depth() as f64;
    let mut scores = Vec::with_capacity(model.depth());
    for (trunk, batch) in model.trunks.iter_mut().zip(components) {
        scores.push(trunk.forward(batch, Phase::Train)?.scores);
    }
    let avg = order_free_average(&scores);
    let probs = softmax(&avg);
    let loss = cross_entropy(&probs, labels);
    let joint_grad = TrunkNetwork::cross_entropy_score_grad(&avg, labels);
    let trunk_grad: Vec<f64> = joint_grad.iter().map(|g| g / d).collect();
    for (trunk, opt) in model.trunks.iter_mut().zip(optimizers) {
        let grads = trunk.backward(&trunk_grad)?;
        adam_step(&mut trunk.params, &grads, opt)?;
    }
    Ok(loss)
}

fn minibatches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    indices
        .chunks(batch_size.max(2))
        .filter(|c| c.len() >= 2) // batch statistics need at least 2 samples
        .map(|c| c.to_vec())
        .collect()
}

fn slice_batch(batch: &ComponentBatch, indices: &[usize]) -> ComponentBatch {
    let stride = batch.channels * batch.samples;
    let mut data = Vec::with_capacity(indices.len() * stride);
    for &i in indices {
        data.extend_from_slice(batch.sample(i));
    }
    ComponentBatch {
        data,
        batch: indices.len(),
        channels: batch.channels,
        samples: batch.samples,
    }
}

/// Full E1 training: synchronized minibatches across all trunks.
pub fn e1_train(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<Vec<f64>, EnsembleError> {
    let k = model.check_components(components)?;
    let mut optimizers: Vec<AdamState> = model
        .trunks
        .iter()
        .map(|t| AdamState::new(t.config.param_count(), config.learning_rate))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut total = 0.0;
        let batches = minibatches(k, config.batch_size, &mut rng);
        let count = batches.len().max(1);
        for idx in batches {
            let sliced: Vec<ComponentBatch> =
                components.iter().map(|b| slice_batch(b, &idx)).collect();
            let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            total += e1_train_step(model, &sliced, &batch_labels, &mut optimizers)?;
        }
        epoch_losses.push(total / count as f64);
    }
    Ok(epoch_losses)
}

/// E2 training: each trunk minimizes its own loss on its component only.
/// Per-trunk RNG seeds make the result independent of training order.
pub fn e2_train(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<(), EnsembleError> {
    let k = model.check_components(components)?;
    for (d, (trunk, batch)) in model.trunks.iter_mut().zip(components).enumerate() {
        let mut opt = AdamState::new(trunk.config.param_count(), config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (d as u64).wrapping_mul(0x9e37_79b9));
        for _ in 0..config.epochs {
            for idx in minibatches(k, config.batch_size, &mut rng) {
                let sliced = slice_batch(batch, &idx);
                let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                let out = trunk.forward(&sliced, Phase::Train)?;
                let sg = TrunkNetwork::cross_entropy_score_grad(&out.scores, &batch_labels);
                let grads = trunk.backward(&sg)?;
                adam_step(&mut trunk.params, &grads, &mut opt)?;
            }
        }
    }
    Ok(())
}

/// E2 prediction: soft voting over per-trunk probabilities.
pub fn e2_predict(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    phase: Phase,
) -> Result<Vec<f64>, EnsembleError> {
    model.check_components(components)?;
    let mut probs = Vec::with_capacity(model.depth());
    for (trunk, batch) in model.trunks.iter_mut().zip(components) {
        probs.push(softmax(&trunk.forward(batch, phase)?.scores));
    }
    Ok(order_free_average(&probs))
}

/// Predict with whichever mode the model carries.
pub fn predict(
    model: &mut EnsembleModel,
    components: &[ComponentBatch],
    phase: Phase,
) -> Result<Vec<f64>, EnsembleError> {
    match model.mode {
        EnsembleMode::E1 => e1_forward(model, components, phase),
        EnsembleMode::E2 => e2_predict(model, components, phase),
    }
}

/// Argmax per row; exact ties go to class 0 (alert).
pub fn predict_classes(probabilities: &[f64]) -> Vec<usize> {
    probabilities
        .chunks_exact(2)
        .map(|row| usize::from(row[1] > row[0]))
        .collect()
}

/// Write the ensemble as a directory: a text manifest plus one trunk
/// checkpoint file per component.
pub fn save_ensemble(model: &EnsembleModel, dir: &Path) -> Result<(), EnsembleError> {
    fs::create_dir_all(dir)?;
    let p = &model.decomposition.params;
    let mut manifest = String::from("ecnn-ensemble v1\n");
    manifest.push_str(&format!("mode={}\n", model.mode.name()));
    manifest.push_str(&format!("method={}\n", model.decomposition.method.name()));
    manifest.push_str(&format!("components={}\n", model.decomposition.components));
    manifest.push_str(&format!(
        "wavelet={}\n",
        match p.wavelet {
            Wavelet::Haar => "haar",
            Wavelet::Db4 => "db4",
        }
    ));
    manifest.push_str(&format!("sift_sd={}\n", p.sift.sd_threshold));
    manifest.push_str(&format!("sift_max_iters={}\n", p.sift.max_sift_iters));
    manifest.push_str(&format!("ewt_gamma={}\n", p.ewt_gamma));
    manifest.push_str(&format!("vmd_alpha={}\n", p.vmd.alpha));
    manifest.push_str(&format!("vmd_tau={}\n", p.vmd.tau));
    manifest.push_str(&format!("vmd_tol={}\n", p.vmd.tol));
    manifest.push_str(&format!("vmd_max_iter={}\n", p.vmd.max_iter));
    manifest.push_str(&format!("trunks={}\n", model.depth()));
    for d in 0..model.depth() {
        let name = format!("trunk_{d}.bin");
        let mut f = fs::File::create(dir.join(&name))?;
        checkpoint::save_trunk(&model.trunks[d], &mut f)?;
        manifest.push_str(&format!("trunk_{d}={name}\n"));
    }
    fs::write(dir.join("manifest"), manifest)?;
    Ok(())
}

pub fn load_ensemble(dir: &Path) -> Result<EnsembleModel, EnsembleError> {
    let text = fs::read_to_string(dir.join("manifest"))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "ecnn-ensemble v1" {
        return Err(EnsembleError::BadManifest(format!("bad header '{header}'")));
    }
    let mut kv = std::collections::HashMap::new();
    for line in lines {
        if let Some((k, v)) = line.split_once('=') {
            kv.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| -> Result<&String, EnsembleError> {
        kv.get(k).ok_or_else(|| EnsembleError::BadManifest(format!("missing key '{k}'")))
    };
    let parse_err = |k: &str| EnsembleError::BadManifest(format!("unparseable value for '{k}'"));
    let mode: EnsembleMode = get("mode")?.parse().map_err(|_| parse_err("mode"))?;
    let method: Method = get("method")?.parse().map_err(|_| parse_err("method"))?;
    let components: usize = get("components")?.parse().map_err(|_| parse_err("components"))?;
    let mut decomposition = DecompositionConfig::new(method, components)
        .map_err(|e| EnsembleError::BadManifest(e.to_string()))?;
    decomposition.params.wavelet =
        get("wavelet")?.parse().map_err(|_| parse_err("wavelet"))?;
    decomposition.params.sift.sd_threshold =
        get("sift_sd")?.parse().map_err(|_| parse_err("sift_sd"))?;
    decomposition.params.sift.max_sift_iters =
        get("sift_max_iters")?.parse().map_err(|_| parse_err("sift_max_iters"))?;
    decomposition.params.ewt_gamma =
        get("ewt_gamma")?.parse().map_err(|_| parse_err("ewt_gamma"))?;
    decomposition.params.vmd.alpha =
        get("vmd_alpha")?.parse().map_err(|_| parse_err("vmd_alpha"))?;
    decomposition.params.vmd.tau = get("vmd_tau")?.parse().map_err(|_| parse_err("vmd_tau"))?;
    decomposition.params.vmd.tol = get("vmd_tol")?.parse().map_err(|_| parse_err("vmd_tol"))?;
    decomposition.params.vmd.max_iter =
        get("vmd_max_iter")?.parse().map_err(|_| parse_err("vmd_max_iter"))?;
    let count: usize = get("trunks")?.parse().map_err(|_| parse_err("trunks"))?;
    let mut trunks = Vec::with_capacity(count);
    for d in 0..count {
        let name = get(&format!("trunk_{d}"))?;
        let mut f = fs::File::open(dir.join(name))?;
        trunks.push(checkpoint::load_trunk(&mut f)?);
    }
    Ok(EnsembleModel { trunks, mode, decomposition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::TrunkConfig;
    use rand::Rng;

    fn tiny_trunk_config() -> TrunkConfig {
        TrunkConfig {
            channels: 2,
            samples: 16,
            f1: 2,
            f2: 2,
            kernel_t: 4,
            stride: 2,
            pool: 2,
            activation: crate::network::Activation::Relu,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }

    fn model(mode: EnsembleMode, depth: usize, seed: u64) -> EnsembleModel {
        let dec = DecompositionConfig::new(Method::Dwt, depth.max(1)).unwrap();
        EnsembleModel::new(mode, dec, tiny_trunk_config(), depth, seed).unwrap()
    }

    fn random_components(depth: usize, k: usize, seed: u64) -> Vec<ComponentBatch> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..depth)
            .map(|_| ComponentBatch {
                data: (0..k * 2 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                batch: k,
                channels: 2,
                samples: 16,
            })
            .collect()
    }

    #[test]
    fn e1_with_one_trunk_matches_single_trunk() {
        let mut m = model(EnsembleMode::E1, 1, 5);
        let comps = random_components(1, 4, 6);
        let mut solo = m.trunks[0].clone();
        let expect = softmax(&solo.forward(&comps[0], Phase::SourceEval).unwrap().scores);
        let got = e1_forward(&mut m, &comps, Phase::SourceEval).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn e1_score_averaging_cancels_opposites() {
        let mut m = model(EnsembleMode::E1, 2, 5);
        // Force fc outputs to fixed values via zero weights + bias.
        for (d, bias) in [(0usize, [2.0, 0.0]), (1usize, [0.0, 2.0])] {
            let n = m.trunks[d].params.len();
            for p in m.trunks[d].params.iter_mut() {
                *p = 0.0;
            }
            m.trunks[d].params[n - 2] = bias[0];
            m.trunks[d].params[n - 1] = bias[1];
        }
        let comps = random_components(2, 4, 6);
        let probs = e1_forward(&mut m, &comps, Phase::SourceEval).unwrap();
        for row in probs.chunks_exact(2) {
            assert!((row[0] - 0.5).abs() < 1e-12);
            assert!((row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn e1_trunk_permutation_invariance() {
        let mut m = model(EnsembleMode::E1, 3, 5);
        let comps = random_components(3, 4, 6);
        let a = e1_forward(&mut m, &comps, Phase::SourceEval).unwrap();
        let mut permuted = model(EnsembleMode::E1, 3, 5);
        permuted.trunks.swap(0, 2);
        let mut pc = comps.clone();
        pc.swap(0, 2);
        let b = e1_forward(&mut permuted, &pc, Phase::SourceEval).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn e1_zero_learning_rate_freezes_params() {
        let mut m = model(EnsembleMode::E1, 2, 7);
        let before: Vec<Vec<f64>> = m.trunks.iter().map(|t| t.params.clone()).collect();
        let comps = random_components(2, 4, 8);
        let mut opts: Vec<AdamState> =
            m.trunks.iter().map(|t| AdamState::new(t.config.param_count(), 0.0)).collect();
        let loss = e1_train_step(&mut m, &comps, &[0, 1, 0, 1], &mut opts).unwrap();
        assert!(loss.is_finite());
        for (t, b) in m.trunks.iter().zip(&before) {
            assert_eq!(&t.params, b);
        }
    }

    #[test]
    fn e1_gradient_check_through_full_graph() {
        let depth = 2;
        let mut m = model(EnsembleMode::E1, depth, 31);
        for t in m.trunks.iter_mut() {
            t.config.activation = crate::network::Activation::Elu;
        }
        let comps = random_components(depth, 4, 32);
        let labels = vec![0usize, 1, 1, 0];

        let loss_of = |m: &EnsembleModel| -> f64 {
            let mut probe = m.clone();
            let mut avg = vec![0.0; 4 * 2];
            for (trunk, batch) in probe.trunks.iter_mut().zip(&comps) {
                let out = trunk.forward(batch, Phase::Train).unwrap();
                for (a, s) in avg.iter_mut().zip(&out.scores) {
                    *a += s / depth as f64;
                }
            }
            cross_entropy(&softmax(&avg), &labels)
        };

        // Analytic gradients per trunk.
        let mut avg = vec![0.0; 4 * 2];
        let mut mm = m.clone();
        for (trunk, batch) in mm.trunks.iter_mut().zip(&comps) {
            let out = trunk.forward(batch, Phase::Train).unwrap();
            for (a, s) in avg.iter_mut().zip(&out.scores) {
                *a += s / depth as f64;
            }
        }
        let joint = TrunkNetwork::cross_entropy_score_grad(&avg, &labels);
        let per_trunk: Vec<f64> = joint.iter().map(|g| g / depth as f64).collect();
        let analytic: Vec<Vec<f64>> = mm
            .trunks
            .iter_mut()
            .map(|t| t.backward(&per_trunk).unwrap())
            .collect();

        let h = 1e-4;
        let mut max_rel = 0.0f64;
        for d in 0..depth {
            for i in 0..m.trunks[d].params.len() {
                let mut plus = m.clone();
                plus.trunks[d].params[i] += h;
                let mut minus = m.clone();
                minus.trunks[d].params[i] -= h;
                let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
                let denom = analytic[d][i].abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max((analytic[d][i] - fd).abs() / denom);
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn e2_training_order_does_not_matter() {
        let comps = random_components(2, 8, 40);
        let labels = vec![0usize, 1, 0, 1, 0, 1, 0, 1];
        let cfg = TrainConfig { epochs: 2, batch_size: 4, learning_rate: 0.01, seed: 3 };

        let mut forward_order = model(EnsembleMode::E2, 2, 50);
        e2_train(&mut forward_order, &comps, &labels, &cfg).unwrap();

        // Reverse order: train trunk 1 first by reversing both trunks and data,
        // then undo the permutation.
        let mut reverse_order = model(EnsembleMode::E2, 2, 50);
        reverse_order.trunks.reverse();
        let mut rev_comps = comps.clone();
        rev_comps.reverse();
        // Per-trunk seeds travel with the component index, not the position.
        let base = model(EnsembleMode::E2, 2, 50);
        reverse_order.trunks = vec![base.trunks[1].clone(), base.trunks[0].clone()];
        let rev_cfg = cfg.clone();
        // Train each trunk singly to mimic arbitrary scheduling.
        for (pos, orig_idx) in [(0usize, 1usize), (1usize, 0usize)] {
            let mut single = EnsembleModel {
                trunks: vec![reverse_order.trunks[pos].clone()],
                mode: EnsembleMode::E2,
                decomposition: reverse_order.decomposition.clone(),
            };
            let mut one_cfg = rev_cfg.clone();
            one_cfg.seed = cfg.seed ^ (orig_idx as u64).wrapping_mul(0x9e37_79b9);
            // Reuse e2_train on the single-trunk model with the matching seed.
            let mut inner = TrainConfig { seed: 0, ..one_cfg.clone() };
            inner.seed = one_cfg.seed;
            // e2_train xors with d=0 so the effective seed equals inner.seed.
            e2_train(&mut single, &[rev_comps[pos].clone()], &labels, &inner).unwrap();
            reverse_order.trunks[pos] = single.trunks.remove(0);
        }
        assert_eq!(forward_order.trunks[0].params, reverse_order.trunks[1].params);
        assert_eq!(forward_order.trunks[1].params, reverse_order.trunks[0].params);
    }

    #[test]
    fn e2_soft_voting_averages_probabilities() {
        let mut m = model(EnsembleMode::E2, 2, 5);
        for (d, bias) in [(0usize, [50.0, -50.0]), (1usize, [-50.0, 50.0])] {
            let n = m.trunks[d].params.len();
            for p in m.trunks[d].params.iter_mut() {
                *p = 0.0;
            }
            m.trunks[d].params[n - 2] = bias[0];
            m.trunks[d].params[n - 1] = bias[1];
        }
        let comps = random_components(2, 4, 9);
        let probs = e2_predict(&mut m, &comps, Phase::SourceEval).unwrap();
        for row in probs.chunks_exact(2) {
            assert!((row[0] - 0.5).abs() < 1e-9);
        }
        // Tie-break goes to class 0.
        assert_eq!(predict_classes(&probs), vec![0, 0, 0, 0]);
    }

    #[test]
    fn e2_rows_sum_to_one() {
        let mut m = model(EnsembleMode::E2, 3, 5);
        let comps = random_components(3, 5, 10);
        let probs = e2_predict(&mut m, &comps, Phase::SourceEval).unwrap();
        for row in probs.chunks_exact(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn e2_output_stays_in_trunk_probability_hull() {
        let mut m = model(EnsembleMode::E2, 3, 5);
        let comps = random_components(3, 5, 11);
        let mut per_trunk = Vec::new();
        for (t, b) in m.trunks.iter_mut().zip(&comps) {
            per_trunk.push(softmax(&t.forward(b, Phase::SourceEval).unwrap().scores));
        }
        let probs = e2_predict(&mut m, &comps, Phase::SourceEval).unwrap();
        for row in 0..5 {
            for col in 0..2 {
                let i = row * 2 + col;
                let lo = per_trunk.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
                let hi = per_trunk.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
                assert!(probs[i] >= lo - 1e-12 && probs[i] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn e1_and_e2_agree_at_depth_one() {
        let mut m1 = model(EnsembleMode::E1, 1, 5);
        let mut m2 = model(EnsembleMode::E2, 1, 5);
        let comps = random_components(1, 4, 12);
        let a = e1_forward(&mut m1, &comps, Phase::SourceEval).unwrap();
        let b = e2_predict(&mut m2, &comps, Phase::SourceEval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_checkpoint_round_trip() {
        let m = model(EnsembleMode::E2, 2, 77);
        let dir = tempfile::tempdir().unwrap();
        save_ensemble(&m, dir.path()).unwrap();
        let loaded = load_ensemble(dir.path()).unwrap();
        assert_eq!(loaded.mode, m.mode);
        assert_eq!(loaded.depth(), 2);
        for (a, b) in loaded.trunks.iter().zip(&m.trunks) {
            assert_eq!(a.params, b.params);
        }
    }

    #[test]
    fn component_count_mismatch_is_rejected() {
        let mut m = model(EnsembleMode::E1, 2, 5);
        let comps = random_components(1, 4, 6);
        assert!(matches!(
            e1_forward(&mut m, &comps, Phase::SourceEval),
            Err(EnsembleError::ComponentCountMismatch { .. })
        ));
    }
}
