//! The compact convolutional trunk: spatial conv -> CSBN -> temporal conv ->
//! CSBN -> average pool -> fully connected scorer, with manual
//! backpropagation and Adam updates.

mod adam;
pub mod checkpoint;
mod csbn;
mod ops;

pub use adam::{adam_step, AdamState};
pub use csbn::{csbn_normalize, CsbnOutput, CsbnState, MIN_TARGET_BATCH};
pub use ops::{cross_entropy, softmax, PROB_CLAMP};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeError {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("batch of {0} too small for batch statistics (need >= 2)")]
    BatchTooSmall(usize),
    #[error("backward called without a cached training forward pass")]
    StaleState,
    #[error("non-finite gradient, aborting update")]
    NonFiniteGradient,
    #[error("invalid trunk configuration: {0}")]
    BadConfig(String),
}

/// Which statistics CSBN uses during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics from training.
    SourceEval,
    /// Statistics recomputed from the evaluation batch itself.
    TargetEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
}

/// Architecture hyperparameters of a trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrunkConfig {
    pub channels: usize,
    pub samples: usize,
    /// Spatial conv output maps.
    pub f1: usize,
    /// Temporal conv output maps.
    pub f2: usize,
    /// Temporal kernel width.
    pub kernel_t: usize,
    /// Temporal stride.
    pub stride: usize,
    /// Average-pool window over time.
    pub pool: usize,
    pub activation: Activation,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl TrunkConfig {
    pub fn compact(channels: usize, samples: usize) -> TrunkConfig {
        TrunkConfig {
            channels,
            samples,
            f1: 8,
            f2: 8,
            kernel_t: 16,
            stride: 8,
            pool: 4,
            activation: Activation::Relu,
            // f64 statistics tolerate a tiny epsilon, which keeps target-eval
            // standardization effectively scale-invariant.
            bn_epsilon: 1e-8,
            bn_momentum: 0.1,
        }
    }

    /// Temporal conv output length.
    pub fn conv2_len(&self) -> usize {
        (self.samples - self.kernel_t) / self.stride + 1
    }

    /// Pooled length per temporal map.
    pub fn pooled_len(&self) -> usize {
        self.conv2_len() / self.pool
    }

    pub fn flattened_len(&self) -> usize {
        self.f2 * self.pooled_len()
    }

    fn validate(&self) -> Result<(), NetworkError> {
        if self.samples < self.kernel_t || self.stride == 0 || self.pool == 0 {
            return Err(NetworkError::BadConfig(format!(
                "samples={} kernel_t={} stride={} pool={}",
                self.samples, self.kernel_t, self.stride, self.pool
            )));
        }
        if self.pooled_len() == 0 {
            return Err(NetworkError::BadConfig("pooled length is zero".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.offsets().total
    }

    fn offsets(&self) -> ParamLayout {
        let flat = self.flattened_len();
        let mut at = 0usize;
        let mut take = |n: usize| {
            let start = at;
            at += n;
            start
        };
        let w1 = take(self.f1 * self.channels);
        let b1 = take(self.f1);
        let g1 = take(self.f1);
        let be1 = take(self.f1);
        let w2 = take(self.f2 * self.f1 * self.kernel_t);
        let b2 = take(self.f2);
        let g2 = take(self.f2);
        let be2 = take(self.f2);
        let wfc = take(2 * flat);
        let bfc = take(2);
        ParamLayout { w1, b1, g1, be1, w2, b2, g2, be2, wfc, bfc, total: at }
    }
}

#[derive(Debug, Clone, Copy)]
struct ParamLayout {
    w1: usize,
    b1: usize,
    g1: usize,
    be1: usize,
    w2: usize,
    b2: usize,
    g2: usize,
    be2: usize,
    wfc: usize,
    bfc: usize,
    total: usize,
}

/// A batch of one component: `[K x C x T]`, row-major.
#[derive(Debug, Clone)]
pub struct ComponentBatch {
    pub data: Vec<f64>,
    pub batch: usize,
    pub channels: usize,
    pub samples: usize,
}

impl ComponentBatch {
    pub fn sample(&self, k: usize) -> &[f64] {
        let stride = self.channels * self.samples;
        &self.data[k * stride..(k + 1) * stride]
    }
}

/// Intermediate activations kept from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    input: Vec<f64>,
    bn1: CsbnOutput,
    act1: Vec<f64>,
    bn2: CsbnOutput,
    pooled: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Scores plus CSBN bookkeeping from an evaluation forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub scores: Vec<f64>,
    /// True when target-eval fell back to running statistics (tiny batch).
    pub csbn_fallback: bool,
}

#[derive(Debug, Clone)]
pub struct TrunkNetwork {
    pub config: TrunkConfig,
    pub params: Vec<f64>,
    pub csbn1: CsbnState,
    pub csbn2: CsbnState,
    pub seed: u64,
    cache: Option<ForwardCache>,
}

fn activate(v: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::Elu => {
            if v > 0.0 {
                v
            } else {
                v.exp_m1()
            }
        }
    }
}

fn activate_grad(pre: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => {
            if pre > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Elu => {
            if pre > 0.0 {
                1.0
            } else {
                pre.exp()
            }
        }
    }
}

impl TrunkNetwork {
    /// Glorot-uniform weights from a fixed per-trunk seed; gamma 1, beta 0,
    /// biases 0.
    pub fn new(config: TrunkConfig, seed: u64) -> Result<TrunkNetwork, NetworkError> {
        config.validate()?;
        let lay = config.offsets();
        let mut params = vec![0.0; lay.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |start: usize, count: usize, fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for i in start..start + count {
                params[i] = rng.gen_range(-bound..bound);
            }
        };
        init(lay.w1, config.f1 * config.channels, config.channels, config.f1);
        init(
            lay.w2,
            config.f2 * config.f1 * config.kernel_t,
            config.f1 * config.kernel_t,
            config.f2,
        );
        let flat = config.flattened_len();
        init(lay.wfc, 2 * flat, flat, 2);
        for i in lay.g1..lay.g1 + config.f1 {
            params[i] = 1.0;
        }
        for i in lay.g2..lay.g2 + config.f2 {
            params[i] = 1.0;
        }
        let csbn1 = CsbnState::new(config.f1, config.bn_epsilon, config.bn_momentum);
        let csbn2 = CsbnState::new(config.f2, config.bn_epsilon, config.bn_momentum);
        Ok(TrunkNetwork { config, params, csbn1, csbn2, seed, cache: None })
    }

    fn check_batch(&self, batch: &ComponentBatch) -> Result<(), NetworkError> {
        let expected = self.config.channels * self.config.samples;
        let found = batch.channels * batch.samples;
        if expected != found || batch.data.len() != batch.batch * found {
            return Err(NetworkError::ShapeError { what: "component batch", expected, found });
        }
        Ok(())
    }

    /// Forward pass. In the train phase the activations are cached for a
    /// following `backward` call.
    pub fn forward(
        &mut self,
        batch: &ComponentBatch,
        phase: Phase,
    ) -> Result<ForwardOutput, NetworkError> {
        self.check_batch(batch)?;
        let cfg = self.config.clone();
        let lay = cfg.offsets();
        let k = batch.batch;
        let (c, t) = (cfg.channels, cfg.samples);
        let t2 = cfg.conv2_len();
        let p2 = cfg.pooled_len();
        let flat = cfg.flattened_len();

        // Spatial conv: mixes channels at each time point.
        let mut z1 = vec![0.0; k * cfg.f1 * t];
        for s in 0..k {
            let x = batch.sample(s);
            for f in 0..cfg.f1 {
                let w = &self.params[lay.w1 + f * c..lay.w1 + (f + 1) * c];
                let b = self.params[lay.b1 + f];
                let out = &mut z1[(s * cfg.f1 + f) * t..(s * cfg.f1 + f + 1) * t];
                for (ti, o) in out.iter_mut().enumerate() {
                    let mut acc = b;
                    for (ch, &wv) in w.iter().enumerate() {
                        acc += wv * x[ch * t + ti];
                    }
                    *o = acc;
                }
            }
        }

        let g1 = self.params[lay.g1..lay.g1 + cfg.f1].to_vec();
        let be1 = self.params[lay.be1..lay.be1 + cfg.f1].to_vec();
        let bn1 = csbn_normalize(&z1, k, cfg.f1, t, &g1, &be1, &mut self.csbn1, phase)?;
        let act1: Vec<f64> = bn1.output.iter().map(|&v| activate(v, cfg.activation)).collect();

        // Temporal conv with stride.
        let mut z2 = vec![0.0; k * cfg.f2 * t2];
        for s in 0..k {
            for g in 0..cfg.f2 {
                let b = self.params[lay.b2 + g];
                for ti in 0..t2 {
                    let mut acc = b;
                    for f in 0..cfg.f1 {
                        let wbase = lay.w2 + (g * cfg.f1 + f) * cfg.kernel_t;
                        let abase = (s * cfg.f1 + f) * t + ti * cfg.stride;
                        for j in 0..cfg.kernel_t {
                            acc += self.params[wbase + j] * act1[abase + j];
                        }
                    }
                    z2[(s * cfg.f2 + g) * t2 + ti] = acc;
                }
            }
        }

        let g2 = self.params[lay.g2..lay.g2 + cfg.f2].to_vec();
        let be2 = self.params[lay.be2..lay.be2 + cfg.f2].to_vec();
        let bn2 = csbn_normalize(&z2, k, cfg.f2, t2, &g2, &be2, &mut self.csbn2, phase)?;
        let act2: Vec<f64> = bn2.output.iter().map(|&v| activate(v, cfg.activation)).collect();

        // Non-overlapping average pooling over time.
        let mut pooled = vec![0.0; k * flat];
        for s in 0..k {
            for g in 0..cfg.f2 {
                for m in 0..p2 {
                    let base = (s * cfg.f2 + g) * t2 + m * cfg.pool;
                    let sum: f64 = act2[base..base + cfg.pool].iter().sum();
                    pooled[s * flat + g * p2 + m] = sum / cfg.pool as f64;
                }
            }
        }

        // Fully connected scorer.
        let mut scores = vec![0.0; k * 2];
        for s in 0..k {
            for i in 0..2 {
                let mut acc = self.params[lay.bfc + i];
                let wbase = lay.wfc + i * flat;
                for j in 0..flat {
                    acc += self.params[wbase + j] * pooled[s * flat + j];
                }
                scores[s * 2 + i] = acc;
            }
        }

        let fallback = bn1.fallback_to_running || bn2.fallback_to_running;
        if phase == Phase::Train {
            self.cache = Some(ForwardCache {
                batch: k,
                input: batch.data.clone(),
                bn1,
                act1,
                bn2,
                pooled,
                scores: scores.clone(),
            });
        } else {
            self.cache = None;
        }
        Ok(ForwardOutput { scores, csbn_fallback: fallback })
    }

    /// Scores of the last training forward pass.
    pub fn cached_scores(&self) -> Result<&[f64], NetworkError> {
        self.cache
            .as_ref()
            .map(|c| c.scores.as_slice())
            .ok_or(NetworkError::StaleState)
    }

    /// Backpropagate a gradient with respect to the scores (`[K x 2]`)
    /// through the cached training pass. Returns the flat parameter gradient.
    pub fn backward(&mut self, score_grad: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let cache = self.cache.take().ok_or(NetworkError::StaleState)?;
        let cfg = self.config.clone();
        let lay = cfg.offsets();
        let k = cache.batch;
        if score_grad.len() != k * 2 {
            self.cache = Some(cache);
            return Err(NetworkError::ShapeError {
                what: "score gradient",
                expected: k * 2,
                found: score_grad.len(),
            });
        }
        let (c, t) = (cfg.channels, cfg.samples);
        let t2 = cfg.conv2_len();
        let p2 = cfg.pooled_len();
        let flat = cfg.flattened_len();
        let mut grads = vec![0.0; lay.total];

        // FC layer.
        let mut dpooled = vec![0.0; k * flat];
        for s in 0..k {
            for i in 0..2 {
                let ds = score_grad[s * 2 + i];
                grads[lay.bfc + i] += ds;
                let wbase = lay.wfc + i * flat;
                for j in 0..flat {
                    grads[wbase + j] += ds * cache.pooled[s * flat + j];
                    dpooled[s * flat + j] += self.params[wbase + j] * ds;
                }
            }
        }

        // Pool backward, then activation backward into bn2's output space.
        let mut dact2 = vec![0.0; k * cfg.f2 * t2];
        for s in 0..k {
            for g in 0..cfg.f2 {
                for m in 0..p2 {
                    let d = dpooled[s * flat + g * p2 + m] / cfg.pool as f64;
                    let base = (s * cfg.f2 + g) * t2 + m * cfg.pool;
                    for q in 0..cfg.pool {
                        dact2[base + q] = d;
                    }
                }
            }
        }
        let dbn2: Vec<f64> = dact2
            .iter()
            .zip(&cache.bn2.output)
            .map(|(&d, &pre)| d * activate_grad(pre, cfg.activation))
            .collect();

        let g2 = self.params[lay.g2..lay.g2 + cfg.f2].to_vec();
        let (dz2, dg2, db2) =
            bn_backward(&dbn2, &cache.bn2, &g2, cfg.bn_epsilon, k, cfg.f2, t2);
        for (i, v) in dg2.iter().enumerate() {
            grads[lay.g2 + i] += v;
        }
        for (i, v) in db2.iter().enumerate() {
            grads[lay.be2 + i] += v;
        }

        // Temporal conv backward.
        let mut dact1 = vec![0.0; k * cfg.f1 * t];
        for s in 0..k {
            for g in 0..cfg.f2 {
                for ti in 0..t2 {
                    let d = dz2[(s * cfg.f2 + g) * t2 + ti];
                    grads[lay.b2 + g] += d;
                    for f in 0..cfg.f1 {
                        let wbase = lay.w2 + (g * cfg.f1 + f) * cfg.kernel_t;
                        let abase = (s * cfg.f1 + f) * t + ti * cfg.stride;
                        for j in 0..cfg.kernel_t {
                            grads[wbase + j] += d * cache.act1[abase + j];
                            dact1[abase + j] += self.params[wbase + j] * d;
                        }
                    }
                }
            }
        }
        let dbn1: Vec<f64> = dact1
            .iter()
            .zip(&cache.bn1.output)
            .map(|(&d, &pre)| d * activate_grad(pre, cfg.activation))
            .collect();

        let g1 = self.params[lay.g1..lay.g1 + cfg.f1].to_vec();
        let (dz1, dg1, db1) =
            bn_backward(&dbn1, &cache.bn1, &g1, cfg.bn_epsilon, k, cfg.f1, t);
        for (i, v) in dg1.iter().enumerate() {
            grads[lay.g1 + i] += v;
        }
        for (i, v) in db1.iter().enumerate() {
            grads[lay.be1 + i] += v;
        }

        // Spatial conv backward.
        for s in 0..k {
            let x = &cache.input[s * c * t..(s + 1) * c * t];
            for f in 0..cfg.f1 {
                for ti in 0..t {
                    let d = dz1[(s * cfg.f1 + f) * t + ti];
                    grads[lay.b1 + f] += d;
                    for ch in 0..c {
                        grads[lay.w1 + f * c + ch] += d * x[ch * t + ti];
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Cross-entropy score gradient `(softmax - onehot) / K` for the cached
    /// training scores.
    pub fn cross_entropy_score_grad(
        scores: &[f64],
        labels: &[usize],
    ) -> Vec<f64> {
        let k = labels.len();
        let probs = softmax(scores);
        let mut grad = vec![0.0; k * 2];
        for s in 0..k {
            for i in 0..2 {
                let y = if labels[s] == i { 1.0 } else { 0.0 };
                grad[s * 2 + i] = (probs[s * 2 + i] - y) / k as f64;
            }
        }
        grad
    }
}

/// Batch-norm backward through the batch-statistics pathway.
/// Returns `(dx, dgamma, dbeta)`.
fn bn_backward(
    dout: &[f64],
    bn: &CsbnOutput,
    gamma: &[f64],
    eps: f64,
    k: usize,
    maps: usize,
    len: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = (k * len) as f64;
    let mut dgamma = vec![0.0; maps];
    let mut dbeta = vec![0.0; maps];
    let mut dx = vec![0.0; dout.len()];
    for m in 0..maps {
        let inv_std = 1.0 / (bn.var[m] + eps).sqrt();
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for s in 0..k {
            let base = (s * maps + m) * len;
            for i in base..base + len {
                sum_dy += dout[i];
                sum_dy_xhat += dout[i] * bn.standardized[i];
            }
        }
        dgamma[m] = sum_dy_xhat;
        dbeta[m] = sum_dy;
        let mean_dy = sum_dy / n;
        let mean_dy_xhat = sum_dy_xhat / n;
        for s in 0..k {
            let base = (s * maps + m) * len;
            for i in base..base + len {
                dx[i] = gamma[m]
                    * inv_std
                    * (dout[i] - mean_dy - bn.standardized[i] * mean_dy_xhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}
