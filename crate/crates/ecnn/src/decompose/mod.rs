//! Signal decomposition: DWT, EMD, EWT and VMD, applied channel-wise to turn
//! one epoch into an ordered stack of same-shaped components.

mod dwt;
mod emd;
mod ewt;
mod vmd;

pub use dwt::{dwt_decompose, dwt_max_levels, Wavelet};
pub use emd::{count_zero_crossings, emd_decompose, find_extrema, SiftConfig};
pub use ewt::{
    detect_boundaries, ewt_decompose, ewt_filter_bank, meyer_transition, BoundaryResult,
};
pub use vmd::{vmd_decompose, VmdParams, VmdResult};

use crate::epoch::Epoch;
use crate::signal::SignalError;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DecomposeError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("signal of length {len} too short for filter length {filter}")]
    SignalTooShort { len: usize, filter: usize },
    #[error("requested {k} modes but signal supports at most {max}")]
    TooManyModes { k: usize, max: usize },
    #[error("requested component count {0} outside [1, 16]")]
    BadComponentCount(usize),
}

/// Which decomposition method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dwt,
    Emd,
    Ewt,
    Vmd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dwt => "dwt",
            Method::Emd => "emd",
            Method::Ewt => "ewt",
            Method::Vmd => "vmd",
        }
    }

    /// Default component count per method: VMD=10, EMD=4, EWT=10, DWT=6.
    pub fn default_components(self) -> usize {
        match self {
            Method::Vmd => 10,
            Method::Emd => 4,
            Method::Ewt => 10,
            Method::Dwt => 6,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Method, String> {
        match s.to_ascii_lowercase().as_str() {
            "dwt" => Ok(Method::Dwt),
            "emd" => Ok(Method::Emd),
            "ewt" => Ok(Method::Ewt),
            "vmd" => Ok(Method::Vmd),
            other => Err(format!("unknown method '{other}' (expected dwt|emd|ewt|vmd)")),
        }
    }
}

/// Per-method tuning knobs with reference defaults.
#[derive(Debug, Clone)]
pub struct MethodParams {
    pub wavelet: Wavelet,
    pub sift: SiftConfig,
    pub ewt_gamma: f64,
    pub vmd: VmdParams,
}

impl Default for MethodParams {
    fn default() -> MethodParams {
        MethodParams {
            wavelet: Wavelet::Db4,
            sift: SiftConfig::default(),
            ewt_gamma: 0.1,
            vmd: VmdParams::default(),
        }
    }
}

/// Method + requested component count D (clamped per method maxima at run time).
#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    pub method: Method,
    pub components: usize,
    pub params: MethodParams,
}

impl DecompositionConfig {
    pub fn new(method: Method, components: usize) -> Result<DecompositionConfig, DecomposeError> {
        if components < 1 || components > 16 {
            return Err(DecomposeError::BadComponentCount(components));
        }
        Ok(DecompositionConfig { method, components, params: MethodParams::default() })
    }
}

/// Per-channel decomposition output plus bookkeeping flags.
#[derive(Debug, Clone)]
pub struct ChannelDecomposition {
    pub components: Vec<Vec<f64>>,
    /// True when the requested count was reduced to the method's maximum.
    pub clamped: bool,
    /// False only when an iterative method hit max_iter without converging.
    pub converged: bool,
}

/// Ordered stack of D components, each a `[C x T]` matrix matching the source
/// epoch shape. Ordering is ascending frequency for DWT/EWT/VMD and native
/// sifting order (high to low) for EMD.
#[derive(Debug, Clone)]
pub struct ComponentStack {
    pub components: Vec<Vec<f64>>,
    pub method: Method,
    pub channels: usize,
    pub samples: usize,
    pub clamped: bool,
    pub converged: bool,
}

impl ComponentStack {
    pub fn depth(&self) -> usize {
        self.components.len()
    }

    /// Row `c` of component `d`.
    pub fn channel(&self, d: usize, c: usize) -> &[f64] {
        &self.components[d][c * self.samples..(c + 1) * self.samples]
    }
}

/// Decompose one channel with the configured method.
pub fn decompose_channel(
    channel: &[f64],
    sample_rate_hz: f64,
    config: &DecompositionConfig,
) -> Result<ChannelDecomposition, DecomposeError> {
    let d = config.components;
    match config.method {
        Method::Dwt => {
            let max = dwt_max_levels(channel.len(), config.params.wavelet);
            let levels = (d - 1).min(max);
            let comps = dwt_decompose(channel, levels.max(1), config.params.wavelet)?;
            Ok(ChannelDecomposition {
                clamped: d - 1 > max,
                converged: true,
                components: comps,
            })
        }
        Method::Emd => {
            let comps = emd_decompose(channel, d.saturating_sub(1).max(1), &config.params.sift)?;
            Ok(ChannelDecomposition {
                clamped: comps.len() < d,
                converged: true,
                components: comps,
            })
        }
        Method::Ewt => {
            let out = ewt_decompose(channel, d, config.params.ewt_gamma)?;
            Ok(ChannelDecomposition {
                clamped: out.components.len() < d || out.fallback_uniform,
                converged: true,
                components: out.components,
            })
        }
        Method::Vmd => {
            let out = vmd_decompose(channel, sample_rate_hz, d, &config.params.vmd)?;
            Ok(ChannelDecomposition {
                clamped: false,
                converged: out.converged,
                components: out.modes,
            })
        }
    }
}

/// Decompose every channel of an epoch and stack per-component matrices.
///
/// When channels yield different component counts (EMD/DWT clamping) the stack
/// depth is the minimum across channels; surplus trailing components of deeper
/// channels are folded into the last kept one by summation, so per-channel
/// completeness is preserved.
pub fn decompose_epoch(
    epoch: &Epoch,
    config: &DecompositionConfig,
) -> Result<ComponentStack, DecomposeError> {
    let c = epoch.channels();
    let t = epoch.samples();
    let mut per_channel = Vec::with_capacity(c);
    let mut clamped = false;
    let mut converged = true;
    for ch in 0..c {
        let dec = decompose_channel(epoch.channel(ch), epoch.sample_rate_hz, config)?;
        clamped |= dec.clamped;
        converged &= dec.converged;
        per_channel.push(dec.components);
    }
    let depth = per_channel.iter().map(|v| v.len()).min().unwrap_or(0);
    clamped |= per_channel.iter().any(|v| v.len() != depth);

    let mut components = vec![vec![0.0; c * t]; depth];
    for (ch, comps) in per_channel.into_iter().enumerate() {
        for (d, comp) in comps.into_iter().enumerate() {
            let slot = d.min(depth - 1);
            let row = &mut components[slot][ch * t..(ch + 1) * t];
            if d <= depth - 1 {
                row.copy_from_slice(&comp);
            } else {
                for (r, v) in row.iter_mut().zip(comp) {
                    *r += v;
                }
            }
        }
    }
    Ok(ComponentStack {
        components,
        method: config.method,
        channels: c,
        samples: t,
        clamped,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epoch::{Epoch, Label};
    use crate::signal::rel_l2_error;
    use std::f64::consts::PI;

    fn two_channel_epoch(ch: Vec<f64>) -> Epoch {
        let t = ch.len();
        let mut data = ch.clone();
        data.extend(ch);
        Epoch::new(data, 2, t, 128.0, 0, Label::Unlabeled).unwrap()
    }

    #[test]
    fn identical_channels_give_identical_stacks() {
        let t = 384;
        let ch: Vec<f64> = (0..t)
            .map(|i| (2.0 * PI * 7.0 * i as f64 / 128.0).sin() + 0.3 * (i as f64 * 0.05).cos())
            .collect();
        let config = DecompositionConfig::new(Method::Dwt, 4).unwrap();
        let stack = decompose_epoch(&two_channel_epoch(ch), &config).unwrap();
        for d in 0..stack.depth() {
            assert_eq!(stack.channel(d, 0), stack.channel(d, 1));
        }
    }

    #[test]
    fn emd_uneven_channel_counts_preserve_completeness() {
        let t = 384;
        // Channel 1 rich in oscillation, channel 2 a near-ramp with one tone:
        // different IMF counts per channel are expected.
        let ch1: Vec<f64> = (0..t)
            .map(|i| {
                let x = i as f64 / 128.0;
                (2.0 * PI * 20.0 * x).sin() + (2.0 * PI * 4.0 * x).sin() + 0.5 * x
            })
            .collect();
        let ch2: Vec<f64> = (0..t)
            .map(|i| {
                let x = i as f64 / 128.0;
                (2.0 * PI * 9.0 * x).sin() + 2.0 * x
            })
            .collect();
        let mut data = ch1.clone();
        data.extend(ch2.clone());
        let epoch = Epoch::new(data, 2, t, 128.0, 0, Label::Unlabeled).unwrap();
        let config = DecompositionConfig::new(Method::Emd, 4).unwrap();
        let stack = decompose_epoch(&epoch, &config).unwrap();
        for (c, source) in [(0usize, &ch1), (1usize, &ch2)] {
            let mut sum = vec![0.0; t];
            for d in 0..stack.depth() {
                for (s, v) in sum.iter_mut().zip(stack.channel(d, c)) {
                    *s += v;
                }
            }
            assert!(rel_l2_error(&sum, source) < 1e-9);
        }
    }

    #[test]
    fn dwt_requested_ten_clamps_to_six_at_t384() {
        let ch: Vec<f64> = (0..384).map(|i| (i as f64 * 0.1).sin()).collect();
        let config = DecompositionConfig::new(Method::Dwt, 10).unwrap();
        let stack = decompose_epoch(&two_channel_epoch(ch), &config).unwrap();
        assert_eq!(stack.depth(), 6);
        assert!(stack.clamped);
    }

    #[test]
    fn component_count_bounds_enforced() {
        assert!(DecompositionConfig::new(Method::Dwt, 0).is_err());
        assert!(DecompositionConfig::new(Method::Dwt, 17).is_err());
    }
}
