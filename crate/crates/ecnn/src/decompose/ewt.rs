//! Empirical wavelet transform: adaptive spectrum segmentation plus a
//! Littlewood-Paley / Meyer filter bank built on the detected boundaries.

use super::DecomposeError;
use crate::signal::{fft, ifft_complex};
use std::f64::consts::PI;

/// Transition polynomial beta(x) = x^4 (35 - 84x + 70x^2 - 20x^3),
/// clamped to [0, 1] outside the unit interval.
pub fn meyer_transition(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * x * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
    }
}

/// Outcome of spectrum segmentation.
#[derive(Debug, Clone)]
pub struct BoundaryResult {
    /// Strictly increasing band edges in (0, pi); length = bands - 1.
    pub boundaries: Vec<f64>,
    /// Number of bands actually usable (may be below the request).
    pub bands: usize,
    /// True when no maxima were detectable and uniform segmentation was used.
    pub fallback_uniform: bool,
}

fn smooth5(mag: &[f64]) -> Vec<f64> {
    let n = mag.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            mag[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Indices of local maxima of `v`, endpoints included when they dominate
/// their single neighbor. Plateaus contribute their first index.
fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    if v[0] > v[1] {
        out.push(0);
    }
    let mut i = 1;
    while i < n - 1 {
        if v[i] > v[i - 1] && v[i] >= v[i + 1] {
            // Walk the plateau; count it once if it drops afterwards.
            let mut j = i;
            while j + 1 < n - 1 && v[j + 1] == v[i] {
                j += 1;
            }
            if v[j + 1] < v[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    if v[n - 1] > v[n - 2] {
        out.push(n - 1);
    }
    out
}

/// Segment a half-spectrum magnitude (grid over [0, pi]) into `num_bands`
/// bands: keep the `num_bands` largest local maxima and place each boundary at
/// the global minimum between consecutive kept maxima (lowest index on ties).
pub fn detect_boundaries(magnitude: &[f64], num_bands: usize) -> BoundaryResult {
    let h = magnitude.len();
    let smoothed = smooth5(magnitude);
    let mut peaks = local_maxima(&smoothed);
    if peaks.is_empty() {
        let bands = num_bands.max(1);
        let boundaries: Vec<f64> =
            (1..bands).map(|n| PI * n as f64 / bands as f64).collect();
        return BoundaryResult { boundaries, bands, fallback_uniform: true };
    }
    // Rank by magnitude, ties to the lower index, keep the requested count.
    peaks.sort_by(|&a, &b| {
        smoothed[b]
            .partial_cmp(&smoothed[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let bands = num_bands.min(peaks.len()).max(1);
    let mut kept: Vec<usize> = peaks[..bands].to_vec();
    kept.sort_unstable();

    let mut boundaries = Vec::with_capacity(bands - 1);
    for w in kept.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut min_idx = a + 1;
        for i in a + 1..b {
            if smoothed[i] < smoothed[min_idx] {
                min_idx = i;
            }
        }
        boundaries.push(PI * min_idx as f64 / (h - 1) as f64);
    }
    BoundaryResult { boundaries, bands, fallback_uniform: false }
}

/// Build the `bands` filters over the full FFT grid of length `t`.
/// Filter 0 is the scaling (low-pass) filter; the last one is high-pass with
/// no upper roll-off. Returns real-valued magnitude responses.
fn build_filters(boundaries: &[f64], gamma: f64, t: usize) -> Vec<Vec<f64>> {
    let bands = boundaries.len() + 1;
    let omega_at = |k: usize| -> f64 {
        let signed = if k <= t / 2 {
            k as f64
        } else {
            k as f64 - t as f64
        };
        (2.0 * PI * signed / t as f64).abs()
    };

    let rise = |w: f64, edge: f64| -> f64 {
        // sin transition used on a band's lower edge.
        let x = (w - (1.0 - gamma) * edge) / (2.0 * gamma * edge);
        (PI / 2.0 * meyer_transition(x)).sin()
    };
    let fall = |w: f64, edge: f64| -> f64 {
        // cos transition used on a band's upper edge.
        let x = (w - (1.0 - gamma) * edge) / (2.0 * gamma * edge);
        (PI / 2.0 * meyer_transition(x)).cos()
    };

    (0..bands)
        .map(|n| {
            (0..t)
                .map(|k| {
                    let w = omega_at(k);
                    if bands == 1 {
                        return 1.0;
                    }
                    if n == 0 {
                        let e = boundaries[0];
                        if w <= (1.0 - gamma) * e {
                            1.0
                        } else if w <= (1.0 + gamma) * e {
                            fall(w, e)
                        } else {
                            0.0
                        }
                    } else {
                        let lo = boundaries[n - 1];
                        let hi = boundaries.get(n).copied();
                        if w < (1.0 - gamma) * lo {
                            0.0
                        } else if w <= (1.0 + gamma) * lo {
                            rise(w, lo)
                        } else {
                            match hi {
                                None => 1.0,
                                Some(h) => {
                                    if w <= (1.0 - gamma) * h {
                                        1.0
                                    } else if w <= (1.0 + gamma) * h {
                                        fall(w, h)
                                    } else {
                                        0.0
                                    }
                                }
                            }
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Largest gamma satisfying the transition constraint for these boundaries
/// (pi appended as the final edge), capped at the requested value.
fn effective_gamma(requested: f64, boundaries: &[f64]) -> f64 {
    let mut edges = boundaries.to_vec();
    edges.push(PI);
    let mut g = requested;
    let mut prev = 0.0;
    for &e in &edges {
        if prev > 0.0 {
            g = g.min((e - prev) / (e + prev));
        }
        prev = e;
    }
    g.max(1e-6)
}

#[derive(Debug, Clone)]
pub struct EwtOutput {
    pub components: Vec<Vec<f64>>,
    pub boundaries: Vec<f64>,
    pub gamma: f64,
    pub fallback_uniform: bool,
}

/// Decompose a channel into `num_bands` band-limited components by masking
/// the spectrum with each filter and inverting.
pub fn ewt_decompose(
    channel: &[f64],
    num_bands: usize,
    gamma: f64,
) -> Result<EwtOutput, DecomposeError> {
    let t = channel.len();
    let spectrum = fft(channel)?;
    let half = t / 2 + 1;
    let magnitude: Vec<f64> = spectrum.bins[..half].iter().map(|c| c.norm()).collect();
    let seg = detect_boundaries(&magnitude, num_bands);
    let gamma = effective_gamma(gamma, &seg.boundaries);
    let filters = build_filters(&seg.boundaries, gamma, t);

    let components = filters
        .iter()
        .map(|f| {
            let mut buf: Vec<_> = spectrum
                .bins
                .iter()
                .zip(f)
                .map(|(b, &g)| b * g)
                .collect();
            ifft_complex(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect();

    Ok(EwtOutput {
        components,
        boundaries: seg.boundaries,
        gamma,
        fallback_uniform: seg.fallback_uniform,
    })
}

/// Filter bank for a given segmentation; exposed for the partition tests.
pub fn ewt_filter_bank(boundaries: &[f64], gamma: f64, t: usize) -> Vec<Vec<f64>> {
    build_filters(boundaries, effective_gamma(gamma, boundaries), t)
}
