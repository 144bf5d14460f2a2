//! Empirical mode decomposition: iterative sifting with cubic-spline
//! envelopes, mirror-extended extrema, and a Cauchy stop criterion.

use super::DecomposeError;
use crate::signal::{cubic_spline, SignalError};

/// Sifting controls. The Cauchy criterion stops a sift once
/// `sum((d_prev - d_new)^2) / sum(d_prev^2)` falls below `sd_threshold`.
#[derive(Debug, Clone)]
pub struct SiftConfig {
    pub sd_threshold: f64,
    pub max_sift_iters: usize,
}

impl Default for SiftConfig {
    fn default() -> SiftConfig {
        SiftConfig { sd_threshold: 0.2, max_sift_iters: 100 }
    }
}

/// Local maxima and minima as (index, value), plateaus collapsed to their
/// midpoint sample.
pub fn find_extrema(x: &[f64]) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
    let n = x.len();
    let mut maxima = Vec::new();
    let mut minima = Vec::new();
    if n < 3 {
        return (maxima, minima);
    }
    let mut i = 1;
    while i < n - 1 {
        // Collapse a plateau to one representative point.
        let start = i;
        let mut end = i;
        while end + 1 < n - 1 && x[end + 1] == x[start] {
            end += 1;
        }
        let left = x[start - 1];
        let right = if end + 1 < n { x[end + 1] } else { x[end] };
        let v = x[start];
        let mid = (start + end) / 2;
        if v > left && v > right {
            maxima.push((mid, v));
        } else if v < left && v < right {
            minima.push((mid, v));
        }
        i = end + 1;
    }
    (maxima, minima)
}

/// Count sign changes, treating exact zeros as boundaries between runs.
pub fn count_zero_crossings(x: &[f64]) -> usize {
    let mut count = 0;
    let mut prev: Option<bool> = None;
    for &v in x {
        if v == 0.0 {
            continue;
        }
        let sign = v > 0.0;
        if let Some(p) = prev {
            if p != sign {
                count += 1;
            }
        }
        prev = Some(sign);
    }
    count
}

/// Mirror up to `pad` extrema of each kind about both signal ends so the
/// envelope splines do not swing at the boundaries.
fn extend_extrema(
    extrema: &[(usize, f64)],
    n: usize,
    pad: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let last = (n - 1) as f64;
    for &(idx, v) in extrema.iter().take(pad) {
        xs.push(-(idx as f64));
        ys.push(v);
    }
    xs.reverse();
    ys.reverse();
    for &(idx, v) in extrema {
        xs.push(idx as f64);
        ys.push(v);
    }
    for &(idx, v) in extrema.iter().rev().take(pad) {
        xs.push(2.0 * last - idx as f64);
        ys.push(v);
    }
    // Drop any duplicate abscissae produced by mirroring an endpoint extremum.
    let mut dedup_x = Vec::with_capacity(xs.len());
    let mut dedup_y = Vec::with_capacity(ys.len());
    for (x, y) in xs.into_iter().zip(ys) {
        if dedup_x.last().map_or(true, |&p: &f64| x > p) {
            dedup_x.push(x);
            dedup_y.push(y);
        }
    }
    (dedup_x, dedup_y)
}

fn envelope_mean(x: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let (maxima, minima) = find_extrema(x);
    if maxima.len() < 2 || minima.len() < 2 {
        return None;
    }
    let grid: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let (ux, uy) = extend_extrema(&maxima, n, 2);
    let (lx, ly) = extend_extrema(&minima, n, 2);
    let upper = cubic_spline(&ux, &uy, &grid).ok()?;
    let lower = cubic_spline(&lx, &ly, &grid).ok()?;
    Some(upper.iter().zip(&lower).map(|(u, l)| 0.5 * (u + l)).collect())
}

fn is_imf_candidate(x: &[f64]) -> bool {
    let (maxima, minima) = find_extrema(x);
    let extrema = maxima.len() + minima.len();
    let zc = count_zero_crossings(x);
    extrema.abs_diff(zc) <= 1
}

/// Sift one IMF out of `residue`. None when no envelope can be built.
fn sift(residue: &[f64], config: &SiftConfig) -> Option<Vec<f64>> {
    let mut d = residue.to_vec();
    for _ in 0..config.max_sift_iters {
        let mean = envelope_mean(&d)?;
        let prev_energy: f64 = d.iter().map(|v| v * v).sum();
        let diff_energy: f64 = mean.iter().map(|m| m * m).sum();
        for (v, m) in d.iter_mut().zip(&mean) {
            *v -= m;
        }
        if prev_energy > 0.0
            && diff_energy / prev_energy < config.sd_threshold
            && is_imf_candidate(&d)
        {
            break;
        }
    }
    Some(d)
}

/// Decompose into `[IMF_1 .. IMF_m, residue]`, `m <= max_imfs`. The returned
/// components sum to the input exactly (each IMF is subtracted from the
/// running residue). A signal without enough extrema is its own residue.
pub fn emd_decompose(
    channel: &[f64],
    max_imfs: usize,
    config: &SiftConfig,
) -> Result<Vec<Vec<f64>>, DecomposeError> {
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(DecomposeError::Signal(SignalError::InvalidSignal));
    }
    let mut residue = channel.to_vec();
    let mut components: Vec<Vec<f64>> = Vec::new();
    for _ in 0..max_imfs {
        let (maxima, minima) = find_extrema(&residue);
        if maxima.len() < 2 || minima.len() < 2 {
            break;
        }
        match sift(&residue, config) {
            Some(imf) => {
                for (r, v) in residue.iter_mut().zip(&imf) {
                    *r -= v;
                }
                components.push(imf);
            }
            None => break,
        }
    }
    components.push(residue);
    Ok(components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::rel_l2_error;
    use std::f64::consts::PI;

    fn tone(freq: f64, t: usize, rate: f64) -> Vec<f64> {
        (0..t).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        num / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn pure_sine_is_its_own_imf() {
        // 5 full periods.
        let x = tone(5.0, 384, 384.0);
        let comps = emd_decompose(&x, 4, &SiftConfig::default()).unwrap();
        assert!(comps.len() >= 2);
        assert!(correlation(&comps[0], &x) > 0.99);
        let imf_energy: f64 = comps[0].iter().map(|v| v * v).sum();
        let res_energy: f64 = comps.last().unwrap().iter().map(|v| v * v).sum();
        assert!(res_energy / imf_energy < 0.05);
    }

    #[test]
    fn two_tone_mixture_separates() {
        let t = 384;
        let rate = 128.0;
        let hi = tone(20.0, t, rate);
        let lo = tone(4.0, t, rate);
        let mix: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a + b).collect();
        let comps = emd_decompose(&mix, 3, &SiftConfig::default()).unwrap();
        assert!(comps.len() >= 3);
        assert!(correlation(&comps[0], &hi) > 0.95, "hi corr {}", correlation(&comps[0], &hi));
        assert!(correlation(&comps[1], &lo) > 0.95, "lo corr {}", correlation(&comps[1], &lo));
    }

    #[test]
    fn monotonic_ramp_yields_only_residue() {
        let x: Vec<f64> = (0..100).map(|i| i as f64 * 0.3).collect();
        let comps = emd_decompose(&x, 4, &SiftConfig::default()).unwrap();
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0], x);
    }

    #[test]
    fn completeness_is_exact() {
        let t = 384;
        let x: Vec<f64> = (0..t)
            .map(|i| {
                let s = i as f64 / 128.0;
                (2.0 * PI * 17.0 * s).sin() + 0.6 * (2.0 * PI * 3.0 * s).cos() + 0.2 * s
            })
            .collect();
        let comps = emd_decompose(&x, 6, &SiftConfig::default()).unwrap();
        let mut sum = vec![0.0; t];
        for c in &comps {
            for (s, v) in sum.iter_mut().zip(c) {
                *s += v;
            }
        }
        assert!(rel_l2_error(&sum, &x) < 1e-9);
    }

    #[test]
    fn imf_oscillation_property_holds_in_interior() {
        let t = 384;
        let x: Vec<f64> = (0..t)
            .map(|i| {
                let s = i as f64 / 128.0;
                (2.0 * PI * 22.0 * s).sin() + 0.8 * (2.0 * PI * 6.0 * s).sin()
            })
            .collect();
        let comps = emd_decompose(&x, 4, &SiftConfig::default()).unwrap();
        let margin = t / 20; // discard 5% at each boundary
        for imf in &comps[..comps.len() - 1] {
            let interior = &imf[margin..t - margin];
            let (mx, mn) = find_extrema(interior);
            let zc = count_zero_crossings(interior);
            let extrema = mx.len() + mn.len();
            assert!(extrema.abs_diff(zc) <= 1, "extrema {extrema} vs zc {zc}");
        }
    }

    #[test]
    fn plateau_counts_as_single_extremum() {
        let x = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0, -1.0, 0.0];
        let (maxima, minima) = find_extrema(&x);
        assert_eq!(maxima, vec![(3, 2.0)]);
        assert_eq!(minima, vec![(7, -1.0)]);
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = [0.0, f64::INFINITY, 1.0];
        assert!(emd_decompose(&x, 2, &SiftConfig::default()).is_err());
    }
}
