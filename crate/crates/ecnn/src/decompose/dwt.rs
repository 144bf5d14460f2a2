//! Orthonormal discrete wavelet transform (Mallat pyramid) with periodic
//! boundary handling. Components are full-length band reconstructions
//! obtained by zeroing all other coefficient bands and inverting.

use super::DecomposeError;

/// Supported orthonormal wavelets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wavelet {
    Haar,
    Db4,
}

const SQRT_2_INV: f64 = std::f64::consts::FRAC_1_SQRT_2;

// Daubechies-4 scaling coefficients (8 taps, sum sqrt(2)).
const DB4_LO: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

impl Wavelet {
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            Wavelet::Haar => &[SQRT_2_INV, SQRT_2_INV],
            Wavelet::Db4 => &DB4_LO,
        }
    }

    /// Quadrature-mirror highpass: g[n] = (-1)^n h[L-1-n].
    pub fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l)
            .map(|n| if n % 2 == 0 { h[l - 1 - n] } else { -h[l - 1 - n] })
            .collect()
    }

    pub fn filter_len(self) -> usize {
        self.lowpass().len()
    }
}

impl std::str::FromStr for Wavelet {
    type Err = String;
    fn from_str(s: &str) -> Result<Wavelet, String> {
        match s.to_ascii_lowercase().as_str() {
            "haar" => Ok(Wavelet::Haar),
            "db4" => Ok(Wavelet::Db4),
            other => Err(format!("unknown wavelet '{other}' (expected haar|db4)")),
        }
    }
}

/// Maximum decomposition depth for a signal length: floor(log2(T/(L-1))).
pub fn dwt_max_levels(len: usize, wavelet: Wavelet) -> usize {
    let denom = wavelet.filter_len() - 1;
    if len < wavelet.filter_len() {
        return 0;
    }
    let mut levels = 0usize;
    let mut span = len / denom;
    while span >= 2 {
        span /= 2;
        levels += 1;
    }
    levels
}

/// One periodic analysis step: input of even length -> (approx, detail).
fn analyze(input: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = input.len();
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for k in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (j, (&l, &h)) in lo.iter().zip(hi.iter()).enumerate() {
            let x = input[(2 * k + j) % n];
            a += l * x;
            d += h * x;
        }
        approx[k] = a;
        detail[k] = d;
    }
    (approx, detail)
}

/// One periodic synthesis step, the adjoint of `analyze` (orthonormal
/// filters make the adjoint the exact inverse).
fn synthesize(approx: &[f64], detail: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let half = approx.len();
    let n = half * 2;
    let mut out = vec![0.0; n];
    for k in 0..half {
        for (j, (&l, &h)) in lo.iter().zip(hi.iter()).enumerate() {
            out[(2 * k + j) % n] += l * approx[k] + h * detail[k];
        }
    }
    out
}

/// Full coefficient pyramid: approx at the deepest level plus details per level.
struct Pyramid {
    approx: Vec<f64>,
    /// details[0] is level 1 (finest), details[levels-1] the coarsest.
    details: Vec<Vec<f64>>,
}

fn decompose_pyramid(signal: &[f64], levels: usize, lo: &[f64], hi: &[f64]) -> Pyramid {
    let mut current = signal.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analyze(&current, lo, hi);
        details.push(d);
        current = a;
    }
    Pyramid { approx: current, details }
}

fn reconstruct_pyramid(p: &Pyramid, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let mut current = p.approx.clone();
    for d in p.details.iter().rev() {
        current = synthesize(&current, d, lo, hi);
    }
    current
}

/// Decompose a channel into `levels + 1` full-length band reconstructions,
/// ordered ascending in frequency: A_J, D_J, ..., D_1. Their element-wise sum
/// reconstructs the input exactly (orthonormal perfect reconstruction).
///
/// Lengths not divisible by 2^levels are zero-padded to the next multiple and
/// cropped after inversion.
pub fn dwt_decompose(
    channel: &[f64],
    levels: usize,
    wavelet: Wavelet,
) -> Result<Vec<Vec<f64>>, DecomposeError> {
    let t = channel.len();
    if t < wavelet.filter_len() {
        return Err(DecomposeError::SignalTooShort { len: t, filter: wavelet.filter_len() });
    }
    let levels = levels.min(dwt_max_levels(t, wavelet)).max(1);
    let block = 1usize << levels;
    let padded_len = t.div_ceil(block) * block;
    let mut padded = channel.to_vec();
    padded.resize(padded_len, 0.0);

    let lo = wavelet.lowpass();
    let hi = wavelet.highpass();
    let pyramid = decompose_pyramid(&padded, levels, lo, &hi);

    let zeros_like = |v: &Vec<f64>| vec![0.0; v.len()];
    let mut components = Vec::with_capacity(levels + 1);

    // Approximation band.
    let approx_only = Pyramid {
        approx: pyramid.approx.clone(),
        details: pyramid.details.iter().map(zeros_like).collect(),
    };
    components.push(reconstruct_pyramid(&approx_only, lo, &hi));

    // Detail bands, coarsest (D_J) to finest (D_1).
    for j in (0..levels).rev() {
        let mut details: Vec<Vec<f64>> = pyramid.details.iter().map(zeros_like).collect();
        details[j] = pyramid.details[j].clone();
        let band = Pyramid { approx: vec![0.0; pyramid.approx.len()], details };
        components.push(reconstruct_pyramid(&band, lo, &hi));
    }

    for c in components.iter_mut() {
        c.truncate(t);
    }
    Ok(components)
}
