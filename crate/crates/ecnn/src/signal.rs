//! Shared signal primitives: FFT on arbitrary lengths, and natural cubic
//! spline interpolation for envelope fitting.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("input contains non-finite values")]
    InvalidSignal,
    #[error("spectrum is not conjugate-symmetric (imaginary residue {0:.3e})")]
    NonRealResult(f64),
    #[error("spline needs at least 2 knots, got {0}")]
    InsufficientKnots(usize),
    #[error("duplicate or non-increasing knot abscissae at index {0}")]
    DegenerateKnots(usize),
}

/// Full complex spectrum of a real signal of length `len`.
///
/// Convention: unnormalized forward transform, `1/T` on the inverse.
/// Bin `k` maps to frequency `k * rate / len` Hz.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Frequency in Hz of bin `k` for a given sample rate.
    pub fn frequency(&self, k: usize, sample_rate_hz: f64) -> f64 {
        k as f64 * sample_rate_hz / self.bins.len() as f64
    }
}

/// Forward FFT of a real signal. Supports any length >= 2 (rustfft handles
/// composite lengths like 384 via mixed-radix).
pub fn fft(signal: &[f64]) -> Result<Spectrum, SignalError> {
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(SignalError::InvalidSignal);
    }
    let mut buf: Vec<Complex64> = signal.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    Ok(Spectrum { bins: buf })
}

/// Forward FFT of an already-complex buffer (used internally by VMD).
pub fn fft_complex(buf: &mut [Complex64]) {
    FftPlanner::new().plan_fft_forward(buf.len()).process(buf);
}

/// Inverse FFT of a complex buffer, including the `1/T` normalization.
pub fn ifft_complex(buf: &mut [Complex64]) {
    let n = buf.len();
    FftPlanner::new().plan_fft_inverse(n).process(buf);
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Inverse FFT back to a real signal. The imaginary residue must stay below
/// 1e-6 relative magnitude, otherwise the spectrum was not conjugate-symmetric.
pub fn ifft(spectrum: &Spectrum) -> Result<Vec<f64>, SignalError> {
    let mut buf = spectrum.bins.clone();
    ifft_complex(&mut buf);
    let real_norm: f64 = buf.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    let imag_norm: f64 = buf.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    if imag_norm > 1e-6 * real_norm.max(1e-300) && imag_norm > 1e-9 {
        return Err(SignalError::NonRealResult(imag_norm / real_norm.max(1e-300)));
    }
    Ok(buf.into_iter().map(|c| c.re).collect())
}

/// Natural cubic spline through `(knots_x, knots_y)`, evaluated at `query_x`.
///
/// Second derivative is zero at both end knots. With exactly two knots this
/// degenerates to linear interpolation. Queries outside the knot range are
/// extrapolated with the boundary polynomial.
pub fn cubic_spline(
    knots_x: &[f64],
    knots_y: &[f64],
    query_x: &[f64],
) -> Result<Vec<f64>, SignalError> {
    let n = knots_x.len();
    if n < 2 || knots_y.len() != n {
        return Err(SignalError::InsufficientKnots(n.min(knots_y.len())));
    }
    for i in 1..n {
        if knots_x[i] <= knots_x[i - 1] {
            return Err(SignalError::DegenerateKnots(i));
        }
    }

    // Second derivatives m[i] from the tridiagonal system; natural ends.
    let mut m = vec![0.0; n];
    if n > 2 {
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = knots_x[i] - knots_x[i - 1];
            let h1 = knots_x[i + 1] - knots_x[i];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0
                * ((knots_y[i + 1] - knots_y[i]) / h1 - (knots_y[i] - knots_y[i - 1]) / h0);
        }
        // Thomas algorithm on the interior rows.
        for i in 2..n - 1 {
            let h0 = knots_x[i] - knots_x[i - 1];
            let w = h0 / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (1..n - 1).rev() {
            m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
        }
    }

    let eval = |x: f64| -> f64 {
        // Locate the interval, clamping to the boundary segments.
        let mut i = match knots_x.binary_search_by(|k| k.partial_cmp(&x).unwrap()) {
            Ok(j) => j.min(n - 2),
            Err(j) => j.saturating_sub(1).min(n - 2),
        };
        if x < knots_x[0] {
            i = 0;
        }
        let h = knots_x[i + 1] - knots_x[i];
        let a = (knots_x[i + 1] - x) / h;
        let b = (x - knots_x[i]) / h;
        a * knots_y[i]
            + b * knots_y[i + 1]
            + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0
    };
    Ok(query_x.iter().map(|&x| eval(x)).collect())
}

/// Relative L2 distance between two equal-length vectors.
pub fn rel_l2_error(actual: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = actual
        .iter()
        .zip(reference)
        .map(|(a, r)| (a - r) * (a - r))
        .sum::<f64>()
        .sqrt();
    let den: f64 = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
