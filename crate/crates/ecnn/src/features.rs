//! Spectral band-power features: per-channel power in the delta, theta, alpha,
//! and beta bands, concatenated band-major into one vector per epoch.

use crate::epoch::{Epoch, EpochSet};
use crate::signal::{fft, SignalError};
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-open frequency bands in Hz: [low, high).
pub const BANDS: [(&str, f64, f64); 4] = [
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 12.0),
    ("beta", 12.0, 30.0),
];

/// Band powers for one epoch, band-major: all channels for delta, then theta,
/// alpha, beta. Length is `4 * channels`.
pub fn psd_features(epoch: &Epoch) -> Result<Vec<f64>, FeatureError> {
    let c = epoch.channels();
    let t = epoch.samples();
    let rate = epoch.sample_rate_hz;
    let mut per_channel = Vec::with_capacity(c);
    for ch in 0..c {
        let spectrum = fft(epoch.channel(ch))?;
        // One-sided periodogram: |X_k|^2 / T^2, doubled for the redundant
        // conjugate half (never for DC or, at even T, the Nyquist bin).
        let half = t / 2 + 1;
        let mut psd = vec![0.0; half];
        for (k, p) in psd.iter_mut().enumerate() {
            let mut v = spectrum.bins[k].norm_sqr() / (t as f64 * t as f64);
            if k != 0 && !(t % 2 == 0 && k == t / 2) {
                v *= 2.0;
            }
            *p = v;
        }
        let mut powers = [0.0; 4];
        for (k, &p) in psd.iter().enumerate() {
            let f = k as f64 * rate / t as f64;
            for (b, &(_, lo, hi)) in BANDS.iter().enumerate() {
                if f >= lo && f < hi {
                    powers[b] += p;
                }
            }
        }
        per_channel.push(powers);
    }
    let mut out = Vec::with_capacity(4 * c);
    for b in 0..4 {
        for p in &per_channel {
            out.push(p[b]);
        }
    }
    Ok(out)
}

/// Feature matrix for a whole set, one row per epoch.
pub fn psd_feature_matrix(set: &EpochSet) -> Result<Vec<Vec<f64>>, FeatureError> {
    set.epochs().iter().map(psd_features).collect()
}

/// Write features as CSV with header `subject,label,<band>_<channel>...`.
pub fn write_feature_csv(set: &EpochSet, w: &mut impl Write) -> Result<(), FeatureError> {
    let c = set.shape().map_or(0, |(c, _, _)| c);
    let mut header = String::from("subject,label");
    for (name, _, _) in BANDS {
        for ch in 0..c {
            header.push_str(&format!(",{name}_{ch}"));
        }
    }
    writeln!(w, "{header}")?;
    for epoch in set.epochs() {
        let features = psd_features(epoch)?;
        let mut line = format!("{},{}", epoch.subject_id, epoch.label.name());
        for v in features {
            line.push_str(&format!(",{v:.12e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epoch::Label;
    use std::f64::consts::PI;

    fn epoch_from(channels: Vec<Vec<f64>>, rate: f64) -> Epoch {
        let c = channels.len();
        let t = channels[0].len();
        let data: Vec<f64> = channels.into_iter().flatten().collect();
        Epoch::new(data, c, t, rate, 0, Label::Unlabeled).unwrap()
    }

    fn tone(freq: f64, t: usize, rate: f64, amp: f64) -> Vec<f64> {
        (0..t).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect()
    }

    #[test]
    fn sine_power_lands_in_its_band() {
        // A unit sine on an exact bin has mean power 1/2, all in one band.
        let t = 384;
        let rate = 128.0;
        let x = tone(6.0, t, rate, 1.0); // 6 Hz = theta; bin 18
        let epoch = epoch_from(vec![x], rate);
        let f = psd_features(&epoch).unwrap();
        assert_eq!(f.len(), 4);
        assert!((f[1] - 0.5).abs() < 1e-9, "theta power {}", f[1]);
        for (i, &v) in f.iter().enumerate() {
            if i != 1 {
                assert!(v.abs() < 1e-9, "leak into band {i}: {v}");
            }
        }
    }

    #[test]
    fn feature_length_is_four_per_channel() {
        let t = 128;
        let rate = 128.0;
        let epoch = epoch_from(vec![vec![0.0; t]; 30], rate);
        assert_eq!(psd_features(&epoch).unwrap().len(), 120);
    }

    #[test]
    fn scaling_the_signal_scales_power_quadratically() {
        let t = 384;
        let rate = 128.0;
        let base: Vec<f64> = (0..t)
            .map(|i| {
                tone(2.5, t, rate, 1.0)[i] + tone(10.0, t, rate, 0.7)[i]
                    + tone(20.0, t, rate, 0.3)[i]
            })
            .collect();
        let scaled: Vec<f64> = base.iter().map(|v| 3.0 * v).collect();
        let fa = psd_features(&epoch_from(vec![base], rate)).unwrap();
        let fb = psd_features(&epoch_from(vec![scaled], rate)).unwrap();
        for (a, b) in fa.iter().zip(&fb) {
            assert!((b - 9.0 * a).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn band_major_ordering() {
        let t = 384;
        let rate = 128.0;
        // Channel 0 carries theta, channel 1 carries beta.
        let epoch = epoch_from(
            vec![tone(6.0, t, rate, 1.0), tone(20.0, t, rate, 1.0)],
            rate,
        );
        let f = psd_features(&epoch).unwrap();
        // Layout: [delta c0, delta c1, theta c0, theta c1, alpha..., beta...].
        assert!((f[2] - 0.5).abs() < 1e-9); // theta, channel 0
        assert!((f[7] - 0.5).abs() < 1e-9); // beta, channel 1
        assert!(f[3].abs() < 1e-9 && f[6].abs() < 1e-9);
    }

    #[test]
    fn band_edges_are_half_open() {
        let t = 128;
        let rate = 128.0;
        // 4 Hz sits exactly on the theta lower edge: counted in theta only.
        let epoch = epoch_from(vec![tone(4.0, t, rate, 1.0)], rate);
        let f = psd_features(&epoch).unwrap();
        assert!(f[0].abs() < 1e-9, "delta got edge power {}", f[0]);
        assert!((f[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn csv_export_shape() {
        let t = 64;
        let rate = 128.0;
        let epochs = vec![
            Epoch::new(vec![0.5; 2 * t], 2, t, rate, 1, Label::Alert).unwrap(),
            Epoch::new(vec![0.1; 2 * t], 2, t, rate, 2, Label::Fatigue).unwrap(),
        ];
        let set = EpochSet::from_epochs(epochs).unwrap();
        let mut buf = Vec::new();
        write_feature_csv(&set, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("subject,label,delta_0,delta_1,theta_0"));
        assert_eq!(lines[1].split(',').count(), 2 + 8);
        assert!(lines[1].starts_with("1,alert,"));
        assert!(lines[2].starts_with("2,fatigue,"));
    }
}
