//! Butterworth band-pass filter bank, band recombination and z-scoring.
//!
//! Each band filter is designed from the analog Butterworth low-pass
//! prototype: the prototype poles are moved to the band by the
//! low-pass-to-band-pass substitution `s -> (s^2 + w0^2) / (s * bw)` at
//! prewarped edges, mapped to the z-plane with the bilinear transform, and
//! grouped into second-order sections. A prototype of order `n` yields `n`
//! sections (a `2n`-th order band-pass filter). Every section gets one zero
//! at `z = 1` and one at `z = -1`, so each section passes nothing at DC or
//! Nyquist.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edf::EegRecording;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid band {low_hz}-{high_hz} Hz at fs={fs} Hz: {reason}")]
    InvalidBand {
        low_hz: f64,
        high_hz: f64,
        fs: f64,
        reason: &'static str,
    },
    #[error("filter order must be even and >= 2, got {0}")]
    InvalidOrder(usize),
    #[error("section {section} has a pole at radius {radius} (not inside the unit circle)")]
    UnstableDesign { section: usize, radius: f64 },
    #[error("non-finite filter output at sample {index}")]
    NonFiniteOutput { index: usize },
    #[error("band signals have different lengths")]
    LengthMismatch,
    #[error("empty signal")]
    EmptySignal,
    #[error("recording sampled at {recording} Hz, filter bank designed for {config} Hz")]
    SampleRateMismatch { recording: f64, config: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Sigma,
    Beta,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Sigma => "sigma",
            Band::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub band: Band,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandDefinition {
    pub const fn new(band: Band, low_hz: f64, high_hz: f64) -> Self {
        Self {
            band,
            low_hz,
            high_hz,
        }
    }
}

/// The five EEG bands, in decomposition order.
pub const EEG_BANDS: [BandDefinition; 5] = [
    BandDefinition::new(Band::Delta, 0.5, 4.0),
    BandDefinition::new(Band::Theta, 4.0, 8.0),
    BandDefinition::new(Band::Alpha, 8.0, 12.0),
    BandDefinition::new(Band::Sigma, 12.0, 16.0),
    BandDefinition::new(Band::Beta, 16.0, 40.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub fs: f64,
    /// Butterworth prototype order per band.
    pub order: usize,
    pub bands: Vec<BandDefinition>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            fs: 128.0,
            order: 4,
            bands: EEG_BANDS.to_vec(),
        }
    }
}

impl PreprocessConfig {
    pub fn nyquist_hz(&self) -> f64 {
        self.fs / 2.0
    }

    pub fn validate(&self) -> Result<(), DspError> {
        check_order(self.order)?;
        for b in &self.bands {
            check_band(b.low_hz, b.high_hz, self.fs)?;
        }
        Ok(())
    }
}

fn check_order(order: usize) -> Result<(), DspError> {
    if order < 2 || order % 2 != 0 {
        return Err(DspError::InvalidOrder(order));
    }
    Ok(())
}

fn check_band(low_hz: f64, high_hz: f64, fs: f64) -> Result<(), DspError> {
    let reason = if !(fs > 0.0) {
        Some("sampling rate must be positive")
    } else if !(low_hz > 0.0) {
        Some("low edge must be positive")
    } else if !(low_hz < high_hz) {
        Some("low edge must be below high edge")
    } else if !(high_hz < fs / 2.0) {
        Some("high edge must be below Nyquist")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(DspError::InvalidBand {
            low_hz,
            high_hz,
            fs,
            reason,
        }),
        None => Ok(()),
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    pub const IDENTITY: BiquadSection = BiquadSection {
        b0: 1.0,
        b1: 0.0,
        b2: 0.0,
        a1: 0.0,
        a2: 0.0,
    };

    /// Gain at normalized angular frequency `omega` (radians per sample).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiquadCascade {
    pub sections: Vec<BiquadSection>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
    pub order: usize,
}

/// Design a Butterworth band-pass filter as a cascade of `order` biquads.
///
/// Edges are prewarped so the bilinear transform places the -3.01 dB points
/// exactly at `low_hz` and `high_hz`.
pub fn design_bandpass(
    low_hz: f64,
    high_hz: f64,
    fs: f64,
    order: usize,
) -> Result<BiquadCascade, DspError> {
    check_band(low_hz, high_hz, fs)?;
    check_order(order)?;

    let fs2 = 2.0 * fs;
    let w_lo = fs2 * (PI * low_hz / fs).tan();
    let w_hi = fs2 * (PI * high_hz / fs).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;

    let n = order as f64;
    let mut analog_poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
        let half = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        analog_poles.push(half + root);
        analog_poles.push(half - root);
    }

    // The `order` zeros at s = 0 map to z = 1, the `order` zeros at infinity
    // to z = -1. Gain follows from matching the bilinear substitution.
    let mut denom = Complex64::new(1.0, 0.0);
    let mut digital_poles = Vec::with_capacity(2 * order);
    for &s in &analog_poles {
        denom *= fs2 - s;
        digital_poles.push((fs2 + s) / (fs2 - s));
    }
    let gain = ((bw * fs2).powi(order as i32) / denom).re;

    let scale = 1e-12;
    let mut upper: Vec<Complex64> = digital_poles
        .into_iter()
        .filter(|p| p.im > scale)
        .collect();
    if upper.len() != order {
        return Err(DspError::UnstableDesign {
            section: upper.len(),
            radius: f64::NAN,
        });
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let per_section = gain.abs().powf(1.0 / n);
    let sections: Vec<BiquadSection> = upper
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let g = if i == 0 {
                per_section.copysign(gain)
            } else {
                per_section
            };
            BiquadSection {
                b0: g,
                b1: 0.0,
                b2: -g,
                a1: -2.0 * p.re,
                a2: p.norm_sqr(),
            }
        })
        .collect();

    for (i, s) in sections.iter().enumerate() {
        let radius = s.max_pole_radius();
        if !(radius < 1.0) {
            return Err(DspError::UnstableDesign { section: i, radius });
        }
    }
    Ok(BiquadCascade {
        sections,
        low_hz,
        high_hz,
        fs,
        order,
    })
}

/// Complex gain of the cascade at `f_hz`.
pub fn frequency_response(cascade: &BiquadCascade, f_hz: f64) -> Complex64 {
    let omega = 2.0 * PI * f_hz / cascade.fs;
    cascade
        .sections
        .iter()
        .map(|s| s.response(omega))
        .product()
}

/// Causal filtering, Direct Form II transposed, zero initial state.
pub fn apply_cascade(cascade: &BiquadCascade, signal: &[f64]) -> Result<Vec<f64>, DspError> {
    if signal.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let mut out = signal.to_vec();
    for s in &cascade.sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for x in out.iter_mut() {
            let y = s.b0 * *x + z1;
            z1 = s.b1 * *x - s.a1 * y + z2;
            z2 = s.b2 * *x - s.a2 * y;
            *x = y;
        }
    }
    if let Some(index) = out.iter().position(|v| !v.is_finite()) {
        return Err(DspError::NonFiniteOutput { index });
    }
    Ok(out)
}

/// Designed filters for every band of a [`PreprocessConfig`].
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub bands: Vec<(BandDefinition, BiquadCascade)>,
}

impl FilterBank {
    pub fn design(config: &PreprocessConfig) -> Result<Self, DspError> {
        config.validate()?;
        let bands = config
            .bands
            .iter()
            .map(|b| Ok((*b, design_bandpass(b.low_hz, b.high_hz, config.fs, config.order)?)))
            .collect::<Result<_, DspError>>()?;
        Ok(Self { bands })
    }

    pub fn decompose(&self, signal: &[f64]) -> Result<Vec<Vec<f64>>, DspError> {
        self.bands
            .iter()
            .map(|(_, c)| apply_cascade(c, signal))
            .collect()
    }
}

/// One filtered signal per configured band, in configuration order.
pub fn decompose_bands(
    signal: &[f64],
    config: &PreprocessConfig,
) -> Result<Vec<Vec<f64>>, DspError> {
    FilterBank::design(config)?.decompose(signal)
}

/// Samplewise sum of band signals.
pub fn recombine_bands(bands: &[Vec<f64>]) -> Result<Vec<f64>, DspError> {
    let Some(first) = bands.first() else {
        return Ok(Vec::new());
    };
    if bands.iter().any(|b| b.len() != first.len()) {
        return Err(DspError::LengthMismatch);
    }
    let mut out = first.clone();
    for b in &bands[1..] {
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
    }
    Ok(out)
}

const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ZScored {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the input.
    pub std: f64,
    /// Input had (numerically) zero variance; `values` are all zero.
    pub degenerate: bool,
}

pub fn zscore(signal: &[f64]) -> ZScored {
    let n = signal.len() as f64;
    if signal.len() < 2 {
        return ZScored {
            values: vec![0.0; signal.len()],
            mean: signal.first().copied().unwrap_or(0.0),
            std: 0.0,
            degenerate: true,
        };
    }
    let mut mean = signal.iter().sum::<f64>() / n;
    // Second pass corrects the rounding error of the first.
    mean += signal.iter().map(|x| x - mean).sum::<f64>() / n;
    let var = signal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return ZScored {
            values: vec![0.0; signal.len()],
            mean,
            std,
            degenerate: true,
        };
    }
    ZScored {
        values: signal.iter().map(|x| (x - mean) / std).collect(),
        mean,
        std,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub recording: EegRecording,
    pub degenerate: bool,
}

/// Filter into bands, recombine, z-score the whole recording.
pub fn preprocess_recording(
    recording: &EegRecording,
    config: &PreprocessConfig,
) -> Result<Preprocessed, DspError> {
    if recording.fs != config.fs {
        return Err(DspError::SampleRateMismatch {
            recording: recording.fs,
            config: config.fs,
        });
    }
    let bands = decompose_bands(&recording.samples, config)?;
    let z = zscore(&recombine_bands(&bands)?);
    Ok(Preprocessed {
        recording: EegRecording {
            samples: z.values,
            ..recording.clone()
        },
        degenerate: z.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(f: f64, fs: f64, seconds: f64) -> Vec<f64> {
        let n = (fs * seconds) as usize;
        (0..n)
            .map(|i| (2.0 * PI * f * i as f64 / fs).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn energy(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn bank() -> Vec<BiquadCascade> {
        EEG_BANDS
            .iter()
            .map(|b| design_bandpass(b.low_hz, b.high_hz, 128.0, 4).unwrap())
            .collect()
    }

    fn peak_gain(c: &BiquadCascade) -> f64 {
        let center = (c.low_hz * c.high_hz).sqrt();
        (0..=2000)
            .map(|i| c.low_hz + (c.high_hz - c.low_hz) * i as f64 / 2000.0)
            .chain([center])
            .map(|f| frequency_response(c, f).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn band_edges_are_half_power() {
        for c in bank() {
            let peak = peak_gain(&c);
            for f in [c.low_hz, c.high_hz] {
                let rel = frequency_response(&c, f).norm() / peak;
                assert!((rel - 0.7071).abs() < 0.01, "{}-{} at {f}: {rel}", c.low_hz, c.high_hz);
                assert!((0.70..=0.72).contains(&rel));
            }
        }
    }

    #[test]
    fn dc_is_rejected() {
        for c in bank() {
            assert!(frequency_response(&c, 0.0).norm() < 1e-3);
        }
    }

    #[test]
    fn alpha_center_is_in_passband() {
        let c = design_bandpass(8.0, 12.0, 128.0, 4).unwrap();
        let db = 20.0 * frequency_response(&c, 9.8).norm().log10();
        assert!(db.abs() < 1.0, "{db} dB");
    }

    #[test]
    fn delta_rejects_50_hz() {
        let c = design_bandpass(0.5, 4.0, 128.0, 4).unwrap();
        assert!(frequency_response(&c, 50.0).norm() < 1e-4);
    }

    #[test]
    fn passband_peak_is_unity() {
        for c in bank() {
            let center = 2.0 * (c.fs / PI)
                * ((PI * c.low_hz / c.fs).tan() * (PI * c.high_hz / c.fs).tan())
                    .sqrt()
                    .atan()
                / 2.0;
            let g = frequency_response(&c, center);
            assert!((g.norm() - 1.0).abs() < 1e-9, "{g}");
            // Zero phase at the center, so adjacent bands add coherently.
            assert!(g.re > 0.0 && g.im.abs() < 1e-6, "{g}");
        }
    }

    #[test]
    fn magnitude_is_monotone_outside_passband() {
        for c in bank() {
            let grid = |a: f64, b: f64| (0..=400).map(move |i| a + (b - a) * i as f64 / 400.0);
            let below: Vec<f64> = grid(0.0, c.low_hz)
                .map(|f| frequency_response(&c, f).norm())
                .collect();
            assert!(below.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            let above: Vec<f64> = grid(c.high_hz, c.fs / 2.0)
                .map(|f| frequency_response(&c, f).norm())
                .collect();
            assert!(above.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }

    #[test]
    fn every_section_is_stable() {
        for order in [2, 4, 6, 8] {
            for b in EEG_BANDS {
                let c = design_bandpass(b.low_hz, b.high_hz, 128.0, order).unwrap();
                assert_eq!(c.sections.len(), order);
                for s in &c.sections {
                    assert!(s.max_pole_radius() < 1.0);
                }
            }
        }
    }

    #[test]
    fn invalid_designs() {
        assert!(matches!(
            design_bandpass(8.0, 4.0, 128.0, 4),
            Err(DspError::InvalidBand { .. })
        ));
        assert!(matches!(
            design_bandpass(16.0, 64.0, 128.0, 4),
            Err(DspError::InvalidBand { .. })
        ));
        assert!(matches!(
            design_bandpass(0.0, 4.0, 128.0, 4),
            Err(DspError::InvalidBand { .. })
        ));
        assert_eq!(
            design_bandpass(1.0, 4.0, 128.0, 3),
            Err(DspError::InvalidOrder(3))
        );
    }

    #[test]
    fn identity_and_multiplicativity() {
        let id = BiquadCascade {
            sections: vec![BiquadSection::IDENTITY],
            low_hz: 1.0,
            high_hz: 2.0,
            fs: 128.0,
            order: 2,
        };
        for f in [0.0, 3.0, 64.0] {
            assert!((frequency_response(&id, f) - 1.0).norm() < 1e-15);
        }
        let c = design_bandpass(4.0, 8.0, 128.0, 2).unwrap();
        let single = BiquadCascade {
            sections: vec![c.sections[0]],
            ..c.clone()
        };
        let double = BiquadCascade {
            sections: vec![c.sections[0], c.sections[0]],
            ..c
        };
        for f in [1.0, 5.5, 20.0] {
            let s = frequency_response(&single, f);
            assert!((frequency_response(&double, f) - s * s).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let c = design_bandpass(8.0, 12.0, 128.0, 4).unwrap();
        assert!(apply_cascade(&c, &[0.0; 500]).unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(apply_cascade(&c, &[]), Err(DspError::EmptySignal));
    }

    #[test]
    fn sine_steady_state_matches_response() {
        let c = design_bandpass(8.0, 12.0, 128.0, 4).unwrap();
        let y = apply_cascade(&c, &sine(10.0, 128.0, 20.0)).unwrap();
        let steady = &y[2 * 128..];
        let amp = rms(steady) * 2f64.sqrt();
        let expected = frequency_response(&c, 10.0).norm();
        assert!((amp / expected - 1.0).abs() < 0.02, "{amp} vs {expected}");
    }

    #[test]
    fn nan_input_is_reported() {
        let c = design_bandpass(8.0, 12.0, 128.0, 4).unwrap();
        let mut x = vec![0.0; 10];
        x[3] = f64::NAN;
        assert_eq!(
            apply_cascade(&c, &x),
            Err(DspError::NonFiniteOutput { index: 3 })
        );
    }

    #[test]
    fn energy_lands_in_matching_band() {
        let config = PreprocessConfig::default();
        for (f, band) in [(10.0, 2usize), (2.0, 0usize)] {
            let bands = decompose_bands(&sine(f, 128.0, 60.0), &config).unwrap();
            assert_eq!(bands.len(), 5);
            let total: f64 = bands.iter().map(|b| energy(b)).sum();
            let ratio = energy(&bands[band]) / total;
            assert!(ratio >= 0.9, "{f} Hz: {ratio}");
        }
    }

    #[test]
    fn zero_signal_decomposes_to_zeros() {
        let bands = decompose_bands(&[0.0; 256], &PreprocessConfig::default()).unwrap();
        assert_eq!(bands.len(), 5);
        assert!(bands.iter().flatten().all(|&v| v == 0.0));
        assert!(recombine_bands(&bands).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mains_frequencies_rejected_after_recombination() {
        let config = PreprocessConfig::default();
        for f in [50.0, 60.0] {
            let x = sine(f, 128.0, 30.0);
            let y = recombine_bands(&decompose_bands(&x, &config).unwrap()).unwrap();
            let ratio = rms(&y[256..]) / rms(&x[256..]);
            assert!(ratio <= 0.1, "{f} Hz: {ratio}");
        }
    }

    #[test]
    fn recombine_length_mismatch() {
        assert_eq!(
            recombine_bands(&[vec![0.0; 3], vec![0.0; 4]]),
            Err(DspError::LengthMismatch)
        );
    }

    #[test]
    fn zscore_small_example() {
        let z = zscore(&[1.0, 2.0, 3.0]);
        let s = (2.0f64 / 3.0).sqrt();
        for (v, e) in z.values.iter().zip([-1.0 / s, 0.0, 1.0 / s]) {
            assert!((v - e).abs() < 1e-12);
        }
        assert!((z.values[2] - 1.2247).abs() < 1e-4);
        assert!(!z.degenerate);
    }

    #[test]
    fn zscore_constant_is_degenerate() {
        let z = zscore(&[4.2; 10]);
        assert!(z.degenerate);
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preprocess_rejects_mismatched_rate() {
        let rec = EegRecording {
            samples: vec![0.0; 10],
            fs: 256.0,
            channel_label: "C3-A2".into(),
            subject_id: "s".into(),
        };
        assert!(matches!(
            preprocess_recording(&rec, &PreprocessConfig::default()),
            Err(DspError::SampleRateMismatch { .. })
        ));
    }

    fn dft_mag(x: &[f64], f: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let ph = 2.0 * PI * f * i as f64 / fs;
            re += v * ph.cos();
            im -= v * ph.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn preprocess_suppresses_mains_contamination() {
        let n = 128 * 60;
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 128.0;
                20.0 * (2.0 * PI * 10.0 * t).sin() + 20.0 * (2.0 * PI * 50.0 * t).sin()
            })
            .collect();
        let rec = EegRecording {
            samples,
            fs: 128.0,
            channel_label: "C3-A2".into(),
            subject_id: "s".into(),
        };
        let out = preprocess_recording(&rec, &PreprocessConfig::default()).unwrap();
        let y = &out.recording.samples;
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(mean.abs() < 1e-6 && (sd - 1.0).abs() < 1e-6);
        let tail = &y[256..];
        let db = 20.0 * (dft_mag(tail, 50.0, 128.0) / dft_mag(tail, 10.0, 128.0)).log10();
        assert!(db <= -20.0, "{db} dB");
        let again = preprocess_recording(&rec, &PreprocessConfig::default()).unwrap();
        assert_eq!(
            out.recording.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            again.recording.samples.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn filtering_is_linear(
            x in proptest::collection::vec(-100.0f64..100.0, 64..256),
            y_seed in proptest::collection::vec(-100.0f64..100.0, 256),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let c = design_bandpass(4.0, 8.0, 128.0, 4).unwrap();
            let y = &y_seed[..x.len()];
            let mix: Vec<f64> = x.iter().zip(y).map(|(a, b)| alpha * a + beta * b).collect();
            let out_mix = apply_cascade(&c, &mix).unwrap();
            let ox = apply_cascade(&c, &x).unwrap();
            let oy = apply_cascade(&c, y).unwrap();
            let scale = out_mix.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for i in 0..x.len() {
                let lin = alpha * ox[i] + beta * oy[i];
                prop_assert!((out_mix[i] - lin).abs() <= 1e-9 * scale);
            }
        }

        #[test]
        fn zscore_moments(x in proptest::collection::vec(-1e4f64..1e4, 2..500)) {
            let z = zscore(&x);
            if !z.degenerate {
                let n = x.len() as f64;
                let mean = z.values.iter().sum::<f64>() / n;
                let sd = (z.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((sd - 1.0).abs() < 1e-9);
                let zz = zscore(&z.values);
                for (a, b) in zz.values.iter().zip(&z.values) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
        }
    }
}
