//! Continuous wavelet transform scalograms: the classifier's input
//! representation.
//!
//! The transform uses an analytic Morlet wavelet evaluated in the frequency
//! domain (`psi_hat(s*w) = exp(-(s*w - w0)^2 / 2)` for `w > 0`, zero
//! elsewhere, unit peak). Scales are log-spaced from the smallest
//! Nyquist-clean scale up to the full window, so row 0 holds the highest
//! pseudo-frequency and the last row the lowest. Pseudo-frequency of scale
//! `s` (seconds) is `f = w0 / (2*pi*s)`.

use crate::signal::{IqSignal, SignalClass};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

/// Minimum signal length accepted by [`cwt`].
pub const MIN_SIGNAL_LEN: usize = 64;

#[derive(Debug, Error)]
pub enum ScalogramError {
    #[error("signal too short: {0} samples, need at least {min}", min = MIN_SIGNAL_LEN)]
    SignalTooShort(usize),
    #[error("invalid CWT config: {0}")]
    BadConfig(String),
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("scalogram file corrupt: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Scale-axis spacing. Only logarithmic spacing is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleSpacing {
    #[default]
    Log,
}

/// Output magnitude mode. Only absolute value is defined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MagnitudeMode {
    #[default]
    Abs,
}

/// CWT parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwtConfig {
    /// Morlet center frequency w0. Must be >= 5 for admissibility.
    pub wavelet_center_freq: f64,
    pub num_scales: usize,
    #[serde(default)]
    pub scale_spacing: ScaleSpacing,
    #[serde(default)]
    pub magnitude: MagnitudeMode,
}

impl Default for CwtConfig {
    fn default() -> Self {
        CwtConfig {
            wavelet_center_freq: 6.0,
            num_scales: 64,
            scale_spacing: ScaleSpacing::Log,
            magnitude: MagnitudeMode::Abs,
        }
    }
}

impl CwtConfig {
    pub fn validate(&self) -> Result<(), ScalogramError> {
        if self.num_scales < 8 {
            return Err(ScalogramError::BadConfig(format!(
                "num_scales {} < 8",
                self.num_scales
            )));
        }
        if !(self.wavelet_center_freq >= 5.0) {
            return Err(ScalogramError::BadConfig(format!(
                "wavelet_center_freq {} < 5 violates admissibility",
                self.wavelet_center_freq
            )));
        }
        Ok(())
    }
}

/// CWT magnitude matrix: `num_scales` rows by `num_samples` columns,
/// row-major, row 0 at the smallest scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CwtMatrix {
    pub num_scales: usize,
    pub num_samples: usize,
    pub data: Vec<f64>,
    /// Scale of each row, in seconds.
    pub scales_s: Vec<f64>,
}

impl CwtMatrix {
    pub fn at(&self, scale_idx: usize, sample_idx: usize) -> f64 {
        self.data[scale_idx * self.num_samples + sample_idx]
    }

    /// Row index whose total energy is largest.
    pub fn argmax_row(&self) -> usize {
        (0..self.num_scales)
            .max_by(|&a, &b| {
                let ea: f64 = self.row(a).iter().map(|v| v * v).sum();
                let eb: f64 = self.row(b).iter().map(|v| v * v).sum();
                ea.total_cmp(&eb)
            })
            .unwrap_or(0)
    }

    pub fn row(&self, scale_idx: usize) -> &[f64] {
        &self.data[scale_idx * self.num_samples..(scale_idx + 1) * self.num_samples]
    }
}

/// Normalized H x W scalogram image in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalogram {
    pub pixels: Vec<f32>,
    pub height: usize,
    pub width: usize,
    pub source_id: String,
}

impl Scalogram {
    pub fn new(pixels: Vec<f32>, height: usize, width: usize) -> Scalogram {
        assert_eq!(pixels.len(), height * width);
        Scalogram {
            pixels,
            height,
            width,
            source_id: String::new(),
        }
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Scalogram {
        self.source_id = id.into();
        self
    }

    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }
}

/// Log-spaced scales in seconds, from the smallest scale whose wavelet
/// passband stays three sigma inside Nyquist up to the full window.
pub fn morlet_scales(
    num_scales: usize,
    num_samples: usize,
    sample_rate_hz: f64,
    wavelet_center_freq: f64,
) -> Vec<f64> {
    // At scale s (samples) the response peaks at w0/s rad/sample with
    // sigma 1/s; s >= (w0 + 3)/pi keeps the band below pi.
    let s_min = (wavelet_center_freq + 3.0) / std::f64::consts::PI / sample_rate_hz;
    let s_max = num_samples as f64 / sample_rate_hz;
    let (ln_min, ln_max) = (s_min.ln(), s_max.ln());
    (0..num_scales)
        .map(|i| {
            let t = if num_scales == 1 {
                0.5
            } else {
                i as f64 / (num_scales - 1) as f64
            };
            (ln_min + t * (ln_max - ln_min)).exp()
        })
        .collect()
}

/// Pseudo-frequency (Hz) of a Morlet scale given in seconds.
pub fn scale_to_frequency(scale_s: f64, wavelet_center_freq: f64) -> f64 {
    wavelet_center_freq / (2.0 * PI * scale_s)
}

/// Continuous wavelet transform of a real signal.
///
/// Each row is the magnitude of the correlation of the signal with the
/// analytic Morlet wavelet at that scale, computed via zero-padded FFT.
pub fn cwt(signal: &IqSignal, cfg: &CwtConfig) -> Result<CwtMatrix, ScalogramError> {
    cfg.validate()?;
    let n = signal.samples.len();
    if n < MIN_SIGNAL_LEN {
        return Err(ScalogramError::SignalTooShort(n));
    }
    let w0 = cfg.wavelet_center_freq;
    let scales_s = morlet_scales(cfg.num_scales, n, signal.sample_rate_hz, w0);

    // Pad past the largest wavelet's time support (the envelope at the
    // full-window scale reaches ~4.3*s at the 1e-4 level) so the circular
    // FFT convolution behaves as linear convolution with zero extension.
    let max_scale_samples = scales_s.last().copied().unwrap_or(0.0) * signal.sample_rate_hz;
    let nfft = (n + (9.0 * max_scale_samples).ceil() as usize).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let ifft = planner.plan_fft_inverse(nfft);

    let mut spectrum: Vec<Complex64> = signal
        .samples
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    fft.process(&mut spectrum);

    let mut data = vec![0.0f64; cfg.num_scales * n];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (row, &scale_s) in scales_s.iter().enumerate() {
        let scale_samples = scale_s * signal.sample_rate_hz;
        // Positive frequencies only: the analytic wavelet kills w <= 0.
        buf.fill(Complex64::new(0.0, 0.0));
        for k in 1..nfft / 2 {
            let w = 2.0 * PI * k as f64 / nfft as f64;
            let arg = scale_samples * w - w0;
            buf[k] = spectrum[k] * (-0.5 * arg * arg).exp();
        }
        ifft.process(&mut buf);
        let inv_n = 1.0 / nfft as f64;
        for (i, v) in buf[..n].iter().enumerate() {
            data[row * n + i] = (v * inv_n).norm();
        }
    }

    Ok(CwtMatrix {
        num_scales: cfg.num_scales,
        num_samples: n,
        data,
        scales_s,
    })
}

/// Bilinear-resize a CWT matrix to H x W and min-max normalize to [0, 1].
/// A constant matrix maps to all 0.5.
pub fn to_image(matrix: &CwtMatrix, height: usize, width: usize) -> Result<Scalogram, ScalogramError> {
    if matrix.num_scales == 0 || matrix.num_samples == 0 || matrix.data.is_empty() {
        return Err(ScalogramError::EmptyMatrix);
    }
    if height == 0 || width == 0 {
        return Err(ScalogramError::BadConfig("image dimensions must be nonzero".into()));
    }

    let (src_h, src_w) = (matrix.num_scales, matrix.num_samples);
    let mut resized = vec![0.0f64; height * width];
    for r in 0..height {
        // Pixel-center mapping keeps same-size resize an exact identity.
        let sy = ((r as f64 + 0.5) * src_h as f64 / height as f64 - 0.5)
            .clamp(0.0, (src_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = sy - y0 as f64;
        for c in 0..width {
            let sx = ((c as f64 + 0.5) * src_w as f64 / width as f64 - 0.5)
                .clamp(0.0, (src_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - x0 as f64;
            let v = matrix.at(y0, x0) * (1.0 - fy) * (1.0 - fx)
                + matrix.at(y0, x1) * (1.0 - fy) * fx
                + matrix.at(y1, x0) * fy * (1.0 - fx)
                + matrix.at(y1, x1) * fy * fx;
            resized[r * width + c] = v;
        }
    }

    let min = resized.iter().copied().fold(f64::INFINITY, f64::min);
    let max = resized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if max > min {
        let span = max - min;
        resized
            .iter()
            .map(|&v| (((v - min) / span).clamp(0.0, 1.0)) as f32)
            .collect()
    } else {
        vec![0.5f32; height * width]
    };
    Ok(Scalogram::new(pixels, height, width))
}

/// Full pipeline: signal -> CWT -> normalized H x W image.
pub fn scalogram_for_signal(
    signal: &IqSignal,
    cfg: &CwtConfig,
    height: usize,
    width: usize,
    source_id: impl Into<String>,
) -> Result<Scalogram, ScalogramError> {
    let matrix = cwt(signal, cfg)?;
    Ok(to_image(&matrix, height, width)?.with_source_id(source_id))
}

/// Sidecar metadata stored next to each scalogram file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalogramSidecar {
    pub id: String,
    pub class: SignalClass,
    #[serde(rename = "H")]
    pub height: usize,
    #[serde(rename = "W")]
    pub width: usize,
}

/// Write `<base>.f32` (little-endian float32, row-major) and `<base>.json`.
pub fn write_scalogram_file(
    base: &Path,
    scalogram: &Scalogram,
    class: SignalClass,
) -> Result<(), ScalogramError> {
    let mut bytes = Vec::with_capacity(scalogram.pixels.len() * 4);
    for px in &scalogram.pixels {
        bytes.extend_from_slice(&px.to_le_bytes());
    }
    std::fs::write(base.with_extension("f32"), bytes)?;
    let sidecar = ScalogramSidecar {
        id: scalogram.source_id.clone(),
        class,
        height: scalogram.height,
        width: scalogram.width,
    };
    std::fs::write(
        base.with_extension("json"),
        serde_json::to_vec_pretty(&sidecar)?,
    )?;
    Ok(())
}

/// Load a scalogram written by [`write_scalogram_file`].
pub fn read_scalogram_file(base: &Path) -> Result<(Scalogram, SignalClass), ScalogramError> {
    let sidecar: ScalogramSidecar =
        serde_json::from_slice(&std::fs::read(base.with_extension("json"))?)?;
    let bytes = std::fs::read(base.with_extension("f32"))?;
    let expected = sidecar.height * sidecar.width * 4;
    if bytes.len() != expected {
        return Err(ScalogramError::CorruptFile(format!(
            "{}: {} bytes, expected {}",
            base.display(),
            bytes.len(),
            expected
        )));
    }
    let pixels: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if pixels.iter().any(|p| !p.is_finite()) {
        return Err(ScalogramError::CorruptFile(format!(
            "{}: non-finite pixel",
            base.display()
        )));
    }
    Ok((
        Scalogram::new(pixels, sidecar.height, sidecar.width).with_source_id(sidecar.id),
        sidecar.class,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{gen_cwi, CwiConfig};

    fn tone(freq_hz: f64, fs: f64, n: usize) -> IqSignal {
        gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz }, fs, n as f64 / fs).unwrap()
    }

    /// Independent oracle: direct time-domain correlation with the sampled
    /// analytic Morlet wavelet, normalized to unit peak frequency response.
    fn cwt_direct(signal: &IqSignal, scales_s: &[f64], w0: f64) -> Vec<Vec<f64>> {
        let n = signal.samples.len();
        let mut out = Vec::with_capacity(scales_s.len());
        for &scale_s in scales_s {
            let s = scale_s * signal.sample_rate_hz;
            let half = (5.0 * s).ceil() as isize;
            let norm = 1.0 / (s * (2.0 * PI).sqrt());
            let mut row = Vec::with_capacity(n);
            for t in 0..n as isize {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in -half..=half {
                    let idx = t + m;
                    if idx < 0 || idx >= n as isize {
                        continue;
                    }
                    let u = m as f64 / s;
                    let psi = Complex64::new(0.0, w0 * u).exp() * (-0.5 * u * u).exp();
                    acc += signal.samples[idx as usize] * psi.conj();
                }
                row.push((acc * norm).norm());
            }
            out.push(row);
        }
        out
    }

    #[test]
    fn zero_signal_gives_zero_matrix() {
        let sig = IqSignal {
            samples: vec![0.0; 256],
            sample_rate_hz: 1000.0,
            label: SignalClass::Soi,
        };
        let m = cwt(&sig, &CwtConfig::default()).unwrap();
        assert!(m.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_short_signals_and_bad_configs() {
        let sig = IqSignal {
            samples: vec![1.0; 32],
            sample_rate_hz: 1000.0,
            label: SignalClass::Soi,
        };
        assert!(matches!(
            cwt(&sig, &CwtConfig::default()),
            Err(ScalogramError::SignalTooShort(32))
        ));
        let long = IqSignal {
            samples: vec![1.0; 128],
            sample_rate_hz: 1000.0,
            label: SignalClass::Soi,
        };
        let bad_scales = CwtConfig { num_scales: 4, ..CwtConfig::default() };
        assert!(cwt(&long, &bad_scales).is_err());
        let bad_w0 = CwtConfig { wavelet_center_freq: 3.0, ..CwtConfig::default() };
        assert!(cwt(&long, &bad_w0).is_err());
    }

    #[test]
    fn pure_tone_peaks_at_matching_scale() {
        let cfg = CwtConfig::default();
        let fs = 1000.0;
        let n = 1024;
        for freq in [50.0, 120.0, 230.0] {
            let sig = tone(freq, fs, n);
            let m = cwt(&sig, &cfg).unwrap();
            let peak_row = m.argmax_row();
            // Expected: the scale whose pseudo-frequency is nearest to the tone.
            let expected = m
                .scales_s
                .iter()
                .enumerate()
                .min_by(|(_, &a), (_, &b)| {
                    let fa = (scale_to_frequency(a, cfg.wavelet_center_freq) - freq).abs();
                    let fb = (scale_to_frequency(b, cfg.wavelet_center_freq) - freq).abs();
                    fa.total_cmp(&fb)
                })
                .unwrap()
                .0;
            assert!(
                peak_row.abs_diff(expected) <= 1,
                "freq {freq}: argmax row {peak_row}, expected {expected}"
            );
        }
    }

    #[test]
    fn doubling_amplitude_doubles_matrix() {
        let sig = tone(80.0, 1000.0, 256);
        let doubled = IqSignal {
            samples: sig.samples.iter().map(|s| 2.0 * s).collect(),
            ..sig.clone()
        };
        let cfg = CwtConfig::default();
        let m1 = cwt(&sig, &cfg).unwrap();
        let m2 = cwt(&doubled, &cfg).unwrap();
        for (a, b) in m1.data.iter().zip(&m2.data) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-30));
        }
    }

    #[test]
    fn fft_cwt_matches_direct_convolution_oracle() {
        let sig = tone(100.0, 1000.0, 128);
        let cfg = CwtConfig { num_scales: 8, ..CwtConfig::default() };
        let m = cwt(&sig, &cfg).unwrap();
        let direct = cwt_direct(&sig, &m.scales_s, cfg.wavelet_center_freq);
        let peak = m.data.iter().copied().fold(0.0f64, f64::max);
        for (row_idx, row) in direct.iter().enumerate() {
            for (col, &expected) in row.iter().enumerate() {
                let got = m.at(row_idx, col);
                assert!(
                    (got - expected).abs() <= 2e-3 * peak,
                    "row {row_idx} col {col}: fft {got} vs direct {expected}"
                );
            }
        }
    }

    #[test]
    fn frequency_ordering_is_monotone_in_scale() {
        let cfg = CwtConfig::default();
        let fs = 1000.0;
        let rows: Vec<usize> = [40.0, 90.0, 180.0]
            .iter()
            .map(|&f| cwt(&tone(f, fs, 1024), &cfg).unwrap().argmax_row())
            .collect();
        // Row 0 is the smallest scale (highest frequency): lower tones must
        // land strictly on the larger-scale side.
        assert!(rows[0] > rows[1] && rows[1] > rows[2], "rows {rows:?}");
    }

    #[test]
    fn to_image_constant_matrix_maps_to_half() {
        let m = CwtMatrix {
            num_scales: 10,
            num_samples: 20,
            data: vec![3.5; 200],
            scales_s: vec![1.0; 10],
        };
        let img = to_image(&m, 8, 8).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn to_image_is_identity_for_normalized_same_size_input() {
        let mut data = vec![0.0f64; 64 * 64];
        for (i, v) in data.iter_mut().enumerate() {
            *v = (i % 97) as f64 / 96.0;
        }
        // Ensure the full [0,1] range is present.
        data[0] = 0.0;
        data[1] = 1.0;
        let m = CwtMatrix {
            num_scales: 64,
            num_samples: 64,
            data: data.clone(),
            scales_s: vec![1.0; 64],
        };
        let img = to_image(&m, 64, 64).unwrap();
        for (px, src) in img.pixels.iter().zip(&data) {
            assert!((*px as f64 - src).abs() < 1e-6);
        }
    }

    #[test]
    fn to_image_output_spans_unit_interval() {
        let sig = tone(100.0, 1000.0, 256);
        let m = cwt(&sig, &CwtConfig::default()).unwrap();
        let img = to_image(&m, 64, 64).unwrap();
        let min = img.pixels.iter().copied().fold(f32::INFINITY, f32::min);
        let max = img.pixels.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(min, 0.0);
        assert_eq!(max, 1.0);
        assert!(img.pixels.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let sig = tone(120.0, 1000.0, 512);
        let a = scalogram_for_signal(&sig, &CwtConfig::default(), 64, 64, "x").unwrap();
        let b = scalogram_for_signal(&sig, &CwtConfig::default(), 64, 64, "x").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scalogram_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sig = tone(75.0, 1000.0, 256);
        let img = scalogram_for_signal(&sig, &CwtConfig::default(), 64, 64, "rt-1").unwrap();
        let base = dir.path().join("rt-1");
        write_scalogram_file(&base, &img, SignalClass::Cwi).unwrap();
        let (loaded, class) = read_scalogram_file(&base).unwrap();
        assert_eq!(loaded, img);
        assert_eq!(class, SignalClass::Cwi);
    }
}
