//! Waveform synthesis: QAM-modulated signals of interest, chirp and
//! continuous-wave interference, AWGN, and mixing.
//!
//! All generators are pure functions of their configuration and seed:
//! identical inputs give bit-identical outputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signal classes the interference classifier distinguishes.
///
/// The synthetic dataset uses only `Soi`, `Ci` and `Cwi`; `Mcwi` appears
/// only when ingesting the external RFI image dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalClass {
    #[serde(rename = "SOI")]
    Soi,
    #[serde(rename = "CI")]
    Ci,
    #[serde(rename = "CWI")]
    Cwi,
    #[serde(rename = "MCWI")]
    Mcwi,
}

impl SignalClass {
    /// Canonical label string, as used in manifests and SDL metadata.
    pub fn label(&self) -> &'static str {
        match self {
            SignalClass::Soi => "SOI",
            SignalClass::Ci => "CI",
            SignalClass::Cwi => "CWI",
            SignalClass::Mcwi => "MCWI",
        }
    }

    /// Parse a canonical label string.
    pub fn from_label(s: &str) -> Option<SignalClass> {
        match s {
            "SOI" => Some(SignalClass::Soi),
            "CI" => Some(SignalClass::Ci),
            "CWI" => Some(SignalClass::Cwi),
            "MCWI" => Some(SignalClass::Mcwi),
            _ => None,
        }
    }

    /// The three classes of the synthetic dataset.
    pub const SYNTHETIC: [SignalClass; 3] = [SignalClass::Soi, SignalClass::Ci, SignalClass::Cwi];

    /// All four classes, for RFI-dataset ingestion.
    pub const ALL: [SignalClass; 4] = [
        SignalClass::Soi,
        SignalClass::Ci,
        SignalClass::Cwi,
        SignalClass::Mcwi,
    ];
}

impl std::fmt::Display for SignalClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("unsupported QAM order {0}: must be a power of two >= 4")]
    BadQamOrder(usize),
    #[error("symbol index {index} out of range for QAM order {order}")]
    SymbolOutOfRange { index: usize, order: usize },
    #[error("invalid waveform config: {0}")]
    BadConfig(String),
    #[error("Nyquist violation: sample rate {sample_rate_hz} Hz cannot represent {freq_hz} Hz")]
    Nyquist { sample_rate_hz: f64, freq_hz: f64 },
    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
}

/// Configuration for one signal-of-interest waveform.
///
/// The testbed runs a frequency-scaled model of the C-band plan: the
/// default carrier grid is 3.4-3.6 MHz (1/1000 of the real band) with
/// `sample_rate_hz = 10 * carrier_freq_hz`, preserving all ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformConfig {
    pub carrier_freq_hz: f64,
    pub sample_rate_hz: f64,
    pub qam_order: usize,
    pub duration_s: f64,
    pub snr_db: f64,
    #[serde(default = "default_samples_per_symbol")]
    pub samples_per_symbol: usize,
    pub seed: u64,
}

fn default_samples_per_symbol() -> usize {
    16
}

impl WaveformConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.carrier_freq_hz > 0.0) {
            return Err(SignalError::BadConfig("carrier_freq_hz must be > 0".into()));
        }
        if self.sample_rate_hz < 2.0 * self.carrier_freq_hz {
            return Err(SignalError::BadConfig(format!(
                "sample_rate_hz {} < 2 * carrier_freq_hz {}",
                self.sample_rate_hz, self.carrier_freq_hz
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(SignalError::BadConfig("duration_s must be > 0".into()));
        }
        if self.samples_per_symbol == 0 {
            return Err(SignalError::BadConfig("samples_per_symbol must be >= 1".into()));
        }
        check_qam_order(self.qam_order)?;
        Ok(())
    }

    /// Number of whole symbols covered by `duration_s`.
    pub fn num_symbols(&self) -> usize {
        let n = (self.duration_s * self.sample_rate_hz).round() as usize;
        (n / self.samples_per_symbol).max(1)
    }
}

/// Linear chirp interference parameters. `f_start == f_end` degenerates
/// to a pure tone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub amplitude: f64,
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub duration_s: f64,
}

impl ChirpConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.amplitude > 0.0) {
            return Err(SignalError::BadConfig("chirp amplitude must be > 0".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(SignalError::BadConfig("chirp duration_s must be > 0".into()));
        }
        Ok(())
    }
}

/// Continuous-wave interference parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwiConfig {
    pub amplitude: f64,
    pub freq_hz: f64,
}

impl CwiConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.amplitude > 0.0) {
            return Err(SignalError::BadConfig("CWI amplitude must be > 0".into()));
        }
        if !(self.freq_hz > 0.0) {
            return Err(SignalError::BadConfig("CWI freq_hz must be > 0".into()));
        }
        Ok(())
    }
}

/// A sampled real waveform with its sample rate and true class label.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub label: SignalClass,
}

impl IqSignal {
    /// Mean squared sample value.
    pub fn power(&self) -> f64 {
        signal_power(&self.samples)
    }
}

/// Mean squared value of a sample slice (0.0 for an empty slice).
pub fn signal_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64
}

fn check_qam_order(order: usize) -> Result<(), SignalError> {
    if order >= 4 && order.is_power_of_two() {
        Ok(())
    } else {
        Err(SignalError::BadQamOrder(order))
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 1 {
        g >>= 1;
        b ^= g;
    }
    b
}

/// Map symbol indices onto a unit-average-power rectangular Gray-mapped
/// QAM constellation.
///
/// For `M = 2^m` the high `ceil(m/2)` index bits select the in-phase level
/// and the low `floor(m/2)` bits the quadrature level; each bit group is
/// Gray-decoded to a level `l` with amplitude `(2l - (L-1)) * d`. The half
/// distance `d = sqrt(3 / (L_i^2 + L_q^2 - 2))` normalizes the average
/// constellation power to exactly 1. Even `m` gives square QAM, odd `m`
/// (32, 128) a rectangular grid.
pub fn qam_modulate(symbol_indices: &[usize], order: usize) -> Result<Vec<Complex64>, SignalError> {
    check_qam_order(order)?;
    let m = order.trailing_zeros() as usize;
    let i_bits = m.div_ceil(2);
    let q_bits = m / 2;
    let li = 1usize << i_bits;
    let lq = 1usize << q_bits;
    let d = (3.0 / ((li * li + lq * lq - 2) as f64)).sqrt();

    symbol_indices
        .iter()
        .map(|&idx| {
            if idx >= order {
                return Err(SignalError::SymbolOutOfRange { index: idx, order });
            }
            let i_level = gray_decode(idx >> q_bits) as f64;
            let q_level = gray_decode(idx & (lq - 1)) as f64;
            Ok(Complex64::new(
                (2.0 * i_level - (li as f64 - 1.0)) * d,
                (2.0 * q_level - (lq as f64 - 1.0)) * d,
            ))
        })
        .collect()
}

/// Generate a signal of interest: the QAM-modulated symbol stream mixed
/// onto the carrier, keeping the real part.
///
/// `samples[n] = Re(s_mod[n] * exp(i*2*pi*f_c*t_n))`, with each modulated
/// symbol held for `samples_per_symbol` samples.
pub fn gen_soi(cfg: &WaveformConfig, symbols: &[usize]) -> Result<IqSignal, SignalError> {
    cfg.validate()?;
    let constellation = qam_modulate(symbols, cfg.qam_order)?;
    let n = symbols.len() * cfg.samples_per_symbol;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.sample_rate_hz;
        let s = constellation[i / cfg.samples_per_symbol];
        let phase = 2.0 * std::f64::consts::PI * cfg.carrier_freq_hz * t;
        samples.push((s * Complex64::new(0.0, phase).exp()).re);
    }
    Ok(IqSignal {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
        label: SignalClass::Soi,
    })
}

/// Generate a linear chirp: `A * sin(2*pi*t*(f_start + 0.5*k*t))` with
/// sweep rate `k = (f_end - f_start) / duration`.
pub fn gen_chirp(cfg: &ChirpConfig, sample_rate_hz: f64) -> Result<IqSignal, SignalError> {
    cfg.validate()?;
    let f_max = cfg.f_start_hz.max(cfg.f_end_hz);
    if sample_rate_hz <= 2.0 * f_max {
        return Err(SignalError::Nyquist {
            sample_rate_hz,
            freq_hz: f_max,
        });
    }
    let k = (cfg.f_end_hz - cfg.f_start_hz) / cfg.duration_s;
    let n = (cfg.duration_s * sample_rate_hz).round().max(1.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            cfg.amplitude * (2.0 * std::f64::consts::PI * t * (cfg.f_start_hz + 0.5 * k * t)).sin()
        })
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz,
        label: SignalClass::Ci,
    })
}

/// Generate continuous-wave interference: `A * sin(2*pi*f_cwi*t)`.
pub fn gen_cwi(
    cfg: &CwiConfig,
    sample_rate_hz: f64,
    duration_s: f64,
) -> Result<IqSignal, SignalError> {
    cfg.validate()?;
    if sample_rate_hz <= 2.0 * cfg.freq_hz {
        return Err(SignalError::Nyquist {
            sample_rate_hz,
            freq_hz: cfg.freq_hz,
        });
    }
    if !(duration_s > 0.0) {
        return Err(SignalError::BadConfig("duration_s must be > 0".into()));
    }
    let n = (duration_s * sample_rate_hz).round().max(1.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate_hz;
            cfg.amplitude * (2.0 * std::f64::consts::PI * cfg.freq_hz * t).sin()
        })
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz,
        label: SignalClass::Cwi,
    })
}

/// Add zero-mean white Gaussian noise at the given SNR, deterministically
/// per seed. `snr_db = f64::INFINITY` is the no-noise sentinel and returns
/// the input unchanged.
pub fn add_awgn(sig: &IqSignal, snr_db: f64, seed: u64) -> IqSignal {
    if snr_db.is_infinite() && snr_db > 0.0 {
        return sig.clone();
    }
    let p_signal = sig.power();
    if p_signal == 0.0 {
        return sig.clone();
    }
    let p_noise = p_signal / 10f64.powf(snr_db / 10.0);
    let normal = Normal::new(0.0, p_noise.sqrt()).expect("noise std is finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = sig
        .samples
        .iter()
        .map(|&s| s + normal.sample(&mut rng))
        .collect();
    IqSignal {
        samples,
        sample_rate_hz: sig.sample_rate_hz,
        label: sig.label,
    }
}

/// Elementwise sum of a signal of interest and an interference signal.
/// The result carries the interference label (the class to detect).
pub fn mix(soi: &IqSignal, interference: &IqSignal) -> Result<IqSignal, SignalError> {
    if soi.samples.len() != interference.samples.len() {
        return Err(SignalError::LengthMismatch(
            soi.samples.len(),
            interference.samples.len(),
        ));
    }
    if soi.sample_rate_hz != interference.sample_rate_hz {
        return Err(SignalError::RateMismatch(
            soi.sample_rate_hz,
            interference.sample_rate_hz,
        ));
    }
    let samples = soi
        .samples
        .iter()
        .zip(&interference.samples)
        .map(|(a, b)| a + b)
        .collect();
    Ok(IqSignal {
        samples,
        sample_rate_hz: soi.sample_rate_hz,
        label: interference.label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn test_waveform_config() -> WaveformConfig {
        WaveformConfig {
            carrier_freq_hz: 3.5e6,
            sample_rate_hz: 35e6,
            qam_order: 4,
            duration_s: 2048.0 / 35e6,
            snr_db: 30.0,
            samples_per_symbol: 16,
            seed: 7,
        }
    }

    #[test]
    fn qam4_constellation_matches_documented_gray_map() {
        let points = qam_modulate(&[0, 1, 2, 3], 4).unwrap();
        let expected = [
            Complex64::new(-SQRT_HALF, -SQRT_HALF),
            Complex64::new(-SQRT_HALF, SQRT_HALF),
            Complex64::new(SQRT_HALF, -SQRT_HALF),
            Complex64::new(SQRT_HALF, SQRT_HALF),
        ];
        for (p, e) in points.iter().zip(expected) {
            assert!((p - e).norm() < 1e-12, "got {p}, expected {e}");
        }
        // Every point lies in {(+-1 +- i)/sqrt(2)} and has unit power.
        for p in &points {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn qam_all_orders_have_unit_average_power() {
        for order in [4usize, 16, 32, 64, 128, 256] {
            let indices: Vec<usize> = (0..order).collect();
            let points = qam_modulate(&indices, order).unwrap();
            let mean_power: f64 =
                points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!(
                (mean_power - 1.0).abs() < 1e-9,
                "order {order}: mean power {mean_power}"
            );
        }
    }

    #[test]
    fn qam_gray_map_adjacent_levels_differ_in_one_bit() {
        // Walk each axis of 16-QAM: adjacent I (or Q) levels must come from
        // bit groups with Hamming distance 1.
        let indices: Vec<usize> = (0..16).collect();
        let points = qam_modulate(&indices, 16).unwrap();
        for a in 0..16usize {
            for b in 0..16usize {
                let dx = (points[a].re - points[b].re).abs();
                let dy = (points[a].im - points[b].im).abs();
                let step = 2.0 * (3.0 / 30.0f64).sqrt();
                let adjacent = (dx - step).abs() < 1e-9 && dy < 1e-9
                    || (dy - step).abs() < 1e-9 && dx < 1e-9;
                if adjacent {
                    assert_eq!((a ^ b).count_ones(), 1, "indices {a} and {b}");
                }
            }
        }
    }

    #[test]
    fn qam_rejects_bad_orders_and_indices() {
        assert!(matches!(qam_modulate(&[0], 3), Err(SignalError::BadQamOrder(3))));
        assert!(matches!(qam_modulate(&[0], 2), Err(SignalError::BadQamOrder(2))));
        assert!(matches!(
            qam_modulate(&[4], 4),
            Err(SignalError::SymbolOutOfRange { index: 4, order: 4 })
        ));
    }

    #[test]
    fn soi_with_constant_symbol_is_scaled_carrier() {
        let cfg = test_waveform_config();
        let symbols = vec![0usize; 8];
        let sig = gen_soi(&cfg, &symbols).unwrap();
        assert_eq!(sig.label, SignalClass::Soi);
        assert_eq!(sig.samples.len(), 8 * cfg.samples_per_symbol);
        let c0 = qam_modulate(&[0], 4).unwrap()[0];
        for (i, &s) in sig.samples.iter().enumerate() {
            let t = i as f64 / cfg.sample_rate_hz;
            let phase = 2.0 * std::f64::consts::PI * cfg.carrier_freq_hz * t;
            let expected = (c0 * Complex64::new(0.0, phase).exp()).re;
            assert!((s - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn soi_first_sample_equals_re_of_first_symbol() {
        let cfg = test_waveform_config();
        let sig = gen_soi(&cfg, &[2, 1, 3]).unwrap();
        let c = qam_modulate(&[2], 4).unwrap()[0];
        assert!((sig.samples[0] - c.re).abs() < 1e-15);
    }

    #[test]
    fn soi_energy_bounded_by_modulated_energy() {
        let cfg = test_waveform_config();
        let symbols: Vec<usize> = (0..64).map(|i| i % 4).collect();
        let sig = gen_soi(&cfg, &symbols).unwrap();
        let constellation = qam_modulate(&symbols, 4).unwrap();
        let energy_out: f64 = sig.samples.iter().map(|s| s * s).sum();
        let energy_mod: f64 = (0..sig.samples.len())
            .map(|i| constellation[i / cfg.samples_per_symbol].norm_sqr())
            .sum();
        assert!(energy_out <= energy_mod + 1e-9);
    }

    #[test]
    fn chirp_starts_at_zero() {
        let cfg = ChirpConfig {
            amplitude: 2.0,
            f_start_hz: 1e3,
            f_end_hz: 4e3,
            duration_s: 0.05,
        };
        let sig = gen_chirp(&cfg, 48e3).unwrap();
        assert_eq!(sig.samples[0], 0.0);
        assert_eq!(sig.label, SignalClass::Ci);
    }

    #[test]
    fn degenerate_chirp_equals_cwi() {
        let chirp = gen_chirp(
            &ChirpConfig {
                amplitude: 1.5,
                f_start_hz: 2e3,
                f_end_hz: 2e3,
                duration_s: 0.02,
            },
            48e3,
        )
        .unwrap();
        let cwi = gen_cwi(
            &CwiConfig {
                amplitude: 1.5,
                freq_hz: 2e3,
            },
            48e3,
            0.02,
        )
        .unwrap();
        for (a, b) in chirp.samples.iter().zip(&cwi.samples) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn chirp_instantaneous_frequency_reaches_f_end() {
        // Independent phase oracle: phi(t) = 2*pi*t*(f0 + 0.5*k*t) written
        // out in the test, finite-differenced at t = T. The derivative must
        // land on f_end within one 1/T bin, and the generated samples must
        // equal A*sin(phi(t_n)).
        let (f0, f1, t_total, fs) = (1e3f64, 6e3f64, 0.05f64, 48e3f64);
        let k = (f1 - f0) / t_total;
        let phi = |t: f64| 2.0 * std::f64::consts::PI * t * (f0 + 0.5 * k * t);

        let h = 1e-7;
        let f_inst = (phi(t_total + h) - phi(t_total - h)) / (2.0 * h)
            / (2.0 * std::f64::consts::PI);
        assert!(
            (f_inst - f1).abs() <= 1.0 / t_total,
            "instantaneous frequency {f_inst} vs f_end {f1}"
        );

        let cfg = ChirpConfig {
            amplitude: 1.0,
            f_start_hz: f0,
            f_end_hz: f1,
            duration_s: t_total,
        };
        let sig = gen_chirp(&cfg, fs).unwrap();
        for (i, &s) in sig.samples.iter().enumerate() {
            let t = i as f64 / fs;
            assert!((s - phi(t).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn chirp_rejects_nyquist_violation() {
        let cfg = ChirpConfig {
            amplitude: 1.0,
            f_start_hz: 1e3,
            f_end_hz: 30e3,
            duration_s: 0.01,
        };
        assert!(matches!(gen_chirp(&cfg, 48e3), Err(SignalError::Nyquist { .. })));
    }

    #[test]
    fn cwi_peaks_at_quarter_period_and_has_sine_rms() {
        let cfg = CwiConfig {
            amplitude: 3.0,
            freq_hz: 1e3,
        };
        // 0.1 s at 48 kHz = exactly 100 periods of 48 samples.
        let sig = gen_cwi(&cfg, 48e3, 0.1).unwrap();
        assert_eq!(sig.label, SignalClass::Cwi);
        // f*t = 0.25 at sample 12.
        assert!((sig.samples[12] - 3.0).abs() < 1e-9);
        let rms = sig.power().sqrt();
        assert!((rms - 3.0 * SQRT_HALF).abs() < 1e-6);
    }

    #[test]
    fn cwi_fft_peak_is_at_configured_frequency() {
        let cfg = CwiConfig {
            amplitude: 1.0,
            freq_hz: 1500.0,
        };
        let fs = 48e3;
        let sig = gen_cwi(&cfg, fs, 4096.0 / fs).unwrap();
        let mut buf: Vec<Complex64> = sig
            .samples
            .iter()
            .map(|&s| Complex64::new(s, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let half = buf.len() / 2;
        let peak_bin = (0..half)
            .max_by(|&a, &b| buf[a].norm().total_cmp(&buf[b].norm()))
            .unwrap();
        let expected_bin = (cfg.freq_hz / fs * buf.len() as f64).round() as usize;
        assert!(
            peak_bin.abs_diff(expected_bin) <= 1,
            "peak bin {peak_bin}, expected {expected_bin}"
        );
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let sig = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 48e3, 0.01).unwrap();
        let noisy = add_awgn(&sig, f64::INFINITY, 1);
        assert_eq!(sig, noisy);
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let sig = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 48e3, 0.01).unwrap();
        let a = add_awgn(&sig, 10.0, 42);
        let b = add_awgn(&sig, 10.0, 42);
        assert_eq!(a, b);
        let c = add_awgn(&sig, 10.0, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn awgn_hits_target_snr_on_large_samples() {
        // Sample-statistics oracle: measured SNR within 0.5 dB of target for
        // at least 19 of 20 seeds at 1e5 samples.
        let sig = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 1e6, 0.1).unwrap();
        assert_eq!(sig.samples.len(), 100_000);
        let p_signal = sig.power();
        let mut within = 0;
        for seed in 0..20u64 {
            let noisy = add_awgn(&sig, 10.0, seed);
            let p_noise: f64 = noisy
                .samples
                .iter()
                .zip(&sig.samples)
                .map(|(n, s)| (n - s) * (n - s))
                .sum::<f64>()
                / sig.samples.len() as f64;
            let measured_db = 10.0 * (p_signal / p_noise).log10();
            if (measured_db - 10.0).abs() <= 0.5 {
                within += 1;
            }
        }
        assert!(within >= 19, "only {within}/20 seeds within 0.5 dB");
    }

    #[test]
    fn mix_with_zero_interference_keeps_soi_samples_and_interference_label() {
        let cfg = test_waveform_config();
        let soi = gen_soi(&cfg, &[0, 1, 2, 3]).unwrap();
        let zeros = IqSignal {
            samples: vec![0.0; soi.samples.len()],
            sample_rate_hz: soi.sample_rate_hz,
            label: SignalClass::Cwi,
        };
        let mixed = mix(&soi, &zeros).unwrap();
        assert_eq!(mixed.samples, soi.samples);
        assert_eq!(mixed.label, SignalClass::Cwi);
    }

    #[test]
    fn mix_is_commutative_in_samples() {
        let a = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 48e3, 0.01).unwrap();
        let b = gen_cwi(&CwiConfig { amplitude: 0.5, freq_hz: 2e3 }, 48e3, 0.01).unwrap();
        assert_eq!(mix(&a, &b).unwrap().samples, mix(&b, &a).unwrap().samples);
    }

    #[test]
    fn mix_power_obeys_cauchy_schwarz_bound() {
        let a = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 48e3, 0.01).unwrap();
        let b = gen_cwi(&CwiConfig { amplitude: 2.0, freq_hz: 1.7e3 }, 48e3, 0.01).unwrap();
        let (pa, pb) = (a.power(), b.power());
        let pm = mix(&a, &b).unwrap().power();
        assert!(pm <= pa + pb + 2.0 * (pa * pb).sqrt() + 1e-12);
    }

    #[test]
    fn mix_rejects_mismatched_inputs() {
        let a = gen_cwi(&CwiConfig { amplitude: 1.0, freq_hz: 1e3 }, 48e3, 0.01).unwrap();
        let short = IqSignal {
            samples: vec![0.0; 3],
            sample_rate_hz: 48e3,
            label: SignalClass::Ci,
        };
        assert!(matches!(mix(&a, &short), Err(SignalError::LengthMismatch(_, _))));
        let other_rate = IqSignal {
            samples: vec![0.0; a.samples.len()],
            sample_rate_hz: 44.1e3,
            label: SignalClass::Ci,
        };
        assert!(matches!(mix(&a, &other_rate), Err(SignalError::RateMismatch(_, _))));
    }

    #[test]
    fn generators_produce_finite_samples() {
        let cfg = test_waveform_config();
        let symbols: Vec<usize> = (0..128).map(|i| (i * 7) % 4).collect();
        let soi = gen_soi(&cfg, &symbols).unwrap();
        let noisy = add_awgn(&soi, 0.0, 9);
        assert!(noisy.samples.iter().all(|s| s.is_finite()));
        assert!(!noisy.samples.is_empty());
    }
}
