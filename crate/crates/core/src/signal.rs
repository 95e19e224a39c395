//! Complex-baseband primitives shared by every stage of the pipeline.
//!
//! Everything here is a pure function of its inputs. The FFT is a plain
//! radix-2 transform (callers zero-pad to a power of two), filtering is
//! length-preserving with the group delay trimmed symmetrically, and the
//! instantaneous decomposition works directly on the complex samples.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex baseband capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqRecording {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    center_freq_hz: f64,
    id: String,
}

impl IqRecording {
    pub fn new(
        id: impl Into<String>,
        samples: Vec<Complex64>,
        sample_rate_hz: f64,
        center_freq_hz: f64,
    ) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::Parameter(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !(center_freq_hz.is_finite() && center_freq_hz >= 0.0) {
            return Err(Error::Parameter(format!(
                "center frequency must be non-negative, got {center_freq_hz}"
            )));
        }
        if let Some(pos) = samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Parameter(format!("sample {pos} is not finite")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            center_freq_hz,
            id: id.into(),
        })
    }

    /// Same metadata, new samples. The caller guarantees finiteness.
    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        debug_assert!(samples.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
            center_freq_hz: self.center_freq_hz,
            id: self.id.clone(),
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn center_freq_hz(&self) -> f64 {
        self.center_freq_hz
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn set_id(&mut self, id: impl Into<String>) {
        self.id = id.into();
    }
}

/// Linear-phase FIR coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct FirTaps {
    coefficients: Vec<f64>,
    normalized_cutoff: f64,
}

impl FirTaps {
    pub fn new(coefficients: Vec<f64>, normalized_cutoff: f64) -> Result<Self> {
        if coefficients.len() % 2 == 0 {
            return Err(Error::Parameter(format!(
                "FIR needs an odd tap count, got {}",
                coefficients.len()
            )));
        }
        if !(normalized_cutoff > 0.0 && normalized_cutoff <= 0.5) {
            return Err(Error::Parameter(format!(
                "normalized cutoff must lie in (0, 0.5], got {normalized_cutoff}"
            )));
        }
        let n = coefficients.len();
        for i in 0..n / 2 {
            if (coefficients[i] - coefficients[n - 1 - i]).abs() > 1e-12 {
                return Err(Error::Parameter(format!("taps are not symmetric at index {i}")));
            }
        }
        Ok(Self {
            coefficients,
            normalized_cutoff,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn normalized_cutoff(&self) -> f64 {
        self.normalized_cutoff
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

fn check_fft_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Size(format!("FFT length must be a power of two >= 2, got {n}")));
    }
    Ok(())
}

fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                // Direct twiddle evaluation keeps the error at O(eps log n).
                let w = Complex64::from_polar(1.0, step * k as f64);
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

/// Forward DFT, `X[k] = Σ x[n] e^{-j2πkn/N}`.
pub fn fft_forward(samples: &[Complex64]) -> Result<Vec<Complex64>> {
    check_fft_len(samples.len())?;
    let mut buf = samples.to_vec();
    fft_in_place(&mut buf, false);
    Ok(buf)
}

/// Inverse DFT including the `1/N` factor.
pub fn fft_inverse(spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    check_fft_len(spectrum.len())?;
    let mut buf = spectrum.to_vec();
    fft_in_place(&mut buf, true);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    Ok(buf)
}

/// Hamming-windowed sinc lowpass normalized to unit DC gain.
///
/// `normalized_cutoff` is in cycles/sample. A cutoff of exactly 0.5 yields a
/// unit impulse.
pub fn design_lowpass(normalized_cutoff: f64, num_taps: usize) -> Result<FirTaps> {
    if num_taps < 3 || num_taps % 2 == 0 {
        return Err(Error::Parameter(format!(
            "tap count must be odd and >= 3, got {num_taps}"
        )));
    }
    if !(normalized_cutoff > 0.0 && normalized_cutoff <= 0.5) {
        return Err(Error::Parameter(format!(
            "normalized cutoff must lie in (0, 0.5], got {normalized_cutoff}"
        )));
    }
    let m = (num_taps - 1) / 2;
    let mut taps: Vec<f64> = (0..num_taps)
        .map(|i| {
            let k = i as f64 - m as f64;
            let ideal = if i == m {
                2.0 * normalized_cutoff
            } else {
                (2.0 * PI * normalized_cutoff * k).sin() / (PI * k)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * i as f64 / (num_taps - 1) as f64).cos();
            ideal * window
        })
        .collect();
    // Exact mirror so the symmetry check never trips on rounding.
    for i in 0..m {
        let v = 0.5 * (taps[i] + taps[num_taps - 1 - i]);
        taps[i] = v;
        taps[num_taps - 1 - i] = v;
    }
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    FirTaps::new(taps, normalized_cutoff)
}

/// Length-preserving convolution aligned to the input.
pub fn fir_filter(recording: &IqRecording, taps: &FirTaps) -> IqRecording {
    recording.with_samples(convolve_same(recording.samples(), taps.coefficients()))
}

pub(crate) fn convolve_same(x: &[Complex64], h: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let delay = (h.len() - 1) / 2;
    (0..n)
        .map(|i| {
            // Output i is full-convolution index i + delay.
            let full = i + delay;
            let k_lo = full.saturating_sub(n - 1);
            let k_hi = full.min(h.len() - 1);
            (k_lo..=k_hi).fold(Complex64::new(0.0, 0.0), |acc, k| acc + x[full - k] * h[k])
        })
        .collect()
}

/// Amplitude, unwrapped phase and first-difference frequency of a baseband signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Instantaneous {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    /// One element shorter than `amplitude`.
    pub frequency_hz: Vec<f64>,
}

pub fn unwrap_phase(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &p in wrapped {
        if let Some(q) = prev {
            let d = p - q;
            offset -= 2.0 * PI * (d / (2.0 * PI)).round();
        }
        out.push(p + offset);
        prev = Some(p);
    }
    out
}

pub fn instantaneous(recording: &IqRecording) -> Result<Instantaneous> {
    instantaneous_of(recording.samples(), recording.sample_rate_hz())
}

pub(crate) fn instantaneous_of(samples: &[Complex64], sample_rate_hz: f64) -> Result<Instantaneous> {
    if samples.len() < 2 {
        return Err(Error::Size(format!(
            "instantaneous decomposition needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    let amplitude = samples.iter().map(|z| z.norm()).collect();
    let wrapped: Vec<f64> = samples.iter().map(|z| z.arg()).collect();
    let phase = unwrap_phase(&wrapped);
    let frequency_hz = phase
        .windows(2)
        .map(|w| (w[1] - w[0]) * sample_rate_hz / (2.0 * PI))
        .collect();
    Ok(Instantaneous {
        amplitude,
        phase,
        frequency_hz,
    })
}

pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / samples.len() as f64
}

/// Floor applied to the excess-power ratio, i.e. -60 dB.
pub const SNR_FLOOR_RATIO: f64 = 1e-6;

/// SNR of a signal region against a noise-only region, in dB.
///
/// The signal region's power includes noise, which is subtracted before the
/// ratio is taken. Results are floored at -60 dB.
pub fn estimate_snr_db(signal_region: &[Complex64], noise_region: &[Complex64]) -> Result<f64> {
    if signal_region.len() < 8 || noise_region.len() < 8 {
        return Err(Error::Size(format!(
            "SNR regions need >= 8 samples, got {} and {}",
            signal_region.len(),
            noise_region.len()
        )));
    }
    let p_noise = mean_power(noise_region);
    if p_noise <= 0.0 {
        return Err(Error::Degenerate("noise region has zero power".into()));
    }
    let p_sig = mean_power(signal_region);
    let excess = (p_sig - p_noise).max(p_noise * SNR_FLOOR_RATIO);
    Ok(10.0 * (excess / p_noise).log10())
}

/// Next power of two that is at least `n` (and at least 2).
pub fn next_pow2(n: usize) -> usize {
    n.max(2).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rec(samples: Vec<Complex64>, fs: f64) -> IqRecording {
        IqRecording::new("t", samples, fs, 0.0).unwrap()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(c(0.0, 0.0), |acc, (i, &v)| {
                    acc + v * Complex64::from_polar(1.0, -2.0 * PI * (k * i) as f64 / n as f64)
                })
            })
            .collect()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den).sqrt()
    }

    #[test]
    fn impulse_and_dc() {
        let x = [c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)];
        for z in fft_forward(&x).unwrap() {
            assert!((z - c(1., 0.)).norm() < 1e-15);
        }
        let x = [c(1., 0.); 4];
        let y = fft_forward(&x).unwrap();
        assert!((y[0] - c(4., 0.)).norm() < 1e-15);
        assert!(y[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn fft_matches_direct_dft() {
        let x = random_vec(64, 7);
        let fast = fft_forward(&x).unwrap();
        assert!(rel_err(&fast, &naive_dft(&x)) < 1e-12);
        let back = fft_inverse(&fast).unwrap();
        assert!(rel_err(&back, &x) < 1e-9);
    }

    #[test]
    fn fft_rejects_bad_lengths() {
        assert!(matches!(fft_forward(&[c(1., 0.); 3]), Err(Error::Size(_))));
        assert!(matches!(fft_forward(&[c(1., 0.)]), Err(Error::Size(_))));
        assert!(matches!(fft_forward(&[]), Err(Error::Size(_))));
    }

    #[test]
    fn lowpass_normalized_and_attenuates() {
        let taps = design_lowpass(0.25, 31).unwrap();
        assert!((taps.coefficients().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let n = 2048;
        let tone: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * 0.45 * i as f64))
            .collect();
        let out = fir_filter(&rec(tone.clone(), 1.0), &taps);
        // Skip the edges where the zero padding leaks in.
        let rms = |v: &[Complex64]| mean_power(&v[64..n - 64]).sqrt();
        let atten_db = 20.0 * (rms(&tone) / rms(out.samples())).log10();
        assert!(atten_db >= 20.0, "attenuation {atten_db} dB");
    }

    #[test]
    fn near_allpass_three_taps() {
        let taps = design_lowpass(0.499, 3).unwrap();
        let h = taps.coefficients();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(h[0], h[2]);
    }

    #[test]
    fn lowpass_parameter_errors() {
        assert!(design_lowpass(0.25, 30).is_err());
        assert!(design_lowpass(0.25, 1).is_err());
        assert!(design_lowpass(0.0, 31).is_err());
        assert!(design_lowpass(0.6, 31).is_err());
    }

    #[test]
    fn unit_tap_is_identity_and_dc_preserved() {
        let x = random_vec(100, 3);
        let id = FirTaps::new(vec![1.0], 0.5).unwrap();
        assert_eq!(fir_filter(&rec(x.clone(), 1.0), &id).samples(), &x[..]);

        let taps = design_lowpass(0.1, 31).unwrap();
        let out = fir_filter(&rec(vec![c(0.7, -0.2); 200], 1.0), &taps);
        for z in &out.samples()[15..185] {
            assert!((z - c(0.7, -0.2)).norm() < 1e-9);
        }
        let empty = fir_filter(&rec(vec![], 1.0), &taps);
        assert!(empty.is_empty());
    }

    #[test]
    fn lowpass_reduces_white_noise() {
        let x = random_vec(4096, 11);
        let out = fir_filter(&rec(x.clone(), 1.0), &design_lowpass(0.1, 63).unwrap());
        assert!(mean_power(out.samples()) < mean_power(&x));
    }

    #[test]
    fn instantaneous_tones() {
        let fs = 48_000.0;
        for f0 in [1000.0, -5000.0] {
            let x: Vec<Complex64> = (0..500)
                .map(|i| Complex64::from_polar(1.0, 2.0 * PI * f0 * i as f64 / fs))
                .collect();
            let inst = instantaneous(&rec(x, fs)).unwrap();
            assert_eq!(inst.frequency_hz.len(), 499);
            assert!(inst.frequency_hz.iter().all(|f| (f - f0).abs() < 1e-6));
        }
        let inst = instantaneous(&rec(vec![c(1., 0.); 10], fs)).unwrap();
        assert!(inst.amplitude.iter().all(|&a| a == 1.0));
        assert!(inst.frequency_hz.iter().all(|&f| f == 0.0));
        assert!(instantaneous(&rec(vec![c(1., 0.)], fs)).is_err());
    }

    #[test]
    fn snr_definition_and_floor() {
        let sig = vec![c(101f64.sqrt(), 0.0); 16];
        let noise = vec![c(1.0, 0.0); 16];
        assert!((estimate_snr_db(&sig, &noise).unwrap() - 20.0).abs() < 1e-12);
        assert!((estimate_snr_db(&noise, &noise).unwrap() + 60.0).abs() < 1e-12);
        assert!(matches!(
            estimate_snr_db(&sig, &[c(0., 0.); 16]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(estimate_snr_db(&sig[..4], &noise), Err(Error::Size(_))));
    }

    #[test]
    fn recording_rejects_non_finite() {
        assert!(IqRecording::new("x", vec![c(f64::NAN, 0.)], 1.0, 0.0).is_err());
        assert!(IqRecording::new("x", vec![], 0.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_and_parseval(log_n in 1u32..=12, seed in any::<u64>()) {
            let x = random_vec(1 << log_n, seed);
            let spec = fft_forward(&x).unwrap();
            prop_assert!(rel_err(&fft_inverse(&spec).unwrap(), &x) < 1e-9);
            let e_time: f64 = x.iter().map(|z| z.norm_sqr()).sum();
            let e_freq: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() / x.len() as f64;
            prop_assert!((e_time - e_freq).abs() <= 1e-9 * e_time);
        }

        #[test]
        fn unwrap_recovers_ramp(start in -10.0f64..10.0, step in -3.1f64..3.1, n in 2usize..300) {
            let truth: Vec<f64> = (0..n).map(|i| start + step * i as f64).collect();
            let wrapped: Vec<f64> = truth.iter().map(|p| c(p.cos(), p.sin()).arg()).collect();
            let un = unwrap_phase(&wrapped);
            let k0 = ((un[0] - truth[0]) / (2.0 * PI)).round();
            for (u, t) in un.iter().zip(&truth) {
                let d = u - t;
                prop_assert!((d - 2.0 * PI * k0).abs() < 1e-6);
            }
        }

        #[test]
        fn fir_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_vec(257, seed);
            let y = random_vec(257, seed ^ 0x55);
            let taps = design_lowpass(0.2, 31).unwrap();
            let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
            let lhs = fir_filter(&rec(mix, 1.0), &taps);
            let fx = fir_filter(&rec(x, 1.0), &taps);
            let fy = fir_filter(&rec(y, 1.0), &taps);
            for ((l, p), q) in lhs.samples().iter().zip(fx.samples()).zip(fy.samples()) {
                prop_assert!((l - (p * a + q * b)).norm() < 1e-9);
            }
        }

        #[test]
        fn amplitude_non_negative(seed in any::<u64>()) {
            let inst = instantaneous(&rec(random_vec(64, seed), 1.0)).unwrap();
            prop_assert!(inst.amplitude.iter().all(|&a| a >= 0.0));
        }
    }
}
