//! Parametric SDR receiver: front-end noise, gain, anti-alias filter,
//! ADC input noise, clipping and a uniform mid-tread ADC.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::add_noise;
use crate::error::{Error, Result};
use crate::signal::{convolve_same, design_lowpass, IqRecording};

/// Taps in the anti-alias filter. Bandwidth is the only tunable.
pub const FILTER_TAPS: usize = 63;

fn default_full_scale() -> f64 {
    1.0
}

/// Tunable receiver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverConfig {
    pub gain_db: f64,
    /// Two-sided bandwidth; the lowpass cutoff is half of it.
    pub filter_bw_hz: f64,
    pub adc_bits: u32,
    #[serde(default = "default_full_scale")]
    pub full_scale: f64,
    /// Complex noise power added before the gain stage.
    #[serde(default)]
    pub frontend_noise_power: f64,
    /// Complex noise power at the ADC input, after gain and filtering.
    #[serde(default)]
    pub adc_noise_power: f64,
}

impl ReceiverConfig {
    /// Unity gain, no filtering, 16 bits, no front-end noise.
    pub fn transparent(sample_rate_hz: f64) -> Self {
        Self {
            gain_db: 0.0,
            filter_bw_hz: sample_rate_hz,
            adc_bits: 16,
            full_scale: 1.0,
            frontend_noise_power: 0.0,
            adc_noise_power: 0.0,
        }
    }

    pub fn with_tuning(self, gain_db: f64, filter_bw_hz: f64) -> Self {
        Self {
            gain_db,
            filter_bw_hz,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gain_db.is_finite() {
            return Err(Error::validation("rx.gain_db", "must be finite"));
        }
        if !(self.filter_bw_hz.is_finite() && self.filter_bw_hz > 0.0) {
            return Err(Error::validation("rx.filter_bw_hz", "must be > 0"));
        }
        if !(2..=16).contains(&self.adc_bits) {
            return Err(Error::validation("rx.adc_bits", "must lie in [2, 16]"));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(Error::validation("rx.full_scale", "must be > 0"));
        }
        if !(self.frontend_noise_power.is_finite() && self.frontend_noise_power >= 0.0) {
            return Err(Error::validation("rx.frontend_noise_power", "must be >= 0"));
        }
        if !(self.adc_noise_power.is_finite() && self.adc_noise_power >= 0.0) {
            return Err(Error::validation("rx.adc_noise_power", "must be >= 0"));
        }
        Ok(())
    }

    /// ADC step size.
    pub fn lsb(&self) -> f64 {
        quantizer_step(self.adc_bits, self.full_scale)
    }
}

pub fn quantizer_step(bits: u32, full_scale: f64) -> f64 {
    full_scale / ((1u32 << (bits - 1)) - 1) as f64
}

/// Mid-tread quantizer with `2^bits - 1` levels spanning `[-fs, +fs]`.
pub fn quantize(v: f64, bits: u32, full_scale: f64) -> f64 {
    let step = quantizer_step(bits, full_scale);
    let top = ((1u32 << (bits - 1)) - 1) as f64;
    step * (v / step).round().clamp(-top, top)
}

const ADC_NOISE_STREAM: u64 = 0x5AD0_C0DE_0000_0001;

/// Runs a recording through the receiver chain.
pub fn acquire(input: &IqRecording, config: &ReceiverConfig, seed: u64) -> Result<IqRecording> {
    config.validate()?;
    let fs = input.sample_rate_hz();
    if config.filter_bw_hz > fs {
        return Err(Error::Parameter(format!(
            "filter bandwidth {} Hz exceeds the sample rate {fs} Hz",
            config.filter_bw_hz
        )));
    }
    let noisy = add_noise(input.samples(), config.frontend_noise_power, seed);
    let gain = 10f64.powf(config.gain_db / 20.0);
    let amplified: Vec<Complex64> = noisy.iter().map(|z| z * gain).collect();
    let taps = design_lowpass(config.filter_bw_hz / (2.0 * fs), FILTER_TAPS)?;
    let filtered = convolve_same(&amplified, taps.coefficients());
    let filtered = add_noise(&filtered, config.adc_noise_power, seed ^ ADC_NOISE_STREAM);
    let fsc = config.full_scale;
    let digitize = |v: f64| quantize(v.clamp(-fsc, fsc), config.adc_bits, fsc);
    let out = filtered
        .iter()
        .map(|z| Complex64::new(digitize(z.re), digitize(z.im)))
        .collect();
    Ok(input.with_samples(out))
}

/// Fraction of samples with either rail component at full scale.
pub fn clipping_ratio(recording: &IqRecording, full_scale: f64) -> f64 {
    clipping_ratio_of(recording.samples(), full_scale)
}

pub(crate) fn clipping_ratio_of(samples: &[Complex64], full_scale: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let limit = full_scale - full_scale * 1e-9;
    let clipped = samples
        .iter()
        .filter(|z| z.re.abs() >= limit || z.im.abs() >= limit)
        .count();
    clipped as f64 / samples.len() as f64
}
