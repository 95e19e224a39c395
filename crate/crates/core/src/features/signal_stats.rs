//! Instantaneous, transient and spectral descriptors of a burst.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::moments::{mean_variance, shape_or_zero};
use super::NamedFeatures;
use crate::error::{Error, Result};
use crate::signal::{fft_forward, instantaneous_of, next_pow2};

pub const INSTANTANEOUS_NAMES: [&str; 11] = [
    "amp_mean",
    "amp_var",
    "amp_skew",
    "amp_kurt",
    "amp_peak_to_mean",
    "rss",
    "cfo_est_hz",
    "phase_resid_var",
    "phase_resid_skew",
    "phase_resid_kurt",
    "freq_var",
];

pub const TRANSIENT_NAMES: [&str; 2] = ["rise_time_samples", "fall_time_samples"];

pub const SPECTRAL_NAMES: [&str; 3] = ["spectral_centroid_hz", "occupied_bw_hz", "spectral_flatness"];

/// Central 10%–90% span used for stationary statistics.
pub fn steady_interior(len: usize) -> std::ops::Range<usize> {
    let edge = len / 10;
    edge..len - edge
}

fn named(names: &[&str], values: Vec<f64>) -> NamedFeatures {
    names.iter().map(|n| n.to_string()).zip(values).collect()
}

/// Least-squares line through `y` against its index: (slope, intercept).
fn linear_fit(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (sxy, sxx) = y.iter().enumerate().fold((0.0, 0.0), |(sxy, sxx), (i, v)| {
        let dt = i as f64 - t_mean;
        (sxy + dt * (v - y_mean), sxx + dt * dt)
    });
    let slope = sxy / sxx;
    (slope, y_mean - slope * t_mean)
}

pub fn instantaneous_stats(roi_samples: &[Complex64], sample_rate: f64) -> Result<NamedFeatures> {
    if roi_samples.len() < 16 {
        return Err(Error::Size(format!(
            "instantaneous statistics need >= 16 samples, got {}",
            roi_samples.len()
        )));
    }
    let interior = &roi_samples[steady_interior(roi_samples.len())];
    let inst = instantaneous_of(interior, sample_rate)?;

    let (amp_mean, amp_var, amp_skew, amp_kurt) = shape_or_zero(&inst.amplitude);
    let peak = inst.amplitude.iter().copied().fold(0.0, f64::max);
    let power = interior.iter().map(|z| z.norm_sqr()).sum::<f64>() / interior.len() as f64;

    let (slope, intercept) = linear_fit(&inst.phase);
    let resid: Vec<f64> = inst
        .phase
        .iter()
        .enumerate()
        .map(|(i, p)| p - (intercept + slope * i as f64))
        .collect();
    let (_, resid_var, resid_skew, resid_kurt) = shape_or_zero(&resid);
    let (_, freq_var) = mean_variance(&inst.frequency_hz);

    Ok(named(
        &INSTANTANEOUS_NAMES,
        vec![
            amp_mean,
            amp_var,
            amp_skew,
            amp_kurt,
            peak / amp_mean,
            10.0 * power.log10(),
            slope * sample_rate / (2.0 * PI),
            resid_var,
            resid_skew,
            resid_kurt,
            freq_var,
        ],
    ))
}

/// Rise and fall times between the 10% and 90% crossings of the steady-state
/// amplitude (median over the interior). An ROI with zero steady-state
/// amplitude reports the ROI length for both.
pub fn transient_features(roi_samples: &[Complex64]) -> Result<NamedFeatures> {
    let n = roi_samples.len();
    if n < 16 {
        return Err(Error::Size(format!("transient features need >= 16 samples, got {n}")));
    }
    let amp: Vec<f64> = roi_samples.iter().map(|z| z.norm()).collect();
    let mut interior = amp[steady_interior(n)].to_vec();
    interior.sort_by(f64::total_cmp);
    let m = interior.len() / 2;
    let steady = if interior.len() % 2 == 1 {
        interior[m]
    } else {
        0.5 * (interior[m - 1] + interior[m])
    };
    let sentinel = n as f64;
    if steady <= 0.0 {
        return Ok(named(&TRANSIENT_NAMES, vec![sentinel, sentinel]));
    }
    let (lo, hi) = (0.1 * steady, 0.9 * steady);
    let first = |thr: f64| amp.iter().position(|&a| a >= thr);
    let last = |thr: f64| amp.iter().rposition(|&a| a >= thr);
    let rise = match (first(lo), first(hi)) {
        (Some(a), Some(b)) => (b - a) as f64,
        _ => sentinel,
    };
    let fall = match (last(lo), last(hi)) {
        (Some(a), Some(b)) => (a - b) as f64,
        _ => sentinel,
    };
    Ok(named(&TRANSIENT_NAMES, vec![rise, fall]))
}

/// Welch-averaged power spectrum, bins ordered by ascending signed frequency.
///
/// Segments are `max(64, nfft/8)` samples (capped at `nfft`, the next power
/// of two of the input length), rectangular, non-overlapping, with the last
/// one zero-padded.
pub fn power_spectrum(x: &[Complex64], sample_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let nfft = next_pow2(x.len());
    let seg = (nfft / 8).max(64).min(nfft.max(64));
    let zero = Complex64::new(0.0, 0.0);
    let mut acc = vec![0.0; seg];
    let mut count = 0usize;
    for chunk in x.chunks(seg) {
        let mut buf = chunk.to_vec();
        buf.resize(seg, zero);
        for (a, z) in acc.iter_mut().zip(fft_forward(&buf)?) {
            *a += z.norm_sqr();
        }
        count += 1;
    }
    let df = sample_rate / seg as f64;
    let order = (seg / 2..seg).chain(0..seg / 2);
    let (freqs, power) = order
        .map(|k| {
            let signed = if k < seg / 2 { k as f64 } else { k as f64 - seg as f64 };
            (signed * df, acc[k] / count as f64)
        })
        .unzip();
    Ok((freqs, power))
}

pub fn spectral_features(roi_samples: &[Complex64], sample_rate: f64) -> Result<NamedFeatures> {
    if roi_samples.len() < 64 {
        return Err(Error::Size(format!(
            "spectral features need >= 64 samples, got {}",
            roi_samples.len()
        )));
    }
    let (freqs, power) = power_spectrum(roi_samples, sample_rate)?;
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("spectrum of an all-zero ROI".into()));
    }
    let centroid = freqs.iter().zip(&power).map(|(f, p)| f * p).sum::<f64>() / total;

    let mut cum = 0.0;
    let mut lo = None;
    let mut hi = freqs.len() - 1;
    for (i, p) in power.iter().enumerate() {
        cum += p;
        if lo.is_none() && cum >= 0.005 * total {
            lo = Some(i);
        }
        if cum >= 0.995 * total {
            hi = i;
            break;
        }
    }
    let df = freqs[1] - freqs[0];
    let occupied = freqs[hi] - freqs[lo.unwrap_or(0)] + df;

    let nonzero: Vec<f64> = power.iter().copied().filter(|&p| p > 0.0).collect();
    let log_mean = nonzero.iter().map(|p| p.ln()).sum::<f64>() / nonzero.len() as f64;
    let arith = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    let flatness = log_mean.exp() / arith;

    Ok(named(&SPECTRAL_NAMES, vec![centroid, occupied, flatness]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emitter::{apply_impairments, EmitterProfile};

    fn tone(f: f64, fs: f64, n: usize, amp: f64) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(amp, 2.0 * PI * f * i as f64 / fs))
            .collect()
    }

    fn get(f: &NamedFeatures, name: &str) -> f64 {
        f.iter().find(|(n, _)| n == name).unwrap().1
    }

    #[test]
    fn noiseless_tone_statistics() {
        let fs = 48_000.0;
        let f = instantaneous_stats(&tone(1500.0, fs, 1000, 1.0), fs).unwrap();
        assert!(get(&f, "amp_var") < 1e-20);
        assert!((get(&f, "cfo_est_hz") - 1500.0).abs() < 1e-6);
        assert!(get(&f, "phase_resid_var") < 1e-18);
        assert!(get(&f, "rss").abs() < 1e-9);
        assert_eq!(f.len(), INSTANTANEOUS_NAMES.len());
    }

    #[test]
    fn too_short_inputs() {
        let x = tone(0.0, 1.0, 15, 1.0);
        assert!(matches!(instantaneous_stats(&x, 1.0), Err(Error::Size(_))));
        assert!(matches!(transient_features(&x), Err(Error::Size(_))));
        assert!(matches!(spectral_features(&tone(0.0, 1.0, 63, 1.0), 1.0), Err(Error::Size(_))));
    }

    #[test]
    fn rectangular_burst_rises_instantly() {
        let mut x = vec![Complex64::new(0.0, 0.0); 20];
        x.extend(tone(100.0, 10_000.0, 400, 1.0));
        x.extend(vec![Complex64::new(0.0, 0.0); 20]);
        let f = transient_features(&x).unwrap();
        assert!(get(&f, "rise_time_samples") <= 1.0);
        assert!(get(&f, "fall_time_samples") <= 1.0);
    }

    #[test]
    fn raised_cosine_rise_time() {
        let mut p = EmitterProfile::neutral("r");
        p.ramp_up_samples = 100;
        p.ramp_down_samples = 100;
        let x = apply_impairments(&vec![Complex64::new(1.0, 0.0); 1000], &p, 1.0, 0).unwrap();
        let f = transient_features(&x).unwrap();
        assert!((get(&f, "rise_time_samples") - 59.0).abs() <= 3.0);
        assert!((get(&f, "fall_time_samples") - 59.0).abs() <= 3.0);
    }

    #[test]
    fn zero_roi_uses_sentinel() {
        let f = transient_features(&vec![Complex64::new(0.0, 0.0); 40]).unwrap();
        assert_eq!(get(&f, "rise_time_samples"), 40.0);
        assert!(matches!(
            spectral_features(&vec![Complex64::new(0.0, 0.0); 128], 1.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn line_and_symmetric_spectra() {
        let fs = 64_000.0;
        let f = spectral_features(&tone(1000.0, fs, 1024, 1.0), fs).unwrap();
        let df = fs / 128.0;
        assert!((get(&f, "spectral_centroid_hz") - 1000.0).abs() < 1e-6);
        assert!(get(&f, "occupied_bw_hz") <= 4.0 * df);

        let two: Vec<Complex64> = tone(2000.0, fs, 1024, 1.0)
            .iter()
            .zip(tone(-2000.0, fs, 1024, 1.0))
            .map(|(a, b)| a + b)
            .collect();
        let f = spectral_features(&two, fs).unwrap();
        assert!(get(&f, "spectral_centroid_hz").abs() < 1e-6);
    }
}
