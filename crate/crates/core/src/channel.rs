//! Propagation between emitter and receiver: tapped-delay-line multipath,
//! scalar path loss, and AWGN referenced to the burst power.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::emitter::GroundTruthSpan;
use crate::error::{Error, Result};
use crate::signal::IqRecording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tap {
    pub delay_samples: usize,
    pub gain: Complex64,
}

impl Tap {
    pub fn new(delay_samples: usize, gain: Complex64) -> Self {
        Self { delay_samples, gain }
    }
}

/// Static channel applied to a whole recording.
///
/// `snr_db == +inf` means no noise; it is stored as `null` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(serialize_with = "ser_snr", deserialize_with = "de_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub multipath_taps: Vec<Tap>,
    #[serde(default)]
    pub path_loss_db: f64,
}

fn ser_snr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_none()
    } else {
        s.serialize_some(v)
    }
}

fn de_snr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl ChannelSpec {
    pub fn clean() -> Self {
        Self {
            snr_db: f64::INFINITY,
            multipath_taps: Vec::new(),
            path_loss_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_taps(&self.multipath_taps)?;
        if !(self.path_loss_db.is_finite() && self.path_loss_db >= 0.0) {
            return Err(Error::validation("channel.path_loss_db", "must be >= 0"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::validation("channel.snr_db", "must be a number or null"));
        }
        Ok(())
    }
}

pub fn validate_taps(taps: &[Tap]) -> Result<()> {
    if taps.is_empty() {
        return Ok(());
    }
    if taps[0].delay_samples != 0 {
        return Err(Error::validation("multipath_taps", "first tap must have delay 0"));
    }
    if taps.windows(2).any(|w| w[1].delay_samples <= w[0].delay_samples) {
        return Err(Error::validation("multipath_taps", "delays must be strictly increasing"));
    }
    if taps.iter().any(|t| !(t.gain.re.is_finite() && t.gain.im.is_finite())) {
        return Err(Error::validation("multipath_taps", "gains must be finite"));
    }
    Ok(())
}

/// `y[n] = Σ g_k x[n - d_k]`, same length as the input. No taps is the identity.
pub fn apply_multipath(recording: &IqRecording, taps: &[Tap]) -> Result<IqRecording> {
    validate_taps(taps)?;
    if taps.is_empty() {
        return Ok(recording.clone());
    }
    let x = recording.samples();
    let y = (0..x.len())
        .map(|n| {
            taps.iter()
                .filter(|t| t.delay_samples <= n)
                .fold(Complex64::new(0.0, 0.0), |acc, t| acc + t.gain * x[n - t.delay_samples])
        })
        .collect();
    Ok(recording.with_samples(y))
}

/// Adds circular complex Gaussian noise of variance `signal_power_ref / 10^(snr/10)`.
pub fn add_awgn(recording: &IqRecording, snr_db: f64, signal_power_ref: f64, seed: u64) -> Result<IqRecording> {
    if !(signal_power_ref.is_finite() && signal_power_ref > 0.0) {
        return Err(Error::Parameter(format!(
            "signal power reference must be > 0, got {signal_power_ref}"
        )));
    }
    if snr_db == f64::INFINITY {
        return Ok(recording.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Parameter(format!("invalid SNR {snr_db}")));
    }
    let variance = signal_power_ref / 10f64.powf(snr_db / 10.0);
    Ok(recording.with_samples(add_noise(recording.samples(), variance, seed)))
}

/// Per-sample complex variance `variance`, split evenly between I and Q.
pub(crate) fn add_noise(x: &[Complex64], variance: f64, seed: u64) -> Vec<Complex64> {
    if variance <= 0.0 {
        return x.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("finite std");
    x.iter()
        .map(|z| z + Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng)))
        .collect()
}

pub fn apply_path_loss(recording: &IqRecording, loss_db: f64) -> Result<IqRecording> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(Error::Parameter(format!("path loss must be >= 0 dB, got {loss_db}")));
    }
    if loss_db == 0.0 {
        return Ok(recording.clone());
    }
    let scale = 10f64.powf(-loss_db / 20.0);
    Ok(recording.with_samples(recording.samples().iter().map(|z| z * scale).collect()))
}

/// Mean power over the union of burst spans, or `None` when there are no bursts.
pub fn burst_power(recording: &IqRecording, spans: &[GroundTruthSpan]) -> Option<f64> {
    let mut mask = vec![false; recording.len()];
    for s in spans {
        mask[s.start_sample..s.end().min(recording.len())].iter_mut().for_each(|m| *m = true);
    }
    let (sum, count) = recording
        .samples()
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (z, _)| (s + z.norm_sqr(), c + 1));
    (count > 0 && sum > 0.0).then(|| sum / count as f64)
}

/// Multipath, then path loss, then AWGN referenced to the post-loss burst power.
///
/// Sessions without bursts use the power a unit-amplitude emitter would have
/// after path loss as the noise reference.
pub fn apply_channel(
    recording: &IqRecording,
    spec: &ChannelSpec,
    spans: &[GroundTruthSpan],
    seed: u64,
) -> Result<IqRecording> {
    spec.validate()?;
    let faded = apply_multipath(recording, &spec.multipath_taps)?;
    let attenuated = apply_path_loss(&faded, spec.path_loss_db)?;
    let reference = burst_power(&attenuated, spans).unwrap_or(10f64.powf(-spec.path_loss_db / 10.0));
    add_awgn(&attenuated, spec.snr_db, reference, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rec(x: Vec<Complex64>) -> IqRecording {
        IqRecording::new("t", x, 1000.0, 0.0).unwrap()
    }

    #[test]
    fn multipath_examples() {
        let x = rec(vec![c(1., 2.), c(-1., 0.), c(3., 3.)]);
        assert_eq!(apply_multipath(&x, &[Tap::new(0, c(1., 0.))]).unwrap(), x);
        assert_eq!(apply_multipath(&x, &[]).unwrap(), x);

        let imp = rec(vec![c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.)]);
        let y = apply_multipath(&imp, &[Tap::new(0, c(1., 0.)), Tap::new(2, c(0.5, 0.))]).unwrap();
        let re: Vec<f64> = y.samples().iter().map(|z| z.re).collect();
        assert_eq!(re, vec![1.0, 0.0, 0.5, 0.0]);

        let ones = rec(vec![c(1., 0.); 8]);
        let y = apply_multipath(&ones, &[Tap::new(0, c(1., 0.)), Tap::new(1, c(-1., 0.))]).unwrap();
        assert_eq!(y.samples()[0], c(1., 0.));
        assert!(y.samples()[1..].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn tap_validation() {
        let x = rec(vec![c(1., 0.); 4]);
        assert!(apply_multipath(&x, &[Tap::new(1, c(1., 0.))]).is_err());
        assert!(apply_multipath(&x, &[Tap::new(0, c(1., 0.)), Tap::new(0, c(1., 0.))]).is_err());
    }

    #[test]
    fn awgn_variance_and_determinism() {
        let n = 100_000;
        let tone: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(1.0, 0.01 * i as f64)).collect();
        let x = rec(tone.clone());
        let y = add_awgn(&x, 20.0, 1.0, 42).unwrap();
        let noise: Vec<Complex64> = y.samples().iter().zip(&tone).map(|(a, b)| a - b).collect();
        let p = noise.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 0.01).abs() <= 0.0005, "noise power {p}");
        let mean = noise.iter().sum::<Complex64>() / n as f64;
        assert!(mean.norm() < 3e-3);
        let vi = noise.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        let vq = noise.iter().map(|z| z.im * z.im).sum::<f64>() / n as f64;
        assert!((vi / vq - 1.0).abs() < 0.02);
        assert_eq!(y, add_awgn(&x, 20.0, 1.0, 42).unwrap());
        assert_eq!(add_awgn(&x, f64::INFINITY, 1.0, 42).unwrap(), x);
        assert!(add_awgn(&x, 10.0, 0.0, 1).is_err());
    }

    #[test]
    fn path_loss_examples() {
        let x = rec(vec![c(1., 0.); 4]);
        assert_eq!(apply_path_loss(&x, 0.0).unwrap(), x);
        let y = apply_path_loss(&x, 20.0).unwrap();
        assert!((y.samples()[0].norm() - 0.1).abs() < 1e-15);
        let y = apply_path_loss(&x, 6.0206).unwrap();
        assert!((y.samples()[0].norm() - 0.5).abs() < 1e-4);
        assert!(apply_path_loss(&x, -1.0).is_err());
    }

    #[test]
    fn snr_sentinel_serializes_as_null() {
        let spec = ChannelSpec::clean();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"snr_db\":null"));
        let back: ChannelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn multipath_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, g1 in -1.0f64..1.0, d in 1usize..5) {
            let x: Vec<Complex64> = (0..32).map(|i| c((i as f64).sin(), (i as f64).cos())).collect();
            let y: Vec<Complex64> = (0..32).map(|i| c((i as f64 * 0.7).cos(), 0.2)).collect();
            let taps = [Tap::new(0, c(0.9, 0.1)), Tap::new(d, c(g1, 0.3))];
            let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| p * a + q * b).collect();
            let lhs = apply_multipath(&rec(mix), &taps).unwrap();
            let fx = apply_multipath(&rec(x), &taps).unwrap();
            let fy = apply_multipath(&rec(y), &taps).unwrap();
            for ((l, p), q) in lhs.samples().iter().zip(fx.samples()).zip(fy.samples()) {
                prop_assert!((l - (p * a + q * b)).norm() < 1e-12);
            }
        }

        #[test]
        fn path_loss_composes(a in 0.0f64..40.0, b in 0.0f64..40.0) {
            let x = rec(vec![c(0.3, -0.7); 4]);
            let two = apply_path_loss(&apply_path_loss(&x, a).unwrap(), b).unwrap();
            let one = apply_path_loss(&x, a + b).unwrap();
            for (p, q) in two.samples().iter().zip(one.samples()) {
                prop_assert!((p - q).norm() < 1e-12);
            }
        }
    }
}
