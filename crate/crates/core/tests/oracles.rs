//! Monte-Carlo and controlled-synthesis checks against independently known values.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rffp_core::channel::add_awgn;
use rffp_core::emitter::{apply_impairments, profile_map, render_session};
use rffp_core::experiment::CaptureSetup;
use rffp_core::features::{
    extract, extract_samples, instantaneous_stats, moments, spectral_features, ExtractionParams,
};
use rffp_core::roi::detect_bursts;
use rffp_core::signal::{estimate_snr_db, mean_power};
use rffp_core::{Complex64, EmitterProfile, IqRecording, Modulation};

fn tone(n: usize, f: f64, fs: f64) -> Vec<Complex64> {
    (0..n).map(|i| Complex64::from_polar(1.0, 2.0 * PI * f * i as f64 / fs)).collect()
}

fn get(features: &[(String, f64)], name: &str) -> f64 {
    features.iter().find(|(n, _)| n == name).unwrap().1
}

#[test]
fn snr_estimate_of_known_synthesis() {
    let fs = 48_000.0;
    let n = 100_000;
    let clean = IqRecording::new("t", tone(n, 1000.0, fs), fs, 0.0).unwrap();
    let noisy = add_awgn(&clean, 15.0, 1.0, 3).unwrap();
    let noise: Vec<Complex64> = noisy.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
    // Signal region carries signal plus noise; the estimator subtracts the noise reference.
    let snr = estimate_snr_db(noisy.samples(), &noise).unwrap();
    assert!((snr - 15.0).abs() <= 0.3, "{snr}");
}

#[test]
fn gaussian_excess_kurtosis_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..1_000_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let m = moments(&x).unwrap();
    assert!(m.excess_kurtosis.abs() <= 0.05, "{}", m.excess_kurtosis);
    assert!(m.skewness.abs() <= 0.01);
}

#[test]
fn white_noise_is_spectrally_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<Complex64> = (0..8192)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let flatness = get(&spectral_features(&x, 1000.0).unwrap(), "spectral_flatness");
    assert!(flatness >= 0.9, "{flatness}");
}

#[test]
fn doubling_amplitude_only_moves_rss() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<Complex64> = (0..2048)
        .map(|_| Complex64::new(1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal), 0.1 * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let y: Vec<Complex64> = x.iter().map(|z| z * 2.0).collect();
    let a = instantaneous_stats(&x, 1e4).unwrap();
    let b = instantaneous_stats(&y, 1e4).unwrap();
    assert!((get(&b, "rss") - get(&a, "rss") - 20.0 * 2f64.log10()).abs() < 1e-9);
    for name in ["amp_skew", "amp_kurt"] {
        assert!((get(&a, name) - get(&b, name)).abs() < 1e-9, "{name}");
    }
}

fn cfo_burst(cfo: f64, seed: u64) -> Vec<Complex64> {
    let fs = 48_000.0;
    let mut p = EmitterProfile::neutral("e");
    p.cfo_hz = cfo;
    let ideal = vec![Complex64::new(1.0, 0.0); 4096];
    let burst = apply_impairments(&ideal, &p, fs, seed).unwrap();
    let rec = IqRecording::new("b", burst, fs, 0.0).unwrap();
    add_awgn(&rec, 30.0, 1.0, seed).unwrap().into_samples()
}

#[test]
fn cfo_estimate_at_30_db() {
    for seed in 0..10 {
        let f = instantaneous_stats(&cfo_burst(250.0, seed), 48_000.0).unwrap();
        let est = get(&f, "cfo_est_hz");
        assert!((est - 250.0).abs() <= 5.0, "seed {seed}: {est}");
    }
}

#[test]
fn cfo_difference_shows_in_feature_vectors() {
    let params = ExtractionParams::default();
    let a = extract_samples(&cfo_burst(0.0, 1), 48_000.0, &params).unwrap();
    let b = extract_samples(&cfo_burst(500.0, 2), 48_000.0, &params).unwrap();
    let i = params.catalog().index_of("cfo_est_hz").unwrap();
    let d = b[i] - a[i];
    assert!((d - 500.0).abs() <= 5.0, "{d}");
}

#[test]
fn detected_burst_features_track_emitter_cfo() {
    let setup = CaptureSetup::desk(30.0);
    let mut profiles = vec![EmitterProfile::neutral("a"), EmitterProfile::neutral("b")];
    profiles[1].cfo_hz = 500.0;
    let map = profile_map(&profiles).unwrap();
    let mut schedule = setup.schedule("a", 2);
    schedule.entries[1].emitter_id = "b".into();
    let (rec, _) = render_session(&schedule, &map, &setup.render, 8).unwrap();
    let rec = add_awgn(&rec, 30.0, 0.5, 8).unwrap();
    let rois = detect_bursts(&rec, &setup.detector).unwrap();
    assert_eq!(rois.len(), 2);
    let va = extract(&rois[0], &rec, &setup.extraction).unwrap();
    let vb = extract(&rois[1], &rec, &setup.extraction).unwrap();
    let d = vb.get("cfo_est_hz").unwrap() - va.get("cfo_est_hz").unwrap();
    assert!((d - 500.0).abs() <= 10.0, "{d}");
}

#[test]
fn marker_tone_has_documented_depth() {
    let m = Modulation {
        samples_per_symbol: 4,
        tone_depth: 0.5,
        tone_freq_hz: 1000.0,
    };
    let x = m.modulate(&"1".parse().unwrap(), 4000.0).unwrap();
    let amp: Vec<f64> = x.iter().map(|z| z.norm()).collect();
    // Samples land on tone phases 0, π/2, π, 3π/2.
    let expect = [1.0, (1.25f64).sqrt() / 1.5, 0.5 / 1.5, (1.25f64).sqrt() / 1.5];
    for (a, e) in amp.iter().zip(expect) {
        assert!((a - e).abs() < 1e-12);
    }
    assert!(mean_power(&x) < 1.0);
}
