//! Shared fixtures for the criterion benchmarks.

use rffp_core::experiment::{capture, device_profile, BurstCapture, CaptureSetup};
use rffp_core::{Complex64, FeatureVector, IqRecording};

pub const SEED: u64 = 7;

/// Deterministic pseudo-random complex samples (SplitMix64 driven).
pub fn samples(n: usize, seed: u64) -> Vec<Complex64> {
    let mut state = seed;
    let mut next = move || {
        state = rffp_core::experiment::derive_seed(state, 1);
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    (0..n).map(|_| Complex64::new(next(), next())).collect()
}

pub fn recording(n: usize) -> IqRecording {
    IqRecording::new("bench", samples(n, SEED), 200_000.0, 0.0).expect("valid recording")
}

/// Desk capture of device `k` with `n_bursts` bursts at 20 dB.
pub fn desk_capture(k: usize, n_bursts: usize) -> BurstCapture {
    capture(&device_profile(k, SEED), n_bursts, &CaptureSetup::desk(20.0), SEED + k as u64).expect("desk capture")
}

/// Enrollment vectors for two devices, 32 bursts each.
pub fn two_device_vectors() -> (Vec<FeatureVector>, Vec<FeatureVector>) {
    (desk_capture(0, 32).vectors, desk_capture(1, 32).vectors)
}
