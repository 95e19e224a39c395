use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use rffp_bench::{desk_capture, recording, samples, two_device_vectors, SEED};
use rffp_core::control::{tune, Strategy};
use rffp_core::experiment::PlantScenario;
use rffp_core::features::{extract, fisher_select};
use rffp_core::fingerprint::{enroll, verify};
use rffp_core::roi::detect_bursts;
use rffp_core::rx::acquire;
use rffp_core::signal::{design_lowpass, fft_forward, fir_filter};
use rffp_core::ExtractionParams;

fn signal(c: &mut Criterion) {
    let x = samples(4096, SEED);
    c.bench_function("fft_4096", |b| b.iter(|| fft_forward(black_box(&x)).unwrap()));

    let rec = recording(65_536);
    let taps = design_lowpass(0.1, 63).unwrap();
    c.bench_function("fir_63_taps_65536", |b| b.iter(|| fir_filter(black_box(&rec), &taps)));
}

fn front_end(c: &mut Criterion) {
    let cap = desk_capture(0, 16);
    let setup = rffp_core::experiment::CaptureSetup::desk(20.0);
    let mut rx = setup.receiver.clone();
    rx.filter_bw_hz = 50_000.0;
    c.bench_function("acquire_16_bursts", |b| b.iter(|| acquire(black_box(&cap.recording), &rx, 1).unwrap()));
    c.bench_function("detect_16_bursts", |b| {
        b.iter(|| detect_bursts(black_box(&cap.recording), &setup.detector).unwrap())
    });
    let roi = cap.rois[0];
    let params = ExtractionParams::default();
    c.bench_function("extract_one_burst", |b| b.iter(|| extract(black_box(&roi), &cap.recording, &params).unwrap()));
}

fn identity(c: &mut Criterion) {
    let (a, b) = two_device_vectors();
    let all: Vec<_> = a.iter().chain(&b).cloned().collect();
    let labels: Vec<&str> = std::iter::repeat_n("a", a.len()).chain(std::iter::repeat_n("b", b.len())).collect();
    let selection = fisher_select(&all, &labels, 12).unwrap();
    c.bench_function("fisher_select_64", |bn| bn.iter(|| fisher_select(black_box(&all), &labels, 12).unwrap()));
    c.bench_function("enroll_32x12", |bn| bn.iter(|| enroll("a", black_box(&a), &selection, 0.05).unwrap()));
    let fp = enroll("a", &a, &selection, 0.05).unwrap();
    c.bench_function("verify_one", |bn| bn.iter(|| verify(black_box(&b[0]), &fp).unwrap()));
}

fn control(c: &mut Criterion) {
    let scenario = PlantScenario::canonical(SEED);
    let plant = scenario.plant().unwrap();
    let strategy = Strategy::CoordinateDescent { max_rounds: 4, seed: SEED };
    let mut group = c.benchmark_group("tune");
    group.sample_size(10);
    group.bench_function("canonical_coordinate_descent", |b| {
        b.iter(|| tune(&plant, &scenario.grid, strategy.clone(), 49).unwrap())
    });
    group.finish();
}

criterion_group!(benches, signal, front_end, identity, control);
criterion_main!(benches);
