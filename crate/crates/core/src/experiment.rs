//! Desk-scale experiment harness: burst captures, verification campaigns
//! and the simulated receiver plant used for tuning.
//!
//! Device parameters for a campaign come from [`device_profile`]; device `k`
//! sits in its own band for every impairment:
//!
//! | parameter | device k | jitter |
//! |---|---|---|
//! | `cfo_hz` | −2000 + 1000k | ±150 |
//! | `iq_gain_imbalance` | 0.90 + 0.05k | ±0.01 |
//! | `iq_phase_imbalance_rad` | −0.10 + 0.05k | ±0.01 |
//! | `pa_a1` | 0.90 + 0.05k | 0 |
//! | `pa_a3` | −0.01 − 0.02k | 0 |
//! | `phase_noise_linewidth_hz` | 20 + 20k | 0 |
//! | ramps up / down (samples) | 20 + 15k / 10 + 10k | 0 |

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelSpec};
use crate::control::{objective, ObjectiveParams, Plant, PlantResponse, TuningGrid, TuningPoint};
use crate::emitter::{
    profile_map, render_session, Bits, ChoreographySchedule, EmitterProfile, GroundTruthSpan, Modulation,
    RenderParams, ScheduleEntry,
};
use crate::error::{Error, Result};
use crate::features::{extract, fisher_select, ExtractionParams, FeatureSelection, FeatureVector, MIN_ROI_LEN};
use crate::fingerprint::{enroll, evaluate, DeviceFingerprint, Evaluation};
use crate::roi::{detect_bursts, label_by_overlap, match_rois, DetectorParams, MatchCounts, RegionOfInterest};
use crate::rx::{acquire, ReceiverConfig};
use crate::signal::IqRecording;

/// SplitMix64 finalizer; derives independent sub-seeds from a base seed.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Profile of campaign device `k` (see the module table).
pub fn device_profile(k: usize, seed: u64) -> EmitterProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD0 + k as u64));
    let kf = k as f64;
    EmitterProfile {
        emitter_id: format!("dev-{k}"),
        cfo_hz: -2000.0 + 1000.0 * kf + rng.random_range(-150.0..=150.0),
        iq_gain_imbalance: 0.90 + 0.05 * kf + rng.random_range(-0.01..=0.01),
        iq_phase_imbalance_rad: -0.10 + 0.05 * kf + rng.random_range(-0.01..=0.01),
        phase_noise_linewidth_hz: 20.0 + 20.0 * kf,
        pa_a1: Complex64::new(0.90 + 0.05 * kf, 0.0),
        pa_a3: Complex64::new(-0.01 - 0.02 * kf, 0.0),
        ramp_up_samples: 20 + 15 * k,
        ramp_down_samples: 10 + 10 * k,
    }
}

/// Everything about how bursts are produced and captured, except the emitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSetup {
    pub render: RenderParams,
    pub payload_bits: usize,
    /// Start-to-start distance between bursts, in samples.
    pub burst_spacing: usize,
    /// Silence before the first burst, in samples.
    pub lead_in: usize,
    pub channel: ChannelSpec,
    pub receiver: ReceiverConfig,
    pub detector: DetectorParams,
    pub extraction: ExtractionParams,
}

impl CaptureSetup {
    /// 200 kHz, 8 samples/bit OOK with a 0.6-depth marker tone at 6.25 kHz,
    /// 256-bit bursts (2048 samples) every 5120 samples.
    pub fn desk(snr_db: f64) -> Self {
        let fs = 200_000.0;
        Self {
            render: RenderParams {
                sample_rate_hz: fs,
                center_freq_hz: 0.0,
                modulation: Modulation {
                    samples_per_symbol: 8,
                    tone_depth: 0.6,
                    tone_freq_hz: 6250.0,
                },
            },
            payload_bits: 256,
            burst_spacing: 5120,
            lead_in: 512,
            channel: ChannelSpec {
                snr_db,
                multipath_taps: vec![],
                path_loss_db: 0.0,
            },
            receiver: ReceiverConfig {
                gain_db: 0.0,
                filter_bw_hz: fs,
                adc_bits: 12,
                full_scale: 2.0,
                frontend_noise_power: 0.0,
                adc_noise_power: 1e-4,
            },
            detector: DetectorParams {
                window: 32,
                open_threshold_db: 4.0,
                close_threshold_db: 2.0,
                min_length: 128,
                merge_gap: 32,
            },
            extraction: ExtractionParams::default(),
        }
    }

    pub fn schedule(&self, emitter_id: &str, n_bursts: usize) -> ChoreographySchedule {
        let fs = self.render.sample_rate_hz;
        let total = self.lead_in + n_bursts * self.burst_spacing;
        ChoreographySchedule {
            session_duration_s: total as f64 / fs,
            entries: (0..n_bursts)
                .map(|i| ScheduleEntry {
                    emitter_id: emitter_id.to_string(),
                    start_time_s: (self.lead_in + i * self.burst_spacing) as f64 / fs,
                    payload_bits: Bits::ones(self.payload_bits),
                })
                .collect(),
        }
    }

    /// Clean render followed by the channel; the receiver is not applied.
    pub fn over_the_air(&self, profile: &EmitterProfile, n_bursts: usize, seed: u64) -> Result<(IqRecording, Vec<GroundTruthSpan>)> {
        let profiles = profile_map(std::slice::from_ref(profile))?;
        let schedule = self.schedule(&profile.emitter_id, n_bursts);
        let (clean, truth) = render_session(&schedule, &profiles, &self.render, derive_seed(seed, 1))?;
        let air = apply_channel(&clean, &self.channel, &truth, derive_seed(seed, 2))?;
        Ok((air, truth))
    }
}

/// Result of capturing one emitter's bursts.
#[derive(Debug, Clone)]
pub struct BurstCapture {
    pub recording: IqRecording,
    pub truth: Vec<GroundTruthSpan>,
    pub rois: Vec<RegionOfInterest>,
    pub counts: MatchCounts,
    /// Feature vectors of ROIs that overlap a burst of this emitter.
    pub vectors: Vec<FeatureVector>,
    pub extraction_failures: usize,
}

/// Renders, propagates, acquires, detects and extracts.
pub fn capture(profile: &EmitterProfile, n_bursts: usize, setup: &CaptureSetup, seed: u64) -> Result<BurstCapture> {
    let (air, truth) = setup.over_the_air(profile, n_bursts, seed)?;
    let recording = acquire(&air, &setup.receiver, derive_seed(seed, 3))?;
    let rois = detect_bursts(&recording, &setup.detector)?;
    let counts = match_rois(&rois, &truth, 2 * setup.detector.window);
    let labels = label_by_overlap(&rois, &truth);
    let mut vectors = Vec::new();
    let mut extraction_failures = 0;
    for (roi, label) in rois.iter().zip(&labels) {
        if label.is_none() || roi.length < MIN_ROI_LEN {
            continue;
        }
        match extract(roi, &recording, &setup.extraction) {
            Ok(v) => vectors.push(v),
            Err(Error::Extraction { .. }) => extraction_failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(BurstCapture {
        recording,
        truth,
        rois,
        counts,
        vectors,
        extraction_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_devices: usize,
    pub n_enroll: usize,
    pub n_probe: usize,
    pub setup: CaptureSetup,
    /// Features kept by Fisher selection; `None` keeps the whole catalog.
    pub select_k: Option<usize>,
    pub ridge_lambda: f64,
    pub seed: u64,
}

impl CampaignConfig {
    pub fn desk(snr_db: f64, seed: u64) -> Self {
        Self {
            n_devices: 5,
            n_enroll: 100,
            n_probe: 100,
            setup: CaptureSetup::desk(snr_db),
            select_k: Some(12),
            ridge_lambda: 0.05,
            seed,
        }
    }

    pub fn profiles(&self) -> Vec<EmitterProfile> {
        (0..self.n_devices).map(|k| device_profile(k, self.seed)).collect()
    }

    /// Gain −30..30 dB and bandwidth 5%..100% of the sample rate, 7 × 7.
    pub fn receiver_grid(&self) -> TuningGrid {
        let fs = self.setup.render.sample_rate_hz;
        TuningGrid {
            gain_db_values: vec![-30.0, -20.0, -10.0, 0.0, 10.0, 20.0, 30.0],
            filter_bw_hz_values: [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0].iter().map(|f| f * fs).collect(),
        }
    }

    /// Tuning plant over a short calibration capture of `reference`.
    pub fn tuning_plant(&self, reference: &EmitterProfile, n_bursts: usize) -> Result<SimulatedPlant> {
        let seed = derive_seed(self.seed, 0xCA1);
        let (input, _) = self.setup.over_the_air(reference, n_bursts, seed)?;
        Ok(SimulatedPlant {
            input,
            base: self.setup.receiver,
            detector: self.setup.detector,
            objective: ObjectiveParams::default(),
            seed: derive_seed(seed, 3),
        })
    }

    pub fn with_receiver(&self, receiver: ReceiverConfig) -> Self {
        let mut c = self.clone();
        c.setup.receiver = receiver;
        c
    }
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub evaluation: Evaluation,
    /// Fraction of each device's probes accepted at the EER threshold.
    pub genuine_accept: Vec<(String, f64)>,
    pub selection: FeatureSelection,
    pub fingerprints: Vec<DeviceFingerprint>,
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl CampaignResult {
    pub fn eer(&self) -> f64 {
        self.evaluation.eer
    }
}

/// Enrolls every device, then scores each probe against its own model
/// (genuine) and every other model (impostor).
pub fn run_campaign(cfg: &CampaignConfig, profiles: &[EmitterProfile]) -> Result<CampaignResult> {
    let mut enroll_sets = Vec::with_capacity(profiles.len());
    let mut probe_sets = Vec::with_capacity(profiles.len());
    for (k, p) in profiles.iter().enumerate() {
        let k = k as u64;
        enroll_sets.push(capture(p, cfg.n_enroll, &cfg.setup, derive_seed(cfg.seed, 100 + 2 * k))?.vectors);
        probe_sets.push(capture(p, cfg.n_probe, &cfg.setup, derive_seed(cfg.seed, 101 + 2 * k))?.vectors);
    }

    let pooled: Vec<FeatureVector> = enroll_sets.iter().flatten().cloned().collect();
    let labels: Vec<&str> = enroll_sets
        .iter()
        .zip(profiles)
        .flat_map(|(set, p)| std::iter::repeat_n(p.emitter_id.as_str(), set.len()))
        .collect();
    let dim = cfg.setup.extraction.catalog().len();
    let selection = match cfg.select_k {
        Some(k) => fisher_select(&pooled, &labels, k.min(dim))?,
        None => FeatureSelection::all(dim),
    };

    let fingerprints = enroll_sets
        .iter()
        .zip(profiles)
        .map(|(set, p)| enroll(&p.emitter_id, set, &selection, cfg.ridge_lambda))
        .collect::<Result<Vec<_>>>()?;

    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    let mut own_scores: Vec<Vec<f64>> = Vec::with_capacity(profiles.len());
    for (k, probes) in probe_sets.iter().enumerate() {
        let mut own = Vec::with_capacity(probes.len());
        for v in probes {
            let projected = selection.project(&v.values);
            for (j, fp) in fingerprints.iter().enumerate() {
                let d2 = fp.squared_distance(&projected)?;
                if j == k {
                    own.push(d2);
                } else {
                    impostor.push(d2);
                }
            }
        }
        genuine.extend_from_slice(&own);
        own_scores.push(own);
    }
    let evaluation = evaluate(&genuine, &impostor)?;
    let t = evaluation.eer_threshold;
    let genuine_accept = own_scores
        .iter()
        .zip(profiles)
        .map(|(s, p)| {
            let rate = if s.is_empty() {
                0.0
            } else {
                s.iter().filter(|&&d| d <= t).count() as f64 / s.len() as f64
            };
            (p.emitter_id.clone(), rate)
        })
        .collect();
    Ok(CampaignResult {
        evaluation,
        genuine_accept,
        selection,
        fingerprints,
        genuine,
        impostor,
    })
}

/// Campaign EER, or 0.5 (chance) when the setup yields too little to enroll.
pub fn eer_or_chance(cfg: &CampaignConfig, profiles: &[EmitterProfile]) -> f64 {
    run_campaign(cfg, profiles).map_or(0.5, |r| r.eer())
}

/// Receiver plant over a fixed over-the-air recording: each evaluation
/// re-acquires with the candidate gain and bandwidth, detects and scores.
#[derive(Debug, Clone)]
pub struct SimulatedPlant {
    pub input: IqRecording,
    pub base: ReceiverConfig,
    pub detector: DetectorParams,
    pub objective: ObjectiveParams,
    pub seed: u64,
}

impl SimulatedPlant {
    pub fn config_at(&self, point: TuningPoint) -> ReceiverConfig {
        ReceiverConfig {
            gain_db: point.gain_db,
            filter_bw_hz: point.filter_bw_hz,
            ..self.base
        }
    }
}

impl Plant for SimulatedPlant {
    fn evaluate(&self, point: TuningPoint) -> Result<PlantResponse> {
        let cfg = self.config_at(point);
        let rec = acquire(&self.input, &cfg, self.seed)?;
        let rois = detect_bursts(&rec, &self.detector)?;
        Ok(objective(&rec, &rois, cfg.full_scale, &self.objective))
    }
}

/// Scenario for the tuning command and benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantScenario {
    pub setup: CaptureSetup,
    pub emitter: EmitterProfile,
    pub n_bursts: usize,
    pub objective: ObjectiveParams,
    pub grid: TuningGrid,
    pub seed: u64,
}

impl PlantScenario {
    /// Weak input (−40 dB path loss) into a noisy 6-bit front end: at low
    /// gain the ADC sees only quantization zeros, at high gain it clips.
    pub fn canonical(seed: u64) -> Self {
        let mut setup = CaptureSetup::desk(30.0);
        setup.channel.path_loss_db = 40.0;
        setup.receiver = ReceiverConfig {
            gain_db: 0.0,
            filter_bw_hz: setup.render.sample_rate_hz,
            adc_bits: 6,
            full_scale: 1.0,
            frontend_noise_power: 1e-6,
            adc_noise_power: 2e-3,
        };
        setup.detector = DetectorParams {
            window: 32,
            open_threshold_db: 6.0,
            close_threshold_db: 3.0,
            min_length: 128,
            merge_gap: 32,
        };
        let fs = setup.render.sample_rate_hz;
        Self {
            setup,
            emitter: device_profile(2, seed),
            n_bursts: 8,
            objective: ObjectiveParams::default(),
            grid: TuningGrid {
                gain_db_values: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
                filter_bw_hz_values: [0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0].iter().map(|f| f * fs).collect(),
            },
            seed,
        }
    }

    pub fn plant(&self) -> Result<SimulatedPlant> {
        self.grid.validate()?;
        let (input, _) = self.setup.over_the_air(&self.emitter, self.n_bursts, self.seed)?;
        Ok(SimulatedPlant {
            input,
            base: self.setup.receiver,
            detector: self.setup.detector,
            objective: self.objective,
            seed: derive_seed(self.seed, 3),
        })
    }
}
