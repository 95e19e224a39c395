//! Transmitter-side simulation: ideal OOK bursts, per-device hardware
//! coloration, and choreographed multi-emitter sessions.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::signal::IqRecording;

/// Device-unique impairment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterProfile {
    pub emitter_id: String,
    pub cfo_hz: f64,
    pub iq_gain_imbalance: f64,
    pub iq_phase_imbalance_rad: f64,
    pub phase_noise_linewidth_hz: f64,
    pub pa_a1: Complex64,
    pub pa_a3: Complex64,
    pub ramp_up_samples: usize,
    pub ramp_down_samples: usize,
}

impl EmitterProfile {
    /// A profile whose impairments are all the identity.
    pub fn neutral(emitter_id: impl Into<String>) -> Self {
        Self {
            emitter_id: emitter_id.into(),
            cfo_hz: 0.0,
            iq_gain_imbalance: 1.0,
            iq_phase_imbalance_rad: 0.0,
            phase_noise_linewidth_hz: 0.0,
            pa_a1: Complex64::new(1.0, 0.0),
            pa_a3: Complex64::new(0.0, 0.0),
            ramp_up_samples: 0,
            ramp_down_samples: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("profile[{}].{name}", self.emitter_id);
        if self.emitter_id.is_empty() {
            return Err(Error::validation("emitter_id", "must not be empty"));
        }
        if !(self.iq_gain_imbalance.is_finite() && self.iq_gain_imbalance > 0.0) {
            return Err(Error::validation(field("iq_gain_imbalance"), "must be > 0"));
        }
        if !(self.phase_noise_linewidth_hz.is_finite() && self.phase_noise_linewidth_hz >= 0.0) {
            return Err(Error::validation(field("phase_noise_linewidth_hz"), "must be >= 0"));
        }
        if !(self.pa_a1.norm() > 0.0 && self.pa_a1.norm().is_finite()) {
            return Err(Error::validation(field("pa_a1"), "magnitude must be > 0"));
        }
        for (name, v) in [
            ("cfo_hz", self.cfo_hz),
            ("iq_phase_imbalance_rad", self.iq_phase_imbalance_rad),
            ("pa_a3", self.pa_a3.re),
            ("pa_a3", self.pa_a3.im),
        ] {
            if !v.is_finite() {
                return Err(Error::validation(field(name), "must be finite"));
            }
        }
        Ok(())
    }
}

/// A bit string, serialized as text of `0`/`1` characters.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct Bits(pub Vec<bool>);

impl Bits {
    pub fn ones(n: usize) -> Self {
        Bits(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({self})")
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Bits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::validation("payload_bits", format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Bits)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub emitter_id: String,
    pub start_time_s: f64,
    pub payload_bits: Bits,
}

/// Which emitter transmits what, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoreographySchedule {
    pub session_duration_s: f64,
    pub entries: Vec<ScheduleEntry>,
}

/// Burst waveform parameters.
///
/// With `tone_depth == 0` marks are exactly `1+0j`. A non-zero depth adds a
/// complex marker tone to each mark, `(1 + d·e^{j2πf n/fs}) / (1 + d)`, which
/// gives the burst a quadrature component and a non-constant envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub samples_per_symbol: usize,
    #[serde(default)]
    pub tone_depth: f64,
    #[serde(default)]
    pub tone_freq_hz: f64,
}

impl Modulation {
    pub fn ook(samples_per_symbol: usize) -> Self {
        Self {
            samples_per_symbol,
            tone_depth: 0.0,
            tone_freq_hz: 0.0,
        }
    }

    pub fn burst_len(&self, bits: &Bits) -> usize {
        bits.len() * self.samples_per_symbol
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_symbol < 2 {
            return Err(Error::validation("samples_per_symbol", "must be >= 2"));
        }
        if !(self.tone_depth.is_finite() && self.tone_depth >= 0.0 && self.tone_depth < 1.0) {
            return Err(Error::validation("tone_depth", "must lie in [0, 1)"));
        }
        if !self.tone_freq_hz.is_finite() {
            return Err(Error::validation("tone_freq_hz", "must be finite"));
        }
        Ok(())
    }

    pub fn modulate(&self, bits: &Bits, sample_rate_hz: f64) -> Result<Vec<Complex64>> {
        self.validate()?;
        let mut x = modulate_ook(bits, self.samples_per_symbol)?;
        if self.tone_depth > 0.0 {
            let norm = 1.0 / (1.0 + self.tone_depth);
            let w = 2.0 * PI * self.tone_freq_hz / sample_rate_hz;
            for (n, z) in x.iter_mut().enumerate() {
                if z.re != 0.0 {
                    *z *= (Complex64::new(1.0, 0.0) + Complex64::from_polar(self.tone_depth, w * n as f64)) * norm;
                }
            }
        }
        Ok(x)
    }
}

/// On-off keying: a mark is `samples_per_symbol` samples of `1+0j`, a space is silence.
pub fn modulate_ook(bits: &Bits, samples_per_symbol: usize) -> Result<Vec<Complex64>> {
    if bits.is_empty() {
        return Err(Error::Size("cannot modulate an empty bit sequence".into()));
    }
    if samples_per_symbol < 2 {
        return Err(Error::Parameter(format!(
            "samples_per_symbol must be >= 2, got {samples_per_symbol}"
        )));
    }
    Ok(bits
        .0
        .iter()
        .flat_map(|&b| {
            let v = if b { 1.0 } else { 0.0 };
            std::iter::repeat_n(Complex64::new(v, 0.0), samples_per_symbol)
        })
        .collect())
}

fn raised_cosine(pos: usize, ramp: usize) -> f64 {
    0.5 * (1.0 - (PI * pos as f64 / ramp as f64).cos())
}

/// Applies, in order: amplitude ramp, PA nonlinearity, IQ imbalance, CFO
/// rotation and Wiener phase noise. Neutral stages are skipped so a neutral
/// profile returns the input bit for bit.
pub fn apply_impairments(
    ideal: &[Complex64],
    profile: &EmitterProfile,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    apply_impairments_with(ideal, profile, sample_rate_hz, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn apply_impairments_with(
    ideal: &[Complex64],
    profile: &EmitterProfile,
    sample_rate_hz: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Complex64>> {
    if ideal.is_empty() {
        return Err(Error::Size("cannot impair an empty burst".into()));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::Parameter(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    profile.validate()?;
    let n = ideal.len();
    let (up, down) = (profile.ramp_up_samples, profile.ramp_down_samples);
    if up + down > n {
        return Err(Error::Parameter(format!(
            "ramps of {up}+{down} samples exceed burst length {n}"
        )));
    }

    let mut x = ideal.to_vec();

    for i in 0..up {
        x[i] *= raised_cosine(i, up);
    }
    for m in 0..down {
        x[n - 1 - m] *= raised_cosine(m, down);
    }

    let linear_pa = profile.pa_a1 == Complex64::new(1.0, 0.0);
    let cubic_pa = profile.pa_a3 != Complex64::new(0.0, 0.0);
    if !linear_pa || cubic_pa {
        for z in &mut x {
            *z = profile.pa_a1 * *z + profile.pa_a3 * *z * z.norm_sqr();
        }
    }

    if profile.iq_gain_imbalance != 1.0 || profile.iq_phase_imbalance_rad != 0.0 {
        let ge = Complex64::from_polar(profile.iq_gain_imbalance, profile.iq_phase_imbalance_rad);
        let mu = (Complex64::new(1.0, 0.0) + ge) * 0.5;
        let nu = (Complex64::new(1.0, 0.0) - ge) * 0.5;
        for z in &mut x {
            *z = mu * *z + nu * z.conj();
        }
    }

    if profile.cfo_hz != 0.0 {
        let w = 2.0 * PI * profile.cfo_hz / sample_rate_hz;
        for (i, z) in x.iter_mut().enumerate() {
            *z *= Complex64::from_polar(1.0, w * i as f64);
        }
    }

    if profile.phase_noise_linewidth_hz > 0.0 {
        let var = 2.0 * PI * profile.phase_noise_linewidth_hz / sample_rate_hz;
        let normal = Normal::new(0.0, var.sqrt()).expect("finite positive std");
        let mut theta = 0.0;
        for z in x.iter_mut().skip(1) {
            theta += normal.sample(rng);
            *z *= Complex64::from_polar(1.0, theta);
        }
    }

    Ok(x)
}

/// Exact span of one rendered burst.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthSpan {
    pub emitter_id: String,
    pub start_sample: usize,
    pub length: usize,
}

impl GroundTruthSpan {
    pub fn end(&self) -> usize {
        self.start_sample + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderParams {
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub center_freq_hz: f64,
    pub modulation: Modulation,
}

pub type ProfileMap = BTreeMap<String, EmitterProfile>;

/// Builds the id → profile map, rejecting duplicates.
pub fn profile_map(profiles: &[EmitterProfile]) -> Result<ProfileMap> {
    let mut map = ProfileMap::new();
    for p in profiles {
        p.validate()?;
        if map.insert(p.emitter_id.clone(), p.clone()).is_some() {
            return Err(Error::validation(
                "profiles",
                format!("duplicate emitter_id {:?}", p.emitter_id),
            ));
        }
    }
    Ok(map)
}

struct PlacedEntry<'a> {
    index: usize,
    entry: &'a ScheduleEntry,
    start: usize,
    len: usize,
}

fn place_entries<'a>(
    schedule: &'a ChoreographySchedule,
    profiles: &ProfileMap,
    params: &RenderParams,
) -> Result<(usize, Vec<PlacedEntry<'a>>)> {
    params.modulation.validate()?;
    let fs = params.sample_rate_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::Parameter(format!("sample rate must be > 0, got {fs}")));
    }
    if !(schedule.session_duration_s.is_finite() && schedule.session_duration_s > 0.0) {
        return Err(Error::validation("session_duration_s", "must be > 0"));
    }
    let total = (schedule.session_duration_s * fs).round() as usize;
    let mut placed = Vec::with_capacity(schedule.entries.len());
    for (index, entry) in schedule.entries.iter().enumerate() {
        if !profiles.contains_key(&entry.emitter_id) {
            return Err(Error::Reference(format!(
                "schedule entry {index} names unknown emitter {:?}",
                entry.emitter_id
            )));
        }
        if !(entry.start_time_s.is_finite() && entry.start_time_s >= 0.0) {
            return Err(Error::validation(
                format!("entries[{index}].start_time_s"),
                "must be >= 0",
            ));
        }
        if entry.payload_bits.is_empty() {
            return Err(Error::validation(format!("entries[{index}].payload_bits"), "empty payload"));
        }
        let start = (entry.start_time_s * fs).round() as usize;
        let len = params.modulation.burst_len(&entry.payload_bits);
        if start + len > total {
            return Err(Error::Parameter(format!(
                "entry {index} ({}) ends at sample {} past session end {total}",
                entry.emitter_id,
                start + len
            )));
        }
        placed.push(PlacedEntry { index, entry, start, len });
    }
    placed.sort_by_key(|p| (p.start, p.index));
    Ok((total, placed))
}

/// Checks a schedule against the known profiles without rendering it.
pub fn validate_schedule(
    schedule: &ChoreographySchedule,
    profiles: &ProfileMap,
    params: &RenderParams,
) -> Result<()> {
    place_entries(schedule, profiles, params).map(|_| ())
}

/// Renders every scheduled burst into one session buffer.
///
/// Bursts are summed in ascending start order (ties by schedule index), and
/// each entry draws its phase noise from its own ChaCha stream so the output
/// is reproducible from `seed` alone.
pub fn render_session(
    schedule: &ChoreographySchedule,
    profiles: &ProfileMap,
    params: &RenderParams,
    seed: u64,
) -> Result<(IqRecording, Vec<GroundTruthSpan>)> {
    let (total, placed) = place_entries(schedule, profiles, params)?;
    let fs = params.sample_rate_hz;
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    let mut truth = Vec::with_capacity(placed.len());
    for p in &placed {
        let profile = &profiles[&p.entry.emitter_id];
        let ideal = params.modulation.modulate(&p.entry.payload_bits, fs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p.index as u64);
        let burst = apply_impairments_with(&ideal, profile, fs, &mut rng)?;
        for (dst, src) in buf[p.start..p.start + p.len].iter_mut().zip(&burst) {
            *dst += src;
        }
        truth.push(GroundTruthSpan {
            emitter_id: p.entry.emitter_id.clone(),
            start_sample: p.start,
            length: p.len,
        });
    }
    let rec = IqRecording::new("session", buf, fs, params.center_freq_hz)?;
    Ok((rec, truth))
}

/// Emitter ids referenced by a schedule, in first-use order.
pub fn scheduled_emitters(schedule: &ChoreographySchedule) -> Vec<String> {
    let mut seen = HashSet::new();
    schedule
        .entries
        .iter()
        .filter(|e| seen.insert(e.emitter_id.as_str()))
        .map(|e| e.emitter_id.clone())
        .collect()
}
