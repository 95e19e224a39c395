//! SigMF-style persistence: `<stem>.sigmf-data` holds interleaved
//! little-endian f32 I/Q, `<stem>.sigmf-meta` the JSON description.
//!
//! Ground-truth emitter ids travel in the annotation `core:label` field.
//! Meta files are read permissively; schedule files and manifests are strict.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, ChannelSpec};
use crate::emitter::{
    profile_map, render_session, ChoreographySchedule, EmitterProfile, GroundTruthSpan, RenderParams,
};
use crate::error::{Error, Result};
use crate::rx::{acquire, ReceiverConfig};
use crate::signal::IqRecording;
use num_complex::Complex64;

pub const DATATYPE: &str = "cf32_le";
pub const SIGMF_VERSION: &str = "1.0.0";
pub const DATA_EXT: &str = "sigmf-data";
pub const META_EXT: &str = "sigmf-meta";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "rffp-manifest/1";
pub const DEFAULT_DATETIME: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMeta {
    #[serde(rename = "core:datatype")]
    pub datatype: String,
    #[serde(rename = "core:sample_rate")]
    pub sample_rate_hz: f64,
    #[serde(rename = "core:version")]
    pub version: String,
    #[serde(rename = "core:description", default)]
    pub description: String,
    /// Sample count claimed by the writer; checked against the data file.
    #[serde(rename = "rffp:sample_count", default, skip_serializing_if = "Option::is_none")]
    pub sample_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capture {
    #[serde(rename = "core:sample_start")]
    pub sample_start: u64,
    #[serde(rename = "core:frequency", default)]
    pub center_freq_hz: f64,
    #[serde(rename = "core:datetime", default)]
    pub datetime: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(rename = "core:sample_start")]
    pub sample_start: u64,
    #[serde(rename = "core:sample_count")]
    pub sample_count: u64,
    #[serde(rename = "core:label", default)]
    pub label: String,
    #[serde(rename = "core:comment", default)]
    pub comment: String,
}

impl Annotation {
    pub fn span(&self) -> GroundTruthSpan {
        GroundTruthSpan {
            emitter_id: self.label.clone(),
            start_sample: self.sample_start as usize,
            length: self.sample_count as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub global: GlobalMeta,
    #[serde(default)]
    pub captures: Vec<Capture>,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl SessionMeta {
    /// Meta describing `rec`, with one annotation per ground-truth span.
    pub fn describe(rec: &IqRecording, description: &str, datetime: &str, truth: &[GroundTruthSpan]) -> Self {
        let mut annotations: Vec<Annotation> = truth
            .iter()
            .map(|s| Annotation {
                sample_start: s.start_sample as u64,
                sample_count: s.length as u64,
                label: s.emitter_id.clone(),
                comment: String::new(),
            })
            .collect();
        annotations.sort_by_key(|a| a.sample_start);
        Self {
            global: GlobalMeta {
                datatype: DATATYPE.into(),
                sample_rate_hz: rec.sample_rate_hz(),
                version: SIGMF_VERSION.into(),
                description: description.into(),
                sample_count: Some(rec.len() as u64),
            },
            captures: vec![Capture {
                sample_start: 0,
                center_freq_hz: rec.center_freq_hz(),
                datetime: datetime.into(),
            }],
            annotations,
        }
    }

    pub fn truth(&self) -> Vec<GroundTruthSpan> {
        self.annotations.iter().map(Annotation::span).collect()
    }

    fn check_datatype(&self) -> Result<()> {
        if self.global.datatype != DATATYPE {
            return Err(Error::UnsupportedFormat(format!(
                "datatype {:?} (only {DATATYPE} is supported)",
                self.global.datatype
            )));
        }
        Ok(())
    }

    fn check_annotations(&self, n_samples: u64) -> Result<()> {
        for (i, a) in self.annotations.iter().enumerate() {
            if i > 0 && a.sample_start < self.annotations[i - 1].sample_start {
                return Err(Error::validation(
                    format!("annotations[{i}].core:sample_start"),
                    "annotations must be sorted by sample_start",
                ));
            }
            if a.sample_start.checked_add(a.sample_count).is_none_or(|end| end > n_samples) {
                return Err(Error::validation(
                    format!("annotations[{i}]"),
                    format!(
                        "span {}+{} exceeds {n_samples} samples",
                        a.sample_start, a.sample_count
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = OsString::from(stem.as_os_str());
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn data_path(stem: &Path) -> PathBuf {
    with_ext(stem, DATA_EXT)
}

pub fn meta_path(stem: &Path) -> PathBuf {
    with_ext(stem, META_EXT)
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_cf32(samples: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(samples.len() * 8);
    for z in samples {
        out.extend_from_slice(&(z.re as f32).to_le_bytes());
        out.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    out
}

pub fn decode_cf32(bytes: &[u8]) -> Option<Vec<Complex64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
                Complex64::new(re as f64, im as f64)
            })
            .collect(),
    )
}

/// Writes the data/meta pair and returns their paths.
///
/// Samples are stored as f32; values that are not exactly representable
/// are rounded on the way out.
pub fn write_recording(rec: &IqRecording, meta: &SessionMeta, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    meta.check_datatype()?;
    let n = rec.len() as u64;
    if let Some(claimed) = meta.global.sample_count {
        if claimed != n {
            return Err(Error::validation(
                "global.rffp:sample_count",
                format!("claims {claimed} samples, recording has {n}"),
            ));
        }
    }
    if meta.global.sample_rate_hz != rec.sample_rate_hz() {
        return Err(Error::validation(
            "global.core:sample_rate",
            format!(
                "{} differs from the recording's {}",
                meta.global.sample_rate_hz,
                rec.sample_rate_hz()
            ),
        ));
    }
    meta.check_annotations(n)?;
    let (dp, mp) = (data_path(stem), meta_path(stem));
    write_atomic(&dp, &encode_cf32(rec.samples()))?;
    write_atomic(&mp, &to_json_bytes(meta))?;
    Ok((dp, mp))
}

pub fn read_meta(stem: &Path) -> Result<SessionMeta> {
    let meta: SessionMeta = read_json(&meta_path(stem))?;
    meta.check_datatype()?;
    Ok(meta)
}

/// Reads a pair written by [`write_recording`] (or a compatible tool).
/// The recording id is the file name of the stem.
pub fn read_recording(stem: &Path) -> Result<(IqRecording, SessionMeta)> {
    let meta = read_meta(stem)?;
    let dp = data_path(stem);
    let bytes = fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
    let samples = decode_cf32(&bytes).ok_or_else(|| Error::CorruptData {
        path: dp.clone(),
        reason: format!("{} bytes is not a whole number of cf32 samples", bytes.len()),
    })?;
    let n = samples.len() as u64;
    if let Some(claimed) = meta.global.sample_count {
        if claimed != n {
            return Err(Error::Consistency(format!(
                "{} claims {claimed} samples but {} holds {n}",
                meta_path(stem).display(),
                dp.display()
            )));
        }
    }
    meta.check_annotations(n).map_err(|e| Error::Consistency(e.to_string()))?;
    let id = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let cf = meta.captures.first().map_or(0.0, |c| c.center_freq_hz);
    let rec = IqRecording::new(id, samples, meta.global.sample_rate_hz, cf)?;
    Ok((rec, meta))
}

/// Stems of every `*.sigmf-meta` in `dir`, sorted by name.
pub fn list_sessions(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut stems = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == META_EXT) {
            stems.push(path.with_extension(""));
        }
    }
    stems.sort();
    Ok(stems)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub profiles: Vec<EmitterProfile>,
    pub schedule: ChoreographySchedule,
}

impl ScheduleFile {
    pub fn validate(&self) -> Result<()> {
        let map = profile_map(&self.profiles)?;
        for (i, e) in self.schedule.entries.iter().enumerate() {
            if !map.contains_key(&e.emitter_id) {
                return Err(Error::validation(
                    format!("schedule.entries[{i}].emitter_id"),
                    format!("unknown emitter {:?}", e.emitter_id),
                ));
            }
        }
        Ok(())
    }
}

pub fn write_schedule(schedule: &ChoreographySchedule, profiles: &[EmitterProfile], path: &Path) -> Result<()> {
    let file = ScheduleFile {
        profiles: profiles.to_vec(),
        schedule: schedule.clone(),
    };
    file.validate()?;
    write_atomic(path, &to_json_bytes(&file))
}

pub fn read_schedule(path: &Path) -> Result<(ChoreographySchedule, Vec<EmitterProfile>)> {
    let file: ScheduleFile = read_json(path)?;
    file.validate()?;
    Ok((file.schedule, file.profiles))
}

/// Seeds for each random stage. All three are required; they are optional
/// here only so that a missing one is reported by name.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub render: Option<u64>,
    #[serde(default)]
    pub channel: Option<u64>,
    #[serde(default)]
    pub receiver: Option<u64>,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Self {
            render: Some(seed),
            channel: Some(seed.wrapping_add(1)),
            receiver: Some(seed.wrapping_add(2)),
        }
    }

    /// `(render, channel, receiver)`, or a validation error naming the gap.
    pub fn resolve(&self, field: &str) -> Result<(u64, u64, u64)> {
        let get = |v: Option<u64>, name: &str| {
            v.ok_or_else(|| Error::validation(format!("{field}.{name}"), "missing seed"))
        };
        Ok((
            get(self.render, "render")?,
            get(self.channel, "channel")?,
            get(self.receiver, "receiver")?,
        ))
    }
}

/// Everything needed to regenerate one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    pub stem: String,
    pub profiles: Vec<EmitterProfile>,
    pub schedule: ChoreographySchedule,
    pub render: RenderParams,
    pub channel: ChannelSpec,
    pub receiver: ReceiverConfig,
    pub seeds: Seeds,
    #[serde(default)]
    pub description: String,
    #[serde(default = "default_datetime")]
    pub datetime: String,
}

fn default_datetime() -> String {
    DEFAULT_DATETIME.into()
}

impl SessionSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        let stem_ok = !self.stem.is_empty()
            && !self.stem.contains(['/', '\\'])
            && self.stem != "."
            && self.stem != "..";
        if !stem_ok {
            return Err(Error::validation(format!("{field}.stem"), "must be a plain file name"));
        }
        self.seeds.resolve(&format!("{field}.seeds"))?;
        self.channel.validate()?;
        self.receiver.validate()?;
        ScheduleFile {
            profiles: self.profiles.clone(),
            schedule: self.schedule.clone(),
        }
        .validate()
    }

    /// Renders, propagates and acquires the session.
    pub fn generate(&self) -> Result<(IqRecording, SessionMeta)> {
        let (rs, cs, xs) = self.seeds.resolve("seeds")?;
        let profiles = profile_map(&self.profiles)?;
        let (clean, truth) = render_session(&self.schedule, &profiles, &self.render, rs)?;
        let air = apply_channel(&clean, &self.channel, &truth, cs)?;
        let mut rec = acquire(&air, &self.receiver, xs)?;
        rec.set_id(self.stem.clone());
        let meta = SessionMeta::describe(&rec, &self.description, &self.datetime, &truth);
        Ok((rec, meta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub data_file: String,
    pub meta_file: String,
    pub n_samples: u64,
    pub spec: SessionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub sessions: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn specs(&self) -> Vec<SessionSpec> {
        self.sessions.iter().map(|e| e.spec.clone()).collect()
    }
}

/// Generates every session into `out_dir` and writes `manifest.json`.
///
/// On failure, files written by this call are removed.
pub fn build_dataset(specs: &[SessionSpec], out_dir: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let mut stems = std::collections::HashSet::new();
    for (i, s) in specs.iter().enumerate() {
        s.validate(&format!("sessions[{i}]"))?;
        if !stems.insert(s.stem.as_str()) {
            return Err(Error::validation(format!("sessions[{i}].stem"), "duplicate stem"));
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        let mut sessions = Vec::with_capacity(specs.len());
        for spec in specs {
            let (rec, meta) = spec.generate()?;
            let stem = out_dir.join(&spec.stem);
            let (dp, mp) = write_recording(&rec, &meta, &stem)?;
            written.push(dp.clone());
            written.push(mp.clone());
            sessions.push(ManifestEntry {
                data_file: file_name(&dp),
                meta_file: file_name(&mp),
                n_samples: rec.len() as u64,
                spec: spec.clone(),
            });
        }
        let manifest = DatasetManifest {
            format: MANIFEST_FORMAT.into(),
            sessions,
        };
        let path = out_dir.join(MANIFEST_FILE);
        write_atomic(&path, &to_json_bytes(&manifest))?;
        Ok((manifest, path))
    })();
    if result.is_err() {
        for p in &written {
            let _ = fs::remove_file(p);
        }
    }
    result
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let m: DatasetManifest = read_json(path)?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::UnsupportedFormat(format!("manifest format {:?}", m.format)));
    }
    for (i, e) in m.sessions.iter().enumerate() {
        e.spec.validate(&format!("sessions[{i}].spec"))?;
    }
    Ok(m)
}

/// Regenerates a dataset from its manifest into `out_dir`.
pub fn replay_manifest(manifest_path: &Path, out_dir: &Path) -> Result<(DatasetManifest, PathBuf)> {
    let m = read_manifest(manifest_path)?;
    build_dataset(&m.specs(), out_dir)
}
