//! Energy detection of transmission bursts with a dual threshold.
//!
//! The noise floor is the median of the windowed power, so it stays put as
//! long as bursts occupy less than half of the session. Runs of power above
//! the close threshold are joined across short gaps; a joined run becomes a
//! region only if it somewhere reaches the open threshold.

use serde::{Deserialize, Serialize};

use crate::emitter::GroundTruthSpan;
use crate::error::{Error, Result};
use crate::signal::IqRecording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionOfInterest {
    pub start_sample: usize,
    pub length: usize,
    /// Peak windowed power over the noise floor, dB.
    pub peak_metric: f64,
    pub noise_floor: f64,
}

impl RegionOfInterest {
    pub fn end(&self) -> usize {
        self.start_sample + self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub window: usize,
    pub open_threshold_db: f64,
    pub close_threshold_db: f64,
    pub min_length: usize,
    pub merge_gap: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            window: 16,
            open_threshold_db: 10.0,
            close_threshold_db: 6.0,
            min_length: 16,
            merge_gap: 16,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 4 {
            return Err(Error::validation("detector.window", "must be >= 4"));
        }
        if !(self.open_threshold_db.is_finite() && self.close_threshold_db.is_finite()) {
            return Err(Error::validation("detector.open_threshold_db", "thresholds must be finite"));
        }
        if self.close_threshold_db >= self.open_threshold_db {
            return Err(Error::validation(
                "detector.close_threshold_db",
                "must be below open_threshold_db",
            ));
        }
        if self.min_length < 1 {
            return Err(Error::validation("detector.min_length", "must be >= 1"));
        }
        Ok(())
    }
}

/// Centered moving average of `|x|²`, truncated at the ends.
pub fn windowed_power(samples: &[num_complex::Complex64], window: usize) -> Vec<f64> {
    let n = samples.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for z in samples {
        acc += z.norm_sqr();
        prefix.push(acc);
    }
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (lo + window).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Noise floor estimate used by the detector.
pub fn noise_floor(power: &[f64]) -> Option<f64> {
    let med = median(power);
    if med > 0.0 {
        return Some(med);
    }
    power.iter().copied().filter(|&p| p > 0.0).min_by(f64::total_cmp)
}

pub fn detect_bursts(recording: &IqRecording, params: &DetectorParams) -> Result<Vec<RegionOfInterest>> {
    params.validate()?;
    if recording.len() < params.window {
        return Err(Error::Size(format!(
            "recording of {} samples is shorter than the detector window {}",
            recording.len(),
            params.window
        )));
    }
    let power = windowed_power(recording.samples(), params.window);
    let Some(floor) = noise_floor(&power) else {
        return Ok(Vec::new());
    };
    let open = floor * 10f64.powf(params.open_threshold_db / 10.0);
    let close = floor * 10f64.powf(params.close_threshold_db / 10.0);

    // Maximal runs with p >= close: (start, end, peak).
    let mut runs: Vec<(usize, usize, f64)> = Vec::new();
    let mut current: Option<(usize, f64)> = None;
    for (i, &p) in power.iter().enumerate() {
        match (&mut current, p >= close) {
            (None, true) => current = Some((i, p)),
            (Some((_, peak)), true) => *peak = peak.max(p),
            (Some((start, peak)), false) => {
                runs.push((*start, i, *peak));
                current = None;
            }
            (None, false) => {}
        }
    }
    if let Some((start, peak)) = current {
        runs.push((start, power.len(), peak));
    }

    let mut clusters: Vec<(usize, usize, f64)> = Vec::new();
    for run in runs {
        match clusters.last_mut() {
            Some(last) if run.0 - last.1 <= params.merge_gap => {
                last.1 = run.1;
                last.2 = last.2.max(run.2);
            }
            _ => clusters.push(run),
        }
    }

    Ok(clusters
        .into_iter()
        .filter(|&(start, end, peak)| peak >= open && end - start >= params.min_length)
        .map(|(start, end, peak)| RegionOfInterest {
            start_sample: start,
            length: end - start,
            peak_metric: 10.0 * (peak / floor).log10(),
            noise_floor: floor,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchCounts {
    pub hits: usize,
    pub misses: usize,
    pub false_alarms: usize,
}

/// One-to-one greedy matching of detections to ground truth.
pub fn match_rois(detected: &[RegionOfInterest], truth: &[GroundTruthSpan], tolerance: usize) -> MatchCounts {
    let mid2 = |start: usize, len: usize| 2 * start + len;
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (di, d) in detected.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let start_err = d.start_sample.abs_diff(t.start_sample);
            let end_err = d.end().abs_diff(t.end());
            if start_err <= tolerance && end_err <= tolerance {
                let dist = mid2(d.start_sample, d.length).abs_diff(mid2(t.start_sample, t.length));
                pairs.push((dist, di, ti));
            }
        }
    }
    pairs.sort_unstable();
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut hits = 0;
    for (_, di, ti) in pairs {
        if !used_d[di] && !used_t[ti] {
            used_d[di] = true;
            used_t[ti] = true;
            hits += 1;
        }
    }
    MatchCounts {
        hits,
        misses: truth.len() - hits,
        false_alarms: detected.len() - hits,
    }
}

/// For each detection, the index of the truth span it overlaps most (if any).
/// Each truth span is assigned at most once, to its largest overlap.
pub fn label_by_overlap(detected: &[RegionOfInterest], truth: &[GroundTruthSpan]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(std::cmp::Reverse<usize>, usize, usize)> = Vec::new();
    for (di, d) in detected.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let lo = d.start_sample.max(t.start_sample);
            let hi = d.end().min(t.end());
            if hi > lo {
                pairs.push((std::cmp::Reverse(hi - lo), di, ti));
            }
        }
    }
    pairs.sort_unstable();
    let mut out = vec![None; detected.len()];
    let mut used_t = vec![false; truth.len()];
    for (_, di, ti) in pairs {
        if out[di].is_none() && !used_t[ti] {
            out[di] = Some(ti);
            used_t[ti] = true;
        }
    }
    out
}
