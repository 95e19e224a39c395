//! Fingerprint feature extraction and dimension reduction.
//!
//! The catalog order is fixed: instantaneous statistics, transient times,
//! wavelet-packet band energies (`wpd_e00`..), spectral shape. Changing the
//! catalog bumps [`CATALOG_REVISION`]; the WPD depth is part of the version
//! string because it changes the dimensionality.

mod moments;
mod selection;
mod signal_stats;
mod wpd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roi::RegionOfInterest;
use crate::signal::IqRecording;

pub use moments::{mean_variance, moments, DegenerateMoments, Moments};
pub use selection::{fisher_scores, fisher_select, FeatureSelection, WITHIN_VARIANCE_FLOOR};
pub use signal_stats::{
    instantaneous_stats, power_spectrum, spectral_features, steady_interior, transient_features,
    INSTANTANEOUS_NAMES, SPECTRAL_NAMES, TRANSIENT_NAMES,
};
pub use wpd::{wpd_energies, wpd_leaf_energies, MAX_DEPTH as MAX_WPD_DEPTH};

pub type NamedFeatures = Vec<(String, f64)>;

pub const CATALOG_REVISION: u32 = 1;

/// Smallest ROI the extractor accepts (the spectral estimator's minimum).
pub const MIN_ROI_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionParams {
    pub wpd_depth: u32,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self { wpd_depth: 3 }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_WPD_DEPTH).contains(&self.wpd_depth) {
            return Err(Error::validation(
                "extraction.wpd_depth",
                format!("must lie in [1, {MAX_WPD_DEPTH}]"),
            ));
        }
        Ok(())
    }

    pub fn catalog(&self) -> FeatureCatalog {
        FeatureCatalog::new(*self)
    }
}

/// Ordered feature names plus the version string stored with fingerprints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCatalog {
    pub version: String,
    pub names: Vec<String>,
}

impl FeatureCatalog {
    pub fn new(params: ExtractionParams) -> Self {
        let wpd = (0..1usize << params.wpd_depth).map(|i| format!("wpd_e{i:02}"));
        let names = INSTANTANEOUS_NAMES
            .iter()
            .chain(TRANSIENT_NAMES.iter())
            .map(|s| s.to_string())
            .chain(wpd)
            .chain(SPECTRAL_NAMES.iter().map(|s| s.to_string()))
            .collect();
        Self {
            version: format!("rffp-features/{CATALOG_REVISION};wpd-haar-{}", params.wpd_depth),
            names,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoiRef {
    pub recording_id: String,
    pub start_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub roi_ref: RoiRef,
    pub catalog_version: String,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }
}

/// Extracts the full catalog from raw ROI samples.
pub fn extract_samples(
    samples: &[num_complex::Complex64],
    sample_rate: f64,
    params: &ExtractionParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let catalog = params.catalog();
    let check = |family: NamedFeatures| -> Result<NamedFeatures> {
        match family.iter().find(|(_, v)| !v.is_finite()) {
            Some((name, value)) => Err(Error::Extraction {
                feature: name.clone(),
                value: *value,
            }),
            None => Ok(family),
        }
    };
    let mut features = check(instantaneous_stats(samples, sample_rate)?)?;
    features.extend(check(transient_features(samples)?)?);
    features.extend(check(
        wpd_energies(samples, params.wpd_depth)?
            .into_iter()
            .enumerate()
            .map(|(i, e)| (format!("wpd_e{i:02}"), e))
            .collect(),
    )?);
    features.extend(check(spectral_features(samples, sample_rate)?)?);
    debug_assert!(features.iter().map(|(n, _)| n).eq(catalog.names.iter()));
    Ok(features.into_iter().map(|(_, v)| v).collect())
}

/// Extracts the catalog feature vector for one ROI of a recording.
pub fn extract(roi: &RegionOfInterest, recording: &IqRecording, params: &ExtractionParams) -> Result<FeatureVector> {
    if roi.length == 0 || roi.end() > recording.len() {
        return Err(Error::Parameter(format!(
            "ROI {}..{} is outside a recording of {} samples",
            roi.start_sample,
            roi.end(),
            recording.len()
        )));
    }
    let samples = &recording.samples()[roi.start_sample..roi.end()];
    let values = extract_samples(samples, recording.sample_rate_hz(), params)?;
    let catalog = params.catalog();
    Ok(FeatureVector {
        names: catalog.names,
        values,
        roi_ref: RoiRef {
            recording_id: recording.id().to_string(),
            start_sample: roi.start_sample,
        },
        catalog_version: catalog.version,
    })
}
