//! One-to-one identity verification against enrolled Gaussian reference models.
//!
//! Scores are squared Mahalanobis distances; a probe is accepted when its
//! score is at most the fingerprint's threshold.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSelection, FeatureVector};

/// Floor applied to per-feature variances inside the ridge term.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Format revision written into every stored fingerprint.
pub const FINGERPRINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFingerprint {
    pub format_version: u32,
    pub device_id: String,
    pub catalog_version: String,
    pub selection: FeatureSelection,
    pub mean: Vec<f64>,
    /// Row-major, `mean.len()` × `mean.len()`.
    pub covariance: Vec<f64>,
    pub ridge_lambda: f64,
    /// Acceptance bound on the squared distance.
    pub threshold: f64,
    pub n_enrolled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationDecision {
    pub claimed_id: String,
    pub squared_distance: f64,
    pub accepted: bool,
    pub threshold_used: f64,
}

impl DeviceFingerprint {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    fn covariance_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariance)
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.covariance_matrix())
            .ok_or_else(|| Error::Enrollment(format!("covariance of {:?} is not positive definite", self.device_id)))
    }

    /// Structural checks run after loading from disk.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let field = |f: &str| format!("fingerprint[{}].{f}", self.device_id);
        self.selection.validate()?;
        if self.selection.len() != d {
            return Err(Error::validation(field("mean"), "length differs from the selection size"));
        }
        if self.covariance.len() != d * d {
            return Err(Error::validation(field("covariance"), format!("expected {} entries", d * d)));
        }
        let cov = self.covariance_matrix();
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::validation(field("covariance"), "not symmetric"));
                }
            }
        }
        if !(self.threshold > 0.0) {
            return Err(Error::validation(field("threshold"), "must be > 0"));
        }
        self.factor().map(|_| ())
    }

    /// Squared Mahalanobis distance of already-projected values.
    pub fn squared_distance(&self, projected: &[f64]) -> Result<f64> {
        if projected.len() != self.dim() {
            return Err(Error::Parameter(format!(
                "probe has {} features, fingerprint has {}",
                projected.len(),
                self.dim()
            )));
        }
        let diff = DVector::from_iterator(self.dim(), projected.iter().zip(&self.mean).map(|(x, m)| x - m));
        let chol = self.factor()?;
        let y = chol
            .l()
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::Degenerate("singular Cholesky factor".into()))?;
        Ok(y.norm_squared())
    }
}

/// Minimum enrollment size for a model of dimension `dim`.
pub fn min_enrollment(dim: usize) -> usize {
    8.max(dim + 1)
}

/// Fits the reference model for one device.
pub fn enroll(
    device_id: &str,
    vectors: &[FeatureVector],
    selection: &FeatureSelection,
    ridge_lambda: f64,
) -> Result<DeviceFingerprint> {
    selection.validate()?;
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(Error::Parameter(format!("ridge lambda must be >= 0, got {ridge_lambda}")));
    }
    let dim = selection.len();
    let n_min = min_enrollment(dim);
    if vectors.len() < n_min {
        return Err(Error::Enrollment(format!(
            "{device_id:?}: {} vectors given, need >= {n_min}",
            vectors.len()
        )));
    }
    let version = &vectors[0].catalog_version;
    for v in vectors {
        if &v.catalog_version != version {
            return Err(Error::Catalog {
                expected: version.clone(),
                found: v.catalog_version.clone(),
            });
        }
        if v.values.len() != selection.scores.len() {
            return Err(Error::Catalog {
                expected: format!("{} catalog features", selection.scores.len()),
                found: format!("{} values", v.values.len()),
            });
        }
    }

    let n = vectors.len();
    let rows: Vec<Vec<f64>> = vectors.iter().map(|v| selection.project(&v.values)).collect();
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for r in &rows {
        let d = DVector::from_iterator(dim, r.iter().zip(&mean).map(|(x, m)| x - m));
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    for j in 0..dim {
        let var = cov[(j, j)].max(VARIANCE_FLOOR);
        cov[(j, j)] += ridge_lambda * var;
    }
    // Exact symmetry for storage.
    for i in 0..dim {
        for j in 0..i {
            let v = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if Cholesky::new(cov.clone()).is_none() {
        return Err(Error::Enrollment(format!(
            "{device_id:?}: covariance is singular (ridge lambda {ridge_lambda})"
        )));
    }
    let covariance = (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).map(|(i, j)| cov[(i, j)]).collect();
    Ok(DeviceFingerprint {
        format_version: FINGERPRINT_FORMAT,
        device_id: device_id.to_string(),
        catalog_version: version.clone(),
        selection: selection.clone(),
        mean,
        covariance,
        ridge_lambda,
        threshold: 3.0 * dim as f64,
        n_enrolled: n,
    })
}

/// Compares a probe only against the claimed device's model.
pub fn verify(vector: &FeatureVector, fp: &DeviceFingerprint) -> Result<VerificationDecision> {
    if vector.catalog_version != fp.catalog_version {
        return Err(Error::Catalog {
            expected: fp.catalog_version.clone(),
            found: vector.catalog_version.clone(),
        });
    }
    if vector.values.len() != fp.selection.scores.len() {
        return Err(Error::Catalog {
            expected: format!("{} catalog features", fp.selection.scores.len()),
            found: format!("{} values", vector.values.len()),
        });
    }
    let d2 = fp.squared_distance(&fp.selection.project(&vector.values))?;
    Ok(VerificationDecision {
        claimed_id: fp.device_id.clone(),
        squared_distance: d2,
        accepted: d2 <= fp.threshold,
        threshold_used: fp.threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Eer,
    TargetFar(f64),
}

/// One operating point: accept iff score ≤ threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Candidate thresholds: one below every score, then the sorted distinct union.
pub fn candidate_thresholds(genuine: &[f64], impostor: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let below = all.first().map_or(0.0, |m| m - 1.0);
    std::iter::once(below).chain(all).collect()
}

fn check_scores(genuine: &[f64], impostor: &[f64]) -> Result<()> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Parameter("genuine and impostor scores must be non-empty".into()));
    }
    if genuine.iter().chain(impostor).any(|s| s.is_nan()) {
        return Err(Error::Parameter("scores must not be NaN".into()));
    }
    Ok(())
}

/// FAR/FRR at every candidate threshold, by a single merge sweep.
pub fn roc_curve(genuine: &[f64], impostor: &[f64]) -> Result<Vec<RocPoint>> {
    check_scores(genuine, impostor)?;
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let (ng, ni) = (g.len(), im.len());
    let (mut gi, mut ii) = (0usize, 0usize);
    Ok(candidate_thresholds(&g, &im)
        .into_iter()
        .map(|t| {
            while gi < ng && g[gi] <= t {
                gi += 1;
            }
            while ii < ni && im[ii] <= t {
                ii += 1;
            }
            RocPoint {
                threshold: t,
                far: ii as f64 / ni as f64,
                frr: (ng - gi) as f64 / ng as f64,
            }
        })
        .collect())
}

/// Index of the first point minimizing |FAR − FRR|.
pub fn eer_index(roc: &[RocPoint]) -> usize {
    let mut best = 0;
    for (i, p) in roc.iter().enumerate() {
        if (p.far - p.frr).abs() < (roc[best].far - roc[best].frr).abs() {
            best = i;
        }
    }
    best
}

pub fn calibrate_threshold(genuine: &[f64], impostor: &[f64], policy: ThresholdPolicy) -> Result<f64> {
    let roc = roc_curve(genuine, impostor)?;
    match policy {
        ThresholdPolicy::Eer => {
            let i = eer_index(&roc);
            Ok(match roc.get(i + 1) {
                Some(next) => 0.5 * (roc[i].threshold + next.threshold),
                None => roc[i].threshold,
            })
        }
        ThresholdPolicy::TargetFar(alpha) => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(Error::Parameter(format!("target FAR must lie in [0, 1], got {alpha}")));
            }
            Ok(roc
                .iter()
                .rev()
                .find(|p| p.far <= alpha)
                .map(|p| p.threshold)
                .unwrap_or(roc[0].threshold))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub roc: Vec<RocPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Lowest FAR achievable with FRR at most the key.
    pub far_at: BTreeMap<String, f64>,
    /// Lowest FRR achievable with FAR at most the key.
    pub frr_at: BTreeMap<String, f64>,
}

pub const REPORT_LEVELS: [f64; 4] = [0.001, 0.01, 0.05, 0.1];

pub fn evaluate(genuine: &[f64], impostor: &[f64]) -> Result<Evaluation> {
    let roc = roc_curve(genuine, impostor)?;
    let i = eer_index(&roc);
    let eer = 0.5 * (roc[i].far + roc[i].frr);
    let best = |pick: fn(&RocPoint) -> (f64, f64), level: f64| {
        roc.iter()
            .map(pick)
            .filter(|&(constraint, _)| constraint <= level)
            .map(|(_, v)| v)
            .fold(1.0, f64::min)
    };
    let far_at = REPORT_LEVELS
        .iter()
        .map(|&l| (l.to_string(), best(|p| (p.frr, p.far), l)))
        .collect();
    let frr_at = REPORT_LEVELS
        .iter()
        .map(|&l| (l.to_string(), best(|p| (p.far, p.frr), l)))
        .collect();
    Ok(Evaluation {
        eer_threshold: roc[i].threshold,
        roc,
        eer,
        far_at,
        frr_at,
    })
}
