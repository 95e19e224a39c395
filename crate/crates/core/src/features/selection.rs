use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FeatureVector;
use crate::error::{Error, Result};

/// Floor on the pooled within-class variance.
pub const WITHIN_VARIANCE_FLOOR: f64 = 1e-12;

/// Kept catalog indices with the Fisher score of every catalog feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub kept_indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl FeatureSelection {
    /// Keeps every feature; scores are zero.
    pub fn all(dim: usize) -> Self {
        Self {
            kept_indices: (0..dim).collect(),
            scores: vec![0.0; dim],
        }
    }

    pub fn len(&self) -> usize {
        self.kept_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept_indices.is_empty()
    }

    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        self.kept_indices.iter().map(|&i| values[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kept_indices.is_empty() {
            return Err(Error::validation("selection.kept_indices", "must not be empty"));
        }
        if self.kept_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("selection.kept_indices", "must be strictly ascending"));
        }
        if self.kept_indices.last().is_some_and(|&i| i >= self.scores.len()) {
            return Err(Error::validation("selection.kept_indices", "index beyond catalog size"));
        }
        Ok(())
    }
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Per-feature Fisher score: variance of the class means over the mean
/// within-class variance, both unweighted population variances.
pub fn fisher_scores<L: AsRef<str>>(vectors: &[FeatureVector], labels: &[L]) -> Result<Vec<f64>> {
    if vectors.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let Some(first) = vectors.first() else {
        return Err(Error::Parameter("no feature vectors".into()));
    };
    for v in vectors {
        if v.catalog_version != first.catalog_version || v.values.len() != first.values.len() {
            return Err(Error::Catalog {
                expected: first.catalog_version.clone(),
                found: v.catalog_version.clone(),
            });
        }
    }
    let mut classes: BTreeMap<&str, Vec<&FeatureVector>> = BTreeMap::new();
    for (v, l) in vectors.iter().zip(labels) {
        classes.entry(l.as_ref()).or_default().push(v);
    }
    if classes.len() < 2 {
        return Err(Error::Parameter(format!("need >= 2 devices, got {}", classes.len())));
    }
    if let Some((label, members)) = classes.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::Parameter(format!(
            "device {label:?} has {} vector(s), need >= 2",
            members.len()
        )));
    }
    let dim = first.values.len();
    Ok((0..dim)
        .map(|j| {
            let mut means = Vec::with_capacity(classes.len());
            let mut within = 0.0;
            for members in classes.values() {
                let col: Vec<f64> = members.iter().map(|v| v.values[j]).collect();
                means.push(col.iter().sum::<f64>() / col.len() as f64);
                within += population_variance(&col);
            }
            within /= classes.len() as f64;
            population_variance(&means) / within.max(WITHIN_VARIANCE_FLOOR)
        })
        .collect())
}

/// Keeps the `k` highest-scoring features, ties going to the lower index.
pub fn fisher_select<L: AsRef<str>>(vectors: &[FeatureVector], labels: &[L], k: usize) -> Result<FeatureSelection> {
    let scores = fisher_scores(vectors, labels)?;
    if k == 0 || k > scores.len() {
        return Err(Error::Parameter(format!(
            "k must lie in [1, {}], got {k}",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept = order[..k].to_vec();
    kept.sort_unstable();
    Ok(FeatureSelection {
        kept_indices: kept,
        scores,
    })
}
