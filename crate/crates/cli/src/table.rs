//! Feature table CSV: `session,roi_index,start_sample,length,label,<catalog columns>`.
//!
//! `label` is the ground-truth emitter id of the overlapping annotation, or
//! empty. The catalog (and so its version) is recovered from the header.

use std::path::Path;

use anyhow::{bail, Context};

use rffp_core::features::{FeatureCatalog, FeatureVector, RoiRef, MAX_WPD_DEPTH};
use rffp_core::ExtractionParams;

pub const KEY_COLUMNS: [&str; 5] = ["session", "roi_index", "start_sample", "length", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub session: String,
    pub roi_index: usize,
    pub start_sample: usize,
    pub length: usize,
    pub label: Option<String>,
    pub vector: FeatureVector,
}

pub fn to_csv(catalog: &FeatureCatalog, rows: &[FeatureRow]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(KEY_COLUMNS.iter().copied().chain(catalog.names.iter().map(String::as_str)))?;
    for r in rows {
        let mut rec = vec![
            r.session.clone(),
            r.roi_index.to_string(),
            r.start_sample.to_string(),
            r.length.to_string(),
            r.label.clone().unwrap_or_default(),
        ];
        rec.extend(r.vector.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(w.into_inner()?)
}

fn catalog_for(columns: &[String]) -> anyhow::Result<FeatureCatalog> {
    (1..=MAX_WPD_DEPTH)
        .map(|wpd_depth| ExtractionParams { wpd_depth }.catalog())
        .find(|c| c.names == columns)
        .context("feature columns do not match any known catalog revision")
}

pub fn read(path: &Path) -> anyhow::Result<(FeatureCatalog, Vec<FeatureRow>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < KEY_COLUMNS.len() || header[..KEY_COLUMNS.len()] != KEY_COLUMNS {
        bail!("{}: header must start with {}", path.display(), KEY_COLUMNS.join(","));
    }
    let catalog = catalog_for(&header[KEY_COLUMNS.len()..]).with_context(|| path.display().to_string())?;
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("{} row {}", path.display(), line + 1);
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let num = |i: usize| field(i).parse::<usize>().with_context(|| format!("{}: column {}", ctx(), header[i]));
        let values = (KEY_COLUMNS.len()..header.len())
            .map(|i| field(i).parse::<f64>().with_context(|| format!("{}: column {}", ctx(), header[i])))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        let session = field(0).to_string();
        let start_sample = num(2)?;
        rows.push(FeatureRow {
            roi_index: num(1)?,
            start_sample,
            length: num(3)?,
            label: Some(field(4).to_string()).filter(|s| !s.is_empty()),
            vector: FeatureVector {
                names: catalog.names.clone(),
                values,
                roi_ref: RoiRef {
                    recording_id: session.clone(),
                    start_sample,
                },
                catalog_version: catalog.version.clone(),
            },
            session,
        });
    }
    Ok((catalog, rows))
}
