use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context as _};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use rffp_core::control::{self, Strategy};
use rffp_core::dataset::{self, build_dataset, list_sessions, read_recording, write_atomic};
use rffp_core::features::{extract, fisher_select, FeatureCatalog, FeatureSelection, MIN_ROI_LEN};
use rffp_core::fingerprint::{calibrate_threshold, enroll as fit, evaluate, verify as check, DeviceFingerprint};
use rffp_core::roi::{detect_bursts, label_by_overlap, match_rois};
use rffp_core::{Error, ReceiverConfig, TuningPoint};

use crate::config::ExperimentConfig;
use crate::table::{self, FeatureRow};
use crate::{usage, CmdResult, Failure};

pub struct Context {
    config: Option<ExperimentConfig>,
    out: PathBuf,
}

impl Context {
    pub fn new(config: Option<&Path>, seed_override: Option<u64>, out: PathBuf) -> Result<Self, Failure> {
        let mut config = config.map(ExperimentConfig::load).transpose().map_err(usage)?;
        if let Some(seed) = seed_override {
            let c = config.get_or_insert_with(|| serde_json::from_str("{}").expect("empty config parses"));
            c.seed = Some(seed);
        }
        Ok(Self { config, out })
    }

    fn config(&self, command: &str) -> Result<&ExperimentConfig, Failure> {
        self.config
            .as_ref()
            .ok_or_else(|| usage(anyhow!("`{command}` needs --config")))
    }

    fn config_or_default(&self) -> ExperimentConfig {
        self.config
            .clone()
            .unwrap_or_else(|| serde_json::from_str("{}").expect("empty config parses"))
    }

    fn write(&self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("plain data serializes");
    v.push(b'\n');
    v
}

pub fn synth(ctx: &Context) -> CmdResult {
    let cfg = ctx.config("synth")?;
    let specs = cfg.session_specs().map_err(usage)?;
    let (manifest, path) = build_dataset(&specs, &ctx.out).map_err(|e| match e {
        Error::Validation { .. } | Error::Reference(_) => usage(e),
        e => Failure::Runtime(e.into()),
    })?;
    info!("wrote {} session(s)", manifest.sessions.len());
    println!("{}", path.display());
    Ok(())
}

fn session_rows(stem: &Path, cfg: &ExperimentConfig) -> anyhow::Result<Vec<FeatureRow>> {
    let (rec, meta) = read_recording(stem)?;
    let rois = detect_bursts(&rec, &cfg.detector)?;
    let truth = meta.truth();
    if !truth.is_empty() {
        let m = match_rois(&rois, &truth, 2 * cfg.detector.window);
        info!(
            "{}: {} ROIs, {} of {} annotated bursts hit, {} missed, {} extra",
            rec.id(),
            rois.len(),
            m.hits,
            truth.len(),
            m.misses,
            m.false_alarms
        );
    }
    let labels = label_by_overlap(&rois, &truth);
    let rows: Vec<FeatureRow> = rois
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .filter(|(_, (roi, _))| roi.length >= MIN_ROI_LEN)
        .filter_map(|(i, (roi, label))| match extract(roi, &rec, &cfg.extraction) {
            Ok(vector) => Some(Ok(FeatureRow {
                session: rec.id().to_string(),
                roi_index: i,
                start_sample: roi.start_sample,
                length: roi.length,
                label: label.map(|t| truth[t].emitter_id.clone()),
                vector,
            })),
            Err(e @ Error::Extraction { .. }) => {
                warn!("{} ROI {i}: skipped: {e}", rec.id());
                None
            }
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<_, _>>()?;
    Ok(rows)
}

pub fn pipeline(ctx: &Context, dataset_dir: &Path) -> CmdResult {
    let cfg = ctx.config_or_default();
    cfg.detector.validate().map_err(usage)?;
    cfg.extraction.validate().map_err(usage)?;
    let stems = list_sessions(dataset_dir).map_err(usage)?;
    if stems.is_empty() {
        return Err(usage(anyhow!("no *.{} files in {}", dataset::META_EXT, dataset_dir.display())));
    }
    let results: Vec<anyhow::Result<Vec<FeatureRow>>> = stems.par_iter().map(|s| session_rows(s, &cfg)).collect();
    let mut rows = Vec::new();
    let mut failed = 0;
    for (stem, r) in stems.iter().zip(results) {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => {
                failed += 1;
                warn!("{}: {e:#}", stem.display());
            }
        }
    }
    if failed == stems.len() {
        return Err(Failure::Runtime(anyhow!("all {failed} session(s) failed")));
    }
    let catalog = cfg.extraction.catalog();
    let path = ctx.write("features.csv", &table::to_csv(&catalog, &rows)?)?;
    info!("{} feature rows from {} session(s), {failed} failed", rows.len(), stems.len() - failed);
    println!("{}", path.display());
    Ok(())
}

fn labeled(rows: &[FeatureRow]) -> BTreeMap<String, Vec<&FeatureRow>> {
    let mut by_label: BTreeMap<String, Vec<&FeatureRow>> = BTreeMap::new();
    for r in rows {
        if let Some(l) = &r.label {
            by_label.entry(l.clone()).or_default().push(r);
        }
    }
    by_label
}

fn read_rows(features: &Path, prefix: &str) -> Result<(FeatureCatalog, Vec<FeatureRow>), Failure> {
    let (catalog, mut rows) = table::read(features).map_err(usage)?;
    rows.retain(|r| r.session.starts_with(prefix));
    Ok((catalog, rows))
}

pub fn enroll(ctx: &Context, features: &Path, prefix: &str) -> CmdResult {
    let cfg = ctx.config_or_default();
    let params = &cfg.enrollment;
    let (catalog, rows) = read_rows(features, prefix)?;
    let by_label = labeled(&rows);
    if by_label.is_empty() {
        bail_runtime(anyhow!("{}: no labeled rows to enroll", features.display()))?;
    }
    let selection = match params.select_k {
        Some(k) if by_label.len() >= 2 => {
            let (vectors, labels): (Vec<_>, Vec<_>) = by_label
                .iter()
                .flat_map(|(l, rs)| rs.iter().map(move |r| (r.vector.clone(), l.as_str())))
                .unzip();
            fisher_select(&vectors, &labels, k.min(catalog.len())).context("feature selection")?
        }
        _ => FeatureSelection::all(catalog.len()),
    };
    let mut fps: Vec<DeviceFingerprint> = by_label
        .iter()
        .map(|(id, rs)| {
            let vectors: Vec<_> = rs.iter().map(|r| r.vector.clone()).collect();
            fit(id, &vectors, &selection, params.ridge_lambda).with_context(|| format!("enrolling {id}"))
        })
        .collect::<anyhow::Result<_>>()?;

    if fps.len() >= 2 {
        for fp in &mut fps {
            let mut genuine = Vec::new();
            let mut impostor = Vec::new();
            for (id, rs) in &by_label {
                for r in rs {
                    let d2 = check(&r.vector, fp)?.squared_distance;
                    if *id == fp.device_id { genuine.push(d2) } else { impostor.push(d2) }
                }
            }
            fp.threshold = calibrate_threshold(&genuine, &impostor, params.threshold_policy)?;
        }
    }
    let mut store = Vec::new();
    for fp in &fps {
        serde_json::to_writer(&mut store, fp).context("serializing fingerprint")?;
        store.push(b'\n');
    }
    let path = ctx.write("fingerprints.jsonl", &store)?;
    info!("enrolled {} device(s) on {} feature(s)", fps.len(), selection.len());
    println!("{}", path.display());
    Ok(())
}

fn bail_runtime(e: anyhow::Error) -> CmdResult {
    Err(Failure::Runtime(e))
}

fn load_store(path: &Path) -> Result<BTreeMap<String, DeviceFingerprint>, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let mut store = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fp: DeviceFingerprint = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", path.display(), i + 1))
            .map_err(usage)?;
        fp.validate()
            .with_context(|| format!("{} line {}", path.display(), i + 1))
            .map_err(usage)?;
        store.insert(fp.device_id.clone(), fp);
    }
    if store.is_empty() {
        return Err(usage(anyhow!("{}: empty fingerprint store", path.display())));
    }
    Ok(store)
}

pub fn verify(ctx: &Context, features: &Path, store: &Path, claim: Option<&str>, prefix: &str) -> CmdResult {
    let store = load_store(store)?;
    let (_, rows) = read_rows(features, prefix)?;
    let known = || store.keys().cloned().collect::<Vec<_>>().join(", ");
    if let Some(c) = claim {
        if !store.contains_key(c) {
            return Err(usage(anyhow!("unknown claimed id {c:?} (enrolled: {})", known())));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["session", "roi_index", "claimed_id", "squared_distance", "threshold", "accepted"])
        .context("csv")?;
    for r in &rows {
        let Some(claimed) = claim.or(r.label.as_deref()) else {
            warn!("{} ROI {}: no label and no --claim; skipped", r.session, r.roi_index);
            continue;
        };
        let fp = store
            .get(claimed)
            .ok_or_else(|| usage(anyhow!("unknown claimed id {claimed:?} (enrolled: {})", known())))?;
        let d = check(&r.vector, fp)?;
        w.write_record([
            r.session.clone(),
            r.roi_index.to_string(),
            d.claimed_id,
            d.squared_distance.to_string(),
            d.threshold_used.to_string(),
            d.accepted.to_string(),
        ])
        .context("csv")?;
    }
    let path = ctx.write("decisions.csv", &w.into_inner().context("csv")?)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct Metrics {
    eer: f64,
    eer_threshold: f64,
    far_at: BTreeMap<String, f64>,
    frr_at: BTreeMap<String, f64>,
    n_genuine: usize,
    n_impostor: usize,
}

fn write_metrics(ctx: &Context, genuine: &[f64], impostor: &[f64]) -> CmdResult {
    if genuine.is_empty() || impostor.is_empty() {
        return bail_runtime(anyhow!(
            "need genuine and impostor scores (got {} and {})",
            genuine.len(),
            impostor.len()
        ));
    }
    let ev = evaluate(genuine, impostor)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "far", "frr"]).context("csv")?;
    for p in &ev.roc {
        w.write_record([p.threshold.to_string(), p.far.to_string(), p.frr.to_string()])
            .context("csv")?;
    }
    ctx.write("roc.csv", &w.into_inner().context("csv")?)?;
    let metrics = Metrics {
        eer: ev.eer,
        eer_threshold: ev.eer_threshold,
        far_at: ev.far_at,
        frr_at: ev.frr_at,
        n_genuine: genuine.len(),
        n_impostor: impostor.len(),
    };
    let path = ctx.write("metrics.json", &json_bytes(&metrics))?;
    println!("{}", path.display());
    println!("eer {}", metrics.eer);
    Ok(())
}

pub fn evaluate_features(ctx: &Context, features: &Path, store: &Path, prefix: &str) -> CmdResult {
    let store = load_store(store)?;
    let (_, rows) = read_rows(features, prefix)?;
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for r in rows.iter().filter(|r| r.label.is_some()) {
        for fp in store.values() {
            let d2 = check(&r.vector, fp)?.squared_distance;
            if r.label.as_deref() == Some(fp.device_id.as_str()) {
                genuine.push(d2);
            } else {
                impostor.push(d2);
            }
        }
    }
    write_metrics(ctx, &genuine, &impostor)
}

pub fn evaluate_scores(ctx: &Context, scores: &Path) -> CmdResult {
    let mut r = csv::Reader::from_path(scores)
        .with_context(|| format!("opening {}", scores.display()))
        .map_err(usage)?;
    let header: Vec<String> = r.headers().context("csv")?.iter().map(str::to_string).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(anyhow!("{}: missing column {name:?}", scores.display())))
    };
    let (si, gi) = (col("score")?, col("genuine")?);
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.context("csv").map_err(usage)?;
        let bad = |what: &str| usage(anyhow!("{} row {}: bad {what}", scores.display(), line + 1));
        let s: f64 = rec.get(si).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("score"))?;
        match rec.get(gi).map(str::trim) {
            Some("1" | "true") => genuine.push(s),
            Some("0" | "false") => impostor.push(s),
            _ => return Err(bad("genuine flag")),
        }
    }
    write_metrics(ctx, &genuine, &impostor)
}

#[derive(Serialize)]
struct BestConfig {
    receiver: ReceiverConfig,
    point: TuningPoint,
    objective: f64,
    evaluations: usize,
    strategy: Strategy,
}

pub fn tune(ctx: &Context) -> CmdResult {
    let cfg = ctx.config_or_default();
    let scenario = cfg.scenario().map_err(usage)?;
    let strategy = cfg.tuning.strategy.unwrap_or(Strategy::CoordinateDescent {
        max_rounds: 10,
        seed: scenario.seed,
    });
    let budget = cfg.tuning.budget.unwrap_or(scenario.grid.size());
    if budget == 0 {
        return Err(usage(anyhow!("tuning.budget must be >= 1")));
    }
    let plant = scenario.plant()?;
    let trace = control::tune(&plant, &scenario.grid, strategy, budget)?;
    ctx.write("trace.csv", trace.to_csv().as_bytes())?;
    let best = BestConfig {
        receiver: plant.config_at(trace.best_point),
        point: trace.best_point,
        objective: trace.best_value,
        evaluations: trace.steps.len(),
        strategy,
    };
    let path = ctx.write("best_config.json", &json_bytes(&best))?;
    info!(
        "best gain {} dB, bandwidth {} Hz, objective {} after {} evaluations",
        best.point.gain_db, best.point.filter_bw_hz, best.objective, best.evaluations
    );
    println!("{}", path.display());
    Ok(())
}

