use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn rffp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rffp")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn session(stem: &str, n: usize, offset: usize) -> Value {
    let fs = 200_000.0;
    let entries: Vec<Value> = (0..n)
        .map(|i| {
            let id = ["tx-a", "tx-b"][(i + offset) % 2];
            json!({
                "emitter_id": id,
                "start_time_s": (256 + i * 3072) as f64 / fs,
                "payload_bits": "1".repeat(128),
            })
        })
        .collect();
    json!({"stem": stem, "schedule": {"session_duration_s": (256 + n * 3072) as f64 / fs, "entries": entries}})
}

fn config() -> Value {
    json!({
        "seed": 99,
        "profiles": [
            {"emitter_id": "tx-a", "cfo_hz": -1000.0, "iq_gain_imbalance": 0.95, "iq_phase_imbalance_rad": -0.05,
             "phase_noise_linewidth_hz": 20.0, "pa_a1": [0.95, 0.0], "pa_a3": [-0.02, 0.0],
             "ramp_up_samples": 30, "ramp_down_samples": 20},
            {"emitter_id": "tx-b", "cfo_hz": 1000.0, "iq_gain_imbalance": 1.05, "iq_phase_imbalance_rad": 0.05,
             "phase_noise_linewidth_hz": 60.0, "pa_a1": [1.0, 0.0], "pa_a3": [-0.06, 0.0],
             "ramp_up_samples": 60, "ramp_down_samples": 40}
        ],
        "render": {"sample_rate_hz": 200000.0,
                   "modulation": {"samples_per_symbol": 8, "tone_depth": 0.6, "tone_freq_hz": 6250.0}},
        "sessions": [session("enroll-000", 60, 0), session("probe-000", 60, 1)],
        "channel": {"snr_db": 20.0, "multipath_taps": [], "path_loss_db": 0.0},
        "receiver": {"gain_db": 0.0, "filter_bw_hz": 200000.0, "adc_bits": 12, "full_scale": 2.0},
        "detector": {"window": 32, "open_threshold_db": 6.0, "close_threshold_db": 3.0,
                     "min_length": 128, "merge_gap": 32}
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

/// Synthesizes and runs the pipeline; returns (dataset dir, features.csv).
fn dataset(dir: &Path, cfg: &Path) -> (PathBuf, PathBuf) {
    let ds = dir.join("ds");
    let o = rffp(&["synth", "--config", p(cfg), "--out", p(&ds)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let feat = dir.join("feat");
    let o = rffp(&["pipeline", "--config", p(cfg), "--dataset", p(&ds), "--out", p(&feat)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (ds, feat.join("features.csv"))
}

#[test]
fn synth_pipeline_enroll_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config());
    let (ds, features) = dataset(dir.path(), &cfg);

    let names: Vec<String> = files(&ds).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        names,
        ["enroll-000.sigmf-data", "enroll-000.sigmf-meta", "manifest.json", "probe-000.sigmf-data", "probe-000.sigmf-meta"]
    );

    // One row per burst, allowing a couple of missed or extra detections.
    let table = std::fs::read_to_string(&features).unwrap();
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("session,roi_index,start_sample,length,label,amp_mean,"));
    let rows = table.lines().count() - 1;
    assert!((116..=124).contains(&rows), "{rows} rows for 120 bursts");

    let store = dir.path().join("store");
    let o = rffp(&["enroll", "--features", p(&features), "--session-prefix", "enroll-", "--out", p(&store)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let store_file = store.join("fingerprints.jsonl");
    assert_eq!(std::fs::read_to_string(&store_file).unwrap().lines().count(), 2);

    let ev = dir.path().join("ev");
    let o = rffp(&[
        "evaluate", "--features", p(&features), "--store", p(&store_file), "--session-prefix", "probe-", "--out", p(&ev),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics: Value = serde_json::from_slice(&std::fs::read(ev.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["eer"].as_f64().unwrap() <= 0.05, "{metrics}");
    let roc = std::fs::read_to_string(ev.join("roc.csv")).unwrap();
    assert!(roc.starts_with("threshold,far,frr\n"));

    let vf = dir.path().join("vf");
    let o = rffp(&["verify", "--features", p(&features), "--store", p(&store_file), "--session-prefix", "probe-", "--out", p(&vf)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let decisions = std::fs::read_to_string(vf.join("decisions.csv")).unwrap();
    assert!(decisions.starts_with("session,roi_index,claimed_id,squared_distance,threshold,accepted\n"));
    let accepted = decisions.lines().skip(1).filter(|l| l.ends_with(",true")).count();
    assert!(accepted as f64 >= 0.9 * (decisions.lines().count() - 1) as f64);

    let o = rffp(&["verify", "--features", p(&features), "--store", p(&store_file), "--claim", "tx-z", "--out", p(&vf)]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("tx-z"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config());
    let (ds, features) = dataset(dir.path(), &cfg);
    let again = dir.path().join("again");
    let o = rffp(&["synth", "--config", p(&cfg), "--out", p(&again)]);
    assert_eq!(code(&o), 0);
    assert_eq!(files(&ds), files(&again));

    let feat2 = dir.path().join("feat2");
    let o = rffp(&["pipeline", "--config", p(&cfg), "--dataset", p(&again), "--out", p(&feat2), "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&features).unwrap(), std::fs::read(feat2.join("features.csv")).unwrap());

    let other = dir.path().join("other");
    let o = rffp(&["synth", "--config", p(&cfg), "--out", p(&other), "--seed-override", "100"]);
    assert_eq!(code(&o), 0);
    assert_ne!(files(&ds), files(&other));
}

#[test]
fn enrolled_mean_verifies_at_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config());
    let (_, features) = dataset(dir.path(), &cfg);
    let store = dir.path().join("store");
    let o = rffp(&["enroll", "--features", p(&features), "--out", p(&store)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = std::fs::read_to_string(store.join("fingerprints.jsonl")).unwrap();
    let fp: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    let mean: Vec<String> = fp["mean"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap().to_string()).collect();

    let table = std::fs::read_to_string(&features).unwrap();
    let probe = format!("{}\nprobe,0,0,100,,{}\n", table.lines().next().unwrap(), mean.join(","));
    let probe_path = dir.path().join("probe.csv");
    std::fs::write(&probe_path, probe).unwrap();
    let id = fp["device_id"].as_str().unwrap();
    let o = rffp(&[
        "verify", "--features", p(&probe_path), "--store", p(&store.join("fingerprints.jsonl")), "--claim", id,
        "--out", p(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let decisions = std::fs::read_to_string(dir.path().join("decisions.csv")).unwrap();
    let row: Vec<&str> = decisions.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3], "0");
    assert_eq!(row[5], "true");
}

#[test]
fn catalog_mismatch_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config());
    let (ds, features) = dataset(dir.path(), &cfg);
    let store = dir.path().join("store");
    assert_eq!(code(&rffp(&["enroll", "--features", p(&features), "--out", p(&store)])), 0);

    let mut shallow = config();
    shallow["extraction"] = json!({"wpd_depth": 2});
    let cfg2 = write_config(dir.path(), "c2.json", &shallow);
    let feat2 = dir.path().join("feat2");
    assert_eq!(code(&rffp(&["pipeline", "--config", p(&cfg2), "--dataset", p(&ds), "--out", p(&feat2)])), 0);
    let o = rffp(&[
        "verify", "--features", p(&feat2.join("features.csv")), "--store", p(&store.join("fingerprints.jsonl")),
        "--out", p(dir.path()),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("catalog"), "{}", stderr(&o));
}

#[test]
fn evaluate_scores_mode() {
    let dir = tempfile::tempdir().unwrap();
    let scores = dir.path().join("s.csv");
    std::fs::write(&scores, "score,genuine\n1,1\n2,1\n3,1\n10,0\n11,0\n").unwrap();
    let o = rffp(&["evaluate", "--scores", p(&scores), "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["eer"], json!(0.0));

    // Sweep by hand: at t = 2.5 FAR = FRR = 1/3.
    std::fs::write(&scores, "score,genuine\n1,1\n2,1\n3,1\n2.5,0\n4,0\n5,0\n").unwrap();
    assert_eq!(code(&rffp(&["evaluate", "--scores", p(&scores), "--out", p(dir.path())])), 0);
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert!((m["eer"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(m["n_genuine"], json!(3));

    std::fs::write(&scores, "score,genuine\n1,maybe\n").unwrap();
    assert_eq!(code(&rffp(&["evaluate", "--scores", p(&scores), "--out", p(dir.path())])), 2);
}

fn tune_with_grid(dir: &Path, gains: &[f64], bws: &[f64], strategy: Value) -> Output {
    let cfg = json!({
        "seed": 5,
        "tuning": {"grid": {"gain_db_values": gains, "filter_bw_hz_values": bws}, "strategy": strategy}
    });
    let path = write_config(dir, "tune.json", &cfg);
    rffp(&["tune", "--config", p(&path), "--out", p(dir)])
}

#[test]
fn tune_traces() {
    let dir = tempfile::tempdir().unwrap();
    let o = tune_with_grid(dir.path(), &[30.0], &[40_000.0], json!({"kind": "exhaustive"}));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 2);

    let gains = [0.0, 15.0, 30.0, 45.0, 60.0];
    let bws = [10_000.0, 20_000.0, 50_000.0, 100_000.0, 200_000.0];
    let o = tune_with_grid(dir.path(), &gains, &bws, json!({"kind": "exhaustive"}));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,gain_db,filter_bw_hz,objective,snr_est_db,clip_ratio,n_rois,is_best\n"));
    assert_eq!(trace.lines().count(), 26);
    assert_eq!(trace.lines().skip(1).filter(|l| l.ends_with(",1")).count(), 1);
    let best: Value = serde_json::from_slice(&std::fs::read(dir.path().join("best_config.json")).unwrap()).unwrap();
    assert_eq!(best["evaluations"], json!(25));

    let o = tune_with_grid(dir.path(), &[], &bws, json!({"kind": "exhaustive"}));
    assert_eq!(code(&o), 2);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.as_object_mut().unwrap().remove("seed");
    let path = write_config(dir.path(), "noseed.json", &cfg);
    let o = rffp(&["synth", "--config", p(&path), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("seed"));
    assert!(!dir.path().join("x").exists());

    let mut cfg = config();
    cfg["sessions"][0]["schedule"]["entries"][0]["emitter_id"] = json!("ghost");
    let path = write_config(dir.path(), "ghost.json", &cfg);
    let o = rffp(&["synth", "--config", p(&path), "--out", p(&dir.path().join("y"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("ghost"));

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(code(&rffp(&["pipeline", "--dataset", p(&empty), "--out", p(dir.path())])), 2);
    assert_eq!(code(&rffp(&["bogus"])), 2);
    assert_eq!(code(&rffp(&["synth"])), 2);
}

#[test]
fn unreadable_session_is_tolerated_unless_all_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &config());
    let (ds, _) = dataset(dir.path(), &cfg);
    std::fs::write(ds.join("enroll-000.sigmf-data"), [0u8; 7]).unwrap();
    let out = dir.path().join("o1");
    assert_eq!(code(&rffp(&["pipeline", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&out)])), 0);
    std::fs::write(ds.join("probe-000.sigmf-data"), [0u8; 7]).unwrap();
    let out = dir.path().join("o2");
    assert_eq!(code(&rffp(&["pipeline", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&out)])), 1);
    assert!(!out.join("features.csv").exists());
}
