mod common;

use std::fs;

use common::{apnea, snapshot, TINY_CONFIG};

const STAGES: [&str; 6] = ["synth", "preprocess", "build-dataset", "balance", "train", "evaluate"];

#[test]
fn stages_compose_to_run_all_byte_for_byte() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.json");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();

    let one_shot = root.path().join("one");
    let o = apnea(&one_shot, &["--config", cfg, "run-all"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let staged = root.path().join("staged");
    for s in STAGES {
        let o = apnea(&staged, &["--config", cfg, s]);
        assert_eq!(o.status.code(), Some(0), "{s}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let a = snapshot(&one_shot);
    let b = snapshot(&staged);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(b[k] == *v, "{k} differs");
    }
    for s in ["synth", "preprocess", "dataset", "balance", "train", "evaluate"] {
        assert!(a.contains_key(&format!("{s}/manifest.json")), "{s}");
    }
    for f in ["report.json", "roc.csv", "history.csv", "predictions.csv", "accuracy.svg", "roc.svg", "confusion.svg"] {
        assert!(a.contains_key(&format!("evaluate/{f}")), "{f}");
    }
    assert!(a.contains_key("train/model.ckpt"));

    // Rerunning a stage rewrites identical bytes.
    let o = apnea(&staged, &["--config", cfg, "train"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(snapshot(&staged), b);
}

#[test]
fn manifests_chain_hashes_and_report_parses() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("config.json");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let wd = root.path().join("w");
    let o = apnea(&wd, &["--config", cfg.to_str().unwrap(), "--set", "resample.enabled=false", "run-all"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let manifest = |s: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(wd.join(s).join("manifest.json")).unwrap()).unwrap()
    };
    let dataset = manifest("dataset");
    let balance = manifest("balance");
    let train = manifest("train");
    assert_eq!(
        dataset["outputs"]["dataset/train/dataset.f32"],
        balance["inputs"]["dataset/train/dataset.f32"]
    );
    // Disabled balancing passes the tensor through unchanged.
    assert_eq!(balance["outputs"]["balance/train/dataset.f32"], dataset["outputs"]["dataset/train/dataset.f32"]);
    assert!(balance["seed"].is_null());
    assert_eq!(balance["outputs"]["balance/train/dataset.f32"], train["inputs"]["balance/train/dataset.f32"]);
    let hashes: Vec<serde_json::Value> = ["synth", "preprocess", "dataset", "balance", "train", "evaluate"]
        .iter()
        .map(|s| manifest(s)["config_sha256"].clone())
        .collect();
    assert!(hashes.windows(2).all(|w| w[0] == w[1]));

    let report: serde_json::Value = serde_json::from_slice(&fs::read(wd.join("evaluate/report.json")).unwrap()).unwrap();
    assert_eq!(report["version"], 1);
    assert_eq!(report["epochs"], 2);
    for k in ["accuracy", "precision", "recall", "f1", "mcc", "kappa"] {
        assert!(report["metrics"][k].is_number(), "{k}");
    }
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(wd.join("balance/resample_report.json")).unwrap()).unwrap();
    assert_eq!(summary["enabled"], false);
}
