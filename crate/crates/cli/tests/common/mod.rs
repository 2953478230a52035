// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn apnea(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apnea"))
        .args(args)
        .env("APNEA_WORKDIR", workdir)
        .env_remove("APNEA_LOG")
        .output()
        .expect("spawn apnea")
}

/// Short windows, a small network and a 15 minute corpus.
pub const TINY_CONFIG: &str = r#"{
  "seed": 3,
  "synth": {"duration_s": 900, "n_events": 20, "event_duration_s": 8, "window_s": 10, "context_s": 5},
  "windowing": {"window_s": 10, "context_s": 5, "min_overlap_s": 5},
  "split": {"train_fraction": 0.75},
  "model": {
    "input_length": 2560,
    "conv_blocks": [
      {"filters": 4, "kernel": 9, "pool": 4},
      {"filters": 4, "kernel": 5, "pool": 4},
      {"filters": 4, "kernel": 3, "pool": 4},
      {"filters": 4, "kernel": 3, "pool": 4}
    ],
    "dense_units": 8
  },
  "train": {"epochs": 2, "batch_size": 16}
}"#;

/// Every file under `root` keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let key = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
