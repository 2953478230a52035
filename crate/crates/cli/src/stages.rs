//! Pipeline stages. Each reads the previous stage's directory under the
//! workdir, writes its own, and finishes with a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use apnea_core::dataset::{build_windows, class_counts, load_dataset, save_dataset, stratified_split, LabeledWindow, SIDECAR_FILE, TENSOR_FILE};
use apnea_core::dsp::preprocess_recording;
use apnea_core::edf::{extract_channel, parse_edf, read_events_file, ApneaEvent, EegRecording, EventParseOptions};
use apnea_core::metrics::{confusion, emit_report, roc_auc, scalar_metrics, threshold_scores, ScalarMetrics};
use apnea_core::nn::{build_model, fit, load_checkpoint, predict, save_checkpoint, History, Model};
use apnea_core::resample::{balance_windows, ResampleReport};
use apnea_core::synth::synthesize;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SeedStream};
use crate::manifest::ManifestBuilder;

pub const SYNTH_DIR: &str = "synth";
pub const PREPROCESS_DIR: &str = "preprocess";
pub const DATASET_DIR: &str = "dataset";
pub const BALANCE_DIR: &str = "balance";
pub const TRAIN_DIR: &str = "train";
pub const EVALUATE_DIR: &str = "evaluate";

const RECORDINGS_FILE: &str = "recordings.json";
const CHECKPOINT_FILE: &str = "model.ckpt";
const HISTORY_FILE: &str = "history.csv";
const PREDICTIONS_FILE: &str = "predictions.csv";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Preprocess,
    BuildDataset,
    Balance,
    Train,
    Evaluate,
}

impl Stage {
    pub const PIPELINE: [Stage; 6] =
        [Stage::Synth, Stage::Preprocess, Stage::BuildDataset, Stage::Balance, Stage::Train, Stage::Evaluate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::BuildDataset => "build-dataset",
            Stage::Balance => "balance",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn dir(self) -> &'static str {
        match self {
            Stage::Synth => SYNTH_DIR,
            Stage::Preprocess => PREPROCESS_DIR,
            Stage::BuildDataset => DATASET_DIR,
            Stage::Balance => BALANCE_DIR,
            Stage::Train => TRAIN_DIR,
            Stage::Evaluate => EVALUATE_DIR,
        }
    }

    /// Runs the stage and returns a one-line summary.
    pub fn run(self, cfg: &RunConfig, workdir: &Path) -> Result<String> {
        let dir = workdir.join(self.dir());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        match self {
            Stage::Synth => synth(cfg, workdir, &dir),
            Stage::Preprocess => preprocess(cfg, workdir, &dir),
            Stage::BuildDataset => build_dataset(cfg, workdir, &dir),
            Stage::Balance => balance(cfg, workdir, &dir),
            Stage::Train => train(cfg, workdir, &dir),
            Stage::Evaluate => evaluate(cfg, workdir, &dir).map(|(s, _)| s),
        }
    }
}

fn dataset_files(dir: &Path) -> [PathBuf; 2] {
    [dir.join(SIDECAR_FILE), dir.join(TENSOR_FILE)]
}

fn load_windows(dir: &Path, hint: &str) -> Result<Vec<LabeledWindow>> {
    if !dir.join(SIDECAR_FILE).exists() {
        bail!("{} not found; run `{hint}` first", dir.display());
    }
    Ok(load_dataset(dir).with_context(|| format!("loading {}", dir.display()))?.windows)
}

fn synth(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<String> {
    let seed = cfg.stage_seed(SeedStream::Synth);
    let corpus = synthesize(&cfg.synth, seed)?;
    let (edf, events) = (dir.join("recording.edf"), dir.join("events.csv"));
    corpus.write(&edf, &events)?;
    let mut m = ManifestBuilder::new(workdir, Stage::Synth.name(), cfg.sha256(), Some(seed));
    m.outputs([edf, events])?;
    m.write(dir)?;
    Ok(format!(
        "synth: {:.0} s at {} Hz with {} events",
        cfg.synth.duration_s,
        cfg.synth.fs,
        corpus.events.len()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordingEntry {
    subject_id: String,
    channel: String,
    fs: f64,
    n_samples: usize,
    /// Little-endian f32 samples, relative to the stage directory.
    samples_file: String,
    /// The recording was constant and could not be standardized.
    degenerate: bool,
    events: Vec<ApneaEvent>,
    unknown_event_kinds: usize,
    skipped_event_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RecordingIndex {
    version: u32,
    recordings: Vec<RecordingEntry>,
}

fn input_recordings(cfg: &RunConfig, workdir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if cfg.uses_synth() {
        let d = workdir.join(SYNTH_DIR);
        let pair = (d.join("recording.edf"), d.join("events.csv"));
        if !pair.0.exists() {
            bail!("no EDF paths configured and {} missing; run `synth` first", pair.0.display());
        }
        return Ok(vec![pair]);
    }
    Ok(cfg.paths.edf.iter().cloned().zip(cfg.paths.events.iter().cloned()).collect())
}

fn preprocess(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<String> {
    let mut m = ManifestBuilder::new(workdir, Stage::Preprocess.name(), cfg.sha256(), None);
    let mut recordings = Vec::new();
    for (i, (edf_path, events_path)) in input_recordings(cfg, workdir)?.into_iter().enumerate() {
        let bytes = fs::read(&edf_path).with_context(|| format!("reading {}", edf_path.display()))?;
        let (header, signals) = parse_edf(&bytes).with_context(|| format!("parsing {}", edf_path.display()))?;
        let rec = extract_channel(&header, &signals, &cfg.paths.channel)
            .with_context(|| format!("{}", edf_path.display()))?;
        let opts = EventParseOptions { strict: false, recording_start: Some(header.start.time()) };
        let parsed = read_events_file(&events_path, &opts)
            .with_context(|| format!("reading {}", events_path.display()))?;
        if parsed.skipped_lines > 0 {
            log::warn!("{}: skipped {} unparsable lines", events_path.display(), parsed.skipped_lines);
        }
        let pre = preprocess_recording(&rec, &cfg.preprocess)?;
        if pre.degenerate {
            log::warn!("{}: constant signal, left unscaled", edf_path.display());
        }
        let samples_file = format!("rec_{i:03}.f32");
        let blob: Vec<u8> = pre.recording.samples.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        fs::write(dir.join(&samples_file), blob)?;
        m.input(&edf_path)?;
        m.input(&events_path)?;
        m.output(&dir.join(&samples_file))?;
        recordings.push(RecordingEntry {
            subject_id: rec.subject_id,
            channel: rec.channel_label,
            fs: rec.fs,
            n_samples: pre.recording.samples.len(),
            samples_file,
            degenerate: pre.degenerate,
            events: parsed.events,
            unknown_event_kinds: parsed.unknown_kinds,
            skipped_event_lines: parsed.skipped_lines,
        });
    }
    let index = RecordingIndex { version: INDEX_VERSION, recordings };
    let index_path = dir.join(RECORDINGS_FILE);
    fs::write(&index_path, serde_json::to_string_pretty(&index)? + "\n")?;
    m.output(&index_path)?;
    m.write(dir)?;
    let events: usize = index.recordings.iter().map(|r| r.events.len()).sum();
    Ok(format!("preprocess: {} recording(s), {events} events", index.recordings.len()))
}

fn read_recordings(workdir: &Path) -> Result<(Vec<EegRecording>, Vec<Vec<ApneaEvent>>, Vec<PathBuf>)> {
    let dir = workdir.join(PREPROCESS_DIR);
    let index_path = dir.join(RECORDINGS_FILE);
    if !index_path.exists() {
        bail!("{} not found; run `preprocess` first", index_path.display());
    }
    let index: RecordingIndex = serde_json::from_slice(&fs::read(&index_path)?)?;
    ensure!(index.version == INDEX_VERSION, "recording index version {}", index.version);
    let (mut recs, mut events, mut files) = (Vec::new(), Vec::new(), vec![index_path]);
    for r in index.recordings {
        let path = dir.join(&r.samples_file);
        let blob = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        ensure!(blob.len() == 4 * r.n_samples, "{} holds {} bytes, expected {}", path.display(), blob.len(), 4 * r.n_samples);
        let samples = blob
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        recs.push(EegRecording { samples, fs: r.fs, channel_label: r.channel, subject_id: r.subject_id });
        events.push(r.events);
        files.push(path);
    }
    Ok((recs, events, files))
}

fn build_dataset(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<String> {
    let split_cfg = cfg.split_config();
    let mut m = ManifestBuilder::new(workdir, Stage::BuildDataset.name(), cfg.sha256(), Some(split_cfg.seed));
    let (recs, events, inputs) = read_recordings(workdir)?;
    m.inputs(inputs)?;
    let mut windows = Vec::new();
    for (rec, ev) in recs.iter().zip(&events) {
        windows.extend(build_windows(rec, ev, &cfg.windowing)?);
    }
    ensure!(!windows.is_empty(), "no windows could be cut from the recordings");
    let split = stratified_split(&windows, &split_cfg)?;
    for w in &split.provenance.warnings {
        log::warn!("split: {w:?}");
    }
    let (train_dir, valid_dir) = (dir.join("train"), dir.join("valid"));
    save_dataset(&split.train, &cfg.windowing, &train_dir)?;
    save_dataset(&split.valid, &cfg.windowing, &valid_dir)?;
    let split_path = dir.join("split.json");
    fs::write(&split_path, serde_json::to_string_pretty(&split.provenance)? + "\n")?;
    m.outputs(dataset_files(&train_dir))?;
    m.outputs(dataset_files(&valid_dir))?;
    m.output(&split_path)?;
    m.write(dir)?;
    let (tn, tp) = class_counts(&split.train);
    let (vn, vp) = class_counts(&split.valid);
    Ok(format!(
        "build-dataset: {} windows; train {tp} apnea / {tn} normal, valid {vp} apnea / {vn} normal",
        windows.len()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleSummary {
    pub enabled: bool,
    pub report: Option<ResampleReport>,
}

fn balance(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<String> {
    let rcfg = cfg.resample_config();
    let seed = cfg.resample.enabled.then_some(rcfg.seed);
    let mut m = ManifestBuilder::new(workdir, Stage::Balance.name(), cfg.sha256(), seed);
    let src = workdir.join(DATASET_DIR).join("train");
    let train = load_windows(&src, "build-dataset")?;
    m.inputs(dataset_files(&src))?;
    let (windows, report) = if cfg.resample.enabled {
        let (w, r) = balance_windows(train, &rcfg)?;
        (w, Some(r))
    } else {
        (train, None)
    };
    let out = dir.join("train");
    save_dataset(&windows, &cfg.windowing, &out)?;
    let summary = ResampleSummary { enabled: cfg.resample.enabled, report };
    let report_path = dir.join("resample_report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    m.outputs(dataset_files(&out))?;
    m.output(&report_path)?;
    m.write(dir)?;
    let (n, p) = class_counts(&windows);
    Ok(match &summary.report {
        Some(r) => format!(
            "balance: {p} apnea / {n} normal ({} synthetic, {} removed by link cleaning)",
            r.n_synthetic, r.n_links_removed
        ),
        None => format!("balance: disabled, {p} apnea / {n} normal"),
    })
}

fn train(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<String> {
    let tcfg = cfg.train_config();
    let init_seed = cfg.stage_seed(SeedStream::Init);
    let mut m = ManifestBuilder::new(workdir, Stage::Train.name(), cfg.sha256(), Some(tcfg.seed));
    let train_dir = workdir.join(BALANCE_DIR).join("train");
    let valid_dir = workdir.join(DATASET_DIR).join("valid");
    let train = load_windows(&train_dir, "balance")?;
    let valid = load_windows(&valid_dir, "build-dataset")?;
    m.inputs(dataset_files(&train_dir))?;
    m.inputs(dataset_files(&valid_dir))?;
    if let Some(w) = train.first() {
        ensure!(
            w.samples.len() == cfg.model.input_length,
            "windows hold {} samples, model expects {}",
            w.samples.len(),
            cfg.model.input_length
        );
    }
    let mut model: Model<f32> = build_model(&cfg.model, init_seed)?;
    log::info!(
        "train: {} parameters, {} training windows, {} validation windows",
        model.parameter_count(),
        train.len(),
        valid.len()
    );
    let history = fit(&mut model, &train, &valid, &tcfg)?;
    let (ckpt, hist) = (dir.join(CHECKPOINT_FILE), dir.join(HISTORY_FILE));
    save_checkpoint(&model, &ckpt)?;
    fs::write(&hist, history.to_csv())?;
    m.outputs([ckpt, hist])?;
    m.write(dir)?;
    let last = history.epochs.last().context("no epochs were run")?;
    Ok(format!(
        "train: {} epochs, final loss {:.4}, valid acc {:.4}",
        history.epochs.len(),
        last.train_loss,
        last.valid_acc
    ))
}

/// Writes `subject_id,window_start_s,label,probability` rows.
pub fn predictions_csv(windows: &[LabeledWindow], probs: &[f64]) -> String {
    let mut s = String::from("subject_id,window_start_s,label,probability\n");
    for (w, p) in windows.iter().zip(probs) {
        let _ = writeln!(s, "{},{},{},{p:.8}", w.subject_id, w.window_start_s, w.label);
    }
    s
}

pub(crate) fn evaluate(cfg: &RunConfig, workdir: &Path, dir: &Path) -> Result<(String, ScalarMetrics)> {
    let mut m = ManifestBuilder::new(workdir, Stage::Evaluate.name(), cfg.sha256(), None);
    let train_dir = workdir.join(TRAIN_DIR);
    let valid_dir = workdir.join(DATASET_DIR).join("valid");
    let (ckpt, hist) = (train_dir.join(CHECKPOINT_FILE), train_dir.join(HISTORY_FILE));
    if !ckpt.exists() {
        bail!("{} not found; run `train` first", ckpt.display());
    }
    let model: Model<f32> = load_checkpoint(&ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
    ensure!(
        *model.config() == cfg.model,
        "checkpoint architecture differs from the configured model"
    );
    let history = History::from_csv(&fs::read_to_string(&hist)?)?;
    let valid = load_windows(&valid_dir, "build-dataset")?;
    m.inputs([ckpt, hist])?;
    m.inputs(dataset_files(&valid_dir))?;

    let probs = predict(&model, &valid, cfg.train.batch_size)?;
    let labels: Vec<u8> = valid.iter().map(|w| w.label).collect();
    let cm = confusion(&labels, &threshold_scores(&probs, cfg.train.threshold))?;
    let metrics = scalar_metrics(&cm);
    let roc = match roc_auc(&labels, &probs) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("evaluate: no ROC curve: {e}");
            None
        }
    };
    let files = emit_report(&cm, &metrics, roc.as_ref(), &history, cfg.train.threshold, dir)?;
    let pred_path = dir.join(PREDICTIONS_FILE);
    fs::write(&pred_path, predictions_csv(&valid, &probs))?;
    m.output(&files.report_json)?;
    m.output(&files.history_csv)?;
    m.outputs(files.roc_csv)?;
    m.outputs(files.svgs)?;
    m.output(&pred_path)?;
    m.write(dir)?;
    let auc = roc.map_or("n/a".to_string(), |r| format!("{:.4}", r.auc));
    let line = format!(
        "evaluate: accuracy {:.4} mcc {:.4} kappa {:.4} f1 {:.4} recall {:.4} auc {auc} (tp {} fp {} fn {} tn {})",
        metrics.accuracy, metrics.mcc, metrics.kappa, metrics.f1, metrics.recall, cm.tp, cm.fp, cm.fn_, cm.tn
    );
    Ok((line, metrics))
}
