//! Synthetic corpus through parsing, preprocessing, windowing, splitting
//! and balancing.

use apnea_core::dataset::{build_windows, class_counts, load_dataset, save_dataset, stratified_split, SplitConfig, WindowingConfig};
use apnea_core::dsp::{preprocess_recording, PreprocessConfig};
use apnea_core::edf::{extract_channel, parse_edf, parse_events, EventParseOptions};
use apnea_core::resample::{balance_windows, ResampleConfig};
use apnea_core::synth::{synthesize, SynthConfig};

fn corpus_windows() -> Vec<apnea_core::dataset::LabeledWindow> {
    let cfg = SynthConfig { duration_s: 1800.0, n_events: 14, ..SynthConfig::default() };
    let corpus = synthesize(&cfg, 9).unwrap();
    let (header, signals) = parse_edf(&corpus.edf_bytes().unwrap()).unwrap();
    let rec = extract_channel(&header, &signals, "C3-A2").unwrap();
    assert_eq!(rec.subject_id, "SYNTH01");
    let opts = EventParseOptions { strict: true, recording_start: Some(header.start.time()) };
    let events = parse_events(&corpus.events_csv(), &opts).unwrap().events;
    assert_eq!(events, corpus.events);
    let pre = preprocess_recording(&rec, &PreprocessConfig::default()).unwrap();
    build_windows(&pre.recording, &events, &WindowingConfig::default()).unwrap()
}

#[test]
fn window_count_and_labels_follow_the_grid() {
    let w = corpus_windows();
    // 1800 s / 30 s windows, minus three on each side for the context.
    assert_eq!(w.len(), 60 - 6);
    assert_eq!(class_counts(&w).1, 14);
    assert!(w.iter().all(|w| w.samples.len() == 26_880));
}

#[test]
fn balancing_touches_only_the_training_split() {
    let windows = corpus_windows();
    let split = stratified_split(&windows, &SplitConfig { train_fraction: 0.8, seed: 4, subject_wise: false }).unwrap();
    let valid_before = split.valid.clone();
    let (n0, p0) = class_counts(&split.train);
    let (balanced, report) = balance_windows(split.train, &ResampleConfig::default()).unwrap();
    assert_eq!(split.valid, valid_before);
    assert_eq!(report.n_synthetic, n0 - p0);
    assert_eq!(balanced.len(), 2 * n0 - report.n_links_removed);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&balanced, &WindowingConfig::default(), dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap().windows, balanced);
}
