//! Deterministic synthetic EEG corpus with known apnea ground truth.
//!
//! The background is a sum of band-limited Gaussian noise components with
//! decreasing amplitude towards higher bands, plus white sensor noise and
//! mains interference. During an event the delta component is amplified
//! and the beta component attenuated, with raised-cosine ramps at both ends.

use std::f64::consts::PI;
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{apply_cascade, design_bandpass, DspError};
use crate::edf::{
    events_to_csv, physical_to_digital, write_edf, ApneaEvent, EdfError, EdfHeader, EventKind, SignalHeader,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Edf(#[from] EdfError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub fs: f64,
    pub n_events: usize,
    pub event_duration_s: f64,
    /// Events are placed inside distinct windows of this grid that have
    /// `context_s` of signal on both sides.
    pub window_s: f64,
    pub context_s: f64,
    /// Amplitude multiplier of the delta component during events.
    pub delta_gain: f64,
    /// Amplitude multiplier of the beta component during events.
    pub beta_gain: f64,
    /// Background power over white sensor noise power.
    pub snr_db: f64,
    /// Amplitude of the 50 Hz interference, microvolts.
    pub mains_uv: f64,
    pub ramp_s: f64,
    pub subject_id: String,
    pub channels: Vec<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            duration_s: 3600.0,
            fs: 128.0,
            n_events: 20,
            event_duration_s: 20.0,
            window_s: 30.0,
            context_s: 90.0,
            delta_gain: 2.5,
            beta_gain: 0.4,
            snr_db: 20.0,
            mains_uv: 10.0,
            ramp_s: 2.0,
            subject_id: "SYNTH01".into(),
            channels: vec!["C3-A2".into(), "C4-A1".into()],
        }
    }
}

/// Background components: band edges in Hz and RMS amplitude in microvolts.
const COMPONENTS: [(f64, f64, f64); 5] = [
    (0.5, 4.0, 25.0),
    (4.0, 8.0, 12.0),
    (8.0, 12.0, 10.0),
    (12.0, 16.0, 5.0),
    (16.0, 40.0, 4.0),
];
const DELTA: usize = 0;
const BETA: usize = 4;
const PHYS_RANGE_UV: f64 = 1000.0;
const WARMUP_S: f64 = 20.0;

impl SynthConfig {
    fn grid(&self) -> (usize, usize) {
        let n_grid = (self.duration_s / self.window_s).floor() as usize;
        let ctx = (self.context_s / self.window_s).ceil() as usize;
        (n_grid, ctx)
    }

    /// Grid windows eligible to hold an event.
    pub fn eligible_windows(&self) -> usize {
        let (n_grid, ctx) = self.grid();
        n_grid.saturating_sub(2 * ctx)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if !(self.fs > 0.0) || self.fs.fract() != 0.0 {
            return bad(format!("fs must be a positive integer, got {}", self.fs));
        }
        if self.fs <= 2.0 * 50.0 + 1.0 {
            return bad("fs must leave the 50 Hz interference below Nyquist".into());
        }
        if !(self.duration_s > 0.0) || !(self.window_s > 0.0) || !(self.context_s >= 0.0) {
            return bad("duration, window and context must be positive".into());
        }
        if !(self.event_duration_s > 0.0 && self.event_duration_s <= self.window_s) {
            return bad(format!(
                "event duration {} must be in (0, window_s = {}]",
                self.event_duration_s, self.window_s
            ));
        }
        if self.n_events > self.eligible_windows() {
            return bad(format!(
                "{} events requested but only {} grid windows can hold one",
                self.n_events,
                self.eligible_windows()
            ));
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        if self.delta_gain < 0.0 || self.beta_gain < 0.0 || self.ramp_s < 0.0 {
            return bad("gains and ramp must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub header: EdfHeader,
    pub signals: Vec<Vec<i16>>,
    pub events: Vec<ApneaEvent>,
}

impl SynthCorpus {
    pub fn edf_bytes(&self) -> Result<Vec<u8>, SynthError> {
        Ok(write_edf(&self.header, &self.signals)?)
    }

    pub fn events_csv(&self) -> String {
        events_to_csv(&self.events)
    }

    pub fn write(&self, edf_path: &Path, events_path: &Path) -> Result<(), SynthError> {
        std::fs::write(edf_path, self.edf_bytes()?)?;
        std::fs::write(events_path, self.events_csv())?;
        Ok(())
    }
}

fn place_events(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<ApneaEvent> {
    let (_, ctx) = cfg.grid();
    let mut slots: Vec<usize> = sample(rng, cfg.eligible_windows(), cfg.n_events).into_vec();
    slots.sort_unstable();
    let slack = cfg.window_s - cfg.event_duration_s;
    slots
        .into_iter()
        .map(|k| {
            let offset = if slack > 0.0 { rng.random_range(0.0..slack) } else { 0.0 };
            let onset = (((ctx + k) as f64 * cfg.window_s + offset) * 100.0).floor() / 100.0;
            let kind = EventKind::ALL[rng.random_range(0..EventKind::ALL.len())];
            ApneaEvent { onset_s: onset, duration_s: cfg.event_duration_s, kind }
        })
        .collect()
}

/// 1 inside events, 0 outside, raised-cosine ramps inside the event edges.
fn event_envelope(events: &[ApneaEvent], n: usize, fs: f64, ramp_s: f64) -> Vec<f64> {
    let mut env = vec![0.0f64; n];
    for e in events {
        let i0 = (e.onset_s * fs).round() as usize;
        let i1 = ((e.end_s() * fs).round() as usize).min(n);
        let ramp = ramp_s.min(e.duration_s / 2.0) * fs;
        for (i, v) in env.iter_mut().enumerate().take(i1).skip(i0) {
            let d = ((i - i0) as f64).min((i1 - 1 - i) as f64);
            let w = if ramp > 0.0 && d < ramp { 0.5 - 0.5 * (PI * d / ramp).cos() } else { 1.0 };
            *v = (*v).max(w);
        }
    }
    env
}

fn band_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, lo: f64, hi: f64) -> Result<Vec<f64>, SynthError> {
    let warm = (WARMUP_S * fs) as usize;
    let white: Vec<f64> = (0..n + warm).map(|_| rng.sample(StandardNormal)).collect();
    let cascade = design_bandpass(lo, hi, fs, 2)?;
    let mut y = apply_cascade(&cascade, &white)?.split_off(warm);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    y.iter_mut().for_each(|v| *v /= rms);
    Ok(y)
}

/// Generates the corpus for `seed`; identical inputs give identical bytes.
pub fn synthesize(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = place_events(cfg, &mut rng);
    let spr = cfg.fs as usize;
    let n_records = cfg.duration_s.ceil() as usize;
    let n = n_records * spr;
    let env = event_envelope(&events, n, cfg.fs, cfg.ramp_s);

    let signal_header = |label: &str| SignalHeader {
        label: label.to_string(),
        transducer: "AgAgCl electrode".into(),
        physical_dimension: "uV".into(),
        phys_min: -PHYS_RANGE_UV,
        phys_max: PHYS_RANGE_UV,
        dig_min: -32768,
        dig_max: 32767,
        prefiltering: "None".into(),
        samples_per_record: spr,
        reserved: String::new(),
    };
    let headers: Vec<SignalHeader> = cfg.channels.iter().map(|c| signal_header(c)).collect();
    let background_rms = COMPONENTS.iter().map(|c| c.2 * c.2).sum::<f64>().sqrt();
    let white_sd = background_rms * 10f64.powf(-cfg.snr_db / 20.0);

    let mut signals = Vec::with_capacity(headers.len());
    for h in &headers {
        let mut x = vec![0.0; n];
        for (b, &(lo, hi, amp)) in COMPONENTS.iter().enumerate() {
            let gain = match b {
                DELTA => cfg.delta_gain,
                BETA => cfg.beta_gain,
                _ => 1.0,
            };
            let noise = band_noise(&mut rng, n, cfg.fs, lo, hi)?;
            for i in 0..n {
                x[i] += amp * noise[i] * (1.0 + (gain - 1.0) * env[i]);
            }
        }
        let phase = rng.random_range(0.0..2.0 * PI);
        for (i, v) in x.iter_mut().enumerate() {
            let w: f64 = rng.sample(StandardNormal);
            *v += white_sd * w + cfg.mains_uv * (2.0 * PI * 50.0 * i as f64 / cfg.fs + phase).sin();
        }
        let cal = h.calibration();
        signals.push(x.iter().map(|&v| physical_to_digital(v, &cal) as i16).collect());
    }

    let start = NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(22, 0, 0))
        .expect("valid fixed date");
    let header = EdfHeader::new(
        format!("{} X X X", cfg.subject_id),
        format!("Startdate 01-JAN-2000 synthetic seed {seed}"),
        start,
        n_records,
        1.0,
        headers,
    );
    Ok(SynthCorpus { header, signals, events })
}
