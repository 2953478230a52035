//! EDF ingestion and respiratory-event annotations.
//!
//! Only the plain EDF subset is supported: a fixed ASCII header, contiguous
//! data records and 16-bit little-endian two's-complement samples. EDF+
//! annotation channels are not interpreted.
//!
//! Header layout (byte offsets into the first 256 bytes):
//!
//! ```text
//!   0  version (8)        8  patient id (80)     88  recording id (80)
//! 168  start date (8)   176  start time (8)     184  header bytes (8)
//! 192  reserved (44)    236  n records (8)      244  record duration (8)
//! 252  n signals (4)
//! ```
//!
//! followed by `n_signals` blocks of per-signal fields stored field-major
//! (all labels, then all transducers, ...), 256 bytes per signal in total.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const FIXED_HEADER_BYTES: usize = 256;
const SIGNAL_HEADER_BYTES: usize = 256;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("truncated EDF file: need {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("malformed header field `{field}`: {value:?}")]
    MalformedHeader { field: String, value: String },
    #[error("channel `{label}` not found; available: {available:?}")]
    ChannelNotFound { label: String, available: Vec<String> },
    #[error("channel `{label}` matches {count} signals")]
    AmbiguousChannel { label: String, count: usize },
    #[error("signal {signal} has {actual} samples, header implies {expected}")]
    InconsistentLengths {
        signal: usize,
        expected: usize,
        actual: usize,
    },
    #[error("value {value:?} does not fit the {width}-byte field `{field}`")]
    FieldOverflow {
        field: String,
        value: String,
        width: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn malformed(field: impl Into<String>, value: impl Into<String>) -> EdfError {
    EdfError::MalformedHeader {
        field: field.into(),
        value: value.into(),
    }
}

/// Per-signal header block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    pub fn calibration(&self) -> Calibration {
        Calibration {
            phys_min: self.phys_min,
            phys_max: self.phys_max,
            dig_min: self.dig_min,
            dig_max: self.dig_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    /// Start of recording. EDF stores a two-digit year; years 1985..=2084
    /// are representable.
    pub start: NaiveDateTime,
    pub header_bytes: usize,
    pub reserved: String,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    /// Header for freshly generated data; `header_bytes` is derived from the
    /// signal count.
    pub fn new(
        patient_id: impl Into<String>,
        recording_id: impl Into<String>,
        start: NaiveDateTime,
        n_records: usize,
        record_duration_s: f64,
        signals: Vec<SignalHeader>,
    ) -> Self {
        Self {
            version: "0".to_string(),
            patient_id: patient_id.into(),
            recording_id: recording_id.into(),
            start,
            header_bytes: expected_header_bytes(signals.len()),
            reserved: String::new(),
            n_records,
            record_duration_s,
            signals,
        }
    }

    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    /// Bytes occupied by one data record.
    pub fn record_bytes(&self) -> usize {
        2 * self
            .signals
            .iter()
            .map(|s| s.samples_per_record)
            .sum::<usize>()
    }

    fn validate(&self) -> Result<(), EdfError> {
        if self.header_bytes != expected_header_bytes(self.signals.len()) {
            return Err(malformed("header_bytes", self.header_bytes.to_string()));
        }
        if !(self.record_duration_s > 0.0) {
            return Err(malformed(
                "record_duration",
                self.record_duration_s.to_string(),
            ));
        }
        for (i, s) in self.signals.iter().enumerate() {
            if s.dig_min >= s.dig_max {
                return Err(malformed(
                    format!("signal[{i}].digital_range"),
                    format!("{}..{}", s.dig_min, s.dig_max),
                ));
            }
            if s.phys_min == s.phys_max {
                return Err(malformed(
                    format!("signal[{i}].physical_range"),
                    format!("{}..{}", s.phys_min, s.phys_max),
                ));
            }
            if s.samples_per_record == 0 {
                return Err(malformed(format!("signal[{i}].samples_per_record"), "0"));
            }
        }
        Ok(())
    }
}

pub fn expected_header_bytes(n_signals: usize) -> usize {
    FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * n_signals
}

/// Linear map between a signal's digital and physical ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
}

pub fn digital_to_physical(d: i32, cal: &Calibration) -> f64 {
    cal.phys_min
        + (f64::from(d) - f64::from(cal.dig_min)) * (cal.phys_max - cal.phys_min)
            / (f64::from(cal.dig_max) - f64::from(cal.dig_min))
}

/// Inverse of [`digital_to_physical`], rounded and clamped to the digital range.
pub fn physical_to_digital(p: f64, cal: &Calibration) -> i32 {
    let d = f64::from(cal.dig_min)
        + (p - cal.phys_min) * (f64::from(cal.dig_max) - f64::from(cal.dig_min))
            / (cal.phys_max - cal.phys_min);
    d.round()
        .clamp(f64::from(cal.dig_min), f64::from(cal.dig_max)) as i32
}

/// A single EEG channel in physical units (microvolts).
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecording {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub channel_label: String,
    pub subject_id: String,
}

impl EegRecording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn field(&mut self, name: &str, width: usize) -> Result<&'a str, EdfError> {
        let raw = &self.bytes[self.pos..self.pos + width];
        self.pos += width;
        if !raw.is_ascii() {
            return Err(malformed(name, String::from_utf8_lossy(raw)));
        }
        // ASCII is valid UTF-8.
        Ok(std::str::from_utf8(raw).expect("ascii").trim_end_matches([' ', '\0']))
    }

    fn text(&mut self, name: &str, width: usize) -> Result<String, EdfError> {
        self.field(name, width).map(str::to_string)
    }

    fn number<T: FromStr>(&mut self, name: &str, width: usize) -> Result<T, EdfError> {
        let s = self.field(name, width)?;
        s.trim().parse().map_err(|_| malformed(name, s))
    }
}

fn parse_start(date: &str, time: &str) -> Result<NaiveDateTime, EdfError> {
    let parts = |s: &str, field: &str| -> Result<[u32; 3], EdfError> {
        let v: Vec<u32> = s
            .split('.')
            .map(|p| p.trim().parse::<u32>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(field, s))?;
        <[u32; 3]>::try_from(v).map_err(|_| malformed(field, s))
    };
    let [dd, mm, yy] = parts(date, "start_date")?;
    let [h, m, s] = parts(time, "start_time")?;
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy } as i32;
    let d = NaiveDate::from_ymd_opt(year, mm, dd).ok_or_else(|| malformed("start_date", date))?;
    let t = NaiveTime::from_hms_opt(h, m, s).ok_or_else(|| malformed("start_time", time))?;
    Ok(d.and_time(t))
}

/// Decode an EDF byte buffer into its header and per-signal digital samples.
///
/// Each returned signal is the concatenation of that signal's samples across
/// all data records. Bytes beyond the last declared record are ignored.
pub fn parse_edf(bytes: &[u8]) -> Result<(EdfHeader, Vec<Vec<i16>>), EdfError> {
    if bytes.len() < FIXED_HEADER_BYTES {
        return Err(EdfError::Truncated {
            expected: FIXED_HEADER_BYTES,
            actual: bytes.len(),
        });
    }
    let mut c = Cursor { bytes, pos: 0 };
    let version = c.text("version", 8)?;
    let patient_id = c.text("patient_id", 80)?;
    let recording_id = c.text("recording_id", 80)?;
    let date = c.field("start_date", 8)?;
    let time = c.field("start_time", 8)?;
    let start = parse_start(date, time)?;
    let header_bytes: usize = c.number("header_bytes", 8)?;
    let reserved = c.text("reserved", 44)?;
    let n_records: i64 = c.number("n_records", 8)?;
    let record_duration_s: f64 = c.number("record_duration", 8)?;
    let n_signals: usize = c.number("n_signals", 4)?;

    if header_bytes != expected_header_bytes(n_signals) {
        return Err(malformed("header_bytes", header_bytes.to_string()));
    }
    if n_records < 0 {
        return Err(malformed("n_records", n_records.to_string()));
    }
    if bytes.len() < header_bytes {
        return Err(EdfError::Truncated {
            expected: header_bytes,
            actual: bytes.len(),
        });
    }

    let mut texts = |name: &str, width: usize| -> Result<Vec<String>, EdfError> {
        (0..n_signals)
            .map(|i| c.text(&format!("signal[{i}].{name}"), width))
            .collect()
    };
    let labels = texts("label", 16)?;
    let transducers = texts("transducer", 80)?;
    let dims = texts("physical_dimension", 8)?;
    let mut numbers = |name: &str| -> Result<Vec<String>, EdfError> {
        (0..n_signals)
            .map(|i| c.text(&format!("signal[{i}].{name}"), 8))
            .collect()
    };
    let phys_min = numbers("physical_minimum")?;
    let phys_max = numbers("physical_maximum")?;
    let dig_min = numbers("digital_minimum")?;
    let dig_max = numbers("digital_maximum")?;
    let prefiltering = (0..n_signals)
        .map(|i| c.text(&format!("signal[{i}].prefiltering"), 80))
        .collect::<Result<Vec<_>, _>>()?;
    let spr = (0..n_signals)
        .map(|i| c.text(&format!("signal[{i}].samples_per_record"), 8))
        .collect::<Result<Vec<_>, _>>()?;
    let sig_reserved = (0..n_signals)
        .map(|i| c.text(&format!("signal[{i}].reserved"), 32))
        .collect::<Result<Vec<_>, _>>()?;

    fn num<T: FromStr>(field: String, s: &str) -> Result<T, EdfError> {
        s.trim().parse().map_err(|_| malformed(field, s))
    }

    let mut signals = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        signals.push(SignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dimension: dims[i].clone(),
            phys_min: num(format!("signal[{i}].physical_minimum"), &phys_min[i])?,
            phys_max: num(format!("signal[{i}].physical_maximum"), &phys_max[i])?,
            dig_min: num(format!("signal[{i}].digital_minimum"), &dig_min[i])?,
            dig_max: num(format!("signal[{i}].digital_maximum"), &dig_max[i])?,
            prefiltering: prefiltering[i].clone(),
            samples_per_record: num(format!("signal[{i}].samples_per_record"), &spr[i])?,
            reserved: sig_reserved[i].clone(),
        });
    }

    let header = EdfHeader {
        version,
        patient_id,
        recording_id,
        start,
        header_bytes,
        reserved,
        n_records: n_records as usize,
        record_duration_s,
        signals,
    };
    header.validate()?;

    let expected = header_bytes + header.n_records * header.record_bytes();
    if bytes.len() < expected {
        return Err(EdfError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }

    let mut data: Vec<Vec<i16>> = header
        .signals
        .iter()
        .map(|s| Vec::with_capacity(s.samples_per_record * header.n_records))
        .collect();
    let mut pos = header_bytes;
    for _ in 0..header.n_records {
        for (sig, out) in header.signals.iter().zip(data.iter_mut()) {
            let chunk = &bytes[pos..pos + 2 * sig.samples_per_record];
            out.extend(
                chunk
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]])),
            );
            pos += chunk.len();
        }
    }
    Ok((header, data))
}

fn put_text(
    out: &mut Vec<u8>,
    field: &str,
    value: &str,
    width: usize,
) -> Result<(), EdfError> {
    if !value.is_ascii() || value.len() > width {
        return Err(EdfError::FieldOverflow {
            field: field.to_string(),
            value: value.to_string(),
            width,
        });
    }
    out.extend_from_slice(value.as_bytes());
    out.resize(out.len() + width - value.len(), b' ');
    Ok(())
}

/// Shortest decimal form of `v` that fits in `width` characters. Exact when
/// the shortest round-trip representation fits; otherwise precision is
/// dropped until it does.
fn format_real(v: f64, width: usize) -> Option<String> {
    let s = format!("{v}");
    if s.len() <= width {
        return Some(s);
    }
    (0..width).rev().find_map(|decimals| {
        let s = format!("{v:.decimals$}");
        (s.len() <= width).then_some(s)
    })
}

fn put_real(out: &mut Vec<u8>, field: &str, v: f64, width: usize) -> Result<(), EdfError> {
    let s = format_real(v, width).ok_or_else(|| EdfError::FieldOverflow {
        field: field.to_string(),
        value: v.to_string(),
        width,
    })?;
    put_text(out, field, &s, width)
}

/// Encode a header and per-signal digital samples as EDF bytes.
pub fn write_edf(header: &EdfHeader, signals: &[Vec<i16>]) -> Result<Vec<u8>, EdfError> {
    header.validate()?;
    if signals.len() != header.n_signals() {
        return Err(malformed("n_signals", signals.len().to_string()));
    }
    for (i, (sig, data)) in header.signals.iter().zip(signals).enumerate() {
        let expected = sig.samples_per_record * header.n_records;
        if data.len() != expected {
            return Err(EdfError::InconsistentLengths {
                signal: i,
                expected,
                actual: data.len(),
            });
        }
    }
    let year = header.start.year();
    if !(1985..=2084).contains(&year) {
        return Err(EdfError::FieldOverflow {
            field: "start_date".into(),
            value: header.start.to_string(),
            width: 8,
        });
    }

    let mut out =
        Vec::with_capacity(header.header_bytes + header.n_records * header.record_bytes());
    put_text(&mut out, "version", &header.version, 8)?;
    put_text(&mut out, "patient_id", &header.patient_id, 80)?;
    put_text(&mut out, "recording_id", &header.recording_id, 80)?;
    let s = header.start;
    let date = format!("{:02}.{:02}.{:02}", s.day(), s.month(), year % 100);
    let time = format!("{:02}.{:02}.{:02}", s.hour(), s.minute(), s.second());
    put_text(&mut out, "start_date", &date, 8)?;
    put_text(&mut out, "start_time", &time, 8)?;
    put_text(&mut out, "header_bytes", &header.header_bytes.to_string(), 8)?;
    put_text(&mut out, "reserved", &header.reserved, 44)?;
    put_text(&mut out, "n_records", &header.n_records.to_string(), 8)?;
    put_real(&mut out, "record_duration", header.record_duration_s, 8)?;
    put_text(&mut out, "n_signals", &header.n_signals().to_string(), 4)?;

    let sigs = &header.signals;
    for s in sigs {
        put_text(&mut out, "label", &s.label, 16)?;
    }
    for s in sigs {
        put_text(&mut out, "transducer", &s.transducer, 80)?;
    }
    for s in sigs {
        put_text(&mut out, "physical_dimension", &s.physical_dimension, 8)?;
    }
    for s in sigs {
        put_real(&mut out, "physical_minimum", s.phys_min, 8)?;
    }
    for s in sigs {
        put_real(&mut out, "physical_maximum", s.phys_max, 8)?;
    }
    for s in sigs {
        put_text(&mut out, "digital_minimum", &s.dig_min.to_string(), 8)?;
    }
    for s in sigs {
        put_text(&mut out, "digital_maximum", &s.dig_max.to_string(), 8)?;
    }
    for s in sigs {
        put_text(&mut out, "prefiltering", &s.prefiltering, 80)?;
    }
    for s in sigs {
        put_text(
            &mut out,
            "samples_per_record",
            &s.samples_per_record.to_string(),
            8,
        )?;
    }
    for s in sigs {
        put_text(&mut out, "reserved", &s.reserved, 32)?;
    }
    debug_assert_eq!(out.len(), header.header_bytes);

    for r in 0..header.n_records {
        for (sig, data) in sigs.iter().zip(signals) {
            let n = sig.samples_per_record;
            for &v in &data[r * n..(r + 1) * n] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_edf_file(path: impl AsRef<Path>) -> Result<(EdfHeader, Vec<Vec<i16>>), EdfError> {
    parse_edf(&std::fs::read(path)?)
}

pub fn write_edf_file(
    path: impl AsRef<Path>,
    header: &EdfHeader,
    signals: &[Vec<i16>],
) -> Result<(), EdfError> {
    std::fs::write(path, write_edf(header, signals)?)?;
    Ok(())
}

/// Pull one channel out of a parsed file and convert it to physical units.
///
/// The subject id is the first whitespace-separated token of the patient
/// field (the EDF patient code), or `"unknown"` when the field is empty.
pub fn extract_channel(
    header: &EdfHeader,
    signals: &[Vec<i16>],
    label: &str,
) -> Result<EegRecording, EdfError> {
    let wanted = label.trim();
    let hits: Vec<usize> = header
        .signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.label.trim() == wanted)
        .map(|(i, _)| i)
        .collect();
    let idx = match hits.as_slice() {
        [i] => *i,
        [] => {
            return Err(EdfError::ChannelNotFound {
                label: wanted.to_string(),
                available: header
                    .signals
                    .iter()
                    .map(|s| s.label.trim().to_string())
                    .collect(),
            })
        }
        many => {
            return Err(EdfError::AmbiguousChannel {
                label: wanted.to_string(),
                count: many.len(),
            })
        }
    };
    let sig = &header.signals[idx];
    let cal = sig.calibration();
    let samples = signals[idx]
        .iter()
        .map(|&d| digital_to_physical(i32::from(d), &cal))
        .collect();
    let subject_id = header
        .patient_id
        .split_whitespace()
        .next()
        .unwrap_or("unknown")
        .to_string();
    Ok(EegRecording {
        samples,
        fs: sig.samples_per_record as f64 / header.record_duration_s,
        channel_label: sig.label.trim().to_string(),
        subject_id,
    })
}

/// Respiratory event categories counted as apnea.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    #[serde(rename = "APNEA-O")]
    ApneaObstructive,
    #[serde(rename = "APNEA-C")]
    ApneaCentral,
    #[serde(rename = "APNEA-M")]
    ApneaMixed,
    #[serde(rename = "HYP-O")]
    HypopneaObstructive,
    #[serde(rename = "HYP-C")]
    HypopneaCentral,
    #[serde(rename = "HYP-M")]
    HypopneaMixed,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::ApneaObstructive,
        EventKind::ApneaCentral,
        EventKind::ApneaMixed,
        EventKind::HypopneaObstructive,
        EventKind::HypopneaCentral,
        EventKind::HypopneaMixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::ApneaObstructive => "APNEA-O",
            EventKind::ApneaCentral => "APNEA-C",
            EventKind::ApneaMixed => "APNEA-M",
            EventKind::HypopneaObstructive => "HYP-O",
            EventKind::HypopneaCentral => "HYP-C",
            EventKind::HypopneaMixed => "HYP-M",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApneaEvent {
    pub onset_s: f64,
    pub duration_s: f64,
    pub kind: EventKind,
}

impl ApneaEvent {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line_no}: {reason}: {line:?}")]
    UnparsableLine {
        line_no: usize,
        line: String,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct EventParseOptions {
    /// Fail on the first unparsable line instead of skipping it.
    pub strict: bool,
    /// Needed to resolve `HH:MM:SS` lines into offsets.
    pub recording_start: Option<NaiveTime>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedEvents {
    /// Sorted by onset.
    pub events: Vec<ApneaEvent>,
    pub unknown_kinds: usize,
    pub skipped_lines: usize,
}

enum LineOutcome {
    Event(ApneaEvent),
    UnknownKind,
    Ignore,
}

fn parse_line(line: &str, opts: &EventParseOptions) -> Result<LineOutcome, String> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(LineOutcome::Ignore);
    }
    let (onset_s, kind_tok, duration_s) = if line.contains(',') {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err("expected onset_s,duration_s,kind".into());
        }
        if fields[0].eq_ignore_ascii_case("onset_s") {
            return Ok(LineOutcome::Ignore);
        }
        let onset: f64 = fields[0].parse().map_err(|_| "bad onset")?;
        let dur: f64 = fields[1].parse().map_err(|_| "bad duration")?;
        (onset, fields[2], dur)
    } else {
        let mut tokens = line.split_whitespace();
        let clock = tokens.next().unwrap_or_default();
        let t = NaiveTime::parse_from_str(clock, "%H:%M:%S").map_err(|_| "bad clock time")?;
        let start = opts
            .recording_start
            .ok_or("clock-time line needs the recording start time")?;
        let mut offset = (t - start).num_seconds();
        if offset < 0 {
            // Recording crossed midnight.
            offset += 86_400;
        }
        let kind = tokens.next().ok_or("missing event kind")?;
        // Layouts differ in what sits between kind and duration; the first
        // numeric token after the kind is the duration.
        let dur = tokens
            .find_map(|t| t.parse::<f64>().ok())
            .ok_or("missing duration")?;
        (offset as f64, kind, dur)
    };
    if !(onset_s >= 0.0) || !onset_s.is_finite() {
        return Err("onset must be >= 0".into());
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err("duration must be > 0".into());
    }
    Ok(match kind_tok.parse::<EventKind>() {
        Ok(kind) => LineOutcome::Event(ApneaEvent {
            onset_s,
            duration_s,
            kind,
        }),
        Err(()) => LineOutcome::UnknownKind,
    })
}

/// Parse respiratory-event annotations.
///
/// Two line layouts are accepted and may be mixed:
/// CSV `onset_s,duration_s,kind` (optional header line) and clock-time
/// `HH:MM:SS <kind> ... <duration_s> ...`, resolved against
/// [`EventParseOptions::recording_start`]. Unknown kinds are always skipped
/// and counted.
pub fn parse_events(text: &str, opts: &EventParseOptions) -> Result<ParsedEvents, EventError> {
    let mut parsed = ParsedEvents::default();
    for (i, line) in text.lines().enumerate() {
        match parse_line(line, opts) {
            Ok(LineOutcome::Event(e)) => parsed.events.push(e),
            Ok(LineOutcome::UnknownKind) => parsed.unknown_kinds += 1,
            Ok(LineOutcome::Ignore) => {}
            Err(reason) if opts.strict => {
                return Err(EventError::UnparsableLine {
                    line_no: i + 1,
                    line: line.to_string(),
                    reason,
                })
            }
            Err(reason) => {
                log::warn!("skipping event line {}: {reason}", i + 1);
                parsed.skipped_lines += 1;
            }
        }
    }
    parsed.events.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));
    if parsed.unknown_kinds > 0 {
        log::warn!("skipped {} events of unknown kind", parsed.unknown_kinds);
    }
    Ok(parsed)
}

pub fn read_events_file(
    path: impl AsRef<Path>,
    opts: &EventParseOptions,
) -> Result<ParsedEvents, EventError> {
    parse_events(&std::fs::read_to_string(path)?, opts)
}

/// Canonical CSV layout, with header line.
pub fn events_to_csv(events: &[ApneaEvent]) -> String {
    let mut s = String::from("onset_s,duration_s,kind\n");
    for e in events {
        s.push_str(&format!("{},{},{}\n", e.onset_s, e.duration_s, e.kind));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn start() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2002, 3, 14)
            .unwrap()
            .and_hms_opt(23, 5, 9)
            .unwrap()
    }

    fn eeg_signal(label: &str, spr: usize) -> SignalHeader {
        SignalHeader {
            label: label.into(),
            transducer: "AgAgCl electrode".into(),
            physical_dimension: "uV".into(),
            phys_min: -1000.0,
            phys_max: 1000.0,
            dig_min: -32768,
            dig_max: 32767,
            prefiltering: "HP:0.1Hz".into(),
            samples_per_record: spr,
            reserved: String::new(),
        }
    }

    #[test]
    fn minimal_file_size() {
        let h = EdfHeader::new("S01", "rec", start(), 1, 1.0, vec![eeg_signal("C3-A2", 128)]);
        let bytes = write_edf(&h, &[vec![0; 128]]).unwrap();
        assert_eq!(bytes.len(), 512 + 2 * 128);
        let (h2, s2) = parse_edf(&bytes).unwrap();
        assert_eq!(h2, h);
        assert_eq!(s2, vec![vec![0i16; 128]]);
    }

    #[test]
    fn zero_records_is_header_only() {
        let h = EdfHeader::new("S01", "rec", start(), 0, 1.0, vec![eeg_signal("C3-A2", 128)]);
        let bytes = write_edf(&h, &[vec![]]).unwrap();
        assert_eq!(bytes.len(), 512);
        let (h2, s2) = parse_edf(&bytes).unwrap();
        assert_eq!(h2.n_records, 0);
        assert!(s2[0].is_empty());
    }

    #[test]
    fn short_input_is_truncated() {
        assert!(matches!(
            parse_edf(&[b' '; 100]),
            Err(EdfError::Truncated { actual: 100, .. })
        ));
    }

    #[test]
    fn missing_data_is_truncated() {
        let h = EdfHeader::new("S01", "rec", start(), 2, 1.0, vec![eeg_signal("C3-A2", 4)]);
        let bytes = write_edf(&h, &[vec![1; 8]]).unwrap();
        let err = parse_edf(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, EdfError::Truncated { expected, .. } if expected == bytes.len()));
    }

    #[test]
    fn header_bytes_must_match_signal_count() {
        let h = EdfHeader::new(
            "S01",
            "rec",
            start(),
            1,
            1.0,
            vec![eeg_signal("C3-A2", 2), eeg_signal("C4-A1", 2)],
        );
        let mut bytes = write_edf(&h, &[vec![1, 2], vec![3, 4]]).unwrap();
        assert!(parse_edf(&bytes).is_ok());
        assert_eq!(&bytes[184..192], b"768     ");
        bytes[184..192].copy_from_slice(b"512     ");
        match parse_edf(&bytes) {
            Err(EdfError::MalformedHeader { field, .. }) => assert_eq!(field, "header_bytes"),
            other => panic!("expected MalformedHeader, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_is_reported() {
        let h = EdfHeader::new("S01", "rec", start(), 1, 1.0, vec![eeg_signal("C3-A2", 2)]);
        let mut bytes = write_edf(&h, &[vec![1, 2]]).unwrap();
        bytes[236..244].copy_from_slice(b"abc     ");
        match parse_edf(&bytes) {
            Err(EdfError::MalformedHeader { field, value }) => {
                assert_eq!(field, "n_records");
                assert_eq!(value, "abc");
            }
            other => panic!("expected MalformedHeader, got {other:?}"),
        }
    }

    #[test]
    fn calibration_endpoints_and_zero() {
        let cal = eeg_signal("x", 1).calibration();
        assert_eq!(digital_to_physical(-32768, &cal), -1000.0);
        assert_eq!(digital_to_physical(32767, &cal), 1000.0);
        // -1000 + 32768 * 2000 / 65535
        let expected = -1000.0 + 32768.0 * 2000.0 / 65535.0;
        assert!((digital_to_physical(0, &cal) - expected).abs() < 1e-12);
        assert!((expected - 0.01526).abs() < 1e-5);
    }

    #[test]
    fn calibration_midpoint_is_affine() {
        let cal = Calibration {
            phys_min: -200.0,
            phys_max: 600.0,
            dig_min: -100,
            dig_max: 300,
        };
        assert!((digital_to_physical(100, &cal) - 200.0).abs() < 1e-12);
        assert_eq!(physical_to_digital(200.0, &cal), 100);
    }

    #[test]
    fn extract_channel_picks_one_signal() {
        let h = EdfHeader::new(
            "S07 M 01-JAN-1960",
            "rec",
            start(),
            2,
            1.0,
            vec![eeg_signal("C3-A2", 128), eeg_signal("C4-A1", 128)],
        );
        let c3: Vec<i16> = (0..256).map(|i| i as i16).collect();
        let c4: Vec<i16> = (0..256).map(|i| -(i as i16)).collect();
        let bytes = write_edf(&h, &[c3.clone(), c4]).unwrap();
        let (h, s) = parse_edf(&bytes).unwrap();
        let rec = extract_channel(&h, &s, " C3-A2 ").unwrap();
        assert_eq!(rec.fs, 128.0);
        assert_eq!(rec.channel_label, "C3-A2");
        assert_eq!(rec.subject_id, "S07");
        assert_eq!(rec.samples.len(), 256);
        let cal = h.signals[0].calibration();
        for (x, d) in rec.samples.iter().zip(&c3) {
            assert_eq!(*x, digital_to_physical(i32::from(*d), &cal));
        }
        match extract_channel(&h, &s, "XYZ") {
            Err(EdfError::ChannelNotFound { available, .. }) => {
                assert_eq!(available, vec!["C3-A2", "C4-A1"])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_labels_are_ambiguous() {
        let h = EdfHeader::new(
            "S01",
            "rec",
            start(),
            1,
            1.0,
            vec![eeg_signal("C3-A2", 1), eeg_signal("C3-A2", 1)],
        );
        let err = extract_channel(&h, &[vec![0], vec![0]], "C3-A2").unwrap_err();
        assert!(matches!(err, EdfError::AmbiguousChannel { count: 2, .. }));
    }

    #[test]
    fn write_rejects_inconsistent_lengths() {
        let h = EdfHeader::new("S01", "rec", start(), 2, 1.0, vec![eeg_signal("C3-A2", 4)]);
        assert!(matches!(
            write_edf(&h, &[vec![0; 7]]),
            Err(EdfError::InconsistentLengths {
                expected: 8,
                actual: 7,
                ..
            })
        ));
    }

    #[test]
    fn csv_event_line() {
        let p = parse_events("30.0,15.0,APNEA-O", &Default::default()).unwrap();
        assert_eq!(
            p.events,
            vec![ApneaEvent {
                onset_s: 30.0,
                duration_s: 15.0,
                kind: EventKind::ApneaObstructive
            }]
        );
    }

    #[test]
    fn empty_event_file() {
        let p = parse_events("", &Default::default()).unwrap();
        assert!(p.events.is_empty());
    }

    #[test]
    fn events_are_sorted_and_unknown_kinds_counted() {
        let text = "onset_s,duration_s,kind\n90,12,HYP-C\n10,20,apnea-c\n50,11,SNORE\n";
        let p = parse_events(text, &Default::default()).unwrap();
        let onsets: Vec<f64> = p.events.iter().map(|e| e.onset_s).collect();
        assert_eq!(onsets, vec![10.0, 90.0]);
        assert_eq!(p.unknown_kinds, 1);
    }

    #[test]
    fn lenient_skips_and_strict_fails() {
        let text = "10,20,APNEA-O\nlights off at 22:00\n";
        let p = parse_events(text, &Default::default()).unwrap();
        assert_eq!(p.events.len(), 1);
        assert_eq!(p.skipped_lines, 1);
        let strict = EventParseOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(
            parse_events(text, &strict),
            Err(EventError::UnparsableLine { line_no: 2, .. })
        ));
    }

    #[test]
    fn clock_time_lines_resolve_against_start() {
        let opts = EventParseOptions {
            strict: true,
            recording_start: NaiveTime::from_hms_opt(23, 59, 0),
        };
        let text = "23:59:30 APNEA-O 15\n00:01:00 HYP-M PB 22 89.0 3\n";
        let p = parse_events(text, &opts).unwrap();
        assert_eq!(p.events[0].onset_s, 30.0);
        assert_eq!(p.events[0].duration_s, 15.0);
        assert_eq!(p.events[1].onset_s, 120.0);
        assert_eq!(p.events[1].duration_s, 22.0);
        assert_eq!(p.events[1].kind, EventKind::HypopneaMixed);
    }

    #[test]
    fn clock_time_without_start_is_unparsable() {
        let p = parse_events("00:01:00 HYP-O 12", &Default::default()).unwrap();
        assert_eq!(p.skipped_lines, 1);
    }

    fn arb_signal() -> impl Strategy<Value = SignalHeader> {
        (
            "[A-Z][A-Za-z0-9-]{0,14}",
            "[A-Za-z ]{0,20}[a-z]",
            (-5000i32..0, 1i32..5000),
            (-32768i32..0, 1i32..32767),
            1usize..16,
        )
            .prop_map(|(label, transducer, (pmin, pmax), (dmin, dmax), spr)| SignalHeader {
                label,
                transducer,
                physical_dimension: "uV".into(),
                phys_min: f64::from(pmin) / 4.0,
                phys_max: f64::from(pmax) / 4.0,
                dig_min: dmin,
                dig_max: dmax,
                prefiltering: String::new(),
                samples_per_record: spr,
                reserved: String::new(),
            })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            sigs in proptest::collection::vec(arb_signal(), 1..4),
            n_records in 0usize..5,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<Vec<i16>> = sigs
                .iter()
                .map(|s| (0..s.samples_per_record * n_records).map(|_| rng.random()).collect())
                .collect();
            let h = EdfHeader::new("P1 F", "Startdate X", start(), n_records, 0.5, sigs);
            let bytes = write_edf(&h, &data).unwrap();
            let (h2, d2) = parse_edf(&bytes).unwrap();
            prop_assert_eq!(h2, h);
            prop_assert_eq!(d2, data);
        }

        #[test]
        fn csv_reserialization_is_idempotent(
            raw in proptest::collection::vec((0u32..100_000, 1u32..600, 0usize..6), 0..20)
        ) {
            let events: Vec<ApneaEvent> = raw
                .iter()
                .map(|&(on, d, k)| ApneaEvent {
                    onset_s: f64::from(on) / 10.0,
                    duration_s: f64::from(d) / 10.0,
                    kind: EventKind::ALL[k],
                })
                .collect();
            let once = parse_events(&events_to_csv(&events), &Default::default()).unwrap();
            let twice = parse_events(&events_to_csv(&once.events), &Default::default()).unwrap();
            prop_assert_eq!(once.events.clone(), twice.events);
            prop_assert_eq!(once.events.len(), events.len());
        }
    }
}
