//! Binary classification metrics, ROC analysis and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::History;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-binary value {value} at index {index}")]
    NonBinaryInput { index: usize, value: u8 },
    #[error("ROC needs both classes; got {positives} positives and {negatives} negatives")]
    SingleClass { positives: usize, negatives: usize },
    #[error("non-finite score at index {index}")]
    NonFiniteScore { index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Counts with apnea (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same matrix with the class roles exchanged.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

fn check_binary(v: &[u8]) -> Result<()> {
    match v.iter().position(|&x| x > 1) {
        Some(index) => Err(MetricsError::NonBinaryInput { index, value: v[index] }),
        None => Ok(()),
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    check_binary(y_true)?;
    check_binary(y_pred)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Labels scores as positive when `score >= threshold`.
pub fn threshold_scores(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub f1: f64,
    pub mcc: f64,
    pub kappa: f64,
    /// Names of metrics whose denominator was zero and were reported as 0.
    pub degenerate: Vec<String>,
}

/// Standard metrics from a confusion matrix. A zero denominator yields 0
/// and the metric's name in `degenerate`.
pub fn scalar_metrics(cm: &ConfusionMatrix) -> ScalarMetrics {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let n = tp + fp + fn_ + tn;
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den == 0.0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let accuracy = ratio("accuracy", tp + tn, n);
    let precision = ratio("precision", tp, tp + fp);
    let recall = ratio("recall", tp, tp + fn_);
    let specificity = ratio("specificity", tn, tn + fp);
    let f1 = ratio("f1", 2.0 * tp, 2.0 * tp + fp + fn_);
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio("mcc", tp * tn - fp * fn_, mcc_den);
    let (po, pe) = if n > 0.0 {
        (accuracy, ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n))
    } else {
        (0.0, 1.0)
    };
    let kappa = ratio("kappa", po - pe, 1.0 - pe);
    ScalarMetrics { accuracy, precision, recall, specificity, f1, mcc, kappa, degenerate }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(0,0)` at threshold `+inf`, one point per unique score (descending,
    /// positive when `score >= threshold`), then `(1,1)` at `-inf`.
    pub points: Vec<RocPoint>,
    /// Trapezoidal area under `points`.
    pub auc: f64,
}

fn validate_scores(y_true: &[u8], scores: &[f64]) -> Result<(usize, usize)> {
    if y_true.len() != scores.len() {
        return Err(MetricsError::LengthMismatch { left: y_true.len(), right: scores.len() });
    }
    check_binary(y_true)?;
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index });
    }
    let positives = y_true.iter().filter(|&&t| t == 1).count();
    let negatives = y_true.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass { positives, negatives });
    }
    Ok((positives, negatives))
}

/// Groups of tied scores in descending order: `(score, positives, negatives)`.
fn tie_groups(y_true: &[u8], scores: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let (p, n) = (usize::from(y_true[i] == 1), usize::from(y_true[i] == 0));
        match groups.last_mut() {
            Some(g) if g.0 == scores[i] => {
                g.1 += p;
                g.2 += n;
            }
            _ => groups.push((scores[i], p, n)),
        }
    }
    groups
}

pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    let (pos, neg) = validate_scores(y_true, scores)?;
    let mut points = vec![RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, p, n) in tie_groups(y_true, scores) {
        tp += p;
        fp += n;
        points.push(RocPoint { threshold: s, fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (the normalized Mann-Whitney U statistic).
pub fn pair_statistic_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    let (pos, neg) = validate_scores(y_true, scores)?;
    let mut groups = tie_groups(y_true, scores);
    groups.reverse();
    // Twice the U statistic keeps the tie halves integral.
    let mut twice_u: u128 = 0;
    let mut neg_below: u128 = 0;
    for (_, p, n) in groups {
        twice_u += p as u128 * (2 * neg_below + n as u128);
        neg_below += n as u128;
    }
    Ok(twice_u as f64 / 2.0 / (pos as f64 * neg as f64))
}

pub const REPORT_VERSION: u32 = 1;

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub threshold: f64,
    pub confusion_matrix: ConfusionMatrix,
    pub metrics: ScalarMetrics,
    pub auc: Option<f64>,
    pub epochs: usize,
}

impl Report {
    /// Report with all scalars rounded to four decimals.
    pub fn new(
        cm: &ConfusionMatrix,
        metrics: &ScalarMetrics,
        roc: Option<&RocCurve>,
        history: &History,
        threshold: f64,
    ) -> Self {
        let m = metrics;
        Self {
            version: REPORT_VERSION,
            threshold,
            confusion_matrix: *cm,
            metrics: ScalarMetrics {
                accuracy: round4(m.accuracy),
                precision: round4(m.precision),
                recall: round4(m.recall),
                specificity: round4(m.specificity),
                f1: round4(m.f1),
                mcc: round4(m.mcc),
                kappa: round4(m.kappa),
                degenerate: m.degenerate.clone(),
            },
            auc: roc.map(|r| round4(r.auc)),
            epochs: history.epochs.len(),
        }
    }
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for p in &roc.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    s
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub report_json: PathBuf,
    pub roc_csv: Option<PathBuf>,
    pub history_csv: PathBuf,
    pub svgs: Vec<PathBuf>,
}

/// Writes `report.json`, `history.csv`, `accuracy.svg`, `confusion.svg`
/// and, when a ROC curve exists, `roc.csv` and `roc.svg` into `dir`.
pub fn emit_report(
    cm: &ConfusionMatrix,
    metrics: &ScalarMetrics,
    roc: Option<&RocCurve>,
    history: &History,
    threshold: f64,
    dir: &Path,
) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let report = Report::new(cm, metrics, roc, history, threshold);
    let report_json = dir.join("report.json");
    fs::write(&report_json, serde_json::to_string_pretty(&report)? + "\n")?;
    let history_csv = dir.join("history.csv");
    fs::write(&history_csv, history.to_csv())?;

    let mut svgs = Vec::new();
    let acc: Vec<(f64, f64)> = history.epochs.iter().map(|e| (e.epoch as f64, e.train_acc)).collect();
    let vacc: Vec<(f64, f64)> = history.epochs.iter().map(|e| (e.epoch as f64, e.valid_acc)).collect();
    let path = dir.join("accuracy.svg");
    fs::write(&path, line_plot("Accuracy", "epoch", "accuracy", &[("train", &acc), ("valid", &vacc)]))?;
    svgs.push(path);

    let mut roc_path = None;
    if let Some(r) = roc {
        let p = dir.join("roc.csv");
        fs::write(&p, roc_csv(r))?;
        roc_path = Some(p);
        let pts: Vec<(f64, f64)> = r.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        let chance = [(0.0, 0.0), (1.0, 1.0)];
        let title = format!("ROC (AUC {:.4})", r.auc);
        let path = dir.join("roc.svg");
        fs::write(&path, line_plot(&title, "false positive rate", "true positive rate", &[("model", &pts), ("chance", &chance)]))?;
        svgs.push(path);
    }
    let path = dir.join("confusion.svg");
    fs::write(&path, confusion_svg(cm))?;
    svgs.push(path);
    Ok(ReportFiles { report_json, roc_csv: roc_path, history_csv, svgs })
}

const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Minimal SVG line chart; axes are scaled to the data range.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &[(f64, f64)])]) -> String {
    let (w, h, m) = (480.0, 360.0, 50.0);
    let all = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, w / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text x="14" y="{c}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {c})">{}</text>"#,
        escape(ylabel),
        c = h / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", m, h - m + 16.0),
        (x1, "end", w - m, h - m + 16.0),
        (y0, "end", m - 4.0, h - m),
        (y1, "end", m - 4.0, m + 4.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="10">{v:.3}</text>"#);
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "));
        let ly = m + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="11" fill="{color}">{}</text>"#,
            w - m - 80.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// 2x2 heat map with truth on rows (apnea first) and prediction on columns.
pub fn confusion_svg(cm: &ConfusionMatrix) -> String {
    let cells = [[cm.tp, cm.fn_], [cm.fp, cm.tn]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut s = String::new();
    s.push_str(r#"<svg xmlns="http://www.w3.org/2000/svg" width="320" height="320" viewBox="0 0 320 320">"#);
    s.push('\n');
    s.push_str(r#"<text x="180" y="24" text-anchor="middle" font-size="13">predicted: apnea | normal</text>"#);
    s.push('\n');
    for (r, row) in cells.iter().enumerate() {
        let label = if r == 0 { "apnea" } else { "normal" };
        let y = 40 + 130 * r;
        let _ = writeln!(s, r#"<text x="20" y="{}" font-size="12" transform="rotate(-90 20 {})" text-anchor="middle">{label}</text>"#, y + 65, y + 65);
        for (c, &v) in row.iter().enumerate() {
            let x = 50 + 130 * c;
            let shade = 255 - (200.0 * v as f64 / max).round() as u8;
            let fg = if shade < 128 { "white" } else { "black" };
            let _ = writeln!(s, r#"<rect x="{x}" y="{y}" width="128" height="128" fill="rgb({shade},{shade},255)"/>"#);
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="18" fill="{fg}">{v}</text>"#, x + 64, y + 70);
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[1, 0], &[1, 0]).unwrap(), ConfusionMatrix::new(1, 0, 0, 1));
        assert_eq!(confusion(&[1, 1, 1, 0], &[0, 0, 0, 0]).unwrap().fn_, 3);
        assert!(matches!(confusion(&[1], &[1, 0]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[2], &[1]), Err(MetricsError::NonBinaryInput { index: 0, value: 2 })));
    }

    #[test]
    fn reproduces_reported_values_from_balanced_confusion_matrix() {
        let m = scalar_metrics(&ConfusionMatrix::new(88, 94, 216, 1682));
        assert!(close(m.accuracy, 0.8510, 5e-4));
        assert!(close(m.mcc, 0.2957, 5e-4));
        assert!(close(m.mcc, 0.296, 1e-3));
        assert!(close(m.kappa, 0.2837, 5e-4));
        assert!(close(m.f1, 0.3621, 5e-4));
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn unbalanced_confusion_matrix_accuracy() {
        let m = scalar_metrics(&ConfusionMatrix::new(31, 134, 273, 1642));
        assert!(close(m.accuracy, 1673.0 / 2080.0, 1e-12));
        assert!(close(m.accuracy, 0.8043, 1e-4));
    }

    #[test]
    fn all_negative_is_degenerate() {
        let m = scalar_metrics(&ConfusionMatrix::new(0, 0, 0, 10));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.mcc, 0.0);
        assert!(m.degenerate.contains(&"mcc".to_string()));
        assert!(m.degenerate.contains(&"kappa".to_string()));
        assert!(m.degenerate.contains(&"precision".to_string()));
    }

    #[test]
    fn roc_examples() {
        let r = roc_auc(&[0, 0, 1, 1], &[0.1, 0.2, 0.8, 0.9]).unwrap();
        assert_eq!(r.auc, 1.0);
        let r = roc_auc(&[0, 1, 0, 1], &[0.5; 4]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points.len(), 3);
        assert!(matches!(roc_auc(&[1, 1], &[0.1, 0.2]), Err(MetricsError::SingleClass { .. })));
    }

    fn brute_pairs(y: &[u8], s: &[f64]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1 && y[j] == 0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn six_element_mixed_case() {
        let y = [1, 0, 1, 0, 0, 1];
        let s = [0.9, 0.4, 0.4, 0.6, 0.1, 0.3];
        let want = brute_pairs(&y, &s);
        assert!(close(roc_auc(&y, &s).unwrap().auc, want, 1e-12));
        assert!(close(pair_statistic_auc(&y, &s).unwrap(), want, 1e-12));
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let cm = ConfusionMatrix::new(3, 1, 2, 4);
        let roc = roc_auc(&[1, 1, 0, 0, 1], &[0.9, 0.5, 0.5, 0.2, 0.1]).unwrap();
        let files = emit_report(&cm, &scalar_metrics(&cm), Some(&roc), &History::default(), 0.5, dir.path())
            .unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&files.report_json).unwrap()).unwrap();
        for k in ["accuracy", "precision", "recall", "f1", "mcc", "kappa"] {
            assert!(v["metrics"][k].is_number(), "{k}");
        }
        assert_eq!(v["confusion_matrix"]["fn"], 2);
        let rows = fs::read_to_string(files.roc_csv.unwrap()).unwrap().lines().count() - 1;
        assert_eq!(rows, 4 + 2);
        for svg in files.svgs {
            roxmltree::Document::parse(&fs::read_to_string(svg).unwrap()).unwrap();
        }
    }

    proptest! {
        #[test]
        fn auc_dual_computation_agrees(
            data in prop::collection::vec((0u8..2, 0u8..20), 2..60)
        ) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            let s: Vec<f64> = data.iter().map(|d| d.1 as f64 / 19.0).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let trap = roc_auc(&y, &s).unwrap().auc;
            let pair = pair_statistic_auc(&y, &s).unwrap();
            prop_assert!((trap - pair).abs() < 1e-9);
            prop_assert!((pair - brute_pairs(&y, &s)).abs() < 1e-9);
            // Strictly increasing transform keeps the area.
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp()).collect();
            prop_assert!((roc_auc(&y, &t).unwrap().auc - trap).abs() < 1e-12);
        }

        #[test]
        fn roc_is_monotone(data in prop::collection::vec((0u8..2, 0.0f64..1.0), 2..50)) {
            let y: Vec<u8> = data.iter().map(|d| d.0).collect();
            let s: Vec<f64> = data.iter().map(|d| d.1).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let r = roc_auc(&y, &s).unwrap();
            prop_assert_eq!((r.points[0].fpr, r.points[0].tpr), (0.0, 0.0));
            let last = r.points.last().unwrap();
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in r.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn metric_invariants(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            prop_assume!(cm.total() > 0);
            let m = scalar_metrics(&cm);
            prop_assert_eq!(m.accuracy, (tp + tn) as f64 / cm.total() as f64);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m.mcc));
            prop_assert!((scalar_metrics(&cm.swapped()).mcc - m.mcc).abs() < 1e-12);
            if m.precision > 0.0 && m.recall > 0.0 {
                let h = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1 - h).abs() < 1e-12);
            }
            // Kappa from marginals counted one element at a time.
            let n = cm.total() as f64;
            let (mut true_pos, mut pred_pos) = (0.0, 0.0);
            for _ in 0..tp { true_pos += 1.0; pred_pos += 1.0; }
            for _ in 0..fn_ { true_pos += 1.0; }
            for _ in 0..fp { pred_pos += 1.0; }
            let pe = (true_pos * pred_pos + (n - true_pos) * (n - pred_pos)) / (n * n);
            if (1.0f64 - pe).abs() > 0.0 {
                prop_assert!((m.kappa - (m.accuracy - pe) / (1.0 - pe)).abs() < 1e-9);
            }
            if fp == 0 && fn_ == 0 && tp > 0 && tn > 0 {
                prop_assert!((m.mcc - 1.0).abs() < 1e-12);
            }
        }
    }
}
