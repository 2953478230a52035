use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, sigmoid_bce, AdamConfig, AdamState, Mode, Model, NnError, Result, Scalar, Tensor};
use crate::dataset::LabeledWindow;
use crate::metrics::roc_auc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Seeds both the per-epoch shuffle and the dropout masks.
    pub seed: u64,
    pub shuffle: bool,
    /// Probability at or above which a window is predicted as apnea.
    pub threshold: f64,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 30,
            seed: 0,
            shuffle: true,
            threshold: 0.5,
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NnError::ConfigInvalid("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(NnError::ConfigInvalid(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub valid_loss: f64,
    pub valid_acc: f64,
    /// `None` when the validation set holds a single class.
    pub valid_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,valid_loss,valid_acc,valid_auc";

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for e in &self.epochs {
            let auc = e.valid_auc.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{auc}",
                e.epoch, e.train_loss, e.train_acc, e.valid_loss, e.valid_acc
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| NnError::ShapeMismatch(format!("history csv: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut epochs = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields in {line:?}")));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            epochs.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|e| bad(format!("{e}")))?,
                train_loss: num(f[1])?,
                train_acc: num(f[2])?,
                valid_loss: num(f[3])?,
                valid_acc: num(f[4])?,
                valid_auc: if f[5].trim().is_empty() { None } else { Some(num(f[5])?) },
            });
        }
        Ok(Self { epochs })
    }
}

fn batch_tensor<T: Scalar>(windows: &[&LabeledWindow]) -> Result<(Tensor<T>, Vec<T>)> {
    let rows: Vec<&[f32]> = windows.iter().map(|w| w.samples.as_slice()).collect();
    let x = Tensor::from_series(&rows)?;
    let t = windows.iter().map(|w| T::of_f64(f64::from(w.label))).collect();
    Ok((x, t))
}

/// Eval-mode logits for every window, computed `batch_size` at a time.
pub fn predict_logits<T: Scalar>(model: &Model<T>, windows: &[LabeledWindow], batch_size: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        let refs: Vec<&LabeledWindow> = chunk.iter().collect();
        let (x, _) = batch_tensor::<T>(&refs)?;
        out.extend(model.logits(&x)?.into_iter().map(Scalar::as_f64));
    }
    Ok(out)
}

/// Eval-mode apnea probabilities for every window.
pub fn predict<T: Scalar>(model: &Model<T>, windows: &[LabeledWindow], batch_size: usize) -> Result<Vec<f64>> {
    Ok(predict_logits(model, windows, batch_size)?.into_iter().map(sigmoid).collect())
}

fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let hits = probs.iter().zip(labels).filter(|(&p, &l)| u8::from(p >= threshold) == l).count();
    hits as f64 / labels.len().max(1) as f64
}

/// Mini-batch Adam training with per-epoch validation.
pub fn fit<T: Scalar>(
    model: &mut Model<T>,
    train: &[LabeledWindow],
    valid: &[LabeledWindow],
    cfg: &TrainConfig,
) -> Result<History> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.optimizer, model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let valid_labels: Vec<u8> = valid.iter().map(|w| w.label).collect();
    let valid_targets: Vec<f64> = valid_labels.iter().map(|&l| f64::from(l)).collect();
    let mut history = History::default();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let refs: Vec<&LabeledWindow> = idx.iter().map(|&i| &train[i]).collect();
            let (x, t) = batch_tensor::<T>(&refs)?;
            model.zero_grad();
            let p = model.forward(&x, Mode::Train, &mut rng)?;
            let loss = model.backward(&t)?;
            adam.apply(model)?;
            loss_sum += loss * idx.len() as f64;
            hits += p
                .iter()
                .zip(&refs)
                .filter(|(p, w)| u8::from(p.as_f64() >= cfg.threshold) == w.label)
                .count();
        }
        let logits = predict_logits(model, valid, cfg.batch_size)?;
        let (_, valid_loss) = sigmoid_bce(&logits, &valid_targets)?;
        let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: hits as f64 / train.len() as f64,
            valid_loss,
            valid_acc: accuracy(&probs, &valid_labels, cfg.threshold),
            valid_auc: roc_auc(&valid_labels, &probs).ok().map(|r| r.auc),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4} acc {:.4} | valid loss {:.4} acc {:.4} auc {}",
            cfg.epochs,
            record.train_loss,
            record.train_acc,
            record.valid_loss,
            record.valid_acc,
            record.valid_auc.map_or("n/a".into(), |a| format!("{a:.4}"))
        );
        if !record.train_loss.is_finite() {
            return Err(NnError::NonFiniteActivation { layer: model.layers().len(), kind: "loss" });
        }
        history.epochs.push(record);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_model, ModelConfig};

    fn toy_windows(n: usize, len: usize, seed: u64) -> Vec<LabeledWindow> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let label = (i % 2) as u8;
                let freq = if label == 1 { 0.25 } else { 0.05 };
                let samples = (0..len)
                    .map(|t| ((t as f64 * freq).sin() + 0.3 * rng.random_range(-1.0..1.0)) as f32)
                    .collect();
                LabeledWindow { subject_id: "s".into(), window_start_s: i as f64, label, samples }
            })
            .collect()
    }

    #[test]
    fn overfits_a_single_batch() {
        let data = toy_windows(8, 64, 1);
        let mut model: Model<f32> = build_model(&ModelConfig::small(64), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            optimizer: AdamConfig { learning_rate: 0.01, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let h = fit(&mut model, &data, &data, &cfg).unwrap();
        assert!(h.epochs.iter().all(|e| e.train_loss.is_finite()));
        let last = h.epochs.last().unwrap();
        assert!(last.train_loss < 0.05, "final loss {}", last.train_loss);
    }

    #[test]
    fn same_seed_same_history() {
        let data = toy_windows(20, 32, 3);
        let cfg = TrainConfig { epochs: 3, batch_size: 6, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut m: Model<f32> = build_model(&ModelConfig::small(32), 5).unwrap();
            fit(&mut m, &data[..14], &data[14..], &cfg).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(History::from_csv(&a.to_csv()).unwrap().epochs.len(), 3);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let data = toy_windows(4, 32, 3);
        let mut m: Model<f32> = build_model(&ModelConfig::small(32), 5).unwrap();
        assert!(matches!(fit(&mut m, &[], &data, &TrainConfig::default()), Err(NnError::EmptyDataset)));
        let cfg = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(fit(&mut m, &data, &data, &cfg).is_err());
    }

    #[test]
    fn history_csv_layout() {
        let h = History {
            epochs: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.5,
                train_acc: 0.75,
                valid_loss: 0.6,
                valid_acc: 0.7,
                valid_auc: None,
            }],
        };
        let csv = h.to_csv();
        assert_eq!(csv.lines().next().unwrap(), HISTORY_HEADER);
        assert_eq!(csv.lines().nth(1).unwrap(), "1,0.500000,0.750000,0.600000,0.700000,");
        assert_eq!(History::from_csv(&csv).unwrap(), h);
    }
}
