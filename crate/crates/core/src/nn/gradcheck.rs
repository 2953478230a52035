use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Mode, Model, NnError, Result, Tensor};

/// Gradient magnitudes below this are compared in absolute rather than
/// relative terms. Conv biases feeding batch norm have an exact gradient of
/// zero, so their finite-difference estimate is pure rounding noise.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name of the tensor and element index holding the largest error.
    pub worst: (String, usize),
    pub checked: usize,
}

impl<T: super::Scalar> Model<T> {
    /// Training-mode mean loss for one batch, without touching gradients.
    pub fn batch_loss(&mut self, x: &Tensor<T>, targets: &[T], rng: &mut ChaCha8Rng) -> Result<f64> {
        self.forward(x, Mode::Train, rng)?;
        let logits = self.take_train_logits().ok_or(NnError::StaleCache)?;
        self.clear_cache();
        Ok(super::sigmoid_bce(&logits, targets)?.1)
    }
}

/// Compares back-propagated gradients with central finite differences for
/// every parameter element. Dropout masks are held fixed by reseeding the
/// rng with `seed` before each evaluation; `rel_step` scales the step as
/// `rel_step * max(1, |theta|)`.
pub fn gradient_check(
    model: &Model<f64>,
    x: &Tensor<f64>,
    targets: &[f64],
    seed: u64,
    rel_step: f64,
) -> Result<GradCheckReport> {
    let mut m = model.clone();
    m.zero_grad();
    m.forward(x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(seed))?;
    m.backward(targets)?;
    let analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();
    let names: Vec<String> = m
        .layout()
        .into_iter()
        .map(|s| s.name)
        .filter(|n| !n.contains("running_"))
        .collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (String::new(), 0), checked: 0 };
    for (pi, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let theta = m.params()[pi].value[e];
            let h = rel_step * theta.abs().max(1.0);
            m.params_mut()[pi].value[e] = theta + h;
            let plus = m.batch_loss(x, targets, &mut ChaCha8Rng::seed_from_u64(seed))?;
            m.params_mut()[pi].value[e] = theta - h;
            let minus = m.batch_loss(x, targets, &mut ChaCha8Rng::seed_from_u64(seed))?;
            m.params_mut()[pi].value[e] = theta;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (names[pi].clone(), e);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
