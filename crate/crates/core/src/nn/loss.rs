use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss functions usable with [`super::finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `Σ (p − t)²`
    SquaredError,
    /// `(1/n) Σ (p − t)²`
    MeanSquaredError,
    /// `−Σ t · ln softmax(p)` with `t` a (possibly soft) class distribution.
    SoftmaxCrossEntropy,
}

impl LossKind {
    /// Loss value and its gradient with respect to `pred`.
    pub fn evaluate(self, pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        if pred.len() != target.len() {
            return Err(Error::Dimension {
                expected: pred.len(),
                got: target.len(),
            });
        }
        Ok(match self {
            LossKind::SquaredError => squared_error(pred, target),
            LossKind::MeanSquaredError => mean_squared_error(pred, target),
            LossKind::SoftmaxCrossEntropy => softmax_cross_entropy(pred, target),
        })
    }
}

pub fn squared_error(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let grad: Vec<f64> = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t)).collect();
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    (loss, grad)
}

pub fn mean_squared_error(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len().max(1) as f64;
    let (loss, mut grad) = squared_error(pred, target);
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let loss = -target
        .iter()
        .zip(logits)
        .map(|(t, z)| if *t == 0.0 { 0.0 } else { t * (z - log_z) })
        .sum::<f64>();
    let t_sum: f64 = target.iter().sum();
    let p = softmax(logits);
    let grad = p.iter().zip(target).map(|(p, t)| t_sum * p - t).collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 1001.0, 999.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[1] > p[0] && p[0] > p[2]);
    }

    #[test]
    fn cross_entropy_of_confident_correct_class_is_small() {
        let (l, g) = softmax_cross_entropy(&[0.0, 0.0, 20.0], &[0.0, 0.0, 1.0]);
        assert!(l < 1e-8);
        assert!(g.iter().all(|g| g.abs() < 1e-8));
        let (l, _) = softmax_cross_entropy(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mse_is_mean_of_squares() {
        let (l, g) = mean_squared_error(&[1.0, 3.0], &[0.0, 1.0]);
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, 2.0]);
    }
}
