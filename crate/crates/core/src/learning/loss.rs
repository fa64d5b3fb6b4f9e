//! Per-sample loss functions and their analytic gradients.

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::LearningError;

/// Loss family attached to a local task.
///
/// `Quadratic` fits a location parameter to the sample features,
/// `f(w | ξ) = (c/2)·‖w − ξ‖²` with curvature `c` (1.0 by default).
/// `Logistic` is binary logistic regression on labels {0, 1}, and
/// `CrossEntropyMlp` is a one-hidden-layer tanh network with softmax
/// cross-entropy, gradients by hand-written reverse-mode backprop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Quadratic {
        #[serde(default = "default_curvature")]
        curvature: f64,
    },
    Logistic,
    CrossEntropyMlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        classes: usize,
    },
}

fn default_curvature() -> f64 {
    1.0
}

fn default_hidden() -> usize {
    32
}

impl LossKind {
    /// Parameter dimension implied by the loss family and the feature width.
    pub fn param_dim(&self, feature_dim: usize) -> usize {
        match self {
            LossKind::Quadratic { .. } | LossKind::Logistic => feature_dim,
            LossKind::CrossEntropyMlp { hidden, classes } => {
                hidden * feature_dim + hidden + classes * hidden + classes
            }
        }
    }

    /// Mean per-sample loss over `samples` at `point`.
    pub fn loss(&self, samples: &[Sample], point: &[f64]) -> Result<f64, LearningError> {
        if samples.is_empty() {
            return Err(LearningError::EmptyDataset);
        }
        let mut total = 0.0;
        match self {
            LossKind::Quadratic { curvature } => {
                for s in samples {
                    check_feature_dim(point.len(), s.features.len())?;
                    let sq: f64 = point
                        .iter()
                        .zip(&s.features)
                        .map(|(w, x)| (w - x) * (w - x))
                        .sum();
                    total += 0.5 * curvature * sq;
                }
            }
            LossKind::Logistic => {
                for s in samples {
                    check_feature_dim(point.len(), s.features.len())?;
                    let margin: f64 = point.iter().zip(&s.features).map(|(w, x)| w * x).sum();
                    let y = sign_label(s.label);
                    total += softplus(-y * margin);
                }
            }
            LossKind::CrossEntropyMlp { hidden, classes } => {
                let dim = samples[0].features.len();
                check_feature_dim(point.len(), self.param_dim(dim))?;
                let net = MlpView::new(point, dim, *hidden, *classes)?;
                for s in samples {
                    total += net.forward_loss(s)?;
                }
            }
        }
        Ok(total / samples.len() as f64)
    }

    /// Gradient of the mean loss with respect to the full parameter vector.
    pub fn gradient(&self, samples: &[Sample], point: &[f64]) -> Result<Vec<f64>, LearningError> {
        if samples.is_empty() {
            return Err(LearningError::EmptyDataset);
        }
        let mut grad = vec![0.0; point.len()];
        match self {
            LossKind::Quadratic { curvature } => {
                for s in samples {
                    check_feature_dim(point.len(), s.features.len())?;
                    for ((g, w), x) in grad.iter_mut().zip(point).zip(&s.features) {
                        *g += curvature * (w - x);
                    }
                }
            }
            LossKind::Logistic => {
                for s in samples {
                    check_feature_dim(point.len(), s.features.len())?;
                    let margin: f64 = point.iter().zip(&s.features).map(|(w, x)| w * x).sum();
                    let y = sign_label(s.label);
                    let coeff = -y * sigmoid(-y * margin);
                    for (g, x) in grad.iter_mut().zip(&s.features) {
                        *g += coeff * x;
                    }
                }
            }
            LossKind::CrossEntropyMlp { hidden, classes } => {
                let dim = samples[0].features.len();
                check_feature_dim(point.len(), self.param_dim(dim))?;
                let net = MlpView::new(point, dim, *hidden, *classes)?;
                for s in samples {
                    net.backward_into(s, &mut grad)?;
                }
            }
        }
        let n = samples.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok(grad)
    }
}

fn check_feature_dim(expected: usize, actual: usize) -> Result<(), LearningError> {
    if expected != actual {
        return Err(LearningError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

fn sign_label(label: i64) -> f64 {
    if label > 0 {
        1.0
    } else {
        -1.0
    }
}

/// Numerically stable `ln(1 + e^z)`.
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One-hidden-layer tanh network over a flat parameter slice.
///
/// Layout: W1 (hidden × input, row major), b1 (hidden), W2 (classes × hidden,
/// row major), b2 (classes).
struct MlpView<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: &'a [f64],
    input: usize,
    hidden: usize,
    classes: usize,
}

impl<'a> MlpView<'a> {
    fn new(
        point: &'a [f64],
        input: usize,
        hidden: usize,
        classes: usize,
    ) -> Result<Self, LearningError> {
        let expected = hidden * input + hidden + classes * hidden + classes;
        check_feature_dim(expected, point.len())?;
        let (w1, rest) = point.split_at(hidden * input);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(classes * hidden);
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            input,
            hidden,
            classes,
        })
    }

    fn activations(&self, s: &Sample) -> Result<(Vec<f64>, Vec<f64>), LearningError> {
        check_feature_dim(self.input, s.features.len())?;
        let mut a1 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let row = &self.w1[h * self.input..(h + 1) * self.input];
            let z: f64 = row.iter().zip(&s.features).map(|(w, x)| w * x).sum();
            a1[h] = (z + self.b1[h]).tanh();
        }
        let mut logits = vec![0.0; self.classes];
        for c in 0..self.classes {
            let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
            let z: f64 = row.iter().zip(&a1).map(|(w, a)| w * a).sum();
            logits[c] = z + self.b2[c];
        }
        Ok((a1, logits))
    }

    fn class_index(&self, s: &Sample) -> Result<usize, LearningError> {
        let label = s.label;
        if label < 0 || label as usize >= self.classes {
            return Err(LearningError::LabelOutOfRange {
                label,
                classes: self.classes,
            });
        }
        Ok(label as usize)
    }

    fn forward_loss(&self, s: &Sample) -> Result<f64, LearningError> {
        let (_, logits) = self.activations(s)?;
        let target = self.class_index(s)?;
        Ok(log_sum_exp(&logits) - logits[target])
    }

    fn backward_into(&self, s: &Sample, grad: &mut [f64]) -> Result<(), LearningError> {
        let (a1, logits) = self.activations(s)?;
        let target = self.class_index(s)?;
        let lse = log_sum_exp(&logits);
        // dL/dz2 = softmax(z2) - onehot(target)
        let mut dz2: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
        dz2[target] -= 1.0;

        let n_w1 = self.hidden * self.input;
        let n_b1 = self.hidden;
        let n_w2 = self.classes * self.hidden;
        let (gw1, rest) = grad.split_at_mut(n_w1);
        let (gb1, rest) = rest.split_at_mut(n_b1);
        let (gw2, gb2) = rest.split_at_mut(n_w2);

        let mut da1 = vec![0.0; self.hidden];
        for c in 0..self.classes {
            for h in 0..self.hidden {
                gw2[c * self.hidden + h] += dz2[c] * a1[h];
                da1[h] += dz2[c] * self.w2[c * self.hidden + h];
            }
            gb2[c] += dz2[c];
        }
        for h in 0..self.hidden {
            let dz1 = da1[h] * (1.0 - a1[h] * a1[h]);
            for (g, x) in gw1[h * self.input..(h + 1) * self.input]
                .iter_mut()
                .zip(&s.features)
            {
                *g += dz1 * x;
            }
            gb1[h] += dz1;
        }
        Ok(())
    }
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_samples(values: &[f64]) -> Vec<Sample> {
        values
            .iter()
            .map(|&v| Sample {
                features: vec![v],
                label: 0,
            })
            .collect()
    }

    #[test]
    fn quadratic_at_minimizer_is_zero() {
        let kind = LossKind::Quadratic { curvature: 1.0 };
        let samples = scalar_samples(&[2.0]);
        assert_eq!(kind.loss(&samples, &[2.0]).unwrap(), 0.0);
    }

    #[test]
    fn quadratic_two_samples_hand_value() {
        // samples {1, 3}, point 2 -> 0.5 * (1 + 1) / 2 = 0.5
        let kind = LossKind::Quadratic { curvature: 1.0 };
        let samples = scalar_samples(&[1.0, 3.0]);
        assert!((kind.loss(&samples, &[2.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_at_origin_is_ln2_per_sample() {
        let samples = vec![
            Sample {
                features: vec![1.5, -0.5],
                label: 1,
            },
            Sample {
                features: vec![-0.25, 2.0],
                label: 0,
            },
        ];
        let loss = LossKind::Logistic.loss(&samples, &[0.0, 0.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn empty_dataset_rejected() {
        let kind = LossKind::Quadratic { curvature: 1.0 };
        assert!(matches!(
            kind.loss(&[], &[0.0]),
            Err(LearningError::EmptyDataset)
        ));
    }

    #[test]
    fn losses_are_nonnegative() {
        let samples = vec![
            Sample {
                features: vec![0.3, -1.2],
                label: 1,
            },
            Sample {
                features: vec![0.9, 0.1],
                label: 0,
            },
        ];
        let point = [0.4, -0.7];
        for kind in [
            LossKind::Quadratic { curvature: 0.5 },
            LossKind::Logistic,
        ] {
            assert!(kind.loss(&samples, &point).unwrap() >= 0.0);
        }
        let mlp = LossKind::CrossEntropyMlp {
            hidden: 4,
            classes: 2,
        };
        let dim = mlp.param_dim(2);
        let point: Vec<f64> = (0..dim).map(|i| 0.05 * (i as f64 % 7.0 - 3.0)).collect();
        assert!(mlp.loss(&samples, &point).unwrap() >= 0.0);
    }
}
