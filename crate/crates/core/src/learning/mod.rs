//! Models, datasets, loss functions, gradients, and the regularized
//! projection operator that define each node's local objective and descent
//! direction.

pub mod constants;
pub mod dataset;
pub mod loss;
pub mod params;
pub mod projection;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use constants::{estimate_constants, ProbeSpec};
pub use dataset::{PartitionMode, Sample};
pub use loss::LossKind;
pub use params::ParameterVector;
pub use projection::Regularizer;

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("parameter dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite parameter entry {value}")]
    NonFinite { value: f64 },
    #[error("task has an empty dataset")]
    EmptyDataset,
    #[error("weighted combination of zero vectors")]
    EmptyCombination,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: i64, classes: usize },
    #[error("learning rate must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("all probe points were degenerate; cannot estimate constants")]
    DegenerateProbes,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: malformed CSV record")]
    Parse { path: String, line: usize },
    #[error("{path}: {message}")]
    Idx { path: String, message: String },
    #[error("IDX pair mismatch: {images} images vs {labels} labels")]
    IdxMismatch { images: usize, labels: usize },
}

/// One node's local learning problem: its data shard, aggregation fraction,
/// constraint, and loss family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalTask {
    pub dataset: Vec<Sample>,
    /// Fraction of the total dataset held by this node; fractions across all
    /// nodes must sum to one.
    pub fraction: f64,
    pub regularizer: Regularizer,
    pub loss: LossKind,
}

impl LocalTask {
    pub fn new(
        dataset: Vec<Sample>,
        fraction: f64,
        regularizer: Regularizer,
        loss: LossKind,
    ) -> Result<Self, LearningError> {
        if dataset.is_empty() {
            return Err(LearningError::EmptyDataset);
        }
        Ok(Self {
            dataset,
            fraction,
            regularizer,
            loss,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.dataset[0].features.len()
    }

    /// Dimension of the model parameter for this task.
    pub fn model_dim(&self) -> usize {
        self.loss.param_dim(self.feature_dim())
    }

    fn check_point(&self, point: &ParameterVector) -> Result<(), LearningError> {
        point.check_dim(self.model_dim())
    }
}

/// Checks that fractions across tasks sum to one (within 1e-12) and that
/// every constraint bound is positive.
pub fn validate_tasks(tasks: &[LocalTask]) -> Result<(), LearningError> {
    let total: f64 = tasks.iter().map(|t| t.fraction).sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(LearningError::NonFinite { value: total });
    }
    for t in tasks {
        if !(t.fraction > 0.0 && t.fraction <= 1.0) || t.regularizer.bound() <= 0.0 {
            return Err(LearningError::NonFinite { value: t.fraction });
        }
    }
    Ok(())
}

/// Local loss `F_i(point)`: mean per-sample loss over the node's shard.
pub fn local_loss(task: &LocalTask, point: &ParameterVector) -> Result<f64, LearningError> {
    task.check_point(point)?;
    task.loss.loss(&task.dataset, point.as_slice())
}

/// Full gradient `∇F_i(point)` of the local loss with respect to its
/// argument (no aggregation-fraction scaling).
pub fn loss_gradient(
    task: &LocalTask,
    point: &ParameterVector,
) -> Result<ParameterVector, LearningError> {
    task.check_point(point)?;
    ParameterVector::new(task.loss.gradient(&task.dataset, point.as_slice())?)
}

/// Gradient of `F_i` with respect to the node's own parameter block when the
/// loss is evaluated at an aggregated point: `α_i · ∇F_i(point)`.
pub fn local_gradient(
    task: &LocalTask,
    point: &ParameterVector,
) -> Result<ParameterVector, LearningError> {
    loss_gradient(task, point)?.scaled(task.fraction)
}

/// Projection of a candidate onto the task's constraint set.
pub fn project(regularizer: &Regularizer, candidate: &ParameterVector) -> ParameterVector {
    regularizer.project(candidate)
}

/// Descent gradient `s_i = ([w_i − η ∇_i F_i(v_i)]^+ − w_i) / η`.
///
/// In debug builds the descent-sign condition `s_iᵀ ∇_i F_i(v_i) <= 0` is
/// asserted.
pub fn descent_direction(
    task: &LocalTask,
    w: &ParameterVector,
    v: &ParameterVector,
    eta: f64,
) -> Result<ParameterVector, LearningError> {
    if eta <= 0.0 {
        return Err(LearningError::NonPositiveStep(eta));
    }
    let grad = local_gradient(task, v)?;
    let candidate = w.add_scaled(-eta, &grad)?;
    let projected = project(&task.regularizer, &candidate);
    let s = projected.add_scaled(-1.0, w)?.scaled(1.0 / eta)?;
    debug_assert!(
        s.dot(&grad)? <= 1e-12 * (1.0 + s.norm() * grad.norm()),
        "descent direction not aligned against the gradient"
    );
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// Gradient Lipschitz constant of every `∇F_i`.
    pub l1: f64,
    /// Lower ratio bound `L2 ‖∇_i F_i‖ <= ‖s_i‖`.
    pub l2: f64,
    /// Upper ratio bound `‖s_i‖ <= L3 ‖∇_i F_i‖`.
    pub l3: f64,
    /// Gradient dissimilarity bound `‖s_i − s_j‖ <= δ min(‖s_i‖, ‖s_j‖)`.
    pub delta: f64,
}

impl SmoothnessConstants {
    pub fn validate(&self) -> bool {
        self.l1 > 0.0 && self.l2 > 0.0 && self.l3 > 0.0 && self.l2 <= self.l3 && self.delta >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_task(samples: &[f64], fraction: f64) -> LocalTask {
        LocalTask::new(
            samples
                .iter()
                .map(|&v| Sample {
                    features: vec![v],
                    label: 0,
                })
                .collect(),
            fraction,
            Regularizer::L2 { bound: 1e9 },
            LossKind::Quadratic { curvature: 1.0 },
        )
        .unwrap()
    }

    fn pv(values: &[f64]) -> ParameterVector {
        ParameterVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_gradient_hand_value() {
        // sample 0, fraction 1, point 2 -> gradient 2
        let task = scalar_task(&[0.0], 1.0);
        let g = local_gradient(&task, &pv(&[2.0])).unwrap();
        assert!((g.as_slice()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_minimizer() {
        let task = scalar_task(&[1.0, 3.0], 1.0);
        let g = local_gradient(&task, &pv(&[2.0])).unwrap();
        assert!(g.norm() < 1e-10);
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let task = LocalTask::new(
            (0..12)
                .map(|i| Sample {
                    features: vec![rng.random_range(-2.0..2.0)],
                    label: i64::from(i % 2),
                })
                .collect(),
            1.0,
            Regularizer::L2 { bound: 1e9 },
            LossKind::Logistic,
        )
        .unwrap();
        for _ in 0..5 {
            let point = pv(&[rng.random_range(-2.0..2.0)]);
            let g = local_gradient(&task, &point).unwrap().as_slice()[0];
            let h = 1e-6;
            let up = local_loss(&task, &pv(&[point.as_slice()[0] + h])).unwrap();
            let down = local_loss(&task, &pv(&[point.as_slice()[0] - h])).unwrap();
            let fd = (up - down) / (2.0 * h);
            assert!(
                (g - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "analytic {g} vs finite difference {fd}"
            );
        }
    }

    #[test]
    fn descent_direction_examples() {
        // Interior point: s = -grad exactly.
        let task = scalar_task(&[0.0], 1.0);
        let s = descent_direction(&task, &pv(&[2.0]), &pv(&[2.0]), 0.1).unwrap();
        assert!((s.as_slice()[0] + 2.0).abs() < 1e-12);

        // Zero gradient: fixed point.
        let s = descent_direction(&task, &pv(&[0.0]), &pv(&[0.0]), 0.1).unwrap();
        assert_eq!(s.as_slice()[0], 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let task = scalar_task(&[0.0], 1.0);
        assert!(matches!(
            local_loss(&task, &pv(&[0.0, 1.0])),
            Err(LearningError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let tasks = vec![scalar_task(&[0.0], 0.5), scalar_task(&[1.0], 0.6)];
        assert!(validate_tasks(&tasks).is_err());
        let tasks = vec![scalar_task(&[0.0], 0.5), scalar_task(&[1.0], 0.5)];
        assert!(validate_tasks(&tasks).is_ok());
    }
}
