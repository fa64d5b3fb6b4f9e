//! Empirical estimation of the smoothness/dissimilarity constants needed to
//! evaluate the convergence bound. Closed forms are used where available
//! (quadratic losses); everything else is probed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    descent_direction, local_gradient, loss_gradient, LearningError, LocalTask, LossKind,
    ParameterVector, SmoothnessConstants,
};

/// Sampling specification for constant estimation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Number of probe points (at least 2).
    pub points: usize,
    /// Probe points are drawn uniformly from `[-radius, radius]^dim`.
    pub radius: f64,
    /// Step size used when probing descent directions.
    pub eta: f64,
    pub seed: u64,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            points: 64,
            radius: 2.0,
            eta: 0.05,
            seed: 0x5eed,
        }
    }
}

const DEGENERATE_NORM: f64 = 1e-12;

/// Estimates Assumption-style constants over a family of tasks.
///
/// * `L1`: closed form (max curvature) when every task is quadratic, else the
///   max probe-pair ratio `‖∇F_i(x) − ∇F_i(y)‖ / ‖x − y‖`.
/// * `L2`/`L3`: min/max observed ratio `‖s_i‖ / ‖∇_i F_i‖` over probes.
/// * `δ`: max pairwise `‖s_i − s_j‖ / min(‖s_i‖, ‖s_j‖)` over probes, with
///   near-zero directions skipped.
pub fn estimate_constants(
    tasks: &[LocalTask],
    spec: &ProbeSpec,
) -> Result<SmoothnessConstants, LearningError> {
    if tasks.is_empty() {
        return Err(LearningError::EmptyDataset);
    }
    if spec.points < 2 {
        return Err(LearningError::DegenerateProbes);
    }
    let dim = tasks[0].model_dim();
    for t in tasks {
        if t.model_dim() != dim {
            return Err(LearningError::DimensionMismatch {
                expected: dim,
                actual: t.model_dim(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let probes: Vec<ParameterVector> = (0..spec.points)
        .map(|_| {
            ParameterVector::new(
                (0..dim)
                    .map(|_| rng.random_range(-spec.radius..spec.radius))
                    .collect(),
            )
            .expect("finite probe point")
        })
        .collect();

    let l1 = estimate_l1(tasks, &probes)?;

    let mut ratio_min = f64::INFINITY;
    let mut ratio_max = 0.0_f64;
    let mut delta = 0.0_f64;
    let mut saw_ratio = false;

    for v in &probes {
        let mut directions: Vec<Option<ParameterVector>> = Vec::with_capacity(tasks.len());
        for task in tasks {
            let grad = local_gradient(task, v)?;
            let grad_norm = grad.norm();
            if grad_norm < DEGENERATE_NORM {
                directions.push(None);
                continue;
            }
            let s = descent_direction(task, v, v, spec.eta)?;
            let s_norm = s.norm();
            let ratio = s_norm / grad_norm;
            ratio_min = ratio_min.min(ratio);
            ratio_max = ratio_max.max(ratio);
            saw_ratio = true;
            directions.push(Some(s));
        }
        for i in 0..directions.len() {
            for j in (i + 1)..directions.len() {
                if let (Some(si), Some(sj)) = (&directions[i], &directions[j]) {
                    let floor = si.norm().min(sj.norm());
                    if floor < DEGENERATE_NORM {
                        continue;
                    }
                    let diff = si.distance(sj)?;
                    delta = delta.max(diff / floor);
                }
            }
        }
    }

    if !saw_ratio {
        return Err(LearningError::DegenerateProbes);
    }
    Ok(SmoothnessConstants {
        l1,
        l2: ratio_min,
        l3: ratio_max,
        delta,
    })
}

fn estimate_l1(tasks: &[LocalTask], probes: &[ParameterVector]) -> Result<f64, LearningError> {
    let all_quadratic = tasks
        .iter()
        .all(|t| matches!(t.loss, LossKind::Quadratic { .. }));
    if all_quadratic {
        // The quadratic Hessian is curvature times the identity.
        let l1 = tasks
            .iter()
            .map(|t| match t.loss {
                LossKind::Quadratic { curvature } => curvature,
                _ => unreachable!(),
            })
            .fold(0.0_f64, f64::max);
        return Ok(l1);
    }
    let mut l1 = 0.0_f64;
    let mut saw_pair = false;
    for task in tasks {
        for (a_idx, a) in probes.iter().enumerate() {
            let grad_a = loss_gradient(task, a)?;
            for b in probes.iter().skip(a_idx + 1) {
                let gap = a.distance(b)?;
                if gap < DEGENERATE_NORM {
                    continue;
                }
                let grad_b = loss_gradient(task, b)?;
                l1 = l1.max(grad_a.distance(&grad_b)? / gap);
                saw_pair = true;
            }
        }
    }
    if !saw_pair {
        return Err(LearningError::DegenerateProbes);
    }
    Ok(l1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learning::{dataset::Sample, Regularizer};

    fn quadratic_task(center: f64, curvature: f64, fraction: f64) -> LocalTask {
        LocalTask::new(
            vec![Sample {
                features: vec![center],
                label: 0,
            }],
            fraction,
            Regularizer::L2 { bound: 1e9 },
            LossKind::Quadratic { curvature },
        )
        .unwrap()
    }

    #[test]
    fn pure_quadratic_l1_is_exact() {
        let tasks = vec![quadratic_task(0.0, 1.0, 1.0)];
        let c = estimate_constants(&tasks, &ProbeSpec::default()).unwrap();
        assert_eq!(c.l1, 1.0);
        // Unconstrained quadratics have s = -grad, so both ratios are 1.
        assert!((c.l2 - 1.0).abs() < 1e-12);
        assert!((c.l3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_tasks_have_zero_dissimilarity() {
        let tasks = vec![
            quadratic_task(0.5, 1.0, 0.5),
            quadratic_task(0.5, 1.0, 0.5),
        ];
        let c = estimate_constants(&tasks, &ProbeSpec::default()).unwrap();
        assert!(c.delta < 1e-12);
    }

    #[test]
    fn logistic_l1_respects_sigmoid_derivative_bound() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<Sample> = (0..16)
            .map(|i| Sample {
                features: vec![rng.random_range(-2.0..2.0)],
                label: i64::from(i % 2),
            })
            .collect();
        let max_feature_sq = samples
            .iter()
            .map(|s| s.features[0] * s.features[0])
            .fold(0.0_f64, f64::max);
        let task = LocalTask::new(samples, 1.0, Regularizer::L2 { bound: 1e9 }, LossKind::Logistic)
            .unwrap();
        let c = estimate_constants(&[task], &ProbeSpec::default()).unwrap();
        // The sigmoid derivative never exceeds 1/4.
        assert!(c.l1 <= 0.25 * max_feature_sq + 1e-9, "l1 = {}", c.l1);
    }

    #[test]
    fn too_few_probes_rejected() {
        let tasks = vec![quadratic_task(0.0, 1.0, 1.0)];
        let spec = ProbeSpec {
            points: 1,
            ..ProbeSpec::default()
        };
        assert!(matches!(
            estimate_constants(&tasks, &spec),
            Err(LearningError::DegenerateProbes)
        ));
    }
}
