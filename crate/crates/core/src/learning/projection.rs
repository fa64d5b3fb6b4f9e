//! Exact Euclidean projection onto the regularizer sublevel set `r(w) <= K`.

use serde::{Deserialize, Serialize};

use super::params::ParameterVector;

/// Regularization constraint `r(w) <= bound`.
///
/// `L1` uses `r(w) = ‖w‖₁`; `L2` uses the weight decay `r(w) = ‖w‖₂² / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "snake_case")]
pub enum Regularizer {
    L1 { bound: f64 },
    L2 { bound: f64 },
}

impl Regularizer {
    pub fn bound(&self) -> f64 {
        match self {
            Regularizer::L1 { bound } | Regularizer::L2 { bound } => *bound,
        }
    }

    /// Value of the regularization function itself.
    pub fn value(&self, w: &ParameterVector) -> f64 {
        match self {
            Regularizer::L1 { .. } => w.l1_norm(),
            Regularizer::L2 { .. } => 0.5 * w.norm_sq(),
        }
    }

    pub fn is_feasible(&self, w: &ParameterVector) -> bool {
        self.value(w) <= self.bound()
    }

    /// Orthogonal projection of `candidate` onto `{ y : r(y) <= bound }`.
    ///
    /// For the weight-decay constraint this is radial scaling onto the ball
    /// of radius `sqrt(2·bound)`; for the sparsity constraint it is the exact
    /// sort-and-threshold projection onto the ℓ1 ball. Feasible inputs are
    /// returned unchanged, which makes the operator idempotent bit for bit.
    pub fn project(&self, candidate: &ParameterVector) -> ParameterVector {
        if self.is_feasible(candidate) {
            return candidate.clone();
        }
        match self {
            Regularizer::L2 { bound } => {
                let radius = (2.0 * bound).sqrt();
                let norm = candidate.norm();
                let mut scale = radius / norm;
                let mut out = scale_vec(candidate, scale);
                // Guard against a 1-ulp overshoot so a second projection is a no-op.
                while !self.is_feasible(&out) {
                    scale = next_down(scale);
                    out = scale_vec(candidate, scale);
                }
                out
            }
            Regularizer::L1 { bound } => {
                let mut out = l1_ball_projection(candidate.as_slice(), *bound);
                while out.iter().map(|v| v.abs()).sum::<f64>() > *bound {
                    for v in &mut out {
                        *v = shrink_toward_zero(*v);
                    }
                }
                ParameterVector::new(out).expect("projection of finite input is finite")
            }
        }
    }
}

fn scale_vec(v: &ParameterVector, scale: f64) -> ParameterVector {
    v.scaled(scale).expect("scaling a finite vector")
}

fn next_down(x: f64) -> f64 {
    f64::from_bits(x.to_bits() - 1)
}

fn shrink_toward_zero(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if x > 0.0 {
        next_down(x)
    } else {
        -next_down(-x)
    }
}

/// Exact projection onto `{ y : ‖y‖₁ <= radius }` by the sort-threshold rule:
/// sort |v| descending, find the largest k with `u_k > (Σ_{i<=k} u_i − radius)/k`,
/// and soft-threshold at that level.
fn l1_ball_projection(v: &[f64], radius: f64) -> Vec<f64> {
    debug_assert!(radius >= 0.0);
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite magnitudes"));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    let theta = theta.max(0.0);
    v.iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: &[f64]) -> ParameterVector {
        ParameterVector::new(values.to_vec()).unwrap()
    }

    /// Brute-force projection onto the ℓ1 ball by scanning a 2-D grid of
    /// feasible points at the given resolution.
    fn grid_l1_projection(candidate: &[f64; 2], radius: f64, resolution: f64) -> [f64; 2] {
        let mut best = [0.0, 0.0];
        let mut best_dist = f64::INFINITY;
        let steps = (2.0 * radius / resolution).ceil() as i64;
        for i in -steps..=steps {
            let x = i as f64 * resolution;
            if x.abs() > radius {
                continue;
            }
            let rem = radius - x.abs();
            let j_steps = (rem / resolution + 1e-9).floor() as i64;
            for j in -j_steps..=j_steps {
                let y = j as f64 * resolution;
                let d = (x - candidate[0]).powi(2) + (y - candidate[1]).powi(2);
                if d < best_dist {
                    best_dist = d;
                    best = [x, y];
                }
            }
        }
        best
    }

    #[test]
    fn feasible_candidate_returned_unchanged() {
        let reg = Regularizer::L2 { bound: 10.0 };
        let w = pv(&[1.0, -2.0]);
        assert_eq!(reg.project(&w), w);
    }

    #[test]
    fn l2_unit_ball_radial_scaling() {
        // bound 1/2 makes the feasible set the unit ball.
        let reg = Regularizer::L2 { bound: 0.5 };
        let projected = reg.project(&pv(&[3.0, 4.0]));
        let got = projected.as_slice();
        assert!((got[0] - 0.6).abs() < 1e-12);
        assert!((got[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn l1_projection_matches_hand_value_and_grid_oracle() {
        let reg = Regularizer::L1 { bound: 1.0 };
        let projected = reg.project(&pv(&[2.0, 0.5]));
        let got = projected.as_slice();
        assert!((got[0] - 1.0).abs() < 1e-12);
        assert!(got[1].abs() < 1e-12);

        let oracle = grid_l1_projection(&[2.0, 0.5], 1.0, 1e-3);
        assert!((got[0] - oracle[0]).abs() < 2e-3);
        assert!((got[1] - oracle[1]).abs() < 2e-3);
    }

    #[test]
    fn random_l1_instances_match_grid_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let reg = Regularizer::L1 { bound: 1.0 };
        for _ in 0..20 {
            let candidate = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let got = reg.project(&pv(&candidate));
            let oracle = grid_l1_projection(&candidate, 1.0, 1e-3);
            assert!(
                (got.as_slice()[0] - oracle[0]).abs() < 2e-3
                    && (got.as_slice()[1] - oracle[1]).abs() < 2e-3,
                "projection {:?} vs grid oracle {:?} for candidate {:?}",
                got.as_slice(),
                oracle,
                candidate
            );
        }
    }

    #[test]
    fn projection_is_idempotent_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for reg in [Regularizer::L1 { bound: 0.8 }, Regularizer::L2 { bound: 0.3 }] {
            for _ in 0..200 {
                let dim = rng.random_range(1..6);
                let candidate = pv(&(0..dim)
                    .map(|_| rng.random_range(-5.0..5.0))
                    .collect::<Vec<_>>());
                let once = reg.project(&candidate);
                let twice = reg.project(&once);
                assert_eq!(once, twice, "not idempotent under {:?}", reg);
            }
        }
    }
}
