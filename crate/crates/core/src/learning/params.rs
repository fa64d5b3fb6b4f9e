//! Flat parameter container shared by every subsystem.

use serde::{Deserialize, Serialize};

use super::LearningError;

/// Dense real-valued parameter vector with dimension metadata.
///
/// Every constructor and arithmetic helper preserves the invariant that all
/// entries are finite; a vector holding NaN or infinity cannot be built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self, LearningError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(LearningError::NonFinite { value: bad });
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn constant(dim: usize, value: f64) -> Result<Self, LearningError> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `self + scale * other`, dimension-checked.
    pub fn add_scaled(&self, scale: f64, other: &Self) -> Result<Self, LearningError> {
        self.check_dim(other.dim())?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + scale * b)
            .collect();
        Self::new(values)
    }

    pub fn scaled(&self, scale: f64) -> Result<Self, LearningError> {
        Self::new(self.values.iter().map(|v| v * scale).collect())
    }

    pub fn dot(&self, other: &Self) -> Result<f64, LearningError> {
        self.check_dim(other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn distance(&self, other: &Self) -> Result<f64, LearningError> {
        self.check_dim(other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub(crate) fn check_dim(&self, expected: usize) -> Result<(), LearningError> {
        if self.dim() != expected {
            return Err(LearningError::DimensionMismatch {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// Weighted sum of vectors; weights and vectors must be of equal length and
/// every vector of equal dimension.
pub fn weighted_sum(
    terms: &[(f64, &ParameterVector)],
) -> Result<ParameterVector, LearningError> {
    let dim = terms
        .first()
        .map(|(_, v)| v.dim())
        .ok_or(LearningError::EmptyCombination)?;
    let mut out = vec![0.0; dim];
    for (weight, vec) in terms {
        vec.check_dim(dim)?;
        for (o, v) in out.iter_mut().zip(vec.as_slice()) {
            *o += weight * v;
        }
    }
    ParameterVector::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_entries() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![1.0, -2.0]).is_ok());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = ParameterVector::zeros(3);
        let b = ParameterVector::zeros(2);
        assert!(a.dot(&b).is_err());
        assert!(a.add_scaled(1.0, &b).is_err());
    }

    #[test]
    fn weighted_sum_matches_hand_computation() {
        let a = ParameterVector::new(vec![1.0, 2.0]).unwrap();
        let b = ParameterVector::new(vec![3.0, -1.0]).unwrap();
        let s = weighted_sum(&[(0.25, &a), (0.75, &b)]).unwrap();
        assert_eq!(s.as_slice(), &[2.5, -0.25]);
    }
}
