//! Confidence vectors: one component per model category, in the model's
//! category order. All classification arithmetic is carried out on these.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceVector(Vec<f64>);

impl ConfidenceVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Componentwise sum. Panics on length mismatch.
    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.len(), other.len(), "confidence vector length mismatch");
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
    }

    /// Componentwise maximum. Panics on length mismatch.
    pub fn max_assign(&mut self, other: &Self) {
        assert_eq!(self.len(), other.len(), "confidence vector length mismatch");
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a = a.max(*b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// Index of the largest component; ties go to the first. `None` when empty.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &v) in self.0.iter().enumerate() {
            match best {
                Some((_, b)) if v <= b => {}
                _ => best = Some((i, v)),
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn max_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl std::ops::Index<usize> for ConfidenceVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

impl From<Vec<f64>> for ConfidenceVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_and_max() {
        let mut a = ConfidenceVector::from_vec(vec![1.0, 2.0]);
        a.add_assign(&ConfidenceVector::from_vec(vec![0.5, 1.0]));
        assert_eq!(a.values(), &[1.5, 3.0]);
        a.max_assign(&ConfidenceVector::from_vec(vec![9.0, 0.0]));
        assert_eq!(a.values(), &[9.0, 3.0]);
    }

    #[test]
    fn argmax_prefers_first_on_tie() {
        let v = ConfidenceVector::from_vec(vec![3.0, 3.0, 1.0]);
        assert_eq!(v.argmax(), Some(0));
        assert_eq!(ConfidenceVector::zeros(0).argmax(), None);
    }

    #[test]
    fn zero_detection() {
        assert!(ConfidenceVector::zeros(4).is_zero());
        assert!(!ConfidenceVector::from_vec(vec![0.0, 1e-12]).is_zero());
    }
}
