//! Joint text/image embedding vectors and cosine similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in a dual encoder's joint embedding space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    /// Set when the source text exceeded the encoder's token limit and was cut.
    #[serde(default)]
    pub truncated: bool,
}

impl EmbeddingVector {
    /// Wraps raw values as-is (no normalization).
    pub fn from_raw(values: Vec<f32>) -> Self {
        Self {
            values,
            truncated: false,
        }
    }

    /// Wraps and L2-normalizes `values`.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let mut v = Self::from_raw(values);
        v.normalize()?;
        Ok(v)
    }

    pub fn with_truncated(mut self, truncated: bool) -> Self {
        self.truncated = truncated;
        self
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Computation(format!(
                "cannot normalize vector with norm {n}"
            )));
        }
        for x in &mut self.values {
            *x = (f64::from(*x) / n) as f32;
        }
        Ok(())
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            values: self.values.iter().map(|x| x * factor).collect(),
            truncated: self.truncated,
        }
    }
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]` against rounding.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::Computation(format!(
            "dimension mismatch: {} vs {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Computation(
            "cosine similarity of a zero vector".into(),
        ));
    }
    let dot: f64 = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| f64::from(a) * f64::from(b))
        .sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::from_raw(xs.to_vec())
    }

    #[test]
    fn identity_is_one() {
        let a = v(&[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_is_zero() {
        assert_eq!(
            cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(),
            0.0
        );
    }

    #[test]
    fn hand_computed_eight_ninths() {
        // (1,2,2)·(2,1,2) = 8, both norms 3
        let c = cosine_similarity(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 1.0, 2.0])).unwrap();
        assert!((c - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_rejected() {
        let err = cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Computation(_)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert!(cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn normalized_has_unit_norm() {
        let n = EmbeddingVector::normalized(vec![3.0, 4.0, 12.0]).unwrap();
        assert!((n.norm() - 1.0).abs() < 1e-4);
        assert!(EmbeddingVector::normalized(vec![0.0; 4]).is_err());
    }
}
