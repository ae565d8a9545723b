use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension standardisation `(x - mean) / std` with population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fits on the given training vectors (Welford accumulation).
    pub fn fit<'a, I>(vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = vectors.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::InvalidInput("scaler needs at least 2 vectors, got 0".into()))?;
        let dim = first.len();
        let mut mean = first.to_vec();
        let mut m2 = vec![0.0; dim];
        let mut n = 1usize;
        for v in iter {
            if v.len() != dim {
                return Err(Error::dim("scaler input vector", dim, v.len()));
            }
            n += 1;
            for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(v) {
                let delta = x - *mu;
                *mu += delta / n as f64;
                *s += delta * (x - *mu);
            }
        }
        if n < 2 {
            return Err(Error::InvalidInput(
                "scaler needs at least 2 vectors, got 1".into(),
            ));
        }
        let std = m2
            .into_iter()
            .map(|s| (s / n as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_points_give_unit_std() {
        let data = [vec![0.0, 0.0], vec![2.0, 2.0]];
        let s = FeatureScaler::fit(data.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(s.mean, vec![1.0, 1.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }

    #[test]
    fn constant_dimension_is_floored() {
        let data = [vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 0.0]];
        let s = FeatureScaler::fit(data.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
    }

    #[test]
    fn single_vector_is_rejected() {
        let data = [vec![1.0]];
        assert!(FeatureScaler::fit(data.iter().map(Vec::as_slice)).is_err());
        assert!(FeatureScaler::fit(std::iter::empty()).is_err());
    }

    #[test]
    fn identity_scaler_is_a_no_op() {
        let mut x = vec![0.3, -7.0];
        FeatureScaler::identity(2).transform_in_place(&mut x);
        assert_eq!(x, vec![0.3, -7.0]);
    }

    proptest! {
        #[test]
        fn transformed_training_set_is_standardised(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 3), 2..40)
        ) {
            let s = FeatureScaler::fit(rows.iter().map(Vec::as_slice)).unwrap();
            let t: Vec<Vec<f64>> = rows.iter().map(|r| {
                let mut r = r.clone();
                s.transform_in_place(&mut r);
                r
            }).collect();
            let n = t.len() as f64;
            for j in 0..3 {
                if s.std[j] <= STD_FLOOR { continue; }
                // Skip near-degenerate dimensions where cancellation dominates.
                if s.std[j] < 1e-3 { continue; }
                let mean = t.iter().map(|r| r[j]).sum::<f64>() / n;
                let var = t.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-6);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }
}
