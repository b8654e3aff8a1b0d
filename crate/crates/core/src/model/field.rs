use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Per-core intensities, either observed (`y`) or latent (`x`).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntensityField(Vec<f64>);

impl IntensityField {
    pub fn new(values: Vec<f64>) -> Self {
        IntensityField(values)
    }

    pub fn zeros(n: usize) -> Self {
        IntensityField(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        let m = self.mean();
        self.0.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.0.len() as f64
    }

    pub fn scaled(&self, a: f64) -> Self {
        IntensityField(self.0.iter().map(|v| a * v).collect())
    }
}

impl From<Vec<f64>> for IntensityField {
    fn from(v: Vec<f64>) -> Self {
        IntensityField(v)
    }
}

impl FromIterator<f64> for IntensityField {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        IntensityField(iter.into_iter().collect())
    }
}

impl Deref for IntensityField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for IntensityField {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}
