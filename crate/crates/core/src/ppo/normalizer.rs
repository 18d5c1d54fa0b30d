use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const VAR_EPS: f64 = 1e-8;
const CLIP: f64 = 10.0;

/// Running per-dimension mean and (population) variance via Welford's
/// update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the running mean.
    pub m2: Vec<f64>,
    pub count: u64,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| (m / self.count as f64).max(0.0)).collect()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        self.check(x)?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &xi) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = xi - *mean;
            *mean += delta / n;
            *m2 += delta * (xi - *mean);
        }
        Ok(())
    }

    /// `(x - mean) / sqrt(var + 1e-8)` clipped to [-10, 10], optionally
    /// folding `x` into the statistics first.
    pub fn normalize(&mut self, x: &[f64], update: bool) -> Result<Vec<f64>> {
        if update {
            self.update(x)?;
        }
        self.apply(x)
    }

    /// Normalises with frozen statistics.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let var = self.variance();
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((xi, m), v)| ((xi - m) / (v + VAR_EPS).sqrt()).clamp(-CLIP, CLIP))
            .collect())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}
