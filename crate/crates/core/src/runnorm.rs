//! Running input normalization.
//!
//! Mean and variance are estimated online with Welford's recursion
//!
//! ```text
//! mean_n = mean_{n-1} + (s_n - mean_{n-1}) / n
//! m2_n   = m2_{n-1} + (s_n - mean_{n-1}) (s_n - mean_n)
//! var_n  = m2_n / n
//! ```
//!
//! and inputs are standardized as `(s - mean) / max(std, 1e-8)`.
//!
//! [`VarianceRecursion::DividedIncrement`] instead applies
//! `var_n = var_{n-1} + (s_n - mean_{n-1}) (s_n - mean_n) / n`, which divides
//! each increment by the current count. It does not converge to the sample
//! variance and exists only to compare against the correct recursion.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

pub const STD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRecursion {
    #[default]
    Welford,
    DividedIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub n: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations; holds the variance itself under
    /// [`VarianceRecursion::DividedIncrement`].
    pub m2: Vec<f64>,
    #[serde(default)]
    pub recursion: VarianceRecursion,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            recursion: VarianceRecursion::Welford,
        }
    }

    pub fn with_recursion(dim: usize, recursion: VarianceRecursion) -> Self {
        Self {
            recursion,
            ..Self::new(dim)
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim() {
            return Err(Error::dim("running stats sample", self.dim(), sample.len()));
        }
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &s) in self.mean.iter_mut().zip(&mut self.m2).zip(sample) {
            let before = s - *mean;
            *mean += before / n;
            let after = s - *mean;
            match self.recursion {
                VarianceRecursion::Welford => *m2 += before * after,
                VarianceRecursion::DividedIncrement => *m2 += before * after / n,
            }
        }
        Ok(())
    }

    /// Population variance; reported as 1 until two samples have been seen.
    pub fn variance(&self) -> Vec<f64> {
        if self.n <= 1 {
            return vec![1.0; self.dim()];
        }
        match self.recursion {
            VarianceRecursion::Welford => self.m2.iter().map(|m| m / self.n as f64).collect(),
            VarianceRecursion::DividedIncrement => self.m2.clone(),
        }
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(math::sqrt).collect()
    }

    pub fn normalize(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.dim() {
            return Err(Error::dim("normalize input", self.dim(), s.len()));
        }
        let std = self.std();
        Ok(s.iter()
            .zip(&self.mean)
            .zip(&std)
            .map(|((x, m), sd)| (x - m) / sd.max(STD_EPSILON))
            .collect())
    }

    pub fn denormalize(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::dim("denormalize input", self.dim(), z.len()));
        }
        let std = self.std();
        Ok(z.iter()
            .zip(&self.mean)
            .zip(&std)
            .map(|((x, m), sd)| x * sd.max(STD_EPSILON) + m)
            .collect())
    }
}

/// Optional normalizer: identity when disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalizer {
    stats: Option<RunningStats>,
}

impl InputNormalizer {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self {
            stats: enabled.then(|| RunningStats::new(dim)),
        }
    }

    pub fn stats(&self) -> Option<&RunningStats> {
        self.stats.as_ref()
    }

    pub fn observe(&mut self, s: &[f64]) -> Result<()> {
        match &mut self.stats {
            Some(stats) => stats.update(s),
            None => Ok(()),
        }
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        match &self.stats {
            Some(stats) => stats.normalize(s).expect("normalizer dimension fixed at construction"),
            None => s.to_vec(),
        }
    }

    /// Normalizes every row of a row-major batch.
    pub fn apply_rows(&self, width: usize, rows: &[f64]) -> Vec<f64> {
        match &self.stats {
            Some(_) => rows.chunks_exact(width).flat_map(|r| self.apply(r)).collect(),
            None => rows.to_vec(),
        }
    }
}
