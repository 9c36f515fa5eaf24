//! Percentile bootstrap confidence intervals and Cohen's d.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiResult {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_resamples: usize,
}

impl CiResult {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn overlaps(&self, other: &CiResult) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard deviation with the `n − 1` denominator.
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    math::sqrt(ss / (xs.len() as f64 - 1.0))
}

/// Linear interpolation between order statistics of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = math::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean of `samples`.
///
/// The bounds are widened to include the point estimate when resampling
/// noise would otherwise exclude it.
pub fn bootstrap_ci(samples: &[f64], level: f64, n_resamples: usize, rng: &mut SeededRng) -> Result<CiResult> {
    if samples.is_empty() {
        return Err(Error::Contract("bootstrap needs at least one sample"));
    }
    if !(level > 0.0 && level < 1.0) || n_resamples == 0 {
        return Err(Error::Contract("bootstrap level must lie in (0, 1) with at least one resample"));
    }
    let point = mean(samples);
    let n = samples.len();
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| samples[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok(CiResult {
        point,
        lower: quantile(&means, tail).min(point),
        upper: quantile(&means, 1.0 - tail).max(point),
        n_resamples,
    })
}

/// `(mean(a) − mean(b)) / s_pooled` with
/// `s_pooled² = ((n_a − 1)·s_a² + (n_b − 1)·s_b²) / (n_a + n_b − 2)`.
pub fn effect_size(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Contract("effect size needs two samples per group"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (sample_std(a), sample_std(b));
    let pooled = math::sqrt(((na - 1.0) * sa * sa + (nb - 1.0) * sb * sb) / (na + nb - 2.0));
    if !(pooled > 0.0) {
        return Err(Error::Degenerate);
    }
    Ok((mean(a) - mean(b)) / pooled)
}
