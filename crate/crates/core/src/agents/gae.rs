//! Generalized advantage estimation and per-batch advantage standardization.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// Returns `(advantages, returns)`.
///
/// `last_value` is the value of the state after the final transition; it is
/// ignored when that transition is terminal. `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n {
        return Err(Error::dim("gae values", n, values.len()));
    }
    if dones.len() != n {
        return Err(Error::dim("gae dones", n, dones.len()));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// `(A − mean) / (std + 1e-8)` with the population standard deviation.
pub fn normalize_advantages(advantages: &[f64]) -> Result<Vec<f64>> {
    if advantages.len() < 2 {
        return Err(Error::Contract("advantage normalization needs at least two samples"));
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let denom = math::sqrt(var) + 1e-8;
    Ok(advantages.iter().map(|a| (a - mean) / denom).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_the_td_residual() {
        let (adv, ret) = compute_gae(&[0.5], &[0.2], &[false], 0.7, 0.9, 0.0).unwrap();
        assert!((adv[0] - (0.5 + 0.9 * 0.7 - 0.2)).abs() < 1e-15);
        assert!((ret[0] - (adv[0] + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn undiscounted_monte_carlo_with_zero_values() {
        let r = [1.0, 0.5, 0.25, 2.0];
        let (adv, _) = compute_gae(&r, &[0.0; 4], &[false, false, false, true], 99.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![3.75, 2.75, 2.25, 2.0]);
    }

    #[test]
    fn done_cuts_the_bootstrap() {
        let (adv, _) = compute_gae(&[1.0, 1.0], &[0.0, 0.0], &[true, false], 5.0, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![1.0, 6.0]);
    }

    #[test]
    fn length_mismatch() {
        assert!(compute_gae(&[1.0], &[], &[false], 0.0, 0.99, 0.95).is_err());
        assert!(compute_gae(&[1.0], &[0.0], &[], 0.0, 0.99, 0.95).is_err());
    }

    #[test]
    fn one_two_three() {
        let z = normalize_advantages(&[1.0, 2.0, 3.0]).unwrap();
        let s = 1.5f64.sqrt();
        for (x, y) in z.iter().zip([-s, 0.0, s]) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn constant_batch_maps_to_zero() {
        assert_eq!(normalize_advantages(&[4.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn single_sample_is_a_contract_error() {
        assert!(normalize_advantages(&[1.0]).is_err());
    }
}
