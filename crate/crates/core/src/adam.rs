//! Adam with bias-corrected moments and optional L2 weight decay.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::mlp::MlpParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    /// First and second moment buffers, one per parameter tensor.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// One update of every tensor from its accumulated gradient. Tensors
    /// without a gradient buffer are treated as having zero gradient.
    ///
    /// A non-finite gradient aborts before anything is modified and reports
    /// the position of the offending tensor.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Contract("adam betas must lie in [0, 1)"));
        }
        for (i, t) in params.iter().enumerate() {
            if let Some(g) = t.grad() {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        context: "adam gradient",
                        index: i,
                    });
                }
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|t| vec![0.0; t.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::dim("adam parameter count", self.first_moment.len(), params.len()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        for ((param, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if m.len() != param.len() {
                return Err(Error::dim("adam moment length", m.len(), param.len()));
            }
            let grad: Vec<f64> = match param.grad() {
                Some(g) => g.to_vec(),
                None => vec![0.0; param.len()],
            };
            let data = param.data_mut();
            for i in 0..data.len() {
                let g = grad[i] + self.weight_decay * data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                data[i] -= self.learning_rate * m_hat / (math::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }

    /// [`AdamState::step`] over a whole network. A non-finite gradient is
    /// reported with the index of its layer.
    pub fn step_mlp(&mut self, net: &mut MlpParams) -> Result<()> {
        self.step(&mut net.tensors_mut()).map_err(|e| match e {
            Error::NonFinite { index, .. } => Error::NonFinite {
                context: "adam gradient of layer",
                index: index / 2,
            },
            other => other,
        })
    }
}
