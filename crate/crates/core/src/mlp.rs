//! Multi-layer perceptrons: plain forward, taped forward and forward-mode
//! directional derivatives with respect to the parameters.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::linalg::gemm;
use crate::math;
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => math::tanh(x),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `y`.
    #[inline]
    fn slope(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }

    fn on_tape(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(v),
            Activation::Relu => tape.relu(v),
            Activation::Linear => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `(fan_out, fan_in)`
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.dims2().1
    }

    pub fn fan_out(&self) -> usize {
        self.weight.dims2().0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Tape handles for one bound [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    layers: Vec<(Var, Var, Activation)>,
}

impl MlpVars {
    pub fn forward(&self, tape: &mut Tape, input: Var) -> Var {
        let mut x = input;
        for &(w, b, act) in &self.layers {
            let z = tape.linear(x, w, b);
            x = act.on_tape(tape, z);
        }
        x
    }
}

impl MlpParams {
    /// Builds a network with layer widths `sizes` (input first, output last);
    /// every weight matrix is drawn from `scheme`, biases start at zero.
    pub fn new(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        scheme: &InitScheme,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Contract("an MLP needs at least input and output widths"));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let weight = scheme.init_layer(fan_in, fan_out, rng)?.with_grad();
            let bias = Tensor::zeros(vec![fan_out]).with_grad();
            let activation = if i + 2 == sizes.len() { output } else { hidden };
            layers.push(Layer {
                weight,
                bias,
                activation,
            });
        }
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("an MLP needs at least one layer"));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weight.shape().len() != 2 {
                return Err(Error::Contract("layer weights must be matrices"));
            }
            if layer.bias.len() != layer.fan_out() {
                return Err(Error::dim("bias length", layer.fan_out(), layer.bias.len()));
            }
            if i > 0 && layers[i - 1].fan_out() != layer.fan_in() {
                return Err(Error::dim(
                    "layer chaining",
                    layers[i - 1].fan_out(),
                    layer.fan_in(),
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameter tensors in flat order: weight then bias, layer by layer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim("flat parameters", self.num_params(), flat.len()));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Accumulated gradients in flat order; missing buffers count as zero.
    pub fn flat_grad(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            match t.grad() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(core::iter::repeat(0.0).take(t.len())),
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::dim("mlp input width", self.input_dim(), width));
        }
        Ok(())
    }

    /// Forward pass over a batch of `rows` inputs laid out row-major.
    pub fn forward_batch(&self, rows: usize, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut width = self.input_dim();
        debug_assert_eq!(x.len(), rows * width);
        for layer in &self.layers {
            let fan_out = layer.fan_out();
            let mut z = vec![0.0; rows * fan_out];
            gemm(
                rows,
                width,
                fan_out,
                &x,
                false,
                layer.weight.data(),
                true,
                0.0,
                &mut z,
            );
            for row in z.chunks_exact_mut(fan_out) {
                for (v, b) in row.iter_mut().zip(layer.bias.data()) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            x = z;
            width = fan_out;
        }
        x
    }

    /// Single-input forward pass.
    pub fn forward_row(&self, input: &[f64]) -> Vec<f64> {
        self.forward_batch(1, input)
    }

    /// Forward pass on a `[n_in]` or `[rows, n_in]` tensor.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (rows, width) = input.dims2();
        self.check_input(width)?;
        let out = self.forward_batch(rows, input.data());
        if input.shape().len() == 1 {
            Ok(Tensor::from_vec(out))
        } else {
            Tensor::matrix(rows, self.output_dim(), out)
        }
    }

    /// Copies the parameters onto `tape`.
    pub fn bind(&self, tape: &mut Tape) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (tape.leaf(&l.weight), tape.leaf(&l.bias), l.activation))
                .collect(),
        }
    }

    /// Adds the tape's leaf gradients for `vars` into the parameter buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &MlpVars) -> Result<()> {
        for (layer, &(w, b, _)) in self.layers.iter_mut().zip(&vars.layers) {
            if let Some(g) = tape.grad(w) {
                layer.weight.accumulate_grad(g)?;
            }
            if let Some(g) = tape.grad(b) {
                layer.bias.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Leaf gradients for `vars` in flat parameter order, without touching
    /// the stored gradient buffers.
    pub fn tape_grad_flat(&self, tape: &Tape, vars: &MlpVars) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (layer, &(w, b, _)) in self.layers.iter().zip(&vars.layers) {
            for (var, len) in [(w, layer.weight.len()), (b, layer.bias.len())] {
                match tape.grad(var) {
                    Some(g) => out.extend_from_slice(g),
                    None => out.extend(core::iter::repeat(0.0).take(len)),
                }
            }
        }
        out
    }

    /// Directional derivative of the output with respect to the parameters
    /// along `direction` (flat parameter order), for every input row.
    pub fn jvp(&self, input: &Tensor, direction: &[f64]) -> Result<Tensor> {
        let (rows, width) = input.dims2();
        self.check_input(width)?;
        if direction.len() != self.num_params() {
            return Err(Error::dim("jvp direction", self.num_params(), direction.len()));
        }
        let (_, tangent) = self.jvp_batch(rows, input.data(), direction);
        if input.shape().len() == 1 {
            Ok(Tensor::from_vec(tangent))
        } else {
            Tensor::matrix(rows, self.output_dim(), tangent)
        }
    }

    /// Returns `(output, tangent)` for a row-major batch.
    pub fn jvp_batch(&self, rows: usize, input: &[f64], direction: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut x = input.to_vec();
        let mut dx = vec![0.0; x.len()];
        let mut width = self.input_dim();
        let mut offset = 0;
        for layer in &self.layers {
            let fan_out = layer.fan_out();
            let nw = fan_out * width;
            let dw = &direction[offset..offset + nw];
            let db = &direction[offset + nw..offset + nw + fan_out];
            offset += nw + fan_out;

            let mut z = vec![0.0; rows * fan_out];
            gemm(rows, width, fan_out, &x, false, layer.weight.data(), true, 0.0, &mut z);
            let mut dz = vec![0.0; rows * fan_out];
            gemm(rows, width, fan_out, &x, false, dw, true, 0.0, &mut dz);
            gemm(rows, width, fan_out, &dx, false, layer.weight.data(), true, 1.0, &mut dz);
            for (zr, dzr) in z.chunks_exact_mut(fan_out).zip(dz.chunks_exact_mut(fan_out)) {
                for j in 0..fan_out {
                    let pre = zr[j] + layer.bias.data()[j];
                    let y = layer.activation.apply(pre);
                    dzr[j] = layer.activation.slope(pre, y) * (dzr[j] + db[j]);
                    zr[j] = y;
                }
            }
            x = z;
            dx = dz;
            width = fan_out;
        }
        (x, dx)
    }
}
