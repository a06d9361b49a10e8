use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{shape, Result};

/// Affine map `y = W x + b` with `W` stored `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(shape("linear dimensions must be positive"));
        }
        Ok(Self {
            out_dim,
            in_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.in_dim {
            return Err(shape(format!("linear expects {} inputs, got {}", self.in_dim, input.len())));
        }
        Ok(self
            .weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect())
    }

    /// Returns `(grad_input, grad_layer)`.
    pub fn backward(&self, input: &[f64], grad_output: &[f64]) -> Result<(Vec<f64>, Linear)> {
        if input.len() != self.in_dim || grad_output.len() != self.out_dim {
            return Err(shape(format!(
                "linear backward: layer {}->{}, input {}, grad {}",
                self.in_dim,
                self.out_dim,
                input.len(),
                grad_output.len()
            )));
        }
        let mut grad_in = vec![0.0; self.in_dim];
        let mut grad = Linear {
            weights: vec![0.0; self.weights.len()],
            bias: grad_output.to_vec(),
            ..*self
        };
        for (o, &g) in grad_output.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] = g * input[i];
                grad_in[i] += g * row[i];
            }
        }
        Ok((grad_in, grad))
    }
}

impl Parameters for Linear {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

pub fn linear_forward(input: &[f64], layer: &Linear) -> Result<Vec<f64>> {
    layer.forward(input)
}

pub fn linear_backward(input: &[f64], layer: &Linear, grad_output: &[f64]) -> Result<(Vec<f64>, Linear)> {
    layer.backward(input, grad_output)
}
