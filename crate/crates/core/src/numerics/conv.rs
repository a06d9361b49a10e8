use serde::{Deserialize, Serialize};

use super::{Parameters, Tensor2};
use crate::error::{shape, Result};

/// 1-D convolution, stride 1, zero "same" padding of `(kernel - 1) / 2` on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    /// `[out][in][k]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(shape(format!("conv kernel must be odd, got {kernel}")));
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(shape("conv channels must be positive"));
        }
        Ok(Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel],
            bias: vec![0.0; out_channels],
        })
    }

    #[inline]
    fn w(&self, o: usize, i: usize, k: usize) -> f64 {
        self.weights[(o * self.in_channels + i) * self.kernel + k]
    }

    pub fn forward(&self, input: &Tensor2) -> Result<Tensor2> {
        if input.channels != self.in_channels {
            return Err(shape(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input.channels
            )));
        }
        let len = input.length;
        let half = (self.kernel / 2) as isize;
        let mut out = Tensor2::zeros(self.out_channels, len);
        for o in 0..self.out_channels {
            let row = &mut out.data[o * len..(o + 1) * len];
            row.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let x = input.channel(i);
                for k in 0..self.kernel {
                    let w = self.w(o, i, k);
                    let shift = k as isize - half;
                    // output t reads x[t + shift]
                    let t0 = (-shift).max(0) as usize;
                    let t1 = (len as isize - shift).min(len as isize).max(0) as usize;
                    for t in t0..t1 {
                        row[t] += w * x[(t as isize + shift) as usize];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns `(grad_input, grad_layer)`.
    pub fn backward(&self, input: &Tensor2, grad_output: &Tensor2) -> Result<(Tensor2, ConvLayer)> {
        if input.channels != self.in_channels
            || grad_output.channels != self.out_channels
            || grad_output.length != input.length
        {
            return Err(shape(format!(
                "conv backward: input {}x{}, grad {}x{}, layer {}->{}",
                input.channels,
                input.length,
                grad_output.channels,
                grad_output.length,
                self.in_channels,
                self.out_channels
            )));
        }
        let len = input.length;
        let half = (self.kernel / 2) as isize;
        let mut grad_in = Tensor2::zeros(self.in_channels, len);
        let mut grad = ConvLayer {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.out_channels],
            ..*self
        };
        for o in 0..self.out_channels {
            let g = grad_output.channel(o);
            grad.bias[o] = g.iter().sum();
            for i in 0..self.in_channels {
                let x = input.channel(i);
                let gx = &mut grad_in.data[i * len..(i + 1) * len];
                for k in 0..self.kernel {
                    let w = self.w(o, i, k);
                    let shift = k as isize - half;
                    let t0 = (-shift).max(0) as usize;
                    let t1 = (len as isize - shift).min(len as isize).max(0) as usize;
                    let mut gw = 0.0;
                    for t in t0..t1 {
                        let s = (t as isize + shift) as usize;
                        gw += g[t] * x[s];
                        gx[s] += g[t] * w;
                    }
                    grad.weights[(o * self.in_channels + i) * self.kernel + k] = gw;
                }
            }
        }
        Ok((grad_in, grad))
    }
}

impl Parameters for ConvLayer {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.weights, &self.bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, &mut self.bias]
    }
}

pub fn conv1d_forward(input: &Tensor2, layer: &ConvLayer) -> Result<Tensor2> {
    layer.forward(input)
}

pub fn conv1d_backward(input: &Tensor2, layer: &ConvLayer, grad_output: &Tensor2) -> Result<(Tensor2, ConvLayer)> {
    layer.backward(input, grad_output)
}
