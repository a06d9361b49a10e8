//! Differentiable kernels for the fixed encoder/head architecture, each with a
//! hand-derived backward pass, plus a central-difference gradient verifier.
//!
//! Everything is `f64`. No kernel mutates its inputs.

mod conv;
mod gradcheck;
mod linear;

use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};

pub use conv::{conv1d_backward, conv1d_forward, ConvLayer};
pub use gradcheck::{finite_diff_check, relative_error, BlockReport, GradCheckOptions, GradCheckReport, ParamBlock};
pub use linear::{linear_backward, linear_forward, Linear};

/// Channel-major `channels x length` buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            data: vec![0.0; channels * length],
        }
    }

    pub fn from_data(channels: usize, length: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * length {
            return Err(shape(format!(
                "tensor {channels}x{length} needs {} values, got {}",
                channels * length,
                data.len()
            )));
        }
        Ok(Self { channels, length, data })
    }

    /// Single-channel tensor over a series window.
    pub fn row(values: &[f64]) -> Self {
        Self {
            channels: 1,
            length: values.len(),
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn at(&self, c: usize, t: usize) -> f64 {
        self.data[c * self.length + t]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }
}

/// Flat views over the trainable arrays of a layer (or a stack of layers),
/// in a fixed declaration order.
pub trait Parameters {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn same_shape(&self, other: &Self) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.len() == y.len())
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if !self.same_shape(other) {
            return Err(shape("parameter blocks differ in shape"));
        }
        let src = other.blocks();
        for (dst, src) in self.blocks_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
        Ok(())
    }

    /// Reptile interpolation `self <- self - rate * (self - toward)`,
    /// evaluated as `(1 - rate) * self + rate * toward` so that rates 0 and 1
    /// reproduce either endpoint exactly.
    fn step_toward(&mut self, rate: f64, toward: &Self) -> Result<()> {
        if !self.same_shape(toward) {
            return Err(shape("parameter blocks differ in shape"));
        }
        let keep = 1.0 - rate;
        let src = toward.blocks();
        for (dst, src) in self.blocks_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = keep * *d + rate * s;
            }
        }
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.fill(value);
        }
    }

    fn scale(&mut self, factor: f64) {
        for b in self.blocks_mut() {
            for v in b {
                *v *= factor;
            }
        }
    }

    fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn blocks(&self) -> Vec<&[f64]> {
        self.iter().flat_map(|p| p.blocks()).collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(|p| p.blocks_mut()).collect()
    }
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

/// Subgradient at the origin is 0.
pub fn relu_backward(x: &[f64], grad_y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != grad_y.len() {
        return Err(shape(format!("relu: {} inputs vs {} gradients", x.len(), grad_y.len())));
    }
    Ok(x.iter().zip(grad_y).map(|(x, g)| if *x > 0.0 { *g } else { 0.0 }).collect())
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mae_loss(prediction: &[f64], target: &[f64]) -> Result<f64> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(shape(format!(
            "mae: prediction has {} values, target {}",
            prediction.len(),
            target.len()
        )));
    }
    let sum: f64 = prediction.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / prediction.len() as f64)
}

pub fn mae_grad(prediction: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    if prediction.len() != target.len() || prediction.is_empty() {
        return Err(shape(format!(
            "mae: prediction has {} values, target {}",
            prediction.len(),
            target.len()
        )));
    }
    let n = prediction.len() as f64;
    Ok(prediction.iter().zip(target).map(|(p, t)| sign(p - t) / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_values() {
        assert_eq!(relu_forward(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&[-1.0, 0.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_matches_finite_differences_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for _ in 0..200 {
            let x: f64 = rng.gen_range(-2.0..2.0);
            if x.abs() < 10.0 * h {
                continue;
            }
            let fd = (relu_forward(&[x + h])[0] - relu_forward(&[x - h])[0]) / (2.0 * h);
            let an = relu_backward(&[x], &[1.0]).unwrap()[0];
            assert!((fd - an).abs() < 1e-9);
        }
    }

    #[test]
    fn mae_basics() {
        assert_eq!(mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae_loss(&[3.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(mae_grad(&[3.0], &[1.0]).unwrap(), vec![1.0]);
        assert_eq!(mae_grad(&[1.0, 0.0], &[1.0, 2.0]).unwrap(), vec![0.0, -0.5]);
        assert!(mae_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mae_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.gen_range(1..20);
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let t: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mut brute = 0.0;
            for i in 0..n {
                brute += if p[i] > t[i] { p[i] - t[i] } else { t[i] - p[i] };
            }
            brute /= n as f64;
            assert!((mae_loss(&p, &t).unwrap() - brute).abs() < 1e-12);
        }
    }
}
