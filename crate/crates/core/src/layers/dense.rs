use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer `z = W x + b` with `W` stored row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        l.weights = super::glorot(in_dim * out_dim, in_dim, out_dim, rng);
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::shape("dense layer parameter lengths do not match its shape"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseCache)> {
        if x.len() != self.in_dim {
            return Err(Error::shape(format!("dense layer expects {} inputs, got {}", self.in_dim, x.len())));
        }
        let out = (0..self.out_dim)
            .map(|o| {
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        Ok((out, DenseCache { input: x.to_vec() }))
    }

    /// Returns `(d_weights, d_bias, d_input)`.
    pub fn backward(&self, cache: &DenseCache, grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if grad.len() != self.out_dim {
            return Err(Error::shape("dense gradient length does not match output size"));
        }
        let mut dw = vec![0.0; self.weights.len()];
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in grad.iter().enumerate() {
            let row = o * self.in_dim;
            for i in 0..self.in_dim {
                dw[row + i] = g * cache.input[i];
                dx[i] += g * self.weights[row + i];
            }
        }
        Ok((dw, grad.to_vec(), dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_and_backward_match_linear_regression() {
        // One linear output over a batch of rows: summing per-row gradients of
        // ½(ŷ - y)² gives Xᵀ(ŷ - y).
        let layer = DenseLayer { in_dim: 2, out_dim: 1, weights: vec![0.5, -1.0], bias: vec![0.25] };
        let xs = [[1.0, 2.0], [3.0, -1.0], [0.0, 4.0]];
        let ys = [1.0, 0.0, -2.0];
        let mut dw = [0.0; 2];
        let mut db = 0.0;
        let mut expect = [0.0; 2];
        let mut expect_b = 0.0;
        for (x, y) in xs.iter().zip(ys) {
            let (out, cache) = layer.forward(x).unwrap();
            let r = out[0] - y;
            let (w, b, _) = layer.backward(&cache, &[r]).unwrap();
            dw[0] += w[0];
            dw[1] += w[1];
            db += b[0];
            let yhat = 0.5 * x[0] - x[1] + 0.25;
            expect[0] += x[0] * (yhat - y);
            expect[1] += x[1] * (yhat - y);
            expect_b += yhat - y;
        }
        assert!((dw[0] - expect[0]).abs() < 1e-12 && (dw[1] - expect[1]).abs() < 1e-12);
        assert!((db - expect_b).abs() < 1e-12);
    }

    #[test]
    fn wrong_input_length() {
        assert!(DenseLayer::zeros(3, 1).forward(&[1.0]).is_err());
    }
}
