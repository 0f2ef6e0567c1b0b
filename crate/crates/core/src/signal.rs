use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued features on the k-simplices of a complex, stored row-major
/// as `dim × channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexSignal {
    dim: usize,
    channels: usize,
    values: Vec<f64>,
}

impl SimplexSignal {
    pub fn zeros(dim: usize, channels: usize) -> Self {
        SimplexSignal {
            dim,
            channels,
            values: vec![0.0; dim * channels],
        }
    }

    pub fn from_vec(dim: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * channels {
            return Err(Error::shape(format!(
                "signal of {dim}x{channels} needs {} values, got {}",
                dim * channels,
                values.len()
            )));
        }
        Ok(SimplexSignal {
            dim,
            channels,
            values,
        })
    }

    /// Single-channel signal.
    pub fn column(values: Vec<f64>) -> Self {
        SimplexSignal {
            dim: values.len(),
            channels: 1,
            values,
        }
    }

    /// Unit pulse at `index`.
    pub fn pulse(dim: usize, index: usize) -> Self {
        let mut s = SimplexSignal::zeros(dim, 1);
        s.values[index] = 1.0;
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, ch: usize) -> f64 {
        self.values[row * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, ch: usize, v: f64) {
        self.values[row * self.channels + ch] = v;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.channels..(row + 1) * self.channels]
    }

    /// One channel as a contiguous vector.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, ch)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &SimplexSignal) -> f64 {
        assert_eq!((self.dim, self.channels), (other.dim, other.channels));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
