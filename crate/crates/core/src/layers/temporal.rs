use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-node multichannel time series, stored node-major then time then channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub nodes: usize,
    pub time: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Series {
    pub fn zeros(nodes: usize, time: usize, channels: usize) -> Self {
        Self { nodes, time, channels, data: vec![0.0; nodes * time * channels] }
    }

    pub fn from_vec(nodes: usize, time: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nodes * time * channels {
            return Err(Error::shape(format!(
                "series of {nodes}x{time}x{channels} needs {} values, got {}",
                nodes * time * channels,
                data.len()
            )));
        }
        Ok(Self { nodes, time, channels, data })
    }

    #[inline]
    pub fn idx(&self, n: usize, t: usize, c: usize) -> usize {
        (n * self.time + t) * self.channels + c
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize, c: usize) -> f64 {
        self.data[self.idx(n, t, c)]
    }
}

/// 1-D convolution along time, shared across nodes. Cross-correlation with
/// `(kernel - 1) / 2` zeros on the left and the rest on the right, so the
/// output keeps the input length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalConvLayer {
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Flattened `[out][in][kernel]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl TemporalConvLayer {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        let layer = Self {
            kernel_size,
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * kernel_size],
            bias: vec![0.0; out_channels],
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn init<R: Rng + ?Sized>(kernel_size: usize, in_channels: usize, out_channels: usize, rng: &mut R) -> Result<Self> {
        let mut layer = Self::zeros(kernel_size, in_channels, out_channels)?;
        layer.weights = super::glorot(
            layer.weights.len(),
            in_channels * kernel_size,
            out_channels * kernel_size,
            rng,
        );
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidParameter(
                "temporal layer needs kernel size and channel counts of at least 1".into(),
            ));
        }
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel_size
            || self.bias.len() != self.out_channels
        {
            return Err(Error::shape("temporal layer parameter lengths do not match its shape"));
        }
        Ok(())
    }

    pub fn pad_left(&self) -> usize {
        (self.kernel_size - 1) / 2
    }

    #[inline]
    fn w(&self, o: usize, i: usize, k: usize) -> usize {
        (o * self.in_channels + i) * self.kernel_size + k
    }

    /// Source time index for output step `t` and tap `k`, if inside the series.
    #[inline]
    fn source(&self, t: usize, k: usize, len: usize) -> Option<usize> {
        let s = (t + k).checked_sub(self.pad_left())?;
        (s < len).then_some(s)
    }

    pub fn forward(&self, x: &Series) -> Result<Series> {
        if x.channels != self.in_channels {
            return Err(Error::shape(format!(
                "temporal layer expects {} input channels, got {}",
                self.in_channels, x.channels
            )));
        }
        let mut out = Series::zeros(x.nodes, x.time, self.out_channels);
        for n in 0..x.nodes {
            for t in 0..x.time {
                for o in 0..self.out_channels {
                    let mut acc = self.bias[o];
                    for k in 0..self.kernel_size {
                        let Some(s) = self.source(t, k, x.time) else { continue };
                        for i in 0..self.in_channels {
                            acc += self.weights[self.w(o, i, k)] * x.get(n, s, i);
                        }
                    }
                    let j = out.idx(n, t, o);
                    out.data[j] = acc;
                }
            }
        }
        Ok(out)
    }

    /// Returns `(d_weights, d_bias, d_input)` for upstream gradient `grad`.
    pub fn backward(&self, x: &Series, grad: &Series) -> Result<(Vec<f64>, Vec<f64>, Series)> {
        if grad.nodes != x.nodes || grad.time != x.time || grad.channels != self.out_channels {
            return Err(Error::shape("temporal backward: gradient shape does not match the forward output"));
        }
        let mut dw = vec![0.0; self.weights.len()];
        let mut db = vec![0.0; self.out_channels];
        let mut dx = Series::zeros(x.nodes, x.time, x.channels);
        for n in 0..x.nodes {
            for t in 0..x.time {
                for o in 0..self.out_channels {
                    let g = grad.get(n, t, o);
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    for k in 0..self.kernel_size {
                        let Some(s) = self.source(t, k, x.time) else { continue };
                        for i in 0..self.in_channels {
                            let wi = self.w(o, i, k);
                            dw[wi] += g * x.get(n, s, i);
                            let xi = dx.idx(n, s, i);
                            dx.data[xi] += g * self.weights[wi];
                        }
                    }
                }
            }
        }
        Ok((dw, db, dx))
    }
}

/// Non-overlapping max-pool of width 2 along time; a trailing odd step is
/// dropped. Returns the pooled series and the winning source time per output.
pub fn max_pool_time(x: &Series) -> Result<(Series, Vec<usize>)> {
    let time = x.time / 2;
    if time == 0 {
        return Err(Error::shape(format!("cannot max-pool a series of length {}", x.time)));
    }
    let mut out = Series::zeros(x.nodes, time, x.channels);
    let mut arg = vec![0; out.data.len()];
    for n in 0..x.nodes {
        for t in 0..time {
            for c in 0..x.channels {
                let (a, b) = (x.get(n, 2 * t, c), x.get(n, 2 * t + 1, c));
                let j = out.idx(n, t, c);
                // Ties go to the earlier step.
                if b > a {
                    out.data[j] = b;
                    arg[j] = 2 * t + 1;
                } else {
                    out.data[j] = a;
                    arg[j] = 2 * t;
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn max_pool_time_backward(input_time: usize, arg: &[usize], grad: &Series) -> Series {
    let mut dx = Series::zeros(grad.nodes, input_time, grad.channels);
    for n in 0..grad.nodes {
        for t in 0..grad.time {
            for c in 0..grad.channels {
                let j = grad.idx(n, t, c);
                let src = dx.idx(n, arg[j], c);
                dx.data[src] += grad.data[j];
            }
        }
    }
    dx
}

/// Mean over the time axis, giving a node-major `nodes x channels` block.
pub fn global_average_time(x: &Series) -> Vec<f64> {
    let mut out = vec![0.0; x.nodes * x.channels];
    let inv = 1.0 / x.time as f64;
    for n in 0..x.nodes {
        for t in 0..x.time {
            for c in 0..x.channels {
                out[n * x.channels + c] += x.get(n, t, c) * inv;
            }
        }
    }
    out
}

pub fn global_average_time_backward(nodes: usize, time: usize, channels: usize, grad: &[f64]) -> Series {
    let mut dx = Series::zeros(nodes, time, channels);
    let inv = 1.0 / time as f64;
    for n in 0..nodes {
        for t in 0..time {
            for c in 0..channels {
                let j = dx.idx(n, t, c);
                dx.data[j] = grad[n * channels + c] * inv;
            }
        }
    }
    dx
}
