use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::filters::{laguerre_terms, FilterBank};
use crate::laplacian::HodgeLaplacian;
use crate::signal::SimplexSignal;

/// Spectral convolution on k-simplices followed by bias and leaky ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HLConvLayer {
    pub k: usize,
    pub bank: FilterBank,
    pub bias: Vec<f64>,
    pub slope: f64,
}

/// Intermediate values needed by [`HLConvLayer::backward`].
#[derive(Debug, Clone)]
pub struct HLConvCache {
    pub terms: Vec<SimplexSignal>,
    pub pre: SimplexSignal,
}

impl HLConvLayer {
    pub fn new(k: usize, bank: FilterBank, slope: f64) -> Result<Self> {
        let layer = Self { k, bias: vec![0.0; bank.out_channels], bank, slope };
        layer.validate()?;
        Ok(layer)
    }

    pub fn zeros(k: usize, order: usize, in_channels: usize, out_channels: usize, scale: f64) -> Result<Self> {
        let mut bank = FilterBank::zeros(order, in_channels, out_channels)?;
        bank.spectral_scale = scale;
        Self::new(k, bank, LEAKY_SLOPE)
    }

    /// Glorot-uniform channel mixing in the constant term, small uniform
    /// noise in the higher terms.
    pub fn init_glorot<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (i_ch, o_ch, order) = (self.bank.in_channels, self.bank.out_channels, self.bank.order);
        let mix = super::glorot(i_ch * o_ch, i_ch, o_ch, rng);
        for o in 0..o_ch {
            for i in 0..i_ch {
                self.bank.set_coeff(o, i, 0, mix[o * i_ch + i]);
                for p in 1..order {
                    self.bank.set_coeff(o, i, p, rng.random_range(-0.01..=0.01));
                }
            }
        }
    }

    /// `θ_0 = 1`, `θ_{p>0} = 0`, every coefficient perturbed by `±0.01`.
    pub fn init_near_identity<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (i_ch, o_ch, order) = (self.bank.in_channels, self.bank.out_channels, self.bank.order);
        for o in 0..o_ch {
            for i in 0..i_ch {
                for p in 0..order {
                    let base = if p == 0 { 1.0 } else { 0.0 };
                    self.bank.set_coeff(o, i, p, base + rng.random_range(-0.01..=0.01));
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 1 {
            return Err(Error::UnsupportedDimension(self.k));
        }
        self.bank.validate()?;
        if self.bias.len() != self.bank.out_channels {
            return Err(Error::shape("bias length does not match output channels"));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::InvalidParameter(format!("leaky slope {} outside (0, 1)", self.slope)));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.bank.out_channels
    }

    fn check_laplacian(&self, l: &HodgeLaplacian) -> Result<()> {
        if l.k != self.k {
            return Err(Error::shape(format!("layer acts on k={}, Laplacian is L{}", self.k, l.k)));
        }
        Ok(())
    }

    pub fn forward(&self, l: &HodgeLaplacian, x: &SimplexSignal) -> Result<(SimplexSignal, HLConvCache)> {
        self.check_laplacian(l)?;
        if x.channels() != self.bank.in_channels {
            return Err(Error::shape(format!(
                "HL conv expects {} input channels, got {}",
                self.bank.in_channels,
                x.channels()
            )));
        }
        let terms = laguerre_terms(l, self.bank.spectral_scale, x, self.bank.order)?;
        let mut pre = self.bank.combine(&terms)?;
        let ch = pre.channels();
        for (j, v) in pre.values_mut().iter_mut().enumerate() {
            *v += self.bias[j % ch];
        }
        let out = SimplexSignal::from_vec(pre.dim(), ch, leaky_relu(pre.values(), self.slope))?;
        Ok((out, HLConvCache { terms, pre }))
    }

    /// Returns `(d_theta, d_bias, d_input)` given the gradient at the activation output.
    pub fn backward(
        &self,
        l: &HodgeLaplacian,
        cache: &HLConvCache,
        grad: &SimplexSignal,
    ) -> Result<(Vec<f64>, Vec<f64>, SimplexSignal)> {
        self.check_laplacian(l)?;
        if grad.dim() != cache.pre.dim() || grad.channels() != cache.pre.channels() {
            return Err(Error::shape("HL conv gradient does not match the forward output"));
        }
        let ch = grad.channels();
        let dz = SimplexSignal::from_vec(
            grad.dim(),
            ch,
            leaky_relu_backward(cache.pre.values(), grad.values(), self.slope),
        )?;
        let mut db = vec![0.0; ch];
        for (j, g) in dz.values().iter().enumerate() {
            db[j % ch] += g;
        }
        let (dtheta, dx) = self.bank.backward(l, &cache.terms, &dz)?;
        Ok((dtheta, db, dx))
    }
}
