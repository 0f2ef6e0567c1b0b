//! Laguerre-polynomial spectral filter banks.
//!
//! A bank of order `P` holds one coefficient vector `θ[o][i][0..P]` per
//! (output, input) channel pair and realizes the spectrum
//! `h(λ) = Σ_p θ_p T_p(λ / s)`. Filtering never forms `T_p(L)`: the
//! Laguerre three-term recurrence is run on the signal itself, so one
//! application costs `P - 1` sparse products per input channel.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::HodgeLaplacian;
use crate::signal::SimplexSignal;

/// `[T_0(λ), …, T_{P-1}(λ)]` via the Laguerre recurrence
/// `T_{p+1} = ((2p + 1 - λ) T_p - p T_{p-1}) / (p + 1)`.
pub fn laguerre_eval(order: usize, lambda: f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(order);
    if order == 0 {
        return t;
    }
    t.push(1.0);
    if order > 1 {
        t.push(1.0 - lambda);
    }
    for p in 1..order.saturating_sub(1) {
        let pf = p as f64;
        let next = ((2.0 * pf + 1.0 - lambda) * t[p] - pf * t[p - 1]) / (pf + 1.0);
        t.push(next);
    }
    t
}

/// Vector recurrence `t_p = T_p(L/s) f` for `p < order`, all channels at once.
pub fn laguerre_terms(
    l: &HodgeLaplacian,
    scale: f64,
    f: &SimplexSignal,
    order: usize,
) -> Result<Vec<SimplexSignal>> {
    if f.dim() != l.dim() {
        return Err(Error::shape(format!(
            "signal dim {} does not match Laplacian dim {}",
            f.dim(),
            l.dim()
        )));
    }
    let (n, ch) = (f.dim(), f.channels());
    let mut terms: Vec<SimplexSignal> = Vec::with_capacity(order);
    if order == 0 {
        return Ok(terms);
    }
    terms.push(f.clone());
    let mut lt = vec![0.0; n * ch];
    for p in 0..order - 1 {
        l.apply(terms[p].values(), ch, scale, &mut lt);
        let pf = p as f64;
        let mut next = SimplexSignal::zeros(n, ch);
        {
            let cur = terms[p].values();
            let out = next.values_mut();
            if p == 0 {
                for ((o, c), a) in out.iter_mut().zip(cur).zip(&lt) {
                    *o = c - a;
                }
            } else {
                let prev = terms[p - 1].values();
                for (idx, o) in out.iter_mut().enumerate() {
                    *o = ((2.0 * pf + 1.0) * cur[idx] - lt[idx] - pf * prev[idx]) / (pf + 1.0);
                }
            }
        }
        terms.push(next);
    }
    Ok(terms)
}

/// Laguerre coefficients for every (output, input) channel pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    #[serde(default = "crate::io::schema_version")]
    pub schema_version: u32,
    pub order: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub spectral_scale: f64,
    /// Flat `[out][in][p]`, row-major.
    pub theta: Vec<f64>,
}

impl FilterBank {
    pub fn new(
        order: usize,
        in_channels: usize,
        out_channels: usize,
        spectral_scale: f64,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let bank = FilterBank {
            schema_version: crate::io::SCHEMA_VERSION,
            order,
            in_channels,
            out_channels,
            spectral_scale,
            theta,
        };
        bank.validate()?;
        Ok(bank)
    }

    pub fn zeros(order: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        FilterBank::new(
            order,
            in_channels,
            out_channels,
            1.0,
            vec![0.0; order * in_channels * out_channels],
        )
    }

    /// Single-channel bank with the given coefficients.
    pub fn single(theta: Vec<f64>) -> Result<Self> {
        FilterBank::new(theta.len(), 1, 1, 1.0, theta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("filter order must be at least 1".into()));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidParameter("filter channels must be positive".into()));
        }
        if !(self.spectral_scale > 0.0) || !self.spectral_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spectral scale must be positive, got {}",
                self.spectral_scale
            )));
        }
        let expected = self.order * self.in_channels * self.out_channels;
        if self.theta.len() != expected {
            return Err(Error::shape(format!(
                "theta has {} entries, expected {expected}",
                self.theta.len()
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, out: usize, input: usize, p: usize) -> usize {
        (out * self.in_channels + input) * self.order + p
    }

    pub fn coeff(&self, out: usize, input: usize, p: usize) -> f64 {
        self.theta[self.index(out, input, p)]
    }

    pub fn set_coeff(&mut self, out: usize, input: usize, p: usize, v: f64) {
        let i = self.index(out, input, p);
        self.theta[i] = v;
    }

    /// Spectrum `λ ↦ Σ_p θ[o][i][p] T_p(λ/s)` of one channel pair.
    pub fn spectrum(&self, out: usize, input: usize) -> impl Fn(f64) -> f64 + '_ {
        move |lambda| {
            laguerre_eval(self.order, lambda / self.spectral_scale)
                .iter()
                .enumerate()
                .map(|(p, t)| self.coeff(out, input, p) * t)
                .sum()
        }
    }

    /// Combines precomputed Laguerre terms of the input into the output.
    pub fn combine(&self, terms: &[SimplexSignal]) -> Result<SimplexSignal> {
        if terms.len() != self.order {
            return Err(Error::shape(format!(
                "expected {} Laguerre terms, got {}",
                self.order,
                terms.len()
            )));
        }
        let n = terms[0].dim();
        if terms[0].channels() != self.in_channels {
            return Err(Error::shape(format!(
                "signal has {} channels, bank expects {}",
                terms[0].channels(),
                self.in_channels
            )));
        }
        let mut out = SimplexSignal::zeros(n, self.out_channels);
        for (p, t) in terms.iter().enumerate() {
            for r in 0..n {
                let src = t.row(r);
                for o in 0..self.out_channels {
                    let mut acc = 0.0;
                    for (i, x) in src.iter().enumerate() {
                        acc += self.coeff(o, i, p) * x;
                    }
                    let cur = out.get(r, o);
                    out.set(r, o, cur + acc);
                }
            }
        }
        Ok(out)
    }

    /// Bank with input and output roles swapped. Because `T_p(L)` is
    /// symmetric, applying it to an output-space gradient yields the
    /// input-space gradient.
    pub fn transposed(&self) -> FilterBank {
        let mut t = FilterBank {
            schema_version: self.schema_version,
            order: self.order,
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            spectral_scale: self.spectral_scale,
            theta: vec![0.0; self.theta.len()],
        };
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                for p in 0..self.order {
                    t.set_coeff(i, o, p, self.coeff(o, i, p));
                }
            }
        }
        t
    }

    /// Reverse pass of [`laguerre_apply`]: returns `(∂/∂θ, ∂/∂f)` given the
    /// forward input terms and the gradient with respect to the output.
    pub fn backward(
        &self,
        l: &HodgeLaplacian,
        terms: &[SimplexSignal],
        grad_out: &SimplexSignal,
    ) -> Result<(Vec<f64>, SimplexSignal)> {
        if grad_out.channels() != self.out_channels || grad_out.dim() != l.dim() {
            return Err(Error::shape("output gradient does not match bank/Laplacian"));
        }
        let mut grad_theta = vec![0.0; self.theta.len()];
        for (p, t) in terms.iter().enumerate() {
            for r in 0..t.dim() {
                let x = t.row(r);
                let g = grad_out.row(r);
                for (o, go) in g.iter().enumerate() {
                    if *go == 0.0 {
                        continue;
                    }
                    for (i, xi) in x.iter().enumerate() {
                        grad_theta[self.index(o, i, p)] += go * xi;
                    }
                }
            }
        }
        let grad_in = laguerre_apply(l, &self.transposed(), grad_out)?;
        Ok((grad_theta, grad_in))
    }
}

/// `f' = Σ_p θ_p T_p(L/s) f`, per output channel summed over inputs.
pub fn laguerre_apply(l: &HodgeLaplacian, bank: &FilterBank, f: &SimplexSignal) -> Result<SimplexSignal> {
    if f.channels() != bank.in_channels {
        return Err(Error::shape(format!(
            "signal has {} channels, bank expects {}",
            f.channels(),
            bank.in_channels
        )));
    }
    let terms = laguerre_terms(l, bank.spectral_scale, f, bank.order)?;
    bank.combine(&terms)
}

/// Applies several banks in sequence (a stack of linear filter layers).
pub fn stacked_apply(l: &HodgeLaplacian, banks: &[FilterBank], f: &SimplexSignal) -> Result<SimplexSignal> {
    banks
        .iter()
        .try_fold(f.clone(), |x, bank| laguerre_apply(l, bank, &x))
}

/// Simplices that a polynomial of degree `order - 1` in `L` can reach from
/// `source`: everything within `order - 1` hops in the off-diagonal
/// sparsity graph of `L`. On complexes without filled triangles this graph
/// is the node graph (k = 0) or the line graph (k = 1).
pub fn filter_support(l: &HodgeLaplacian, order: usize, source: usize) -> Result<BTreeSet<usize>> {
    let n = l.dim();
    if source >= n {
        return Err(Error::InvalidParameter(format!("source {source} out of range for dim {n}")));
    }
    let reach = order.saturating_sub(1);
    let mut dist = vec![usize::MAX; n];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        if dist[u] == reach {
            continue;
        }
        for (v, _) in l.matrix.row(u) {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok((0..n).filter(|&v| dist[v] != usize::MAX).collect())
}

/// Indices whose magnitude exceeds `tol`.
pub fn numeric_support(signal: &SimplexSignal, tol: f64) -> BTreeSet<usize> {
    (0..signal.dim())
        .filter(|&r| signal.row(r).iter().any(|v| v.abs() > tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::SimplicialComplex;
    use crate::laplacian::hodge_laplacian;

    #[test]
    fn laguerre_small_values() {
        assert_eq!(laguerre_eval(2, 0.0), vec![1.0, 1.0]);
        assert_eq!(laguerre_eval(3, 2.0), vec![1.0, -1.0, -1.0]);
        assert_eq!(laguerre_eval(3, 1.0), vec![1.0, 0.0, -0.5]);
        assert_eq!(laguerre_eval(1, 5.0), vec![1.0]);
    }

    #[test]
    fn identity_bank_is_identity() {
        let l = hodge_laplacian(&SimplicialComplex::grid(3, 3), 1).unwrap();
        let f = SimplexSignal::column((0..l.dim()).map(|i| i as f64 - 3.0).collect());
        let bank = FilterBank::single(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let out = laguerre_apply(&l, &bank, &f).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn t0_minus_t1_is_the_laplacian() {
        let l = hodge_laplacian(&SimplicialComplex::path(3), 1).unwrap();
        let bank = FilterBank::single(vec![1.0, -1.0]).unwrap();
        let out = laguerre_apply(&l, &bank, &SimplexSignal::column(vec![1.0, 0.0])).unwrap();
        assert_eq!(out.values(), &[2.0, -1.0]);
    }

    #[test]
    fn shape_errors() {
        let l = hodge_laplacian(&SimplicialComplex::path(3), 1).unwrap();
        let bank = FilterBank::single(vec![1.0]).unwrap();
        let wrong_dim = SimplexSignal::column(vec![1.0, 2.0, 3.0]);
        assert!(matches!(laguerre_apply(&l, &bank, &wrong_dim), Err(Error::Shape(_))));
        let wrong_ch = SimplexSignal::zeros(2, 2);
        assert!(matches!(laguerre_apply(&l, &bank, &wrong_ch), Err(Error::Shape(_))));
        assert!(FilterBank::new(2, 1, 1, 1.0, vec![1.0]).is_err());
        assert!(FilterBank::new(0, 1, 1, 1.0, vec![]).is_err());
        assert!(FilterBank::new(1, 1, 1, 0.0, vec![1.0]).is_err());
    }

    #[test]
    fn support_on_path4() {
        let c = SimplicialComplex::path(4);
        let l1 = hodge_laplacian(&c, 1).unwrap();
        assert_eq!(filter_support(&l1, 1, 0).unwrap(), BTreeSet::from([0]));
        assert_eq!(filter_support(&l1, 2, 0).unwrap(), BTreeSet::from([0, 1]));
        let l0 = hodge_laplacian(&c, 0).unwrap();
        assert_eq!(filter_support(&l0, 2, 0).unwrap(), BTreeSet::from([0, 1]));
    }

    #[test]
    fn transposed_round_trip() {
        let mut bank = FilterBank::zeros(3, 2, 4).unwrap();
        for (i, t) in bank.theta.iter_mut().enumerate() {
            *t = i as f64;
        }
        assert_eq!(bank.transposed().transposed(), bank);
    }

    #[test]
    fn bank_json_layout() {
        let bank = FilterBank::new(2, 1, 2, 1.5, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&bank).unwrap();
        assert_eq!(v["order"], 2);
        assert_eq!(v["in_channels"], 1);
        assert_eq!(v["out_channels"], 2);
        assert_eq!(v["spectral_scale"], 1.5);
        assert_eq!(v["theta"], serde_json::json!([1.0, 2.0, 3.0, 4.0]));
        assert!(v.get("schema_version").is_some());
        let back: FilterBank = serde_json::from_value(v).unwrap();
        assert_eq!(back, bank);
    }
}
