//! Hodge-Laplacian assembly and a dense eigendecomposition used as a
//! validation oracle for polynomial filtering.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::complex::{BoundaryOperator, SimplicialComplex};
use crate::error::{Error, Result};
use crate::signal::SimplexSignal;
use crate::sparse::CsrMatrix;

/// Largest Laplacian the dense oracle accepts by default.
pub const DEFAULT_ORACLE_LIMIT: usize = 2000;

/// Eigenvalues in `(-CLAMP, 0)` are reported as exactly zero.
pub const EIGEN_CLAMP: f64 = 1e-12;

/// `L_k = ∂_{k+1} ∂_{k+1}ᵀ + ∂_kᵀ ∂_k` as a sparse symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HodgeLaplacian {
    pub k: usize,
    pub matrix: CsrMatrix,
}

impl HodgeLaplacian {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    /// Applies `L / scale` to a row-major `dim × channels` block.
    pub fn apply(&self, x: &[f64], channels: usize, scale: f64, out: &mut [f64]) {
        self.matrix.mul_block(x, channels, 1.0 / scale, out);
    }

    /// Largest-eigenvalue estimate from `steps` power iterations.
    pub fn lambda_max_estimate(&self, steps: usize) -> f64 {
        let n = self.dim();
        if n == 0 || self.matrix.nnz() == 0 {
            return 0.0;
        }
        // Start away from the constant vector, which lies in ker L₀.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 13) as f64).collect();
        let mut w = vec![0.0; n];
        let mut estimate = 0.0;
        for _ in 0..steps {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return estimate;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            self.matrix.mul_block(&v, 1, 1.0, &mut w);
            estimate = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            std::mem::swap(&mut v, &mut w);
        }
        estimate
    }

    /// Coordinate-list text, one `row col value` line per stored entry,
    /// row-major.
    pub fn to_coo_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.matrix.triplets() {
            writeln!(s, "{r} {c} {v}").unwrap();
        }
        s
    }
}

fn gram_of_columns(b: &BoundaryOperator) -> Vec<(usize, usize, f64)> {
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); b.cols];
    for &(r, c, s) in &b.entries {
        cols[c].push((r, f64::from(s)));
    }
    outer_products(&cols)
}

fn gram_of_rows(b: &BoundaryOperator) -> Vec<(usize, usize, f64)> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); b.rows];
    for &(r, c, s) in &b.entries {
        rows[r].push((c, f64::from(s)));
    }
    outer_products(&rows)
}

fn outer_products(vectors: &[Vec<(usize, f64)>]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for v in vectors {
        for &(a, x) in v {
            for &(b, y) in v {
                out.push((a, b, x * y));
            }
        }
    }
    out
}

/// Assembles `L_0 = ∂₁∂₁ᵀ` or `L_1 = ∂₂∂₂ᵀ + ∂₁ᵀ∂₁`.
pub fn hodge_laplacian(complex: &SimplicialComplex, k: usize) -> Result<HodgeLaplacian> {
    let d1 = complex.boundary_1();
    let matrix = match k {
        0 => CsrMatrix::from_triplets(d1.rows, d1.rows, gram_of_columns(&d1)),
        1 => {
            let d2 = complex.boundary_2()?;
            let mut t = gram_of_columns(&d2);
            t.extend(gram_of_rows(&d1));
            CsrMatrix::from_triplets(d1.cols, d1.cols, t)
        }
        _ => return Err(Error::UnsupportedDimension(k)),
    };
    Ok(HodgeLaplacian { k, matrix })
}

/// Eigenpairs of a Hodge-Laplacian, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Column `j` pairs with `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Ψ diag(h(λ)) Ψᵀ` applied to every channel of `f`.
    pub fn filter(&self, spectrum: impl Fn(f64) -> f64, f: &SimplexSignal) -> Result<SimplexSignal> {
        let n = self.dim();
        if f.dim() != n {
            return Err(Error::shape(format!(
                "signal dim {} does not match Laplacian dim {n}",
                f.dim()
            )));
        }
        let gains: Vec<f64> = self.eigenvalues.iter().map(|&l| spectrum(l)).collect();
        let psi = &self.eigenvectors;
        let mut out = SimplexSignal::zeros(n, f.channels());
        for ch in 0..f.channels() {
            let x = nalgebra::DVector::from_vec(f.channel(ch));
            let mut coeffs = psi.tr_mul(&x);
            for (c, g) in coeffs.iter_mut().zip(&gains) {
                *c *= g;
            }
            let y = psi * coeffs;
            for (r, v) in y.iter().enumerate() {
                out.set(r, ch, *v);
            }
        }
        Ok(out)
    }
}

pub fn spectral_decompose(l: &HodgeLaplacian) -> Result<SpectralDecomposition> {
    spectral_decompose_with_limit(l, DEFAULT_ORACLE_LIMIT)
}

pub fn spectral_decompose_with_limit(l: &HodgeLaplacian, limit: usize) -> Result<SpectralDecomposition> {
    let n = l.dim();
    if n > limit {
        return Err(Error::OracleLimit { dim: n, limit });
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in l.matrix.triplets() {
        dense[(r, c)] = v;
    }
    let eig = SymmetricEigen::new(dense);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order
        .iter()
        .map(|&j| {
            let v = eig.eigenvalues[j];
            if v < 0.0 && v > -EIGEN_CLAMP {
                0.0
            } else {
                v
            }
        })
        .collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Ground-truth spectral filtering `Σ_j h(λ_j) ⟨ψ_j, f⟩ ψ_j` via dense
/// eigendecomposition.
pub fn spectral_filter_reference(
    l: &HodgeLaplacian,
    spectrum: impl Fn(f64) -> f64,
    f: &SimplexSignal,
) -> Result<SimplexSignal> {
    spectral_decompose(l)?.filter(spectrum, f)
}
