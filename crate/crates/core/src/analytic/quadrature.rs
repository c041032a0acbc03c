//! Gauss–Hermite rules for Gaussian expectations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Nodes and weights integrating against the standard normal density.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigenvalues of the Jacobi matrix of the probabilists'
    /// Hermite polynomials, weights from the first eigenvector components.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidInput("quadrature order must be positive".into()));
        }
        let mut j = DMatrix::<f64>::zeros(order, order);
        for i in 0..order - 1 {
            let b = ((i + 1) as f64).sqrt();
            j[(i, i + 1)] = b;
            j[(i + 1, i)] = b;
        }
        let eig = nalgebra::linalg::SymmetricEigen::try_new(j, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("Golub–Welsch eigensolver did not converge".into()))?;
        let mut pairs: Vec<(f64, f64)> =
            (0..order).map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Symmetric square root `V diag(√λ₊) Vᵀ` of a PSD matrix.
pub fn psd_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = cov.clone().symmetric_eigen();
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}

/// `E[h(X)]` for `X ~ N(0, cov)` on the tensor-product rule; `h` adds its
/// value, scaled by the given weight, into the output accumulator.
pub fn expect_gaussian<F>(cov: &DMatrix<f64>, rule: &GaussHermite, out_len: usize, mut h: F) -> Vec<f64>
where
    F: FnMut(&[f64], f64, &mut [f64]),
{
    let m = cov.nrows();
    let root = psd_sqrt(cov);
    let n = rule.order();
    let mut out = vec![0.0; out_len];
    let mut idx = vec![0usize; m];
    let mut g = DVector::<f64>::zeros(m);
    let mut x = vec![0.0; m];
    loop {
        let mut w = 1.0;
        for (i, &j) in idx.iter().enumerate() {
            g[i] = rule.nodes[j];
            w *= rule.weights[j];
        }
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = (0..m).map(|j| root[(i, j)] * g[j]).sum();
        }
        h(&x, w, &mut out);
        // Odometer increment over the tensor grid.
        let mut pos = 0;
        loop {
            if pos == m {
                return out;
            }
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
