use nalgebra::{linalg::SymmetricEigen, Cholesky, DMatrix};

use super::kernel::{KernelKind, TwoTimeKernel};
use crate::error::{Error, Result};

/// Relative jitters tried, in order, before giving up on a Cholesky factor.
pub const JITTER_SCHEDULE: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn project_psd_matrix(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Structural("PSD projection needs a square matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigendecomposition did not converge".into()))?;
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        let mut out = (m + m.transpose()) * 0.5;
        symmetrize_in_place(&mut out);
        return Ok(out);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    symmetrize_in_place(&mut out);
    Ok(out)
}

fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Nearest PSD covariance kernel in Frobenius norm.
pub fn psd_project(c: &TwoTimeKernel) -> Result<TwoTimeKernel> {
    if c.kind() != KernelKind::Covariance {
        return Err(Error::Structural("PSD projection applies to covariance kernels".into()));
    }
    let m = project_psd_matrix(c.matrix())?;
    TwoTimeKernel::from_matrix(*c.grid(), c.rows(), c.cols(), KernelKind::Covariance, m)
}

/// Lower Cholesky factor with the jitter schedule `ε · mean(diag)`.
///
/// An identically zero matrix has the zero factor.
pub fn cholesky_with_jitter(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance contains non-finite entries".into()));
    }
    let mean_diag = m.diagonal().sum() / n as f64;
    if mean_diag == 0.0 && m.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(n, n));
    }
    let scale = mean_diag.abs().max(f64::MIN_POSITIVE);
    for &eps in &JITTER_SCHEDULE {
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += eps * scale;
        }
        if let Some(ch) = Cholesky::new(a) {
            return Ok(ch.unpack());
        }
    }
    Err(Error::KernelNotPsd { jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1] })
}
