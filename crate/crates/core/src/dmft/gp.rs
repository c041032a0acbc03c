use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::kernel::TwoTimeKernel;
use super::psd::{cholesky_with_jitter, project_psd_matrix};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Sampler for a mean-zero Gaussian process on the grid, optionally jointly
/// with a static `k*`-vector `w*` whose cross-covariances are the star blocks.
///
/// Draws are laid out as `(w*, w⁰, w¹, …, w^N)`.
#[derive(Debug, Clone)]
pub struct GpSampler {
    /// Packed rows of the lower Cholesky factor.
    packed: Vec<f64>,
    dim: usize,
    k: usize,
    k_star: usize,
}

/// One realization of a process and its static companion.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDraw {
    pub star: DVector<f64>,
    /// `P × k`, one row per grid time.
    pub path: DMatrix<f64>,
}

impl GpSampler {
    pub fn new(c: &TwoTimeKernel) -> Result<Self> {
        Self::build(c, None)
    }

    pub fn with_star(c: &TwoTimeKernel, c_star: &[DMatrix<f64>], c_star_star: &DMatrix<f64>) -> Result<Self> {
        Self::build(c, Some((c_star, c_star_star)))
    }

    fn build(c: &TwoTimeKernel, star: Option<(&[DMatrix<f64>], &DMatrix<f64>)>) -> Result<Self> {
        if c.rows() != c.cols() {
            return Err(Error::Structural("GP kernel blocks must be square".into()));
        }
        let k = c.rows();
        let p = c.points();
        let k_star = star.map_or(0, |(_, ss)| ss.nrows());
        let dim = k_star + p * k;
        let mut joint = DMatrix::zeros(dim, dim);
        joint.view_mut((k_star, k_star), (p * k, p * k)).copy_from(c.matrix());
        if let Some((cs, ss)) = star {
            if cs.len() != p || cs.iter().any(|b| b.shape() != (k, k_star)) || !ss.is_square() {
                return Err(Error::Structural("star blocks do not match the kernel".into()));
            }
            joint.view_mut((0, 0), (k_star, k_star)).copy_from(ss);
            for (t, b) in cs.iter().enumerate() {
                joint.view_mut((k_star + t * k, 0), (k, k_star)).copy_from(b);
                joint.view_mut((0, k_star + t * k), (k_star, k)).copy_from(&b.transpose());
            }
        }
        let projected = project_psd_matrix(&joint)?;
        let l = cholesky_with_jitter(&projected)?;
        let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in 0..=i {
                packed.push(l[(i, j)]);
            }
        }
        Ok(Self { packed, dim, k, k_star })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fills `normals` with fresh standard normals and writes `L · normals`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, normals: &mut [f64], out: &mut [f64]) {
        for g in normals.iter_mut() {
            *g = rng.sample(StandardNormal);
        }
        let mut offset = 0;
        for i in 0..self.dim {
            let row = &self.packed[offset..offset + i + 1];
            out[i] = row.iter().zip(&normals[..=i]).map(|(a, b)| a * b).sum();
            offset += i + 1;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GpDraw {
        let mut normals = vec![0.0; self.dim];
        let mut out = vec![0.0; self.dim];
        self.sample_into(rng, &mut normals, &mut out);
        let p = (self.dim - self.k_star) / self.k;
        GpDraw {
            star: DVector::from_column_slice(&out[..self.k_star]),
            path: DMatrix::from_row_slice(p, self.k, &out[self.k_star..]),
        }
    }
}

/// One draw from `GP(0, C)` (plus `w*` when star blocks are given).
pub fn sample_gp(c: &TwoTimeKernel, star: Option<(&[DMatrix<f64>], &DMatrix<f64>)>, seed: u64) -> Result<GpDraw> {
    let sampler = GpSampler::build(c, star)?;
    Ok(sampler.sample(&mut rng_from_seed(seed)))
}
