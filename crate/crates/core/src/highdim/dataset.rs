use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataDist {
    #[default]
    Gaussian,
    Rademacher,
}

impl DataDist {
    /// One feature entry with mean 0 and variance `1/d`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R, inv_sqrt_d: f64) -> f64 {
        match self {
            DataDist::Gaussian => {
                let g: f64 = StandardNormal.sample(rng);
                g * inv_sqrt_d
            }
            DataDist::Rademacher => {
                if rng.random::<bool>() {
                    inv_sqrt_d
                } else {
                    -inv_sqrt_d
                }
            }
        }
    }
}

/// Column-major `d × m` parameter block: column `j` occupies `[j·d, (j+1)·d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub d: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Params {
    pub fn zeros(d: usize, cols: usize) -> Self {
        Self { d, cols, data: vec![0.0; d * cols] }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.d..(j + 1) * self.d]
    }

    /// `d⁻¹ selfᵀ other`.
    pub fn gram(&self, other: &Params) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.cols, other.cols, |i, j| dot(self.col(i), other.col(j)) / self.d as f64)
    }

    pub fn norm_sq_per_dim(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>() / self.d as f64
    }

    pub fn to_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_column_slice(self.d, self.cols, &self.data)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A teacher–student instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    /// Row-major `n × d` design, entries of variance `1/d`.
    pub x: Vec<f64>,
    pub theta_star: Params,
    pub theta0: Params,
    pub eps: Vec<f64>,
    pub y: Vec<f64>,
    /// Row-major `n × k*` teacher projections `xᵢᵀθ*`.
    pub w_star: Vec<f64>,
}

impl Dataset {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn w_star_row(&self, i: usize) -> &[f64] {
        let ks = self.theta_star.cols;
        &self.w_star[i * ks..(i + 1) * ks]
    }

    pub fn x_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.d, &self.x)
    }
}

/// Rows `(θ⁰_j, θ*_j)` drawn i.i.d. from the initialization law.
pub fn sample_parameters<R: Rng + ?Sized>(spec: &ModelSpec, d: usize, rng: &mut R) -> (Params, Params) {
    let (k, ks) = (spec.k, spec.k_star);
    let mut theta0 = Params::zeros(d, k);
    let mut theta_star = Params::zeros(d, ks);
    let mut row = vec![0.0; k + ks];
    for j in 0..d {
        spec.init.sample_into(rng, &mut row);
        for c in 0..k {
            theta0.data[c * d + j] = row[c];
        }
        for c in 0..ks {
            theta_star.data[c * d + j] = row[k + c];
        }
    }
    (theta0, theta_star)
}

/// Draws parameters, then the design, then the noise, from one stream.
pub fn generate_dataset<R: Rng + ?Sized>(n: usize, d: usize, dist: DataDist, spec: &ModelSpec, rng: &mut R) -> Dataset {
    let (theta0, theta_star) = sample_parameters(spec, d, rng);
    let s = 1.0 / (d as f64).sqrt();
    let x: Vec<f64> = (0..n * d).map(|_| dist.sample(rng, s)).collect();
    let eps: Vec<f64> = (0..n).map(|_| spec.noise.sample(rng)).collect();
    let ks = spec.k_star;
    let mut w_star = vec![0.0; n * ks];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for c in 0..ks {
            w_star[i * ks + c] = dot(xi, theta_star.col(c));
        }
        y[i] = spec.label.value(&w_star[i * ks..(i + 1) * ks], eps[i]);
    }
    Dataset { n, d, x, theta_star, theta0, eps, y, w_star }
}
