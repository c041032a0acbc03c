use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Two-time covariance; symmetric as a full matrix.
    Covariance,
    /// Strictly causal response; blocks with `s >= t` vanish.
    Response,
}

/// Blocks `K^{t,s}` (each `rows × cols`) over all pairs of grid times, stored
/// as one dense `(P·rows) × (P·cols)` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeKernel {
    grid: TimeGrid,
    rows: usize,
    cols: usize,
    kind: KernelKind,
    data: DMatrix<f64>,
}

impl TwoTimeKernel {
    pub fn zeros(grid: TimeGrid, rows: usize, cols: usize, kind: KernelKind) -> Self {
        let p = grid.points();
        Self { grid, rows, cols, kind, data: DMatrix::zeros(p * rows, p * cols) }
    }

    pub fn from_matrix(grid: TimeGrid, rows: usize, cols: usize, kind: KernelKind, data: DMatrix<f64>) -> Result<Self> {
        let p = grid.points();
        if data.nrows() != p * rows || data.ncols() != p * cols {
            return Err(Error::Structural(format!(
                "kernel matrix is {}×{}, expected {}×{}",
                data.nrows(),
                data.ncols(),
                p * rows,
                p * cols
            )));
        }
        Ok(Self { grid, rows, cols, kind, data })
    }

    /// Scalar kernel from a function of the two time indices.
    pub fn from_fn(grid: TimeGrid, kind: KernelKind, f: impl Fn(usize, usize) -> f64) -> Self {
        let p = grid.points();
        Self { grid, rows: 1, cols: 1, kind, data: DMatrix::from_fn(p, p, f) }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn points(&self) -> usize {
        self.grid.points()
    }

    pub fn block(&self, t: usize, s: usize) -> DMatrixView<'_, f64> {
        self.data.view((t * self.rows, s * self.cols), (self.rows, self.cols))
    }

    pub fn block_mut(&mut self, t: usize, s: usize) -> DMatrixViewMut<'_, f64> {
        self.data.view_mut((t * self.rows, s * self.cols), (self.rows, self.cols))
    }

    /// Entry `(i, j)` of block `(t, s)`.
    #[inline]
    pub fn get(&self, t: usize, s: usize, i: usize, j: usize) -> f64 {
        self.data[(t * self.rows + i, s * self.cols + j)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, s: usize, i: usize, j: usize, v: f64) {
        self.data[(t * self.rows + i, s * self.cols + j)] = v;
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols || self.grid.points() != other.grid.points() {
            return Err(Error::Structural(format!(
                "kernel shapes differ: {} points of {}×{} vs {} points of {}×{}",
                self.points(),
                self.rows,
                self.cols,
                other.points(),
                other.rows,
                other.cols
            )));
        }
        Ok(())
    }

    /// Replaces the matrix by `(K + Kᵀ)/2`; exact symmetry afterwards.
    pub fn symmetrize(&mut self) {
        let n = self.data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.data[(i, j)] + self.data[(j, i)]);
                self.data[(i, j)] = v;
                self.data[(j, i)] = v;
            }
        }
    }

    /// Zeroes every block with `s >= t`.
    pub fn enforce_causality(&mut self) {
        let p = self.points();
        for t in 0..p {
            for s in t..p {
                self.block_mut(t, s).fill(0.0);
            }
        }
    }

    /// Whether every block with `s >= t` is exactly zero.
    pub fn is_causal(&self) -> bool {
        let p = self.points();
        (0..p).all(|t| (t..p).all(|s| self.block(t, s).iter().all(|&v| v == 0.0)))
    }

    /// Largest entrywise absolute difference.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(other.data.iter()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `(1 − ω) self + ω other`.
    pub fn blend(&self, other: &Self, omega: f64) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.data = &self.data * (1.0 - omega) + &other.data * omega;
        Ok(out)
    }
}

fn blocks_distance(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.shape() != y.shape()) {
        return Err(Error::Structural("per-time block arrays differ in shape".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max))
}

fn blend_blocks(a: &[DMatrix<f64>], b: &[DMatrix<f64>], omega: f64) -> Vec<DMatrix<f64>> {
    a.iter().zip(b).map(|(x, y)| x * (1.0 - omega) + y * omega).collect()
}

/// The θ-side kernels `(C_θ, C_θ^{·,*}, C_θ^{*,*}, R_θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaKernels {
    pub c: TwoTimeKernel,
    /// `C_θ^{t,*} = E[θ^t ⊗ θ*]`, one `k × k*` block per grid time.
    pub c_star: Vec<DMatrix<f64>>,
    /// `E[θ* ⊗ θ*]`.
    pub c_star_star: DMatrix<f64>,
    pub r: TwoTimeKernel,
}

impl ThetaKernels {
    /// The exact fixed point at zero learning rate: θ stays at θ⁰ and every
    /// strictly retarded response is the identity.
    pub fn free(spec: &ModelSpec, grid: TimeGrid) -> Self {
        let k = spec.k;
        let p = grid.points();
        let (s00, s0s, sss) = spec.init.blocks(k);
        let mut c = TwoTimeKernel::zeros(grid, k, k, KernelKind::Covariance);
        let mut r = TwoTimeKernel::zeros(grid, k, k, KernelKind::Response);
        let eye = DMatrix::<f64>::identity(k, k);
        for t in 0..p {
            for s in 0..p {
                c.block_mut(t, s).copy_from(&s00);
                if s < t {
                    r.block_mut(t, s).copy_from(&eye);
                }
            }
        }
        Self { c, c_star: vec![s0s; p], c_star_star: sss, r }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.c.grid()
    }

    pub fn k(&self) -> usize {
        self.c.rows()
    }

    pub fn k_star(&self) -> usize {
        self.c_star_star.nrows()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        let mut d = self.c.sup_distance(&other.c)?;
        d = d.max(self.r.sup_distance(&other.r)?);
        d = d.max(blocks_distance(&self.c_star, &other.c_star)?);
        d = d.max(blocks_distance(std::slice::from_ref(&self.c_star_star), std::slice::from_ref(&other.c_star_star))?);
        Ok(d)
    }

    pub fn blend(&self, other: &Self, omega: f64) -> Result<Self> {
        self.distance(other)?;
        Ok(Self {
            c: self.c.blend(&other.c, omega)?,
            c_star: blend_blocks(&self.c_star, &other.c_star, omega),
            c_star_star: &self.c_star_star * (1.0 - omega) + &other.c_star_star * omega,
            r: self.r.blend(&other.r, omega)?,
        })
    }
}

/// The ξ-side kernels `(C_f, R_f, R_f^{·,*}, Γ)`.
///
/// `R_f` blocks carry the discrete normalization: they approximate `δ` times
/// the continuous response density.
#[derive(Debug, Clone, PartialEq)]
pub struct XiKernels {
    pub c_f: TwoTimeKernel,
    pub r_f: TwoTimeKernel,
    /// `k × k*` per grid time.
    pub r_f_star: Vec<DMatrix<f64>>,
    /// `k × k` per grid time.
    pub gamma: Vec<DMatrix<f64>>,
}

impl XiKernels {
    pub fn zeros(grid: TimeGrid, k: usize, k_star: usize) -> Self {
        let p = grid.points();
        Self {
            c_f: TwoTimeKernel::zeros(grid, k, k, KernelKind::Covariance),
            r_f: TwoTimeKernel::zeros(grid, k, k, KernelKind::Response),
            r_f_star: vec![DMatrix::zeros(k, k_star); p],
            gamma: vec![DMatrix::zeros(k, k); p],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.c_f.grid()
    }

    pub fn distance(&self, other: &Self) -> Result<f64> {
        let mut d = self.c_f.sup_distance(&other.c_f)?;
        d = d.max(self.r_f.sup_distance(&other.r_f)?);
        d = d.max(blocks_distance(&self.r_f_star, &other.r_f_star)?);
        d = d.max(blocks_distance(&self.gamma, &other.gamma)?);
        Ok(d)
    }
}

/// A full DMFT tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct DMFTState {
    pub theta: ThetaKernels,
    pub xi: XiKernels,
}

/// Max over all components of the entrywise sup-norm difference, star blocks
/// included.
pub fn kernel_distance(a: &DMFTState, b: &DMFTState) -> Result<f64> {
    Ok(a.theta.distance(&b.theta)?.max(a.xi.distance(&b.xi)?))
}

/// A Monte Carlo estimate with entrywise standard errors of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub stderr: T,
}
