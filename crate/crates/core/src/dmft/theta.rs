//! The θ-side effective process and the Monte Carlo estimate of
//! `(C_θ, C_θ^{·,*}, C_θ^{*,*}, R_θ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::gp::GpSampler;
use super::grid::TimeGrid;
use super::kernel::{Estimate, KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
use super::mc::{chunked_reduce, gemm_acc, McOptions};
use super::psd::psd_project;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::seed::{derive_seed, rng_from_seed, Stream};
use crate::stats::Moments;

/// One draw of `(θ⁰, θ*, u)` and the resulting θ-path.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTrajectory {
    pub theta0: DVector<f64>,
    pub theta_star: DVector<f64>,
    /// `P × k`
    pub u: DMatrix<f64>,
    /// `P × k`
    pub theta: DMatrix<f64>,
    /// For a ridge regularizer the response is deterministic.
    pub r_theta: TwoTimeKernel,
}

#[derive(Debug, Clone)]
pub struct ThetaSampler<'a> {
    spec: &'a ModelSpec,
    grid: TimeGrid,
    gp: GpSampler,
    xi: &'a XiKernels,
    r_theta: TwoTimeKernel,
    /// `δη̄^r (γΓ^r + λ)`, row-major `k × k` per r.
    local: Vec<f64>,
    /// `δη̄^r γ R_f^{r,q}`, indexed `[r][q]`.
    memory: Vec<f64>,
    /// `δη̄^r γ R_f^{r,*}`, `k × k*` per r.
    star: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ThetaWorkspace {
    init: Vec<f64>,
    normals: Vec<f64>,
    u: Vec<f64>,
    theta: Vec<f64>,
    drift: Vec<f64>,
}

/// The ridge response recursion
/// `r^{t,s} = I − Σ_{r=s}^{t−1} δη̄^r [(γΓ^r + λ) r^{r,s} + γ Σ_{q=s+1}^{r−1} R_f^{r,q} r^{q,s}]`.
pub fn theta_response(spec: &ModelSpec, xi: &XiKernels) -> TwoTimeKernel {
    let grid = *xi.grid();
    let p = grid.points();
    let k = spec.k;
    let delta = grid.delta();
    let gamma = spec.gamma;
    let lambda = spec.lambda();
    let eye = DMatrix::<f64>::identity(k, k);
    let mut r = TwoTimeKernel::zeros(grid, k, k, KernelKind::Response);
    for s in 0..p {
        for t in (s + 1)..p {
            // r^{t,s} = r^{t−1,s} − δη̄^{t−1}[…] with r^{s,s} = 0
            let prev = t - 1;
            let mut next = if prev == s { DMatrix::zeros(k, k) } else { r.block(prev, s).into_owned() };
            if prev == s {
                next += &eye;
            } else {
                let eta = spec.eta_at(grid.time(prev));
                let local = (&xi.gamma[prev] * gamma + &eye * lambda) * r.block(prev, s);
                let mut mem = DMatrix::zeros(k, k);
                for q in (s + 1)..prev {
                    mem += xi.r_f.block(prev, q) * r.block(q, s);
                }
                next -= (local + mem * gamma) * (delta * eta);
            }
            r.block_mut(t, s).copy_from(&next);
        }
    }
    r
}

impl<'a> ThetaSampler<'a> {
    pub fn new(spec: &'a ModelSpec, xi: &'a XiKernels) -> Result<Self> {
        spec.validate()?;
        let grid = *xi.grid();
        let p = grid.points();
        let k = spec.k;
        let ks = spec.k_star;
        if xi.c_f.rows() != k || xi.r_f_star.first().is_some_and(|b| b.ncols() != ks) {
            return Err(Error::Structural("ξ-kernels do not match the model dimensions".into()));
        }
        let gp = GpSampler::new(&xi.c_f)?;
        let delta = grid.delta();
        let (gamma, lambda) = (spec.gamma, spec.lambda());
        let kk = k * k;
        let mut local = vec![0.0; p * kk];
        let mut memory = vec![0.0; p * p * kk];
        let mut star = vec![0.0; p * k * ks];
        for r in 0..p {
            let w = delta * spec.eta_at(grid.time(r));
            for i in 0..k {
                for j in 0..k {
                    let id = if i == j { lambda } else { 0.0 };
                    local[r * kk + i * k + j] = w * (gamma * xi.gamma[r][(i, j)] + id);
                    for q in 0..r {
                        memory[(r * p + q) * kk + i * k + j] = w * gamma * xi.r_f.get(r, q, i, j);
                    }
                }
                for j in 0..ks {
                    star[(r * k + i) * ks + j] = w * gamma * xi.r_f_star[r][(i, j)];
                }
            }
        }
        Ok(Self { spec, grid, gp, xi, r_theta: theta_response(spec, xi), local, memory, star })
    }

    pub fn workspace(&self) -> ThetaWorkspace {
        let p = self.grid.points();
        let k = self.spec.k;
        ThetaWorkspace {
            init: vec![0.0; k + self.spec.k_star],
            normals: vec![0.0; self.gp.dim()],
            u: vec![0.0; self.gp.dim()],
            theta: vec![0.0; p * k],
            drift: vec![0.0; k],
        }
    }

    pub fn response(&self) -> &TwoTimeKernel {
        &self.r_theta
    }

    pub fn xi_kernels(&self) -> &XiKernels {
        self.xi
    }

    pub(crate) fn run<R: Rng + ?Sized>(&self, rng: &mut R, ws: &mut ThetaWorkspace) {
        let p = self.grid.points();
        let k = self.spec.k;
        let ks = self.spec.k_star;
        let kk = k * k;
        let sg = self.spec.gamma.sqrt();
        self.spec.init.sample_into(rng, &mut ws.init);
        self.gp.sample_into(rng, &mut ws.normals, &mut ws.u);
        let (theta0, theta_star) = ws.init.split_at(k);
        ws.drift.fill(0.0);
        for t in 0..p {
            if t > 0 {
                // drift += δη̄^r (γΓ^r θ^r + λθ^r + γ Σ_{q<r} R_f^{r,q} θ^q + γ R_f^{r,*} θ*)
                let r = t - 1;
                gemm_acc(1.0, &self.local[r * kk..(r + 1) * kk], &ws.theta[r * k..(r + 1) * k], &mut ws.drift, k, k, 1);
                for q in 0..r {
                    let m = &self.memory[(r * p + q) * kk..(r * p + q + 1) * kk];
                    gemm_acc(1.0, m, &ws.theta[q * k..(q + 1) * k], &mut ws.drift, k, k, 1);
                }
                gemm_acc(1.0, &self.star[r * k * ks..(r + 1) * k * ks], theta_star, &mut ws.drift, k, ks, 1);
            }
            for i in 0..k {
                ws.theta[t * k + i] = theta0[i] - ws.drift[i] + sg * ws.u[t * k + i];
            }
        }
    }

    pub fn sample(&self, seed: u64) -> ThetaTrajectory {
        let mut ws = self.workspace();
        self.run(&mut rng_from_seed(seed), &mut ws);
        let p = self.grid.points();
        let k = self.spec.k;
        ThetaTrajectory {
            theta0: DVector::from_column_slice(&ws.init[..k]),
            theta_star: DVector::from_column_slice(&ws.init[k..]),
            u: DMatrix::from_row_slice(p, k, &ws.u),
            theta: DMatrix::from_row_slice(p, k, &ws.theta),
            r_theta: self.r_theta.clone(),
        }
    }
}

/// Seed of trajectory `index` in an estimator run with base seed `seed`.
pub fn theta_trajectory_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, Stream::ThetaTrajectory, index)
}

pub fn sample_theta_trajectory(spec: &ModelSpec, xi: &XiKernels, seed: u64) -> Result<ThetaTrajectory> {
    Ok(ThetaSampler::new(spec, xi)?.sample(seed))
}

/// Monte Carlo estimate of the θ-kernels. `R_θ` is exact (zero standard
/// error) because the ridge response does not depend on the draw.
pub fn estimate_theta_kernels(spec: &ModelSpec, xi: &XiKernels, opts: &McOptions) -> Result<Estimate<ThetaKernels>> {
    if opts.n_samples < 2 {
        return Err(Error::InvalidInput("at least two Monte Carlo samples are required".into()));
    }
    let sampler = ThetaSampler::new(spec, xi)?;
    let grid = sampler.grid;
    let p = grid.points();
    let k = spec.k;
    let ks = spec.k_star;
    let m = p * k;

    let make = || {
        (
            sampler.workspace(),
            Moments::new(m * m),
            Moments::new(p * k * ks),
            Moments::new(ks * ks),
            vec![0.0; p * k * ks],
        )
    };
    let run = |state: &mut (ThetaWorkspace, Moments, Moments, Moments, Vec<f64>), i: usize| {
        let (ws, cc, cs, ss, buf) = state;
        let mut rng = rng_from_seed(theta_trajectory_seed(opts.seed, opts.index_offset + i as u64));
        sampler.run(&mut rng, ws);
        cc.push_outer(&ws.theta);
        let star = &ws.init[k..];
        for t in 0..p {
            for a in 0..k {
                for b in 0..ks {
                    buf[(t * k + a) * ks + b] = ws.theta[t * k + a] * star[b];
                }
            }
        }
        cs.push(buf);
        ss.push_outer(star);
    };
    let merge = |a: &mut (ThetaWorkspace, Moments, Moments, Moments, Vec<f64>),
                 b: (ThetaWorkspace, Moments, Moments, Moments, Vec<f64>)| {
        a.1.merge(&b.1);
        a.2.merge(&b.2);
        a.3.merge(&b.3);
    };
    let (_, cc, cs, ss, _) = chunked_reduce(opts.n_samples, make, run, merge);

    let assemble = |c: Vec<f64>, star: Vec<f64>, sstar: Vec<f64>, r: TwoTimeKernel| -> Result<ThetaKernels> {
        let mut c = TwoTimeKernel::from_matrix(grid, k, k, KernelKind::Covariance, DMatrix::from_row_slice(m, m, &c))?;
        c.symmetrize();
        Ok(ThetaKernels {
            c,
            c_star: (0..p).map(|t| DMatrix::from_row_slice(k, ks, &star[t * k * ks..(t + 1) * k * ks])).collect(),
            c_star_star: DMatrix::from_row_slice(ks, ks, &sstar),
            r,
        })
    };
    let mut value = assemble(cc.mean(), cs.mean(), ss.mean(), sampler.r_theta.clone())?;
    value.c = psd_project(&value.c)?;
    let stderr =
        assemble(cc.stderr(), cs.stderr(), ss.stderr(), TwoTimeKernel::zeros(grid, k, k, KernelKind::Response))?;
    Ok(Estimate { value, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InitLaw;

    fn spec(eta: f64) -> ModelSpec {
        ModelSpec::linear(0.8, eta, 0.1, InitLaw::independent(1, 1, 1.0, 0.5).unwrap())
    }

    fn zero_forcing(grid: TimeGrid) -> XiKernels {
        let mut xi = XiKernels::zeros(grid, 1, 1);
        for g in &mut xi.gamma {
            g[(0, 0)] = 1.0;
        }
        xi
    }

    #[test]
    fn first_step_response_is_identity() {
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let mut xi = zero_forcing(grid);
        for t in 0..grid.points() {
            for s in 0..t {
                xi.r_f.set(t, s, 0, 0, -0.05);
            }
        }
        let r = theta_response(&spec(0.8), &xi);
        assert!(r.is_causal());
        for s in 0..grid.steps() {
            assert_eq!(r.get(s + 1, s, 0, 0), 1.0);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let s = spec(0.0);
        let est = estimate_theta_kernels(&s, &XiKernels::zeros(grid, 1, 1), &McOptions::new(4000, 2)).unwrap();
        let c = &est.value.c;
        for t in 0..grid.points() {
            for u in 0..grid.points() {
                assert!((c.get(t, u, 0, 0) - c.get(0, 0, 0, 0)).abs() < 1e-12);
            }
            for u in 0..t {
                assert_eq!(est.value.r.get(t, u, 0, 0), 1.0);
            }
        }
        let css = est.value.c_star_star[(0, 0)];
        assert!((css - 0.5).abs() < 3.0 * est.stderr.c_star_star[(0, 0)]);
    }

    #[test]
    fn ridge_response_decays_exponentially() {
        let grid = TimeGrid::new(2.0, 0.01).unwrap();
        let s = spec(0.8);
        let r = theta_response(&s, &zero_forcing(grid));
        let rate = 0.8 * (0.8 + 0.1);
        for (t, u) in [(100, 0), (200, 50), (150, 140)] {
            let exact = (-rate * grid.time(t - u)).exp();
            assert!((r.get(t, u, 0, 0) - exact).abs() < 2.0 * grid.delta(), "{t},{u}");
        }
    }

    #[test]
    fn path_matches_hand_recursion() {
        let grid = TimeGrid::new(0.5, 0.1).unwrap();
        let mut xi = zero_forcing(grid);
        for t in 0..grid.points() {
            xi.r_f_star[t][(0, 0)] = -1.0;
            for s in 0..t {
                xi.r_f.set(t, s, 0, 0, -0.02 * (t - s) as f64);
                xi.c_f.set(t, s, 0, 0, 0.0);
            }
            xi.c_f.set(t, t, 0, 0, 0.01 * t as f64);
        }
        let s = spec(0.8);
        let tr = sample_theta_trajectory(&s, &xi, 12).unwrap();
        let (d, g, l) = (0.1, 0.8, 0.1);
        let mut th = vec![0.0; grid.points()];
        let mut drift = 0.0;
        for t in 0..grid.points() {
            if t > 0 {
                let r = t - 1;
                let mem: f64 = (0..r).map(|q| xi.r_f.get(r, q, 0, 0) * th[q]).sum();
                drift += d * 0.8 * (g * th[r] + l * th[r] + g * mem - g * tr.theta_star[0]);
            }
            th[t] = tr.theta0[0] - drift + g.sqrt() * tr.u[(t, 0)];
            assert!((th[t] - tr.theta[(t, 0)]).abs() < 1e-12);
        }
    }
}
