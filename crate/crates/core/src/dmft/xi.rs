//! The ξ-side effective process and the Monte Carlo estimate of
//! `(C_f, R_f, R_f^{·,*}, Γ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::driver::DriverLaw;
use super::gp::GpSampler;
use super::grid::TimeGrid;
use super::kernel::{Estimate, KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
use super::mc::{chunked_reduce, gemm_acc, McOptions};
use super::psd::psd_project;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::seed::{derive_seed, rng_from_seed, Stream};
use crate::stats::Moments;

/// One draw of `(w*, ε, w, z)` and the processes they generate.
#[derive(Debug, Clone, PartialEq)]
pub struct XiTrajectory {
    pub w_star: DVector<f64>,
    pub eps: f64,
    /// `P × k`
    pub w: DMatrix<f64>,
    pub z: Vec<f64>,
    /// `P × k`
    pub xi: DMatrix<f64>,
    pub r_f: TwoTimeKernel,
    /// `k × k*` per grid time.
    pub r_f_star: Vec<DMatrix<f64>>,
}

/// Precomputed law of the ξ-process for fixed θ-kernels.
#[derive(Debug, Clone)]
pub struct XiSampler<'a> {
    spec: &'a ModelSpec,
    grid: TimeGrid,
    gp: GpSampler,
    law: DriverLaw,
    /// Blocks `(η̄^r/κ̄) R_θ^{t,r}`, indexed `[t][r]`, row-major `k × k`.
    coef: Vec<f64>,
    eta_over_kappa: Vec<f64>,
}

/// Scratch buffers for one trajectory; every field is overwritten per draw.
#[derive(Debug, Clone)]
pub struct XiWorkspace {
    normals: Vec<f64>,
    gp_out: Vec<f64>,
    pub(crate) eps: f64,
    pub(crate) z: Vec<f64>,
    /// Times with `z ≠ 0`, increasing.
    pub(crate) jumps: Vec<usize>,
    pub(crate) xi: Vec<f64>,
    pub(crate) f: Vec<f64>,
    pub(crate) dxi: Vec<f64>,
    dws: Vec<f64>,
    pub(crate) rf_star: Vec<f64>,
    /// Blocks `r_f^{t,s}`, indexed `[t][s]`; only columns `s ∈ jumps`,
    /// rows `t > s`, are meaningful.
    pub(crate) rf: Vec<f64>,
    /// `U^t = Σ_{r<t} (η̄^r/κ̄) f(ξ^r) z^r`.
    pub(crate) u: Vec<f64>,
    acc: Vec<f64>,
}

impl<'a> XiSampler<'a> {
    pub fn new(spec: &'a ModelSpec, theta: &ThetaKernels) -> Result<Self> {
        spec.validate()?;
        let grid = *theta.grid();
        let k = spec.k;
        if theta.k() != k || theta.k_star() != spec.k_star {
            return Err(Error::Structural(format!(
                "θ-kernels have k={}, k*={}; model has k={}, k*={}",
                theta.k(),
                theta.k_star(),
                k,
                spec.k_star
            )));
        }
        let gp = GpSampler::with_star(&theta.c, &theta.c_star, &theta.c_star_star)?;
        let law = DriverLaw::new(spec.driver, spec.kappa_bar, grid.delta())?;
        let p = grid.points();
        let eta_over_kappa: Vec<f64> = (0..p).map(|r| spec.eta_at(grid.time(r)) / spec.kappa_bar).collect();
        let kk = k * k;
        let mut coef = vec![0.0; p * p * kk];
        for t in 0..p {
            for r in 0..t {
                let blk = theta.r.block(t, r);
                let base = (t * p + r) * kk;
                for i in 0..k {
                    for j in 0..k {
                        coef[base + i * k + j] = eta_over_kappa[r] * blk[(i, j)];
                    }
                }
            }
        }
        Ok(Self { spec, grid, gp, law, coef, eta_over_kappa })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn workspace(&self) -> XiWorkspace {
        let p = self.grid.points();
        let k = self.spec.k;
        let ks = self.spec.k_star;
        XiWorkspace {
            normals: vec![0.0; self.gp.dim()],
            gp_out: vec![0.0; self.gp.dim()],
            eps: 0.0,
            z: vec![0.0; p],
            jumps: Vec::with_capacity(p),
            xi: vec![0.0; p * k],
            f: vec![0.0; p * k],
            dxi: vec![0.0; p * k * k],
            dws: vec![0.0; p * k * ks],
            rf_star: vec![0.0; p * k * ks],
            rf: vec![0.0; p * p * k * k],
            u: vec![0.0; p * k],
            acc: vec![0.0; k * k.max(ks)],
        }
    }

    /// `w*` of the last draw in `ws`.
    pub(crate) fn w_star<'w>(&self, ws: &'w XiWorkspace) -> &'w [f64] {
        &ws.gp_out[..self.spec.k_star]
    }

    /// Draws one trajectory into `ws`. With `responses = false` only the
    /// primary process (ξ, f, U) is computed.
    pub(crate) fn run<R: Rng + ?Sized>(&self, rng: &mut R, ws: &mut XiWorkspace, responses: bool) {
        let spec = self.spec;
        let p = self.grid.points();
        let k = spec.k;
        let ks = spec.k_star;
        let kk = k * k;
        let kks = k * ks;

        self.gp.sample_into(rng, &mut ws.normals, &mut ws.gp_out);
        ws.eps = spec.noise.sample(rng);
        ws.jumps.clear();
        for r in 0..p {
            let z = self.law.sample(rng);
            ws.z[r] = z;
            if z != 0.0 {
                ws.jumps.push(r);
            }
        }
        let (w_star, w) = ws.gp_out.split_at(ks);
        let eps = ws.eps;
        ws.u[..k].fill(0.0);

        for t in 0..p {
            // ξ^t = w^t − Σ_{r<t} (η̄^r/κ̄) R_θ^{t,r} f(ξ^r) z^r
            let xi_t = &mut ws.xi[t * k..(t + 1) * k];
            xi_t.copy_from_slice(&w[t * k..(t + 1) * k]);
            for &r in ws.jumps.iter().take_while(|&&r| r < t) {
                let c = &self.coef[(t * p + r) * kk..(t * p + r + 1) * kk];
                gemm_acc(-ws.z[r], c, &ws.f[r * k..(r + 1) * k], xi_t, k, k, 1);
            }
            spec.f_into(xi_t, w_star, eps, &mut ws.f[t * k..(t + 1) * k]);
            if t + 1 < p {
                for i in 0..k {
                    ws.u[(t + 1) * k + i] = ws.u[t * k + i] + self.eta_over_kappa[t] * ws.f[t * k + i] * ws.z[t];
                }
            }
            if !responses {
                continue;
            }
            spec.jacobians_into(
                xi_t,
                w_star,
                eps,
                &mut ws.dxi[t * kk..(t + 1) * kk],
                &mut ws.dws[t * kks..(t + 1) * kks],
            );
            // r_f^{t,*} = −D_ξf^t Σ_{r<t} (η̄^r/κ̄) R_θ^{t,r} r_f^{r,*} z^r + D_{w*}f^t
            let acc = &mut ws.acc[..kks];
            acc.fill(0.0);
            for &r in ws.jumps.iter().take_while(|&&r| r < t) {
                let c = &self.coef[(t * p + r) * kk..(t * p + r + 1) * kk];
                gemm_acc(ws.z[r], c, &ws.rf_star[r * kks..(r + 1) * kks], acc, k, k, ks);
            }
            let out = &mut ws.rf_star[t * kks..(t + 1) * kks];
            out.copy_from_slice(&ws.dws[t * kks..(t + 1) * kks]);
            gemm_acc(-1.0, &ws.dxi[t * kk..(t + 1) * kk], acc, out, k, k, ks);
        }

        if !responses {
            return;
        }
        // Column s of r_f vanishes unless z^s ≠ 0.
        for (ji, &s) in ws.jumps.iter().enumerate() {
            for t in (s + 1)..p {
                let acc = &mut ws.acc[..kk];
                acc.fill(0.0);
                let c = &self.coef[(t * p + s) * kk..(t * p + s + 1) * kk];
                gemm_acc(ws.z[s], c, &ws.dxi[s * kk..(s + 1) * kk], acc, k, k, k);
                for &r in ws.jumps[ji + 1..].iter().take_while(|&&r| r < t) {
                    let c = &self.coef[(t * p + r) * kk..(t * p + r + 1) * kk];
                    let rf_rs = &ws.rf[(r * p + s) * kk..(r * p + s + 1) * kk];
                    gemm_acc(ws.z[r], c, rf_rs, acc, k, k, k);
                }
                let out = &mut ws.rf[(t * p + s) * kk..(t * p + s + 1) * kk];
                out.fill(0.0);
                gemm_acc(-1.0, &ws.dxi[t * kk..(t + 1) * kk], acc, out, k, k, k);
            }
        }
    }

    /// The trajectory with seed `seed`.
    pub fn sample(&self, seed: u64) -> XiTrajectory {
        let mut ws = self.workspace();
        self.run(&mut rng_from_seed(seed), &mut ws, true);
        self.extract(&ws)
    }

    fn extract(&self, ws: &XiWorkspace) -> XiTrajectory {
        let p = self.grid.points();
        let k = self.spec.k;
        let ks = self.spec.k_star;
        let kk = k * k;
        let mut r_f = TwoTimeKernel::zeros(self.grid, k, k, KernelKind::Response);
        for &s in &ws.jumps {
            for t in (s + 1)..p {
                let b = &ws.rf[(t * p + s) * kk..(t * p + s + 1) * kk];
                r_f.block_mut(t, s).copy_from(&DMatrix::from_row_slice(k, k, b));
            }
        }
        XiTrajectory {
            w_star: DVector::from_column_slice(self.w_star(ws)),
            eps: ws.eps,
            w: DMatrix::from_row_slice(p, k, &ws.gp_out[ks..]),
            z: ws.z.clone(),
            xi: DMatrix::from_row_slice(p, k, &ws.xi),
            r_f,
            r_f_star: (0..p)
                .map(|t| DMatrix::from_row_slice(k, ks, &ws.rf_star[t * k * ks..(t + 1) * k * ks]))
                .collect(),
        }
    }

    pub(crate) fn trajectory_rng(seed: u64, index: u64) -> rand_chacha::ChaCha8Rng {
        rng_from_seed(derive_seed(seed, Stream::XiTrajectory, index))
    }
}

/// Seed of trajectory `index` in an estimator run with base seed `seed`.
pub fn xi_trajectory_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, Stream::XiTrajectory, index)
}

/// One draw of the ξ-process given the θ-kernels.
pub fn sample_xi_trajectory(spec: &ModelSpec, theta: &ThetaKernels, seed: u64) -> Result<XiTrajectory> {
    Ok(XiSampler::new(spec, theta)?.sample(seed))
}

struct XiAccum {
    cf: Moments,
    rf: Moments,
    rf_star: Moments,
    gamma: Moments,
}

/// Monte Carlo estimate of `(C_f, R_f, R_f^{·,*}, Γ)` with entrywise
/// standard errors. `C_f` is symmetrized and projected onto the PSD cone.
pub fn estimate_xi_kernels(spec: &ModelSpec, theta: &ThetaKernels, opts: &McOptions) -> Result<Estimate<XiKernels>> {
    if opts.n_samples < 2 {
        return Err(Error::InvalidInput("at least two Monte Carlo samples are required".into()));
    }
    let sampler = XiSampler::new(spec, theta)?;
    let grid = sampler.grid;
    let p = grid.points();
    let k = spec.k;
    let ks = spec.k_star;
    let kk = k * k;
    let m = p * k;

    let make = || {
        (
            sampler.workspace(),
            XiAccum {
                cf: Moments::new(m * m),
                rf: Moments::new(p * p * kk),
                rf_star: Moments::new(p * k * ks),
                gamma: Moments::new(p * kk),
            },
        )
    };
    let run = |state: &mut (XiWorkspace, XiAccum), i: usize| {
        let (ws, acc) = state;
        let mut rng = XiSampler::trajectory_rng(opts.seed, opts.index_offset + i as u64);
        sampler.run(&mut rng, ws, true);
        acc.cf.push_outer(&ws.u);
        acc.rf.tick();
        for &s in &ws.jumps {
            for t in (s + 1)..p {
                let base = (t * p + s) * kk;
                for e in 0..kk {
                    acc.rf.add_at(base + e, ws.rf[base + e]);
                }
            }
        }
        acc.rf_star.push(&ws.rf_star);
        acc.gamma.push(&ws.dxi);
    };
    let merge = |a: &mut (XiWorkspace, XiAccum), b: (XiWorkspace, XiAccum)| {
        a.1.cf.merge(&b.1.cf);
        a.1.rf.merge(&b.1.rf);
        a.1.rf_star.merge(&b.1.rf_star);
        a.1.gamma.merge(&b.1.gamma);
    };
    let (_, acc) = chunked_reduce(opts.n_samples, make, run, merge);

    let assemble = |cf: Vec<f64>, rf: Vec<f64>, rf_star: Vec<f64>, gamma: Vec<f64>| -> Result<XiKernels> {
        let mut c_f =
            TwoTimeKernel::from_matrix(grid, k, k, KernelKind::Covariance, DMatrix::from_row_slice(m, m, &cf))?;
        c_f.symmetrize();
        let mut r_f = TwoTimeKernel::zeros(grid, k, k, KernelKind::Response);
        for t in 0..p {
            for s in 0..t {
                if opts.rf_window.is_some_and(|w| t - s > w) {
                    continue;
                }
                let base = (t * p + s) * kk;
                r_f.block_mut(t, s).copy_from(&DMatrix::from_row_slice(k, k, &rf[base..base + kk]));
            }
        }
        Ok(XiKernels {
            c_f,
            r_f,
            r_f_star: (0..p).map(|t| DMatrix::from_row_slice(k, ks, &rf_star[t * k * ks..(t + 1) * k * ks])).collect(),
            gamma: (0..p).map(|t| DMatrix::from_row_slice(k, k, &gamma[t * kk..(t + 1) * kk])).collect(),
        })
    };
    let mut value = assemble(acc.cf.mean(), acc.rf.mean(), acc.rf_star.mean(), acc.gamma.mean())?;
    value.c_f = psd_project(&value.c_f)?;
    let stderr = assemble(acc.cf.stderr(), acc.rf.stderr(), acc.rf_star.stderr(), acc.gamma.stderr())?;
    Ok(Estimate { value, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Driver, InitLaw};

    fn linear_spec(driver: Driver) -> ModelSpec {
        let mut s = ModelSpec::linear(0.8, 0.8, 0.1, InitLaw::independent(1, 1, 1.0, 1.0).unwrap());
        s.driver = driver;
        s
    }

    /// Some nontrivial θ-kernels: the free state with a decaying response.
    fn theta_kernels(spec: &ModelSpec, grid: TimeGrid) -> ThetaKernels {
        let mut th = ThetaKernels::free(spec, grid);
        for t in 0..grid.points() {
            for s in 0..t {
                th.r.set(t, s, 0, 0, (-0.5 * grid.time(t - s)).exp());
            }
            th.c_star[t][(0, 0)] = 0.3 * (1.0 - (-grid.time(t)).exp());
        }
        th
    }

    #[test]
    fn initial_point_is_gp_value() {
        let spec = linear_spec(Driver::Poisson);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let traj = sample_xi_trajectory(&spec, &theta_kernels(&spec, grid), 4).unwrap();
        assert_eq!(traj.xi[(0, 0)], traj.w[(0, 0)]);
        assert!(traj.r_f.is_causal());
    }

    #[test]
    fn no_memory_means_xi_is_w() {
        let spec = linear_spec(Driver::Gaussian);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let mut th = theta_kernels(&spec, grid);
        th.r = TwoTimeKernel::zeros(grid, 1, 1, KernelKind::Response);
        let traj = sample_xi_trajectory(&spec, &th, 5).unwrap();
        assert_eq!(traj.xi, traj.w);
        assert!(traj.r_f.matrix().iter().all(|&v| v == 0.0));
    }

    /// Direct coding of the linear-model recursions (`D_ξ f = 1`,
    /// `D_{w*} f = −1`) from the stored draws.
    #[test]
    fn linear_responses_match_specialized_recursion() {
        for driver in [Driver::Poisson, Driver::Gaussian] {
            let mut spec = linear_spec(driver);
            spec.kappa_bar = 3.0;
            let grid = TimeGrid::from_steps(20, 0.05).unwrap();
            let th = theta_kernels(&spec, grid);
            let traj = sample_xi_trajectory(&spec, &th, 77).unwrap();
            let p = grid.points();
            let c = |t: usize, r: usize| spec.eta_at(grid.time(r)) / spec.kappa_bar * th.r.get(t, r, 0, 0);
            let mut star = vec![0.0; p];
            let mut xi = vec![0.0; p];
            for t in 0..p {
                let mut a = 0.0;
                let mut b = 0.0;
                for r in 0..t {
                    a += c(t, r) * star[r] * traj.z[r];
                    b += c(t, r) * (xi[r] - traj.w_star[0]) * traj.z[r];
                }
                star[t] = -a - 1.0;
                xi[t] = traj.w[(t, 0)] - b;
            }
            for t in 0..p {
                assert!((star[t] - traj.r_f_star[t][(0, 0)]).abs() < 1e-12);
                assert!((xi[t] - traj.xi[(t, 0)]).abs() < 1e-12);
            }
            for s in 0..p {
                let mut col = vec![0.0; p];
                for t in (s + 1)..p {
                    let mut v = c(t, s) * traj.z[s];
                    for r in (s + 1)..t {
                        v += c(t, r) * col[r] * traj.z[r];
                    }
                    col[t] = -v;
                    assert!((col[t] - traj.r_f.get(t, s, 0, 0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_gamma_is_identity() {
        let spec = linear_spec(Driver::Poisson);
        let grid = TimeGrid::new(1.0, 0.1).unwrap();
        let est = estimate_xi_kernels(&spec, &theta_kernels(&spec, grid), &McOptions::new(500, 1)).unwrap();
        for g in &est.value.gamma {
            assert_eq!(g[(0, 0)], 1.0);
        }
        assert_eq!(est.value.c_f.get(0, 0, 0, 0), 0.0);
        assert!(est.value.r_f.is_causal());
    }

    #[test]
    fn averaging_single_sample_runs_matches_two_sample_run() {
        let spec = linear_spec(Driver::Gaussian);
        let grid = TimeGrid::new(0.5, 0.1).unwrap();
        let th = theta_kernels(&spec, grid);
        let both = estimate_xi_kernels(&spec, &th, &McOptions::new(2, 3)).unwrap();
        let a = sample_xi_trajectory(&spec, &th, xi_trajectory_seed(3, 0)).unwrap();
        let b = sample_xi_trajectory(&spec, &th, xi_trajectory_seed(3, 1)).unwrap();
        let p = grid.points();
        for t in 0..p {
            let mean = 0.5 * (a.r_f_star[t][(0, 0)] + b.r_f_star[t][(0, 0)]);
            assert_eq!(mean, both.value.r_f_star[t][(0, 0)]);
            for s in 0..t {
                let mean = 0.5 * (a.r_f.get(t, s, 0, 0) + b.r_f.get(t, s, 0, 0));
                assert_eq!(mean, both.value.r_f.get(t, s, 0, 0));
            }
        }
    }
}
