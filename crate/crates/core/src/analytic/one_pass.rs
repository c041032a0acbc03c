//! Overlap ODEs of one-pass SGD in rescaled time `τ = iterations / d`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::quadrature::{expect_gaussian, psd_sqrt, GaussHermite};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, NoiseLaw};
use crate::seed::{rng_for, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnePassOptions {
    pub tau_step: f64,
    pub order: usize,
    /// Tolerated gap between the order-`order` and order-`3·order/4` rules
    /// before switching to Monte Carlo.
    pub quadrature_tol: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for OnePassOptions {
    fn default() -> Self {
        Self { tau_step: 1e-3, order: 40, quadrature_tol: 1e-3, mc_samples: 20_000, seed: 0 }
    }
}

/// Overlap trajectories `E[θ̃ ⊗ θ*]` and `E[θ̃ ⊗ θ̃]` on the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct OnePassOverlaps {
    pub taus: Vec<f64>,
    pub overlap: Vec<DMatrix<f64>>,
    pub self_overlap: Vec<DMatrix<f64>>,
    /// Whether any coefficient evaluation fell back to Monte Carlo.
    pub used_monte_carlo: bool,
    /// Largest Monte Carlo standard error of a coefficient entry (0 when
    /// quadrature sufficed throughout).
    pub max_coefficient_stderr: f64,
}

/// `(Γ̃, R̃_f^*, Σ²)` at one joint covariance of `(w̃, w*)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnePassCoefficients {
    pub gamma: DMatrix<f64>,
    pub r_star: DMatrix<f64>,
    pub sigma2: DMatrix<f64>,
    pub stderr: f64,
    pub monte_carlo: bool,
}

struct Evaluator<'a> {
    spec: &'a ModelSpec,
    fine: GaussHermite,
    coarse: GaussHermite,
    opts: OnePassOptions,
}

impl Evaluator<'_> {
    fn len(&self) -> usize {
        let (k, ks) = (self.spec.k, self.spec.k_star);
        2 * k * k + k * ks
    }

    /// Adds `weight · (D_ξf, D_{w*}f, f fᵀ)` at one point.
    fn accumulate(&self, w: &[f64], eps: f64, weight: f64, out: &mut [f64], buf: &mut [f64]) {
        let (k, ks) = (self.spec.k, self.spec.k_star);
        let (xi, ws) = w.split_at(k);
        let ws = &ws[..ks];
        let (f, rest) = buf.split_at_mut(k);
        let (dxi, dws) = rest.split_at_mut(k * k);
        self.spec.f_into(xi, ws, eps, f);
        self.spec.jacobians_into(xi, ws, eps, dxi, &mut dws[..k * ks]);
        for i in 0..k * k {
            out[i] += weight * dxi[i];
        }
        for i in 0..k * ks {
            out[k * k + i] += weight * dws[i];
        }
        let base = k * k + k * ks;
        for i in 0..k {
            for j in 0..k {
                out[base + i * k + j] += weight * f[i] * f[j];
            }
        }
    }

    fn quadrature(&self, joint: &DMatrix<f64>, rule: &GaussHermite) -> Vec<f64> {
        let m = joint.nrows();
        let (k, ks) = (self.spec.k, self.spec.k_star);
        let mut buf = vec![0.0; k + k * k + k * ks];
        let noisy = m > k + ks;
        expect_gaussian(joint, rule, self.len(), |x, w, out| {
            let eps = if noisy { x[m - 1] } else { 0.0 };
            self.accumulate(x, eps, w, out, &mut buf);
        })
    }

    fn monte_carlo(&self, cov: &DMatrix<f64>, step: u64) -> (Vec<f64>, f64) {
        let root = psd_sqrt(cov);
        let m = cov.nrows();
        let (k, ks) = (self.spec.k, self.spec.k_star);
        let mut rng = rng_for(self.opts.seed, Stream::Quadrature, step);
        let mut sum = vec![0.0; self.len()];
        let mut sumsq = vec![0.0; self.len()];
        let mut one = vec![0.0; self.len()];
        let mut buf = vec![0.0; k + k * k + k * ks];
        let mut g = vec![0.0; m];
        let mut x = vec![0.0; m];
        let n = self.opts.mc_samples.max(2);
        for _ in 0..n {
            for gi in g.iter_mut() {
                *gi = StandardNormal.sample(&mut rng);
            }
            for i in 0..m {
                x[i] = (0..m).map(|j| root[(i, j)] * g[j]).sum();
            }
            let eps = self.spec.noise.sample(&mut rng);
            one.fill(0.0);
            self.accumulate(&x, eps, 1.0, &mut one, &mut buf);
            for i in 0..one.len() {
                sum[i] += one[i];
                sumsq[i] += one[i] * one[i];
            }
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let stderr = sum
            .iter()
            .zip(&sumsq)
            .map(|(s, q)| (((q - s * s / nf) / (nf - 1.0)).max(0.0) / nf).sqrt())
            .fold(0.0, f64::max);
        (mean, stderr)
    }

    fn coefficients(&self, cov: &DMatrix<f64>, step: u64) -> OnePassCoefficients {
        let (k, ks) = (self.spec.k, self.spec.k_star);
        let noise_var = match self.spec.noise {
            NoiseLaw::None => 0.0,
            NoiseLaw::Gaussian { variance } => variance,
        };
        let dims = k + ks + usize::from(noise_var > 0.0);
        let mut result = None;
        if dims <= 3 {
            let mut joint = DMatrix::zeros(dims, dims);
            joint.view_mut((0, 0), (k + ks, k + ks)).copy_from(cov);
            if noise_var > 0.0 {
                joint[(dims - 1, dims - 1)] = noise_var;
            }
            let fine = self.quadrature(&joint, &self.fine);
            let coarse = self.quadrature(&joint, &self.coarse);
            let gap = fine.iter().zip(&coarse).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap <= self.opts.quadrature_tol {
                result = Some((fine, 0.0, false));
            }
        }
        let (v, stderr, monte_carlo) = result.unwrap_or_else(|| {
            let (m, s) = self.monte_carlo(cov, step);
            (m, s, true)
        });
        OnePassCoefficients {
            gamma: DMatrix::from_row_slice(k, k, &v[..k * k]),
            r_star: DMatrix::from_row_slice(k, ks, &v[k * k..k * k + k * ks]),
            sigma2: DMatrix::from_row_slice(k, k, &v[k * k + k * ks..]),
            stderr,
            monte_carlo,
        }
    }
}

/// Coefficients `(Γ̃, R̃_f^*, Σ²)` at the joint covariance `cov` of `(w̃, w*)`.
pub fn one_pass_coefficients(
    spec: &ModelSpec,
    cov: &DMatrix<f64>,
    opts: &OnePassOptions,
) -> Result<OnePassCoefficients> {
    let ev = Evaluator {
        spec,
        fine: GaussHermite::new(opts.order)?,
        coarse: GaussHermite::new((3 * opts.order / 4).max(1))?,
        opts: *opts,
    };
    Ok(ev.coefficients(cov, 0))
}

/// Explicit Euler on the overlap ODEs, recording at the requested `τ`
/// values (nondecreasing, starting at or after 0).
pub fn one_pass_overlap_ode(spec: &ModelSpec, taus: &[f64], opts: &OnePassOptions) -> Result<OnePassOverlaps> {
    spec.validate()?;
    if !(opts.tau_step > 0.0) {
        return Err(Error::InvalidInput("τ step must be positive".into()));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) || taus.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidInput("τ grid must be nondecreasing and nonnegative".into()));
    }
    let ev = Evaluator {
        spec,
        fine: GaussHermite::new(opts.order)?,
        coarse: GaussHermite::new((3 * opts.order / 4).max(1))?,
        opts: *opts,
    };
    let (k, ks) = (spec.k, spec.k_star);
    let (mut y, mut x, sss) = spec.init.blocks(k);
    let eta = spec.eta_at(0.0);
    let lam = DMatrix::<f64>::identity(k, k) * spec.lambda();
    let mut out = OnePassOverlaps {
        taus: taus.to_vec(),
        overlap: Vec::with_capacity(taus.len()),
        self_overlap: Vec::with_capacity(taus.len()),
        used_monte_carlo: false,
        max_coefficient_stderr: 0.0,
    };
    let mut step: u64 = 0;
    let mut next = 0;
    let h = opts.tau_step;
    while next < taus.len() {
        let target = (taus[next] / h).round() as u64;
        if step >= target {
            out.overlap.push(x.clone());
            out.self_overlap.push(y.clone());
            next += 1;
            continue;
        }
        let mut cov = DMatrix::zeros(k + ks, k + ks);
        cov.view_mut((0, 0), (k, k)).copy_from(&y);
        cov.view_mut((0, k), (k, ks)).copy_from(&x);
        cov.view_mut((k, 0), (ks, k)).copy_from(&x.transpose());
        cov.view_mut((k, k), (ks, ks)).copy_from(&sss);
        let c = ev.coefficients(&cov, step);
        out.used_monte_carlo |= c.monte_carlo;
        out.max_coefficient_stderr = out.max_coefficient_stderr.max(c.stderr);
        let g = &c.gamma + &lam;
        let dx = -(&g * &x + &c.r_star * &sss) * eta;
        let dy = -(&g * &y + &c.r_star * x.transpose() + &y * g.transpose() + &x * c.r_star.transpose()) * eta
            + &c.sigma2 * (eta * eta);
        x += dx * h;
        y += dy * h;
        y = (&y + y.transpose()) * 0.5;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: step as usize,
                time: step as f64 * h,
                reason: "non-finite overlap".into(),
            });
        }
        step += 1;
    }
    Ok(out)
}
