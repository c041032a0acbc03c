//! Closed-form θ-map for a ridge regularizer.
//!
//! The θ-recursion is linear, `θ^t = b^t + δ Σ_{q<t} A_f^{t,q} θ^q` with
//! `b^t = θ⁰ − γ S*^t θ* + √γ u^t` and `S*^t = δ Σ_{r<t} η̄^r R_f^{r,*}`,
//! so `θ = (I + δK_f) b` for the resolvent `K_f` of `A_f`.

use nalgebra::DMatrix;

use super::volterra::volterra_resolvent;
use crate::dmft::{KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// The drift kernel
/// `A_f^{t,q} = −η̄^q (γΓ^q + λ) − γ Σ_{r=q+1}^{t−1} η̄^r R_f^{r,q}` for `q < t`.
pub fn ridge_drift_kernel(xi: &XiKernels, spec: &ModelSpec) -> TwoTimeKernel {
    let grid = *xi.grid();
    let p = grid.points();
    let k = spec.k;
    let (gamma, lambda) = (spec.gamma, spec.lambda());
    let eta: Vec<f64> = (0..p).map(|r| spec.eta_at(grid.time(r))).collect();
    let eye = DMatrix::<f64>::identity(k, k);
    let mut a = TwoTimeKernel::zeros(grid, k, k, KernelKind::Response);
    for q in 0..p {
        let local = (&xi.gamma[q] * gamma + &eye * lambda) * (-eta[q]);
        let mut memory = DMatrix::<f64>::zeros(k, k);
        for t in (q + 1)..p {
            // memory = Σ_{r=q+1}^{t−1} η̄^r R_f^{r,q}
            if t > q + 1 {
                memory += xi.r_f.block(t - 1, q) * eta[t - 1];
            }
            a.block_mut(t, q).copy_from(&(&local - &memory * gamma));
        }
    }
    a
}

/// `(C_f, R_f, R_f^{·,*}, Γ) ↦ (C_θ, C_θ^{·,*}, C_θ^{*,*}, R_θ)` in closed form.
pub fn ridge_map(xi: &XiKernels, spec: &ModelSpec) -> Result<ThetaKernels> {
    spec.validate()?;
    let grid = *xi.grid();
    let p = grid.points();
    let k = spec.k;
    let ks = spec.k_star;
    if xi.c_f.rows() != k || xi.r_f_star.iter().any(|b| b.shape() != (k, ks)) {
        return Err(Error::Structural("ξ-kernels do not match the model dimensions".into()));
    }
    let delta = grid.delta();
    let gamma = spec.gamma;
    let eta: Vec<f64> = (0..p).map(|r| spec.eta_at(grid.time(r))).collect();
    let (s00, s0s, sss) = spec.init.blocks(k);

    let kf = volterra_resolvent(&ridge_drift_kernel(xi, spec))?.kernel;

    // R_θ^{t,s} = I + δ Σ_{s<q<t} K_f^{t,q}
    let mut r = TwoTimeKernel::zeros(grid, k, k, KernelKind::Response);
    for t in 0..p {
        let mut acc = DMatrix::<f64>::identity(k, k);
        for s in (0..t).rev() {
            r.block_mut(t, s).copy_from(&acc);
            acc += kf.block(t, s) * delta;
        }
    }

    // S*^t = δ Σ_{r<t} η̄^r R_f^{r,*}
    let mut s_star = Vec::with_capacity(p);
    let mut acc = DMatrix::<f64>::zeros(k, ks);
    for t in 0..p {
        s_star.push(acc.clone());
        acc += &xi.r_f_star[t] * (delta * eta[t]);
    }

    // b^t without the GP part: θ⁰ − γ S*^t θ*, as a linear image of (θ⁰, θ*).
    let mut cb = xi.c_f.matrix() * gamma;
    let mut cb_star = DMatrix::<f64>::zeros(p * k, ks);
    for t in 0..p {
        let lt = &s_star[t] * (-gamma);
        cb_star.view_mut((t * k, 0), (k, ks)).copy_from(&(&s0s + &lt * &sss));
        for s in 0..p {
            let ls = &s_star[s] * (-gamma);
            let blk = &s00 + &s0s * ls.transpose() + &lt * s0s.transpose() + &lt * &sss * ls.transpose();
            let mut view = cb.view_mut((t * k, s * k), (k, k));
            view += blk;
        }
    }

    let m = DMatrix::<f64>::identity(p * k, p * k) + kf.matrix() * delta;
    let mut c = &m * cb * m.transpose();
    c = (&c + c.transpose()) * 0.5;
    let c_star_all = &m * cb_star;
    Ok(ThetaKernels {
        c: TwoTimeKernel::from_matrix(grid, k, k, KernelKind::Covariance, c)?,
        c_star: (0..p).map(|t| c_star_all.view((t * k, 0), (k, ks)).into_owned()).collect(),
        c_star_star: sss,
        r,
    })
}
