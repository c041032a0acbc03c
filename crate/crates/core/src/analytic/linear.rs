//! Closed-form ξ-map for squared loss, linear activation and teacher
//! `y = w* + cε` (k = k* = 1).
//!
//! With the residual `e^t = ξ^t − y` and centred driver `ζ = z − δκ̄`,
//! `e = (I + δK) w̄ + κ̄⁻¹ K (ζ ⊙ e)` where `K` is the resolvent of
//! `A^{t,s} = −η̄^s R_θ^{t,s}`. Only the first two moments of `z` enter.

use nalgebra::{DMatrix, DVector};

use super::volterra::volterra_resolvent;
use crate::dmft::{KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Intermediate kernels of the linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAux {
    /// Resolvent of `−η̄ R_θ`.
    pub k_theta: TwoTimeKernel,
    /// Covariance of `w̄^t = w^t − σ*(w*, ε)`.
    pub cbar_theta: DMatrix<f64>,
    /// Covariance of the residual `ξ̄^t = ξ^t − σ*(w*, ε)`.
    pub cbar_xi: DMatrix<f64>,
}

impl LinearAux {
    /// Predicted training loss `½ E[(ξ^t − y)²]` per grid time.
    pub fn train_loss(&self) -> Vec<f64> {
        self.cbar_xi.diagonal().iter().map(|d| 0.5 * d).collect()
    }
}

pub(crate) fn check_linear(spec: &ModelSpec) -> Result<()> {
    if !spec.is_linear_family() {
        return Err(Error::UnsupportedModel(
            "the analytic ξ-map needs squared loss, linear activation, teacher w* (+ε) and k = k* = 1".into(),
        ));
    }
    Ok(())
}

/// `(C_θ, R_θ) ↦ (C_f, R_f, R_f^{·,*}, Γ)` in closed form.
pub fn linear_map(theta: &ThetaKernels, spec: &ModelSpec) -> Result<(XiKernels, LinearAux)> {
    check_linear(spec)?;
    if theta.k() != 1 || theta.k_star() != 1 {
        return Err(Error::Structural("θ-kernels must be scalar for the linear map".into()));
    }
    let grid = *theta.grid();
    let p = grid.points();
    let delta = grid.delta();
    let kb = spec.kappa_bar;
    let eta: Vec<f64> = (0..p).map(|r| spec.eta_at(grid.time(r))).collect();
    let b = spec.label.constant_gradient().unwrap_or(1.0);
    let c_noise = spec.label.linear_noise_coefficient().unwrap_or(0.0);
    let noise_var = c_noise * c_noise * spec.noise.variance();

    let a =
        TwoTimeKernel::from_fn(
            grid,
            KernelKind::Response,
            |t, s| {
                if s < t {
                    -eta[s] * theta.r.get(t, s, 0, 0)
                } else {
                    0.0
                }
            },
        );
    let k_theta = volterra_resolvent(&a)?.kernel;
    let km = k_theta.matrix();

    let mut xi = XiKernels::zeros(grid, 1, 1);
    for t in 0..p {
        xi.gamma[t][(0, 0)] = 1.0;
        let mut int_k = 0.0;
        for s in 0..t {
            xi.r_f.set(t, s, 0, 0, delta * km[(t, s)]);
            int_k += km[(t, s)];
        }
        xi.r_f_star[t][(0, 0)] = -(1.0 + delta * int_k) * b;
    }

    let cs: Vec<f64> = theta.c_star.iter().map(|m| m[(0, 0)]).collect();
    let css = theta.c_star_star[(0, 0)];
    let cbar_theta = DMatrix::from_fn(p, p, |t, s| theta.c.get(t, s, 0, 0) - cs[t] - cs[s] + css + noise_var);
    let m = DMatrix::identity(p, p) + km * delta;
    let w = &m * &cbar_theta * m.transpose();

    // D_t = W^{t,t} + (δ/κ̄) Σ_{r<t} (K^{t,r})² D_r
    let mut d = DVector::zeros(p);
    for t in 0..p {
        let mut v = w[(t, t)];
        for r in 0..t {
            v += delta / kb * km[(t, r)] * km[(t, r)] * d[r];
        }
        d[t] = v;
    }
    let kd = km * DMatrix::from_diagonal(&d);
    let cbar_xi = &w + &kd * km.transpose() * (delta / kb);

    // L^{t,r} = δη̄^r for r < t, so that U-sums become L·(·).
    let l = DMatrix::from_fn(p, p, |t, r| if r < t { delta * eta[r] } else { 0.0 });
    let term1 = &l * &cbar_xi * l.transpose();
    let term2 = &l * DMatrix::from_diagonal(&d) * l.transpose() / (delta * kb);
    let term3 = &l * &kd * l.transpose() / kb;
    let mut cf = term1 + term2 + &term3 + term3.transpose();
    // Exact symmetry.
    cf = (&cf + cf.transpose()) * 0.5;
    xi.c_f = TwoTimeKernel::from_matrix(grid, 1, 1, KernelKind::Covariance, cf)?;

    Ok((xi, LinearAux { k_theta, cbar_theta, cbar_xi }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmft::TimeGrid;
    use crate::model::{InitLaw, Loss};

    fn spec(eta: f64) -> ModelSpec {
        ModelSpec::linear(0.8, eta, 0.1, InitLaw::independent(1, 1, 1.0, 1.0).unwrap())
    }

    #[test]
    fn gamma_is_identity_and_rf_causal() {
        let grid = TimeGrid::new(2.0, 0.05).unwrap();
        let s = spec(0.8);
        let (xi, _) = linear_map(&ThetaKernels::free(&s, grid), &s).unwrap();
        assert!(xi.gamma.iter().all(|g| g[(0, 0)] == 1.0));
        assert!(xi.r_f.is_causal());
        assert_eq!(xi.c_f.get(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn tiny_learning_rate_limit() {
        let grid = TimeGrid::new(2.0, 0.05).unwrap();
        let s = spec(1e-6);
        let (xi, _) = linear_map(&ThetaKernels::free(&s, grid), &s).unwrap();
        assert!(xi.c_f.matrix().amax() < 1e-5);
        assert!(xi.r_f_star.iter().all(|r| (r[(0, 0)] + 1.0).abs() < 1e-5));
    }

    #[test]
    fn diagonal_equation_residual() {
        let grid = TimeGrid::new(2.0, 0.05).unwrap();
        let s = spec(0.8);
        let (_, aux) = linear_map(&ThetaKernels::free(&s, grid), &s).unwrap();
        let km = aux.k_theta.matrix();
        let m = DMatrix::identity(grid.points(), grid.points()) + km * grid.delta();
        let w = &m * &aux.cbar_theta * m.transpose();
        let d = DMatrix::from_diagonal(&aux.cbar_xi.diagonal());
        let rhs = w + km * d * km.transpose() * (grid.delta() / s.kappa_bar);
        assert!((&rhs - &aux.cbar_xi).amax() <= 1e-9 * aux.cbar_xi.amax());
        assert!(aux.cbar_xi.diagonal().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_nonlinear_models() {
        let grid = TimeGrid::new(1.0, 0.5).unwrap();
        let mut s = spec(0.8);
        s.loss = Loss::Huber { threshold: 1.0 };
        assert!(matches!(linear_map(&ThetaKernels::free(&s, grid), &s), Err(Error::UnsupportedModel(_))));
    }
}
