//! The multi-index learning problem.
//!
//! Labels follow `y = σ*(x·θ*, ε)`, the student predicts `σ(x·θ)` and the
//! empirical risk is `Σ L(σ(x_i·θ), y_i) + Σ_j G(θ_j)`. Its gradient is
//! carried by the two component functions
//!
//! ```text
//! f(ξ, w*, ε) = L'(σ(ξ), σ*(w*, ε)) ∇σ(ξ)        g(θ) = ∇G(θ)
//! ```
//!
//! For `k > 1` (resp. `k* > 1`) the activation (resp. teacher) acts on the
//! sum of the index coordinates: `σ(ξ) = Σ_j a(ξ_j)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Central-difference step used wherever a derivative is not available in
/// closed form.
pub const FD_STEP: f64 = 1e-5;

/// Law of the scalar driver increments of the effective ξ-process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Driver {
    /// Poisson jumps: the SGD limit.
    Poisson,
    /// Gaussian increments with matching mean and variance: the SME limit.
    Gaussian,
}

impl fmt::Display for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Driver::Poisson => f.write_str("poisson"),
            Driver::Gaussian => f.write_str("gaussian"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Loss {
    /// `½ (ŷ − y)²`
    Squared,
    /// Quadratic for `|ŷ − y| < threshold`, linear beyond.
    Huber { threshold: f64 },
}

impl Loss {
    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Loss::Squared => 0.5 * r * r,
            Loss::Huber { threshold: c } => {
                if r.abs() < c {
                    0.5 * r * r
                } else {
                    c * r.abs() - 0.5 * c * c
                }
            }
        }
    }

    /// Derivative in the prediction, as a function of the residual `ŷ − y`.
    #[inline]
    pub fn d1(&self, r: f64) -> f64 {
        match *self {
            Loss::Squared => r,
            Loss::Huber { threshold: c } => r.clamp(-c, c),
        }
    }

    /// Second derivative; zero on and beyond the Huber kink.
    #[inline]
    pub fn d2(&self, r: f64) -> f64 {
        match *self {
            Loss::Squared => 1.0,
            Loss::Huber { threshold: c } => {
                if r.abs() < c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn d1_bound(&self) -> Option<f64> {
        match *self {
            Loss::Squared => None,
            Loss::Huber { threshold } => Some(threshold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Sin,
}

impl Activation {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Sin => x.sin(),
        }
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sin => x.cos(),
        }
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => 0.0,
            Activation::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Sin => -x.sin(),
        }
    }

    fn d1_bound(&self) -> f64 {
        1.0
    }

    fn d2_bound(&self) -> f64 {
        match self {
            Activation::Linear => 0.0,
            // max |2 tanh (1 - tanh²)| = 4 / (3√3)
            Activation::Tanh => 4.0 / (3.0 * 3f64.sqrt()),
            Activation::Sin => 1.0,
        }
    }
}

/// `(w*, ε) ↦ σ*(w*, ε)`.
pub type LabelFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// `(w*, ε, out) ↦ out = ∇_{w*} σ*(w*, ε)`.
pub type LabelGradFn = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Caller-supplied teacher `σ*(w*, ε)` with an optional gradient in `w*`.
#[derive(Clone)]
pub struct CustomLabel {
    pub value: LabelFn,
    pub gradient: Option<LabelGradFn>,
}

impl fmt::Debug for CustomLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLabel").field("gradient", &self.gradient.is_some()).finish()
    }
}

/// Teacher label map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMap {
    /// `y = w*`
    Identity,
    /// `y = w* + ε`
    IdentityPlusNoise,
    /// `y = tanh(w* + ε)`
    TanhNoisy,
    /// `y = sin(w*) + ε`
    SinPlusNoise,
    #[serde(skip)]
    Custom(CustomLabel),
}

impl LabelMap {
    /// Built-in teachers act on `s = Σ_j w*_j`.
    #[inline]
    pub fn value(&self, w_star: &[f64], eps: f64) -> f64 {
        let s: f64 = w_star.iter().sum();
        match self {
            LabelMap::Identity => s,
            LabelMap::IdentityPlusNoise => s + eps,
            LabelMap::TanhNoisy => (s + eps).tanh(),
            LabelMap::SinPlusNoise => s.sin() + eps,
            LabelMap::Custom(c) => (c.value)(w_star, eps),
        }
    }

    /// Writes `∂σ*/∂w*` into `out`.
    pub fn gradient(&self, w_star: &[f64], eps: f64, out: &mut [f64]) {
        let s: f64 = w_star.iter().sum();
        let d = match self {
            LabelMap::Identity | LabelMap::IdentityPlusNoise => 1.0,
            LabelMap::TanhNoisy => {
                let t = (s + eps).tanh();
                1.0 - t * t
            }
            LabelMap::SinPlusNoise => s.cos(),
            LabelMap::Custom(c) => {
                match &c.gradient {
                    Some(g) => g(w_star, eps, out),
                    None => {
                        let mut probe = w_star.to_vec();
                        for j in 0..w_star.len() {
                            probe[j] = w_star[j] + FD_STEP;
                            let up = (c.value)(&probe, eps);
                            probe[j] = w_star[j] - FD_STEP;
                            let down = (c.value)(&probe, eps);
                            probe[j] = w_star[j];
                            out[j] = (up - down) / (2.0 * FD_STEP);
                        }
                    }
                }
                return;
            }
        };
        out.iter_mut().for_each(|o| *o = d);
    }

    /// `∂σ*/∂w*` when it does not depend on `(w*, ε)`.
    pub fn constant_gradient(&self) -> Option<f64> {
        match self {
            LabelMap::Identity | LabelMap::IdentityPlusNoise => Some(1.0),
            _ => None,
        }
    }

    /// Coefficient of `ε` for teachers of the form `y = w* + c ε`.
    pub fn linear_noise_coefficient(&self) -> Option<f64> {
        match self {
            LabelMap::Identity => Some(0.0),
            LabelMap::IdentityPlusNoise => Some(1.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regularizer {
    /// `G(θ) = λ/2 ‖θ‖²`
    Ridge { lambda: f64 },
}

impl Regularizer {
    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::Ridge { lambda } => lambda,
        }
    }
}

/// Lipschitz learning-rate schedule `t ↦ η̄^t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaSchedule {
    Constant(f64),
    /// Linear interpolation through `(t, η̄)` knots, held flat outside.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl EtaSchedule {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            EtaSchedule::Constant(eta) => *eta,
            EtaSchedule::PiecewiseLinear(knots) => {
                let first = knots[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let (t0, e0) = w[0];
                    let (t1, e1) = w[1];
                    if t <= t1 {
                        return e0 + (e1 - e0) * (t - t0) / (t1 - t0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }

    /// The schedule with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> EtaSchedule {
        match self {
            EtaSchedule::Constant(eta) => EtaSchedule::Constant(eta * factor),
            EtaSchedule::PiecewiseLinear(knots) => {
                EtaSchedule::PiecewiseLinear(knots.iter().map(|&(t, e)| (t, e * factor)).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EtaSchedule::Constant(eta) => {
                if !(eta.is_finite() && *eta >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "learning rate must be finite and nonnegative, got {eta}"
                    )));
                }
            }
            EtaSchedule::PiecewiseLinear(knots) => {
                if knots.is_empty() {
                    return Err(Error::InvalidInput("empty learning-rate schedule".into()));
                }
                for w in knots.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::InvalidInput("learning-rate knots must have increasing times".into()));
                    }
                }
                if knots.iter().any(|&(t, e)| !t.is_finite() || !e.is_finite() || e < 0.0) {
                    return Err(Error::InvalidInput(
                        "learning-rate knots must be finite with nonnegative values".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Mean-zero Gaussian law of the row pair `(θ⁰, θ*) ∈ R^k × R^{k*}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitLaw {
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl InitLaw {
    /// `cov` is the `(k + k*) × (k + k*)` joint covariance, θ⁰ block first.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::InvalidInput("init covariance must be square".into()));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("init covariance is not finite".into()));
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * (1.0 + cov.amax()) {
            return Err(Error::InvalidInput("init covariance must be symmetric".into()));
        }
        let eig = cov.clone().symmetric_eigen();
        let scale = 1.0 + cov.amax();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
            return Err(Error::InvalidInput("init covariance must be positive semidefinite".into()));
        }
        let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
        Ok(Self { cov, factor })
    }

    /// Independent `θ⁰ ~ N(0, var0 I_k)` and `θ* ~ N(0, var_star I_{k*})`.
    pub fn independent(k: usize, k_star: usize, var0: f64, var_star: f64) -> Result<Self> {
        let mut cov = DMatrix::zeros(k + k_star, k + k_star);
        for i in 0..k {
            cov[(i, i)] = var0;
        }
        for i in 0..k_star {
            cov[(k + i, k + i)] = var_star;
        }
        Self::new(cov)
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// `E[θ⁰ ⊗ θ⁰]`, `E[θ⁰ ⊗ θ*]`, `E[θ* ⊗ θ*]`.
    pub fn blocks(&self, k: usize) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let ks = self.dim() - k;
        (
            self.cov.view((0, 0), (k, k)).into_owned(),
            self.cov.view((0, k), (k, ks)).into_owned(),
            self.cov.view((k, k), (ks, ks)).into_owned(),
        )
    }

    /// One draw of the concatenated row `(θ⁰, θ*)`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let m = self.dim();
        let mut g = [0.0f64; 16];
        let mut g_heap;
        let g: &mut [f64] = if m <= 16 {
            &mut g[..m]
        } else {
            g_heap = vec![0.0; m];
            &mut g_heap
        };
        for gi in g.iter_mut() {
            *gi = rng.sample(StandardNormal);
        }
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += self.factor[(i, j)] * g[j];
            }
            out[i] = acc;
        }
    }
}

impl Serialize for InitLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.cov.nrows()).map(|i| self.cov.row(i).iter().copied().collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for InitLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("init covariance must be square"));
        }
        let cov = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        InitLaw::new(cov).map_err(serde::de::Error::custom)
    }
}

/// Law of the label noise `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseLaw {
    /// Point mass at zero.
    None,
    Gaussian {
        variance: f64,
    },
}

impl NoiseLaw {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseLaw::None => 0.0,
            NoiseLaw::Gaussian { variance } => variance.sqrt() * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            NoiseLaw::None => 0.0,
            NoiseLaw::Gaussian { variance } => variance,
        }
    }
}

/// The learning problem instance.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub k: usize,
    pub k_star: usize,
    /// Aspect ratio `n / d`.
    pub gamma: f64,
    /// Limiting batch constant `κ / n^α`.
    pub kappa_bar: f64,
    pub eta: EtaSchedule,
    pub driver: Driver,
    pub loss: Loss,
    pub activation: Activation,
    pub label: LabelMap,
    pub regularizer: Regularizer,
    pub init: InitLaw,
    pub noise: NoiseLaw,
}

impl ModelSpec {
    /// Squared loss, linear activation and noiseless linear teacher with
    /// `k = k* = 1`.
    pub fn linear(gamma: f64, eta: f64, lambda: f64, init: InitLaw) -> Self {
        Self {
            k: 1,
            k_star: 1,
            gamma,
            kappa_bar: 1.0,
            eta: EtaSchedule::Constant(eta),
            driver: Driver::Poisson,
            loss: Loss::Squared,
            activation: Activation::Linear,
            label: LabelMap::Identity,
            regularizer: Regularizer::Ridge { lambda },
            init,
            noise: NoiseLaw::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k_star == 0 {
            return Err(Error::InvalidInput("k and k_star must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidInput(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.kappa_bar > 0.0 && self.kappa_bar.is_finite()) {
            return Err(Error::InvalidInput(format!("kappa_bar must be positive, got {}", self.kappa_bar)));
        }
        self.eta.validate()?;
        if let Loss::Huber { threshold } = self.loss {
            if !(threshold > 0.0 && threshold.is_finite()) {
                return Err(Error::InvalidInput("Huber threshold must be positive".into()));
            }
        }
        let lambda = self.regularizer.lambda();
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput("ridge lambda must be nonnegative".into()));
        }
        if self.init.dim() != self.k + self.k_star {
            return Err(Error::InvalidInput(format!(
                "init covariance has dimension {}, expected k + k_star = {}",
                self.init.dim(),
                self.k + self.k_star
            )));
        }
        if let NoiseLaw::Gaussian { variance } = self.noise {
            if !(variance >= 0.0 && variance.is_finite()) {
                return Err(Error::InvalidInput("noise variance must be nonnegative".into()));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eta_at(&self, t: f64) -> f64 {
        self.eta.at(t)
    }

    pub fn lambda(&self) -> f64 {
        self.regularizer.lambda()
    }

    /// Squared loss with linear activation and a teacher `w* + c ε`, `k = k* = 1`:
    /// the family with closed-form kernel maps.
    pub fn is_linear_family(&self) -> bool {
        self.k == 1
            && self.k_star == 1
            && self.loss == Loss::Squared
            && self.activation == Activation::Linear
            && self.label.linear_noise_coefficient().is_some()
    }

    /// Student output `σ(ξ)`.
    #[inline]
    pub fn predict(&self, xi: &[f64]) -> f64 {
        xi.iter().map(|&x| self.activation.value(x)).sum()
    }

    #[inline]
    pub fn loss_value(&self, xi: &[f64], y: f64) -> f64 {
        self.loss.value(self.predict(xi) - y)
    }

    /// `f(ξ, w*, ε)` without input checks.
    #[inline]
    pub fn f_into(&self, xi: &[f64], w_star: &[f64], eps: f64, out: &mut [f64]) {
        let y = self.label.value(w_star, eps);
        let l1 = self.loss.d1(self.predict(xi) - y);
        for (o, &x) in out.iter_mut().zip(xi) {
            *o = l1 * self.activation.d1(x);
        }
    }

    /// Row-major `D_ξ f` (k×k) and `D_{w*} f` (k×k*) without input checks.
    pub fn jacobians_into(&self, xi: &[f64], w_star: &[f64], eps: f64, dxi: &mut [f64], dws: &mut [f64]) {
        let k = self.k;
        let ks = self.k_star;
        let y = self.label.value(w_star, eps);
        let r = self.predict(xi) - y;
        let l1 = self.loss.d1(r);
        let l2 = self.loss.d2(r);
        let mut grad_star = [0.0f64; 8];
        let mut heap;
        let grad_star: &mut [f64] = if ks <= 8 {
            &mut grad_star[..ks]
        } else {
            heap = vec![0.0; ks];
            &mut heap
        };
        self.label.gradient(w_star, eps, grad_star);
        for i in 0..k {
            let ai = self.activation.d1(xi[i]);
            for j in 0..k {
                let aj = self.activation.d1(xi[j]);
                let mut v = l2 * ai * aj;
                if i == j {
                    v += l1 * self.activation.d2(xi[i]);
                }
                dxi[i * k + j] = v;
            }
            for j in 0..ks {
                dws[i * ks + j] = -l2 * ai * grad_star[j];
            }
        }
    }

    fn check_point(&self, xi: &[f64], w_star: &[f64], eps: f64) -> Result<()> {
        if xi.len() != self.k || w_star.len() != self.k_star {
            return Err(Error::InvalidInput(format!(
                "expected ξ ∈ R^{} and w* ∈ R^{}, got {} and {}",
                self.k,
                self.k_star,
                xi.len(),
                w_star.len()
            )));
        }
        if xi.iter().chain(w_star).any(|v| !v.is_finite()) || !eps.is_finite() {
            return Err(Error::InvalidInput("non-finite argument to f".into()));
        }
        Ok(())
    }

    pub fn eval_f(&self, xi: &[f64], w_star: &[f64], eps: f64) -> Result<DVector<f64>> {
        self.check_point(xi, w_star, eps)?;
        let mut out = DVector::zeros(self.k);
        self.f_into(xi, w_star, eps, out.as_mut_slice());
        Ok(out)
    }

    /// `(D_ξ f, D_{w*} f)` at one point. On the Huber kink `L'' = 0`.
    pub fn eval_f_jacobians(&self, xi: &[f64], w_star: &[f64], eps: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check_point(xi, w_star, eps)?;
        let mut dxi = vec![0.0; self.k * self.k];
        let mut dws = vec![0.0; self.k * self.k_star];
        self.jacobians_into(xi, w_star, eps, &mut dxi, &mut dws);
        Ok((DMatrix::from_row_slice(self.k, self.k, &dxi), DMatrix::from_row_slice(self.k, self.k_star, &dws)))
    }

    pub fn eval_g(&self, theta: &[f64]) -> DVector<f64> {
        let lambda = self.lambda();
        DVector::from_iterator(theta.len(), theta.iter().map(|t| lambda * t))
    }

    pub fn eval_dg(&self, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.k, self.k) * self.lambda()
    }

    /// Uniform bound on `‖f‖₂` when loss and activation make one available.
    pub fn f_bound(&self) -> Option<f64> {
        let l1 = self.loss.d1_bound()?;
        Some(l1 * self.activation.d1_bound() * (self.k as f64).sqrt())
    }

    /// Bound `M_f` on the entries of `D_ξ f`.
    pub fn dxi_f_bound(&self) -> Option<f64> {
        let a1 = self.activation.d1_bound();
        let a2 = self.activation.d2_bound();
        let curvature = if a2 == 0.0 { 0.0 } else { self.loss.d1_bound()? * a2 };
        Some(a1 * a1 + curvature)
    }
}

/// Central-difference Jacobians of `f`, the fallback for models without
/// closed-form derivatives.
pub fn finite_difference_jacobians(
    spec: &ModelSpec,
    xi: &[f64],
    w_star: &[f64],
    eps: f64,
    step: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = spec.k;
    let ks = spec.k_star;
    let mut dxi = DMatrix::zeros(k, k);
    let mut dws = DMatrix::zeros(k, ks);
    let mut up = vec![0.0; k];
    let mut down = vec![0.0; k];
    let mut x = xi.to_vec();
    for j in 0..k {
        x[j] = xi[j] + step;
        spec.f_into(&x, w_star, eps, &mut up);
        x[j] = xi[j] - step;
        spec.f_into(&x, w_star, eps, &mut down);
        x[j] = xi[j];
        for i in 0..k {
            dxi[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    let mut w = w_star.to_vec();
    for j in 0..ks {
        w[j] = w_star[j] + step;
        spec.f_into(xi, &w, eps, &mut up);
        w[j] = w_star[j] - step;
        spec.f_into(xi, &w, eps, &mut down);
        w[j] = w_star[j];
        for i in 0..k {
            dws[(i, j)] = (up[i] - down[i]) / (2.0 * step);
        }
    }
    (dxi, dws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn scalar_spec(loss: Loss, activation: Activation, label: LabelMap) -> ModelSpec {
        ModelSpec {
            loss,
            activation,
            label,
            noise: NoiseLaw::Gaussian { variance: 0.1 },
            ..ModelSpec::linear(0.8, 1.0, 0.1, InitLaw::independent(1, 1, 1.0, 1.0).unwrap())
        }
    }

    fn builtin_specs() -> Vec<ModelSpec> {
        vec![
            scalar_spec(Loss::Squared, Activation::Linear, LabelMap::Identity),
            scalar_spec(Loss::Squared, Activation::Linear, LabelMap::IdentityPlusNoise),
            scalar_spec(Loss::Huber { threshold: 1.0 }, Activation::Tanh, LabelMap::TanhNoisy),
            scalar_spec(Loss::Huber { threshold: 1.0 }, Activation::Sin, LabelMap::SinPlusNoise),
            scalar_spec(Loss::Squared, Activation::Sin, LabelMap::SinPlusNoise),
            scalar_spec(Loss::Squared, Activation::Tanh, LabelMap::TanhNoisy),
        ]
    }

    /// Numerical derivative of the scalar risk `L(σ(ξ), y)` in ξ: an oracle
    /// for `f` that never touches the hand-coded chain rule.
    fn risk_derivative(spec: &ModelSpec, xi: f64, ws: f64, eps: f64) -> f64 {
        let y = spec.label.value(&[ws], eps);
        let h = 1e-6;
        (spec.loss_value(&[xi + h], y) - spec.loss_value(&[xi - h], y)) / (2.0 * h)
    }

    #[test]
    fn linear_squared_f_is_residual() {
        let spec = scalar_spec(Loss::Squared, Activation::Linear, LabelMap::Identity);
        let f = spec.eval_f(&[2.0], &[0.5], 0.0).unwrap();
        assert_eq!(f[0], 1.5);
        let (dxi, dws) = spec.eval_f_jacobians(&[2.0], &[0.5], 0.0).unwrap();
        assert_eq!((dxi[(0, 0)], dws[(0, 0)]), (1.0, -1.0));
        let (dxi, dws) = spec.eval_f_jacobians(&[-7.0], &[3.0], 0.4).unwrap();
        assert_eq!((dxi[(0, 0)], dws[(0, 0)]), (1.0, -1.0));
    }

    #[test]
    fn f_vanishes_at_interpolation() {
        for spec in builtin_specs() {
            if spec.loss != Loss::Squared {
                continue;
            }
            // Choose ξ with σ(ξ) = y.
            let (ws, eps) = (0.3, 0.05);
            let y = spec.label.value(&[ws], eps);
            let xi = match spec.activation {
                Activation::Linear => y,
                Activation::Tanh => y.atanh(),
                Activation::Sin => y.asin(),
            };
            let f = spec.eval_f(&[xi], &[ws], eps).unwrap();
            assert!(f[0].abs() < 1e-12, "{:?}: {}", spec.activation, f[0]);
        }
    }

    #[test]
    fn tanh_huber_f_matches_risk_derivative() {
        let spec = scalar_spec(Loss::Huber { threshold: 1.0 }, Activation::Tanh, LabelMap::TanhNoisy);
        let f = spec.eval_f(&[0.3], &[0.1], 0.05).unwrap()[0];
        let oracle = risk_derivative(&spec, 0.3, 0.1, 0.05);
        assert!((f - oracle).abs() < 1e-8, "{f} vs {oracle}");
        // (tanh 0.3 - tanh 0.15)(1 - tanh² 0.3), all inside the quadratic zone
        let expected = (0.3f64.tanh() - 0.15f64.tanh()) * (1.0 - 0.3f64.tanh().powi(2));
        assert!((f - expected).abs() < 1e-14);
    }

    #[test]
    fn tanh_huber_jacobians_match_finite_differences() {
        let spec = scalar_spec(Loss::Huber { threshold: 1.0 }, Activation::Tanh, LabelMap::TanhNoisy);
        let (dxi, dws) = spec.eval_f_jacobians(&[0.3], &[0.1], 0.05).unwrap();
        let (fdxi, fdws) = finite_difference_jacobians(&spec, &[0.3], &[0.1], 0.05, 1e-5);
        assert!((dxi[(0, 0)] - fdxi[(0, 0)]).abs() < 1e-6);
        assert!((dws[(0, 0)] - fdws[(0, 0)]).abs() < 1e-6);
    }

    #[test]
    fn sin_squared_jacobian_at_origin() {
        // Label 0 at w* = 0, ε = 0 gives L' = 0 and D_ξ f = cos²(0) = 1.
        let spec = scalar_spec(Loss::Squared, Activation::Sin, LabelMap::SinPlusNoise);
        let (dxi, _) = spec.eval_f_jacobians(&[0.0], &[0.0], 0.0).unwrap();
        let (fdxi, _) = finite_difference_jacobians(&spec, &[0.0], &[0.0], 0.0, 1e-5);
        assert!((dxi[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((fdxi[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huber_kink_uses_zero_curvature() {
        let loss = Loss::Huber { threshold: 1.0 };
        assert_eq!(loss.d2(1.0), 0.0);
        assert_eq!(loss.d2(-1.0), 0.0);
        assert_eq!(loss.d2(0.999), 1.0);
        assert_eq!(loss.d1(3.0), 1.0);
        assert_eq!(loss.value(2.0), 1.5);
    }

    #[test]
    fn ridge_gradient() {
        let mut spec = scalar_spec(Loss::Squared, Activation::Linear, LabelMap::Identity);
        spec.k = 2;
        let g = spec.eval_g(&[2.0, -4.0]);
        assert!((g[0] - 0.2).abs() < 1e-15 && (g[1] + 0.4).abs() < 1e-15);
        assert_eq!(spec.eval_dg(&[0.0, 0.0]), DMatrix::identity(2, 2) * 0.1);
        spec.regularizer = Regularizer::Ridge { lambda: 0.0 };
        assert!(spec.eval_g(&[1.0, 1.0]).iter().all(|&v| v == 0.0));
        assert!(spec.eval_dg(&[1.0, 1.0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let spec = scalar_spec(Loss::Squared, Activation::Linear, LabelMap::Identity);
        assert!(matches!(spec.eval_f(&[f64::NAN], &[0.0], 0.0), Err(Error::InvalidInput(_))));
        assert!(spec.eval_f_jacobians(&[0.0], &[f64::INFINITY], 0.0).is_err());
        assert!(spec.eval_f(&[0.0, 1.0], &[0.0], 0.0).is_err());
    }

    #[test]
    fn custom_label_without_gradient_uses_finite_differences() {
        let mut spec = scalar_spec(Loss::Squared, Activation::Linear, LabelMap::Identity);
        spec.label = LabelMap::Custom(CustomLabel { value: Arc::new(|w, e| w[0] * w[0] + e), gradient: None });
        let (_, dws) = spec.eval_f_jacobians(&[0.2], &[0.7], 0.0).unwrap();
        assert!((dws[(0, 0)] + 1.4).abs() < 1e-8);
    }

    #[test]
    fn jacobians_agree_with_finite_differences_everywhere() {
        let mut rng = rng_from_seed(11);
        for spec in builtin_specs() {
            let mut checked = 0;
            while checked < 100 {
                let xi: f64 = rng.random_range(-3.0..3.0);
                let ws: f64 = rng.random_range(-3.0..3.0);
                let eps: f64 = rng.random_range(-0.5..0.5);
                if let Loss::Huber { threshold } = spec.loss {
                    let r = spec.predict(&[xi]) - spec.label.value(&[ws], eps);
                    if (r.abs() - threshold).abs() < 1e-4 {
                        continue;
                    }
                }
                let (dxi, dws) = spec.eval_f_jacobians(&[xi], &[ws], eps).unwrap();
                let (fdxi, fdws) = finite_difference_jacobians(&spec, &[xi], &[ws], eps, 1e-5);
                assert!((dxi[(0, 0)] - fdxi[(0, 0)]).abs() < 1e-6, "{spec:?} at {xi},{ws},{eps}");
                assert!((dws[(0, 0)] - fdws[(0, 0)]).abs() < 1e-6, "{spec:?} at {xi},{ws},{eps}");
                checked += 1;
            }
        }
    }

    #[test]
    fn multi_index_jacobians_agree_with_finite_differences() {
        let spec = ModelSpec {
            k: 2,
            k_star: 3,
            init: InitLaw::independent(2, 3, 1.0, 1.0).unwrap(),
            ..scalar_spec(Loss::Huber { threshold: 0.7 }, Activation::Sin, LabelMap::TanhNoisy)
        };
        let xi = [0.4, -1.1];
        let ws = [0.2, 0.1, -0.6];
        let (dxi, dws) = spec.eval_f_jacobians(&xi, &ws, 0.02).unwrap();
        let (fdxi, fdws) = finite_difference_jacobians(&spec, &xi, &ws, 0.02, 1e-5);
        assert!((dxi - fdxi).amax() < 1e-6);
        assert!((dws - fdws).amax() < 1e-6);
    }

    #[test]
    fn lipschitz_models_have_bounded_f() {
        let mut rng = rng_from_seed(5);
        for spec in builtin_specs() {
            let Some(bound) = spec.f_bound() else { continue };
            for _ in 0..10_000 {
                let xi: f64 = 20.0 * (rng.random::<f64>() - 0.5);
                let ws: f64 = 20.0 * (rng.random::<f64>() - 0.5);
                let eps: f64 = rng.random::<f64>() - 0.5;
                let f = spec.eval_f(&[xi], &[ws], eps).unwrap();
                assert!(f.norm() <= bound + 1e-12);
                let (dxi, _) = spec.eval_f_jacobians(&[xi], &[ws], eps).unwrap();
                assert!(dxi.amax() <= spec.dxi_f_bound().unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn eta_schedule_interpolates() {
        let s = EtaSchedule::PiecewiseLinear(vec![(0.0, 1.0), (2.0, 0.0)]);
        assert_eq!(s.at(-1.0), 1.0);
        assert!((s.at(0.5) - 0.75).abs() < 1e-15);
        assert_eq!(s.at(5.0), 0.0);
    }

    #[test]
    fn init_law_rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(InitLaw::new(cov).is_err());
    }

    proptest! {
        #[test]
        fn linear_squared_f_is_exact(xi in -1e3f64..1e3, ws in -1e3f64..1e3, eps in -10f64..10.0) {
            let spec = scalar_spec(Loss::Squared, Activation::Linear, LabelMap::IdentityPlusNoise);
            let f = spec.eval_f(&[xi], &[ws], eps).unwrap();
            prop_assert_eq!(f[0], xi - (ws + eps));
        }
    }
}
