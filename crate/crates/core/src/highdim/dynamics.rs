//! The four finite-size dynamics.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::dataset::{axpy, dot, sample_parameters, Dataset, Params};
use super::SimConfig;
use crate::error::{Error, Result};
use crate::model::{Driver, ModelSpec};
use crate::trace::TrialTrace;

/// Abort threshold on `‖θ‖²/d`.
pub const DIVERGENCE_NORM: f64 = 1e6;

fn check_divergence(theta: &Params, step: usize, time: f64) -> Result<()> {
    let r = theta.norm_sq_per_dim();
    if !r.is_finite() {
        return Err(Error::Divergence { step, time, reason: "non-finite iterate".into() });
    }
    if r > DIVERGENCE_NORM {
        return Err(Error::Divergence {
            step, time, reason: format!("‖θ‖²/d = {r:.3e} exceeds {DIVERGENCE_NORM:e}")
        });
    }
    Ok(())
}

/// Writes `ξ_i = xᵢᵀθ` (row-major `n × k`).
fn projections(ds: &Dataset, theta: &Params, xi: &mut [f64]) {
    let k = theta.cols;
    for i in 0..ds.n {
        let row = ds.row(i);
        for j in 0..k {
            xi[i * k + j] = dot(row, theta.col(j));
        }
    }
}

fn record(
    trace: &mut TrialTrace,
    time: f64,
    theta: &Params,
    theta_star: &Params,
    data: Option<(&Dataset, &ModelSpec, &mut [f64])>,
) {
    trace.times.push(time);
    trace.overlap.push(theta.gram(theta_star));
    trace.self_overlap.push(theta.gram(theta));
    if let Some((ds, spec, xi)) = data {
        projections(ds, theta, xi);
        let k = theta.cols;
        let mut loss = 0.0;
        let mut counts = vec![0usize; trace.thresholds.len()];
        for i in 0..ds.n {
            let x = &xi[i * k..(i + 1) * k];
            loss += spec.loss_value(x, ds.y[i]);
            let norm = dot(x, x).sqrt();
            for (c, &thr) in counts.iter_mut().zip(&trace.thresholds) {
                if norm <= thr {
                    *c += 1;
                }
            }
        }
        let n = ds.n as f64;
        if let Some(l) = &mut trace.train_loss {
            l.push(loss / n);
        }
        if let Some(c) = &mut trace.xi_cdf {
            c.push(counts.iter().map(|&m| m as f64 / n).collect());
        }
    }
}

/// Index of `x` after forgiving floating-point noise just below an integer.
fn floor_near(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

/// `X` contribution `θ_j -= scale · Σ_i c_{ij} xᵢ`, skipping zero weights.
fn apply_data_gradient(ds: &Dataset, coef: &[f64], scale: f64, theta: &mut Params) {
    let k = theta.cols;
    for i in 0..ds.n {
        let row = ds.row(i);
        for j in 0..k {
            let c = coef[i * k + j];
            if c != 0.0 {
                axpy(-scale * c, row, theta.col_mut(j));
            }
        }
    }
}

/// Multi-pass minibatch SGD. The iterate `θ̄` takes `⌈T n^{1−α}⌉` steps with
/// learning rate `n^α η̄(t)` and uniform batches of size `κ` drawn without
/// replacement; time `t` reads off `θ̄^{⌊t n^{1−α}⌋}`.
pub fn run_sgd<R: Rng + ?Sized>(ds: &Dataset, spec: &ModelSpec, cfg: &SimConfig, rng: &mut R) -> Result<TrialTrace> {
    let (n, k) = (ds.n, spec.k);
    let steps_per_unit = (n as f64).powf(1.0 - cfg.alpha);
    let lr_scale = (n as f64).powf(cfg.alpha);
    let grid = &cfg.grid;
    let total = (grid.horizon() * steps_per_unit - 1e-9).ceil().max(0.0) as usize;
    let mut theta = ds.theta0.clone();
    let mut trace = TrialTrace::new(cfg.thresholds.clone(), true);
    let mut xi_buf = vec![0.0; n * k];
    let mut perm: Vec<usize> = (0..n).collect();
    let mut f = vec![0.0; k];
    let mut xi = vec![0.0; k];
    let kappa = cfg.kappa;
    let mut next = 0;
    for step in 0..=total {
        while next < grid.points() && floor_near(grid.time(next) * steps_per_unit).min(total) == step {
            record(&mut trace, grid.time(next), &theta, &ds.theta_star, Some((ds, spec, &mut xi_buf)));
            next += 1;
        }
        if step == total {
            break;
        }
        let t = step as f64 / steps_per_unit;
        let eta = lr_scale * spec.eta_at(t);
        if eta == 0.0 {
            continue;
        }
        for b in 0..kappa {
            let j = rng.random_range(b..n);
            perm.swap(b, j);
        }
        let shrink = 1.0 - eta * spec.lambda() / n as f64;
        // Gradients at the pre-step iterate, applied after.
        let mut grads = Vec::with_capacity(kappa * k);
        for &i in &perm[..kappa] {
            let row = ds.row(i);
            for (j, x) in xi.iter_mut().enumerate() {
                *x = dot(row, theta.col(j));
            }
            spec.f_into(&xi, ds.w_star_row(i), ds.eps[i], &mut f);
            grads.extend_from_slice(&f);
        }
        if shrink != 1.0 {
            theta.data.iter_mut().for_each(|v| *v *= shrink);
        }
        for (b, &i) in perm[..kappa].iter().enumerate() {
            let row = ds.row(i);
            for j in 0..k {
                axpy(-eta / kappa as f64 * grads[b * k + j], row, theta.col_mut(j));
            }
        }
        check_divergence(&theta, step + 1, (step + 1) as f64 / steps_per_unit)?;
    }
    Ok(trace)
}

/// The discrete dynamics on the grid with driver `z ~ Poisson(δκ̄)` or
/// `N(δκ̄, δκ̄)` per sample and step. The Gaussian case is the SME scheme.
pub fn run_discrete<R: Rng + ?Sized>(
    ds: &Dataset,
    spec: &ModelSpec,
    cfg: &SimConfig,
    driver: Driver,
    rng: &mut R,
) -> Result<TrialTrace> {
    let (n, k) = (ds.n, spec.k);
    let grid = &cfg.grid;
    let delta = grid.delta();
    let kb = spec.kappa_bar;
    let mut theta = ds.theta0.clone();
    let mut trace = TrialTrace::new(cfg.thresholds.clone(), true);
    let mut xi = vec![0.0; n * k];
    let mut coef = vec![0.0; n * k];
    let mut f = vec![0.0; k];
    let gauss = Normal::new(delta * kb, (delta * kb).sqrt()).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let poisson = Poisson::new(delta * kb).map_err(|e| Error::InvalidInput(e.to_string()))?;
    for step in 0..grid.points() {
        let t = grid.time(step);
        record(&mut trace, t, &theta, &ds.theta_star, Some((ds, spec, &mut xi)));
        if step == grid.steps() {
            break;
        }
        let eta = spec.eta_at(t);
        // Draw the driver even at zero rate so the stream does not depend on η.
        projections(ds, &theta, &mut xi);
        for i in 0..n {
            let z = match driver {
                Driver::Gaussian => gauss.sample(rng),
                Driver::Poisson => poisson.sample(rng),
            };
            if z == 0.0 {
                coef[i * k..(i + 1) * k].fill(0.0);
                continue;
            }
            spec.f_into(&xi[i * k..(i + 1) * k], ds.w_star_row(i), ds.eps[i], &mut f);
            for j in 0..k {
                coef[i * k + j] = f[j] * z;
            }
        }
        if eta == 0.0 {
            continue;
        }
        let shrink = 1.0 - delta * eta * spec.lambda();
        theta.data.iter_mut().for_each(|v| *v *= shrink);
        apply_data_gradient(ds, &coef, eta / kb, &mut theta);
        check_divergence(&theta, step + 1, grid.time(step + 1))?;
    }
    Ok(trace)
}

pub fn run_sme<R: Rng + ?Sized>(ds: &Dataset, spec: &ModelSpec, cfg: &SimConfig, rng: &mut R) -> Result<TrialTrace> {
    run_discrete(ds, spec, cfg, Driver::Gaussian, rng)
}

/// Explicit Euler on `dθ/dτ = −(Xᵀf(Xθ, Xθ*, ε) + g(θ))`; the grid is read in
/// `τ`. With a stop tolerance the flow halts once `‖Δθ‖/√d` per step drops
/// below it and later records repeat the final state.
pub fn run_gradient_flow(ds: &Dataset, spec: &ModelSpec, cfg: &SimConfig) -> Result<TrialTrace> {
    let (n, k, d) = (ds.n, spec.k, ds.d);
    let grid = &cfg.grid;
    let h = cfg.gf_step.unwrap_or(grid.delta() / 4.0);
    if !(h > 0.0) {
        return Err(Error::InvalidInput("gradient-flow step must be positive".into()));
    }
    let mut theta = ds.theta0.clone();
    let mut trace = TrialTrace::new(cfg.thresholds.clone(), true);
    let mut xi = vec![0.0; n * k];
    let mut coef = vec![0.0; n * k];
    let mut prev = theta.clone();
    let mut step = 0usize;
    let mut stopped = false;
    for p in 0..grid.points() {
        let tau = grid.time(p);
        let target = (tau / h).round() as usize;
        while !stopped && step < target {
            projections(ds, &theta, &mut xi);
            for i in 0..n {
                spec.f_into(&xi[i * k..(i + 1) * k], ds.w_star_row(i), ds.eps[i], &mut coef[i * k..(i + 1) * k]);
            }
            prev.data.copy_from_slice(&theta.data);
            let shrink = 1.0 - h * spec.lambda();
            theta.data.iter_mut().for_each(|v| *v *= shrink);
            apply_data_gradient(ds, &coef, h, &mut theta);
            step += 1;
            check_divergence(&theta, step, step as f64 * h)?;
            if let Some(tol) = cfg.gf_stop_tol {
                let change: f64 = theta.data.iter().zip(&prev.data).map(|(a, b)| (a - b) * (a - b)).sum();
                if (change / d as f64).sqrt() < tol {
                    stopped = true;
                }
            }
        }
        if stopped && !trace.is_empty() && step < target {
            trace.repeat_last(tau);
        } else {
            record(&mut trace, tau, &theta, &ds.theta_star, Some((ds, spec, &mut xi)));
        }
    }
    Ok(trace)
}

/// One-pass SGD with a fresh sample per step; record `p` of the grid is taken
/// after `round(τ_p d)` steps. No dataset, hence no training loss.
pub fn run_one_pass_sgd<R: Rng + ?Sized>(
    d: usize,
    spec: &ModelSpec,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<TrialTrace> {
    let (k, ks) = (spec.k, spec.k_star);
    let grid = &cfg.grid;
    let (mut theta, theta_star) = sample_parameters(spec, d, rng);
    let mut trace = TrialTrace::new(cfg.thresholds.clone(), false);
    let s = 1.0 / (d as f64).sqrt();
    let mut x = vec![0.0; d];
    let (mut xi, mut ws, mut f) = (vec![0.0; k], vec![0.0; ks], vec![0.0; k]);
    let mut step = 0usize;
    for p in 0..grid.points() {
        let tau = grid.time(p);
        let target = (tau * d as f64).round() as usize;
        while step < target {
            let eta = spec.eta_at(step as f64 / d as f64);
            for v in x.iter_mut() {
                *v = cfg.data_dist.sample(rng, s);
            }
            let eps = spec.noise.sample(rng);
            for j in 0..k {
                xi[j] = dot(&x, theta.col(j));
            }
            for j in 0..ks {
                ws[j] = dot(&x, theta_star.col(j));
            }
            spec.f_into(&xi, &ws, eps, &mut f);
            let shrink = 1.0 - eta * spec.lambda() / d as f64;
            theta.data.iter_mut().for_each(|v| *v *= shrink);
            for j in 0..k {
                axpy(-eta * f[j], &x, theta.col_mut(j));
            }
            step += 1;
            check_divergence(&theta, step, step as f64 / d as f64)?;
        }
        record(&mut trace, tau, &theta, &theta_star, None);
    }
    Ok(trace)
}
