//! Acceptance gate. Prints one `PASS`/`FAIL` line per check and exits
//! non-zero if any check fails. `ACCEPTANCE_ONLY=1,4` restricts the run.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use dmft_sgd::analytic::{linear_map, one_pass_overlap_ode, ridge_map, volterra_resolvent, OnePassOptions};
use dmft_sgd::dmft::{
    estimate_theta_kernels, estimate_xi_kernels, project_psd_matrix, theta_response, DriverLaw, Estimate, KernelKind,
    McOptions, ThetaKernels, TwoTimeKernel, XiKernels,
};
use dmft_sgd::fixed_point::{predict_observables, solve, SolveMode, SolveOptions};
use dmft_sgd::highdim::{simulate, Engine, SimConfig};
use dmft_sgd::model::{Activation, Driver, InitLaw, LabelMap, Loss, ModelSpec, NoiseLaw};
use dmft_sgd::seed::rng_from_seed;
use dmft_sgd::stats::{mean_stderr, Moments};
use dmft_sgd::trace::{relative_sup_distance, Observable, ObservableTrace};
use dmft_sgd::TimeGrid;
use nalgebra::DMatrix;
use rand::Rng;

type Outcome = Result<(bool, String), String>;

struct Check {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn linear_spec(gamma: f64, eta: f64, lambda: f64) -> ModelSpec {
    ModelSpec::linear(gamma, eta, lambda, InitLaw::independent(1, 1, 1.0, 1.0).unwrap())
}

fn tanh_huber(eta: f64, lambda: f64) -> ModelSpec {
    let mut s = linear_spec(0.8, eta, lambda);
    s.activation = Activation::Tanh;
    s.loss = Loss::Huber { threshold: 1.0 };
    s.label = LabelMap::TanhNoisy;
    s.noise = NoiseLaw::Gaussian { variance: 0.1 };
    s
}

fn mean(tr: &ObservableTrace, obs: Observable) -> Result<&[f64], String> {
    tr.get(obs, 0, 0).map(|s| s.mean.as_slice()).ok_or_else(|| format!("trace lacks {obs}"))
}

fn sup_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn linear_coincidence() -> Outcome {
    let spec = linear_spec(0.8, 0.8, 0.1);
    let grid = TimeGrid::new(4.0, 0.05).map_err(e)?;
    let cfg = SimConfig::new(2000, 2500, grid, 10, 1);
    let sgd = simulate(Engine::Sgd, &spec, &cfg).map_err(e)?;
    let sme = simulate(Engine::Sme, &spec, &cfg).map_err(e)?;
    let sol = solve(&spec, grid, &SolveOptions::default()).map_err(e)?;
    let (_, aux) = linear_map(&sol.state.theta, &spec).map_err(e)?;
    let th = &sol.state.theta;
    let dmft_overlap: Vec<f64> = th.c_star.iter().map(|m| m[(0, 0)]).collect();
    let dmft_self: Vec<f64> = (0..grid.points()).map(|t| th.c.get(t, t, 0, 0)).collect();
    let dmft_loss = aux.train_loss();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for (obs, theory) in [
        (Observable::Overlap, &dmft_overlap),
        (Observable::SelfOverlap, &dmft_self),
        (Observable::TrainLoss, &dmft_loss),
    ] {
        let (a, b) = (mean(&sgd, obs)?, mean(&sme, obs)?);
        let gaps = [relative_sup_distance(a, b), relative_sup_distance(a, theory), relative_sup_distance(b, theory)];
        worst = gaps.iter().fold(worst, |m, &g| m.max(g));
        detail.push(format!("{obs} sgd/sme {:.3} sgd/dmft {:.3} sme/dmft {:.3}", gaps[0], gaps[1], gaps[2]));
    }
    Ok((worst < 0.05, format!("{} (limit 0.05)", detail.join("; "))))
}

fn cdf_discrepancy() -> Outcome {
    let grid = TimeGrid::new(4.0, 0.05).map_err(e)?;
    let mut spec = linear_spec(0.8, 0.8, 0.1);
    let mut states = Vec::new();
    let mut preds = Vec::new();
    for (driver, seed) in [(Driver::Poisson, 11), (Driver::Gaussian, 12)] {
        spec.driver = driver;
        let sol = solve(&spec, grid, &SolveOptions::default()).map_err(e)?;
        preds.push(predict_observables(&sol.state, &spec, &[1.0], 100_000, seed).map_err(e)?);
        states.push(sol.state);
    }
    let exact = states[0].theta == states[1].theta;
    let a = preds[0].get(Observable::XiCdf, 0, 0).ok_or("no cdf")?;
    let b = preds[1].get(Observable::XiCdf, 0, 0).ok_or("no cdf")?;
    let (mut zmax, mut at) = (0.0f64, 0.0);
    for t in 0..grid.points() {
        let se = a.stderr[t].hypot(b.stderr[t]);
        if se > 0.0 {
            let z = (a.mean[t] - b.mean[t]).abs() / se;
            if z > zmax {
                zmax = z;
                at = grid.time(t);
            }
        }
    }
    Ok((
        exact && zmax > 5.0,
        format!("C_theta bit-identical: {exact}; max |z| of P(|xi|<=1) gap {zmax:.2} at t={at} (limit 5)"),
    ))
}

fn nonlinear_divergence() -> Outcome {
    let grid = TimeGrid::new(4.0, 0.05).map_err(e)?;
    let mut spec = tanh_huber(3.0, 0.1);
    let last = grid.steps();
    let mut summary = Vec::new();
    for driver in [Driver::Poisson, Driver::Gaussian] {
        spec.driver = driver;
        let mut finals = Vec::new();
        for seed in 0..4u64 {
            let opts = SolveOptions {
                mode: SolveMode::MonteCarlo,
                mc_samples: 10_000,
                seed: 100 + seed,
                tol: Some(2e-3),
                ..Default::default()
            };
            let sol = solve(&spec, grid, &opts).map_err(e)?;
            if !sol.report.converged {
                return Ok((false, format!("{driver} replicate {seed} did not converge: {:?}", sol.report.distances)));
            }
            finals.push(sol.state.theta.c_star[last][(0, 0)]);
        }
        summary.push(mean_stderr(&finals));
    }
    let (p, g) = (summary[0], summary[1]);
    let z = (p.0 - g.0) / p.1.hypot(g.1);
    spec.driver = Driver::Poisson;
    let cfg = SimConfig::new(2000, 2500, grid, 10, 77);
    let sgd = simulate(Engine::Sgd, &spec, &cfg).map_err(e)?;
    let sme = simulate(Engine::Sme, &spec, &cfg).map_err(e)?;
    let sim_gap = mean(&sgd, Observable::Overlap)?[last] - mean(&sme, Observable::Overlap)?[last];
    let same_sign = sim_gap.signum() == (p.0 - g.0).signum();
    Ok((
        z.abs() > 5.0 && same_sign,
        format!(
            "DMFT overlap(t=4) poisson {:.4}±{:.4} gaussian {:.4}±{:.4}, z {z:.2} (limit 5); sgd-sme {sim_gap:+.4}, sign match {same_sign}",
            p.0, p.1, g.0, g.1
        ),
    ))
}

fn small_learning_rate() -> Outcome {
    let (n, d, trials) = (2000, 2500, 40);
    let tau_max = 2.0;
    let gf_delta = 0.0125;
    let gf_cfg = SimConfig::new(n, d, TimeGrid::new(tau_max, gf_delta).map_err(e)?, trials, 404);
    let gf = simulate(Engine::Gf, &tanh_huber(1.0, 0.1), &gf_cfg).map_err(e)?;
    let gf_overlap = mean(&gf, Observable::Overlap)?;
    let mut dists = Vec::new();
    let mut sme_gaps = Vec::new();
    for eta in [0.5, 1.25, 2.5] {
        let spec = tanh_huber(eta, 0.1);
        let cfg = SimConfig::new(n, d, TimeGrid::new(tau_max / eta, 0.05).map_err(e)?, trials, 404);
        let sgd = simulate(Engine::Sgd, &spec, &cfg).map_err(e)?;
        let o = mean(&sgd, Observable::Overlap)?;
        let dist = sgd
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| (o[i] - gf_overlap[(eta * t / gf_delta).round() as usize]).abs())
            .fold(0.0, f64::max);
        dists.push(dist);
        if eta == 0.5 {
            let sme = simulate(Engine::Sme, &spec, &cfg).map_err(e)?;
            for obs in [Observable::Overlap, Observable::SelfOverlap, Observable::TrainLoss] {
                sme_gaps.push(relative_sup_distance(mean(&sgd, obs)?, mean(&sme, obs)?));
            }
        }
    }
    let monotone = dists.windows(2).all(|w| w[0] < w[1]);
    let small_gap = sme_gaps.iter().all(|&g| g < 0.02);
    Ok((
        monotone && small_gap,
        format!(
            "sup|sgd-gf| in tau for eta 0.5/1.25/2.5: {:.4}/{:.4}/{:.4} (increasing: {monotone}); eta=0.5 sgd/sme relative gap overlap {:.4} self {:.4} loss {:.4} (limit 0.02)",
            dists[0], dists[1], dists[2], sme_gaps[0], sme_gaps[1], sme_gaps[2]
        ),
    ))
}

fn one_pass_limit() -> Outcome {
    let d = 1000;
    let lambda_one_pass = 0.1;
    let grid_tau = TimeGrid::new(2.0, 0.05).map_err(e)?;
    let ode = one_pass_overlap_ode(&tanh_huber(1.0, lambda_one_pass), &grid_tau.times(), &OnePassOptions::default())
        .map_err(e)?;
    let reference: Vec<f64> = ode.overlap.iter().map(|m| m[(0, 0)]).collect();
    let mut dists = Vec::new();
    for gamma in [0.5, 1.0, 5.0, 20.0] {
        // Same per-step learning rate and per-step shrinkage as one-pass SGD.
        let spec = tanh_huber(1.0, lambda_one_pass * gamma);
        let n = (gamma * d as f64).round() as usize;
        let grid = TimeGrid::new(2.0 / gamma, 0.05 / gamma).map_err(e)?;
        let sgd = simulate(Engine::Sgd, &spec, &SimConfig::new(n, d, grid, 10, 505)).map_err(e)?;
        dists.push(sup_abs(mean(&sgd, Observable::Overlap)?, &reference));
    }
    let monotone = dists.windows(2).all(|w| w[0] > w[1]);
    Ok((
        monotone,
        format!(
            "sup|sgd-ode| in tau for gamma 0.5/1/5/20: {:.4}/{:.4}/{:.4}/{:.4} (decreasing: {monotone}; ode via {})",
            dists[0],
            dists[1],
            dists[2],
            dists[3],
            if ode.used_monte_carlo { "monte carlo" } else { "quadrature" }
        ),
    ))
}

fn alpha_invariance() -> Outcome {
    let n = 4096;
    let mut spec = linear_spec(0.8, 0.8, 0.1);
    spec.kappa_bar = 4.0;
    let grid = TimeGrid::new(4.0, 0.05).map_err(e)?;
    let mut cfg = SimConfig::new(n, 5120, grid, 10, 606);
    cfg.kappa = 4;
    let a = simulate(Engine::Sgd, &spec, &cfg).map_err(e)?;
    cfg.alpha = 0.5;
    cfg.kappa = (4.0 * (n as f64).sqrt()).ceil() as usize;
    let b = simulate(Engine::Sgd, &spec, &cfg).map_err(e)?;
    let (sa, sb) =
        (a.get(Observable::Overlap, 0, 0).ok_or("no overlap")?, b.get(Observable::Overlap, 0, 0).ok_or("no overlap")?);
    let mut zmax: f64 = 0.0;
    for t in 0..sa.mean.len() {
        let diff = (sa.mean[t] - sb.mean[t]).abs();
        let se = sa.stderr[t].hypot(sb.stderr[t]);
        if se > 0.0 {
            zmax = zmax.max(diff / se);
        } else if diff > 0.0 {
            zmax = f64::INFINITY;
        }
    }
    Ok((zmax <= 3.0, format!("max |overlap gap| / combined stderr = {zmax:.3} (limit 3)")))
}

/// `Σ_{m≥0} δ^m A^{m+1}` until the terms vanish.
fn neumann(a: &DMatrix<f64>, delta: f64) -> DMatrix<f64> {
    let mut term = a.clone();
    let mut sum = a.clone();
    for _ in 0..a.nrows() {
        term = (a * &term) * delta;
        if term.amax() == 0.0 {
            break;
        }
        sum += &term;
    }
    sum
}

fn resolvent_suite() -> Outcome {
    let mut rng = rng_from_seed(707);
    let mut worst_neumann: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    for k in [1usize, 2] {
        let grid = TimeGrid::new(3.0, 0.1).map_err(e)?;
        let p = grid.points();
        let mut m = DMatrix::from_fn(p * k, p * k, |i, j| if i / k > j / k { rng.random::<f64>() - 0.5 } else { 0.0 });
        let norm_inf = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        m *= 0.01 / (grid.delta() * norm_inf);
        let a = TwoTimeKernel::from_matrix(grid, k, k, KernelKind::Response, m.clone()).map_err(e)?;
        let res = volterra_resolvent(&a).map_err(e)?;
        worst_neumann = worst_neumann.max((res.kernel.matrix() - neumann(&m, grid.delta())).amax());
        worst_residual = worst_residual.max(res.left_residual).max(res.right_residual);
    }
    let grid = TimeGrid::new(1.0, 0.0025).map_err(e)?;
    let a = TwoTimeKernel::from_fn(grid, KernelKind::Response, |t, s| if s < t { 1.0 } else { 0.0 });
    let res = volterra_resolvent(&a).map_err(e)?;
    let exp_err = (res.kernel.get(grid.steps(), 0, 0, 0) - std::f64::consts::E).abs() / std::f64::consts::E;
    worst_residual = worst_residual.max(res.left_residual).max(res.right_residual);
    let sol = solve(&linear_spec(0.8, 0.8, 0.1), TimeGrid::new(4.0, 0.05).map_err(e)?, &SolveOptions::default())
        .map_err(e)?;
    let (_, aux) = linear_map(&sol.state.theta, &linear_spec(0.8, 0.8, 0.1)).map_err(e)?;
    let mut a = sol.state.theta.r.clone();
    a.matrix_mut().scale_mut(-0.8);
    let res = volterra_resolvent(&a).map_err(e)?;
    worst_residual = worst_residual.max(res.left_residual).max(res.right_residual);
    let same = (res.kernel.matrix() - aux.k_theta.matrix()).amax();
    Ok((
        worst_neumann <= 1e-10 && exp_err <= 0.005 && worst_residual <= 1e-10 && same <= 1e-12,
        format!(
            "neumann {worst_neumann:.2e} (limit 1e-10); exponential rel err {exp_err:.2e} (limit 5e-3); residuals {worst_residual:.2e} (limit 1e-10)"
        ),
    ))
}

fn compare_entries(
    name: &str,
    mc: &DMatrix<f64>,
    se: &DMatrix<f64>,
    exact: &DMatrix<f64>,
    out: &mut Vec<String>,
) -> (usize, f64) {
    let mut bad = 0;
    let mut zmax: f64 = 0.0;
    for ((a, s), b) in mc.iter().zip(se.iter()).zip(exact.iter()) {
        let diff = (a - b).abs();
        if diff > 4.0 * s + 1e-10 {
            bad += 1;
        }
        if *s > 0.0 {
            zmax = zmax.max(diff / s);
        }
    }
    out.push(format!("{name} max z {zmax:.2}"));
    (bad, zmax)
}

fn per_time(v: &[DMatrix<f64>]) -> DMatrix<f64> {
    DMatrix::from_iterator(v.len(), 1, v.iter().map(|m| m[(0, 0)]))
}

fn mc_cross_validation() -> Outcome {
    let spec = linear_spec(0.8, 0.8, 0.1);
    let grid = TimeGrid::new(2.0, 0.05).map_err(e)?;
    let sol = solve(&spec, grid, &SolveOptions::default()).map_err(e)?;
    let mut notes = Vec::new();
    let mut bad = 0;
    let (exact_xi, _) = linear_map(&sol.state.theta, &spec).map_err(e)?;
    for (driver, seed) in [(Driver::Poisson, 801), (Driver::Gaussian, 802)] {
        let mut s = spec.clone();
        s.driver = driver;
        let est: Estimate<XiKernels> =
            estimate_xi_kernels(&s, &sol.state.theta, &McOptions::new(100_000, seed)).map_err(e)?;
        let mut count = |name: &str, a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>| {
            bad += compare_entries(&format!("{driver} {name}"), a, b, c, &mut notes).0;
        };
        count("C_f", est.value.c_f.matrix(), est.stderr.c_f.matrix(), exact_xi.c_f.matrix());
        count("R_f", est.value.r_f.matrix(), est.stderr.r_f.matrix(), exact_xi.r_f.matrix());
        count("R_f*", &per_time(&est.value.r_f_star), &per_time(&est.stderr.r_f_star), &per_time(&exact_xi.r_f_star));
        count("Gamma", &per_time(&est.value.gamma), &per_time(&est.stderr.gamma), &per_time(&exact_xi.gamma));
    }
    let exact_theta = ridge_map(&sol.state.xi, &spec).map_err(e)?;
    let est: Estimate<ThetaKernels> =
        estimate_theta_kernels(&spec, &sol.state.xi, &McOptions::new(100_000, 803)).map_err(e)?;
    bad +=
        compare_entries("C_theta", est.value.c.matrix(), est.stderr.c.matrix(), exact_theta.c.matrix(), &mut notes).0;
    bad += compare_entries(
        "C_theta*",
        &per_time(&est.value.c_star),
        &per_time(&est.stderr.c_star),
        &per_time(&exact_theta.c_star),
        &mut notes,
    )
    .0;
    let r_gap = (est.value.r.matrix() - exact_theta.r.matrix()).amax();
    Ok((bad == 0 && r_gap < 1e-12, format!("{} entries beyond 4 stderr; {}", bad, notes.join(", "))))
}

fn structural_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut spec = tanh_huber(1.0, 0.1);
    let grid = TimeGrid::new(2.0, 0.1).map_err(e)?;
    let theta = ThetaKernels::free(&spec, grid);
    let opts = McOptions::new(4_000, 901);
    for driver in [Driver::Poisson, Driver::Gaussian] {
        spec.driver = driver;
        let xi = estimate_xi_kernels(&spec, &theta, &opts).map_err(e)?.value;
        let xi_again = estimate_xi_kernels(&spec, &theta, &opts).map_err(e)?.value;
        if xi != xi_again {
            failures.push(format!("{driver}: xi estimate not reproducible"));
        }
        let cf = xi.c_f.matrix();
        if cf != &cf.transpose() {
            failures.push(format!("{driver}: C_f not symmetric"));
        }
        if cf.clone().symmetric_eigen().eigenvalues.min() < -1e-10 {
            failures.push(format!("{driver}: C_f not PSD"));
        }
        if xi.c_f.get(0, 0, 0, 0) != 0.0 {
            failures.push(format!("{driver}: C_f(0,0) nonzero"));
        }
        if !xi.r_f.is_causal() {
            failures.push(format!("{driver}: R_f not causal"));
        }
        let r_theta = theta_response(&spec, &xi);
        if !r_theta.is_causal() {
            failures.push(format!("{driver}: R_theta not causal"));
        }
        if (0..grid.steps()).any(|s| r_theta.get(s + 1, s, 0, 0) != 1.0) {
            failures.push(format!("{driver}: r_theta(s+1,s) != 1"));
        }
        let th = estimate_theta_kernels(&spec, &xi, &opts).map_err(e)?.value;
        let c = th.c.matrix();
        if c != &c.transpose() || c.clone().symmetric_eigen().eigenvalues.min() < -1e-10 {
            failures.push(format!("{driver}: C_theta not symmetric PSD"));
        }
    }
    let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
    let proj = project_psd_matrix(&m).map_err(e)?;
    if proj != proj.transpose() || proj.clone().symmetric_eigen().eigenvalues.min() < -1e-12 {
        failures.push("projection not symmetric PSD".into());
    }
    // Itô isometry for the compensated driver with an adapted integrand.
    let (kb, delta, steps, paths) = (1.0, 0.05, 40, 200_000);
    let mut zmax: f64 = 0.0;
    for (i, driver) in [Driver::Poisson, Driver::Gaussian].into_iter().enumerate() {
        let law = DriverLaw::new(driver, kb, delta).map_err(e)?;
        let mut rng = rng_from_seed(950 + i as u64);
        let mut diff = Moments::new(1);
        for _ in 0..paths {
            let (mut m, mut qv, mut past) = (0.0, 0.0, 0.0);
            for _ in 0..steps {
                let a = 1.0 + 0.5 * f64::tanh(past);
                let dz = law.sample(&mut rng) - delta * kb;
                m += a * dz;
                qv += a * a * delta * kb;
                past += dz;
            }
            diff.push(&[m * m - qv]);
        }
        let z = diff.mean()[0].abs() / diff.stderr()[0];
        zmax = zmax.max(z);
        if z > 5.0 {
            failures.push(format!("{driver}: isometry z {z:.2}"));
        }
    }
    let lin = linear_spec(0.8, 0.8, 0.1);
    let cfg = SimConfig::new(200, 250, grid, 2, 960);
    if simulate(Engine::Sgd, &lin, &cfg).map_err(e)? != simulate(Engine::Sgd, &lin, &cfg).map_err(e)? {
        failures.push("simulation not reproducible".into());
    }
    let mc = SolveOptions { mode: SolveMode::Hybrid, mc_samples: 2_000, seed: 5, ..Default::default() };
    if solve(&lin, grid, &mc).map_err(e)?.state != solve(&lin, grid, &mc).map_err(e)?.state {
        failures.push("Monte Carlo solve not reproducible".into());
    }
    let ok = failures.is_empty();
    Ok((ok, if ok { format!("all invariants hold; isometry max z {zmax:.2} (limit 5)") } else { failures.join("; ") }))
}

fn discretization_convergence() -> Outcome {
    let spec = linear_spec(0.8, 0.8, 0.1);
    let diag = |delta: f64| -> Result<Vec<f64>, String> {
        let grid = TimeGrid::new(4.0, delta).map_err(e)?;
        let opts = SolveOptions { tol: Some(1e-10), max_iters: 200, ..Default::default() };
        let th = solve(&spec, grid, &opts).map_err(e)?.state.theta;
        let stride = (0.05 / delta).round() as usize;
        Ok((0..=80).map(|i| th.c.get(i * stride, i * stride, 0, 0)).collect())
    };
    let (a, b, c) = (diag(0.05)?, diag(0.025)?, diag(0.0125)?);
    let (d1, d2) = (sup_abs(&a, &b), sup_abs(&b, &c));
    let ratio = d1 / d2;
    Ok((
        (1.5..=3.0).contains(&ratio),
        format!("diag changes {d1:.3e} then {d2:.3e}, ratio {ratio:.3} (range [1.5, 3])"),
    ))
}

fn main() -> ExitCode {
    let checks = [
        Check { id: 1, name: "linear SGD/SME/DMFT coincidence", budget: minutes(10), run: linear_coincidence },
        Check { id: 2, name: "driver-dependent CDF prediction", budget: minutes(5), run: cdf_discrepancy },
        Check { id: 3, name: "nonlinear SGD/SME divergence", budget: minutes(30), run: nonlinear_divergence },
        Check { id: 4, name: "small-learning-rate limit", budget: minutes(20), run: small_learning_rate },
        Check { id: 5, name: "one-pass limit", budget: minutes(30), run: one_pass_limit },
        Check { id: 6, name: "batch-scaling invariance", budget: minutes(30), run: alpha_invariance },
        Check { id: 7, name: "resolvent oracles", budget: minutes(1), run: resolvent_suite },
        Check { id: 8, name: "Monte Carlo vs closed-form maps", budget: minutes(10), run: mc_cross_validation },
        Check { id: 9, name: "structural invariants", budget: minutes(10), run: structural_suite },
        Check { id: 10, name: "grid refinement", budget: minutes(5), run: discretization_convergence },
    ];
    let only: Option<Vec<u32>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut all_ok = true;
    for c in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&c.id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok && in_budget, d),
            Err(err) => (false, format!("error: {err}")),
        };
        all_ok &= ok;
        let budget_note = if in_budget { String::new() } else { format!(" [over budget {}s]", c.budget.as_secs()) };
        println!(
            "{} [{}] {}: {} ({:.1}s){}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            budget_note
        );
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
