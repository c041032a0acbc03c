use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytic::{linear_map, ridge_map};
use crate::dmft::{
    estimate_theta_kernels, estimate_xi_kernels, DMFTState, McOptions, ThetaKernels, TimeGrid, XiKernels,
};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Distance floor below which a Monte Carlo fixed point is declared converged.
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// Closed-form maps on both sides.
    Analytic,
    /// Monte Carlo for both maps (`R_θ` is exact either way).
    MonteCarlo,
    /// Monte Carlo ξ-map followed by the closed-form ridge θ-map.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Sup-norm tolerance on the change of `(C_θ, R_θ)`. When unset:
    /// `1e-4` for analytic maps and `max(1e-4, 3·stderr)` with Monte Carlo.
    pub tol: Option<f64>,
    pub damping: f64,
    pub mc_samples: usize,
    pub mode: SolveMode,
    pub seed: u64,
    pub rf_window: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: None,
            damping: 1.0,
            mc_samples: 10_000,
            mode: SolveMode::Analytic,
            seed: 0,
            rf_window: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if let Some(tol) = self.tol {
            if !(tol > 0.0) {
                return Err(Error::InvalidInput("tol must be positive".into()));
            }
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        if self.mode != SolveMode::Analytic && self.mc_samples < 2 {
            return Err(Error::InvalidInput("mc_samples must be at least 2".into()));
        }
        Ok(())
    }

    fn mc(&self) -> McOptions {
        McOptions { n_samples: self.mc_samples, seed: self.seed, index_offset: 0, rf_window: self.rf_window }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `d(Y_i, Y_{i−1})` per iteration.
    pub distances: Vec<f64>,
    /// Seconds since the start of the solve, per iteration.
    pub wall_times: Vec<f64>,
    pub converged: bool,
    pub tol: f64,
    /// Damping in effect at the end.
    pub damping: f64,
    /// Largest Monte Carlo standard error entering the last θ-update.
    pub mc_stderr: f64,
}

impl ConvergenceReport {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "iteration,distance,wall_time")?;
        for (i, (d, t)) in self.distances.iter().zip(&self.wall_times).enumerate() {
            writeln!(w, "{},{},{}", i + 1, d, t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: DMFTState,
    pub report: ConvergenceReport,
}

fn check_mode(spec: &ModelSpec, mode: SolveMode) -> Result<()> {
    if mode == SolveMode::Analytic && !spec.is_linear_family() {
        return Err(Error::UnsupportedModel(
            "analytic mode needs the linear model (squared loss, linear activation, k = k* = 1)".into(),
        ));
    }
    Ok(())
}

fn max_entry(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// One application of the composed map `Y ↦ T(Y)`, returning the ξ-kernels
/// it passed through and the Monte Carlo error scale of the θ-update.
pub fn apply_map(
    spec: &ModelSpec,
    theta: &ThetaKernels,
    opts: &SolveOptions,
) -> Result<(ThetaKernels, XiKernels, f64)> {
    check_mode(spec, opts.mode)?;
    match opts.mode {
        SolveMode::Analytic => {
            let (xi, _) = linear_map(theta, spec)?;
            Ok((ridge_map(&xi, spec)?, xi, 0.0))
        }
        SolveMode::Hybrid => {
            let est = estimate_xi_kernels(spec, theta, &opts.mc())?;
            let next = ridge_map(&est.value, spec)?;
            let s = max_entry(est.stderr.c_f.matrix());
            Ok((next, est.value, s))
        }
        SolveMode::MonteCarlo => {
            let est = estimate_xi_kernels(spec, theta, &opts.mc())?;
            let th = estimate_theta_kernels(spec, &est.value, &opts.mc())?;
            let s = max_entry(th.stderr.c.matrix());
            Ok((th.value, est.value, s))
        }
    }
}

/// Damped iteration `Y ← (1−ω)Y + ω T(Y)` from the zero-learning-rate state.
///
/// Every Monte Carlo map call reuses `opts.seed`, so the iteration is a
/// deterministic function of the options. `ω` drops to `0.5` the first time
/// the distance grows; a tenfold growth over five iterations is an error.
pub fn solve(spec: &ModelSpec, grid: TimeGrid, opts: &SolveOptions) -> Result<Solution> {
    spec.validate()?;
    opts.validate()?;
    check_mode(spec, opts.mode)?;
    let start = Instant::now();
    let mut y = ThetaKernels::free(spec, grid);
    let mut omega = opts.damping;
    let mut distances: Vec<f64> = Vec::new();
    let mut wall_times = Vec::new();
    let mut tol = opts.tol.unwrap_or(DEFAULT_TOL);
    let mut mc_stderr;
    let mut xi;
    loop {
        let (t_y, xi_new, s) = apply_map(spec, &y, opts)?;
        xi = xi_new;
        mc_stderr = s;
        if opts.tol.is_none() && opts.mode != SolveMode::Analytic {
            tol = DEFAULT_TOL.max(3.0 * s);
        }
        let next = if omega == 1.0 { t_y } else { y.blend(&t_y, omega)? };
        let d = next.distance(&y)?;
        if !d.is_finite() {
            return Err(Error::NonConvergence { reason: "non-finite kernel distance".into(), distances });
        }
        y = next;
        distances.push(d);
        wall_times.push(start.elapsed().as_secs_f64());
        let i = distances.len();
        log::debug!("fixed-point iteration {i}: distance {d:.3e}");
        if d < tol {
            break;
        }
        if i >= 2 && d > distances[i - 2] && omega > 0.5 {
            omega = 0.5;
        }
        if i > 5 && d > 10.0 * distances[i - 6] {
            return Err(Error::NonConvergence {
                reason: format!("distance grew from {:.3e} to {d:.3e} over five iterations", distances[i - 6]),
                distances,
            });
        }
        if i >= opts.max_iters {
            break;
        }
    }
    let converged = distances.last().is_some_and(|&d| d < tol);
    Ok(Solution {
        state: DMFTState { theta: y, xi },
        report: ConvergenceReport { distances, wall_times, converged, tol, damping: omega, mc_stderr },
    })
}
