//! Finite-`(n, d)` simulations: multi-pass SGD, the discrete SME scheme,
//! gradient flow and one-pass SGD.

mod dataset;
mod dynamics;

pub use dataset::{axpy, dot, generate_dataset, sample_parameters, DataDist, Dataset, Params};
pub use dynamics::{run_discrete, run_gradient_flow, run_one_pass_sgd, run_sgd, run_sme, DIVERGENCE_NORM};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmft::TimeGrid;
use crate::error::{Error, Result};
use crate::model::{Driver, ModelSpec};
use crate::seed::{rng_for, Stream};
use crate::trace::ObservableTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub d: usize,
    /// Batch-scaling exponent `α ∈ [0, 1)`.
    pub alpha: f64,
    /// Batch size `κ ≈ κ̄ n^α`.
    pub kappa: usize,
    pub grid: TimeGrid,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub data_dist: DataDist,
    /// Thresholds `c` of the empirical CDF of `‖xᵢᵀθ‖`.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Gradient-flow Euler step in `τ`; defaults to a quarter grid step.
    #[serde(default)]
    pub gf_step: Option<f64>,
    #[serde(default)]
    pub gf_stop_tol: Option<f64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![1.0]
}

impl SimConfig {
    pub fn new(n: usize, d: usize, grid: TimeGrid, trials: usize, seed: u64) -> Self {
        Self {
            n,
            d,
            alpha: 0.0,
            kappa: 1,
            grid,
            trials,
            seed,
            data_dist: DataDist::Gaussian,
            thresholds: default_thresholds(),
            gf_step: None,
            gf_stop_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidInput("n and d must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if self.kappa == 0 || self.kappa > self.n {
            return Err(Error::InvalidInput(format!("kappa must lie in [1, n], got {}", self.kappa)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if self.thresholds.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("CDF thresholds must be finite".into()));
        }
        if let Some(h) = self.gf_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidInput("gf_step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Sgd,
    Sme,
    /// Discrete dynamics with the Poisson driver.
    Poisson,
    Gf,
    Onepass,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Sgd => "sgd",
            Engine::Sme => "sme",
            Engine::Poisson => "poisson",
            Engine::Gf => "gf",
            Engine::Onepass => "onepass",
        }
    }
}

/// Runs `cfg.trials` independent trials in parallel. Trial `i` draws its
/// instance from `(seed, Dataset, i)` and its dynamics noise from
/// `(seed, Dynamics, i)`, so engines share instances trial by trial.
pub fn simulate(engine: Engine, spec: &ModelSpec, cfg: &SimConfig) -> Result<ObservableTrace> {
    spec.validate()?;
    cfg.validate()?;
    let trials = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, Stream::Dynamics, i);
            if engine == Engine::Onepass {
                let mut rng = rng_for(cfg.seed, Stream::OnePass, i);
                return run_one_pass_sgd(cfg.d, spec, cfg, &mut rng);
            }
            let ds = generate_dataset(cfg.n, cfg.d, cfg.data_dist, spec, &mut rng_for(cfg.seed, Stream::Dataset, i));
            match engine {
                Engine::Sgd => run_sgd(&ds, spec, cfg, &mut rng),
                Engine::Sme => run_sme(&ds, spec, cfg, &mut rng),
                Engine::Poisson => run_discrete(&ds, spec, cfg, Driver::Poisson, &mut rng),
                Engine::Gf => run_gradient_flow(&ds, spec, cfg),
                Engine::Onepass => unreachable!(),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ObservableTrace::from_trials(trials)
}
