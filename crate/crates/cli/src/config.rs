//! Experiment configuration: a versioned TOML document with sections
//! `model`, `sim`, `dmft`, `run` and optional `desk_scale` and `sweep`.

use dmft_sgd::fixed_point::{SolveMode, SolveOptions};
use dmft_sgd::highdim::{DataDist, SimConfig};
use dmft_sgd::model::{Activation, Driver, EtaSchedule, InitLaw, LabelMap, Loss, ModelSpec, NoiseLaw, Regularizer};
use dmft_sgd::TimeGrid;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dmft: Option<DmftSection>,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desk_scale: Option<DeskScale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Identity,
    IdentityPlusNoise,
    TanhNoisy,
    SinPlusNoise,
}

impl From<Label> for LabelMap {
    fn from(l: Label) -> Self {
        match l {
            Label::Identity => LabelMap::Identity,
            Label::IdentityPlusNoise => LabelMap::IdentityPlusNoise,
            Label::TanhNoisy => LabelMap::TanhNoisy,
            Label::SinPlusNoise => LabelMap::SinPlusNoise,
        }
    }
}

/// Either independent `θ⁰`, `θ*` coordinates with the given variances or a
/// full `(k + k*)`-dimensional covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum InitSection {
    Full { cov: Vec<Vec<f64>> },
    Independent { var0: f64, var_star: f64 },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default = "one_usize")]
    pub k_star: usize,
    pub gamma: f64,
    #[serde(default = "one")]
    pub kappa_bar: f64,
    pub eta: EtaSchedule,
    #[serde(default = "default_driver")]
    pub driver: Driver,
    pub loss: Loss,
    pub activation: Activation,
    pub label: Label,
    #[serde(default)]
    pub lambda: f64,
    pub init: InitSection,
    #[serde(default)]
    pub noise_variance: f64,
}

fn default_driver() -> Driver {
    Driver::Poisson
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one_usize")]
    pub kappa: usize,
    pub trials: usize,
    pub seed: u64,
    #[serde(default)]
    pub data_dist: DataDist,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gf_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gf_stop_tol: Option<f64>,
    /// Defaults to the `dmft` grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmftSection {
    pub horizon: f64,
    pub delta: f64,
    #[serde(default = "default_mode")]
    pub mode: SolveMode,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default = "one")]
    pub damping: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rf_window: Option<usize>,
    /// Solve once per listed driver instead of once with `model.driver`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drivers: Option<Vec<Driver>>,
    /// Monte Carlo draws for the predicted loss and CDF curves.
    #[serde(default = "default_predict_samples")]
    pub predict_samples: usize,
}

fn default_mode() -> SolveMode {
    SolveMode::Analytic
}

fn default_max_iters() -> usize {
    50
}

fn default_mc_samples() -> usize {
    10_000
}

fn default_predict_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineName {
    Sgd,
    Sme,
    Poisson,
    Gf,
    Onepass,
    /// One-pass overlap ODE.
    Ode,
    Dmft,
}

impl EngineName {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineName::Sgd => "sgd",
            EngineName::Sme => "sme",
            EngineName::Poisson => "poisson",
            EngineName::Gf => "gf",
            EngineName::Onepass => "onepass",
            EngineName::Ode => "ode",
            EngineName::Dmft => "dmft",
        }
    }

    pub fn needs_sim(self) -> bool {
        !matches!(self, EngineName::Dmft | EngineName::Ode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub engines: Vec<EngineName>,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Also write a wide table (one column per series) per engine.
    #[serde(default)]
    pub plot_data: bool,
}

fn default_output_dir() -> String {
    "out".into()
}

/// Overrides applied unless the full-scale flag is given.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeskScale {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    /// Constant learning rate `η̄`.
    Eta,
    /// Aspect ratio `γ = n/d`; sets `n = round(γ d)`.
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Read the configured horizon (and, for `gamma`, the step) in the
    /// rescaled time `τ = value · t`.
    #[serde(default)]
    pub rescale_time: bool,
    /// Multiply `lambda` by the swept `γ`, keeping the per-step shrinkage of
    /// one-pass SGD with ridge `lambda`.
    #[serde(default)]
    pub scale_lambda: bool,
}

/// Error at `section.key`, anchored to the source line when found.
pub fn config_error(source: &str, section: &str, key: &str, msg: impl Into<String>) -> CliError {
    let msg = msg.into();
    match locate(source, section, key) {
        Some(line) => CliError::Config(format!("line {line}: {section}.{key}: {msg}")),
        None => CliError::Config(format!("{section}.{key}: {msg}")),
    }
}

/// 1-based line of `key = …` inside `[section]` (or at top level when
/// `section` is empty).
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((lhs, _)) = line.split_once('=') {
                if lhs.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    if section.is_empty() {
        None
    } else {
        source.lines().position(|l| l.trim() == format!("[{section}]")).map(|i| i + 1)
    }
}

impl ExperimentConfig {
    pub fn parse(source: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(source).map_err(|e| CliError::Config(e.to_string().trim_end().to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(config_error(
                source,
                "",
                "version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", cfg.version),
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies the desk-scale block (unless `full_scale`) and drops it.
    pub fn resolved(&self, full_scale: bool) -> Self {
        let mut out = self.clone();
        if let Some(ds) = out.desk_scale.take() {
            if !full_scale {
                if let Some(sim) = &mut out.sim {
                    sim.n = ds.n.unwrap_or(sim.n);
                    sim.d = ds.d.unwrap_or(sim.d);
                    sim.trials = ds.trials.unwrap_or(sim.trials);
                    sim.kappa = ds.kappa.unwrap_or(sim.kappa);
                }
                if let Some(dm) = &mut out.dmft {
                    dm.mc_samples = ds.mc_samples.unwrap_or(dm.mc_samples);
                    dm.predict_samples = ds.predict_samples.unwrap_or(dm.predict_samples);
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "experiment".into())
    }

    /// Checks cross-section constraints and that every value maps to a valid
    /// core object; `source` anchors messages.
    pub fn validate(&self, source: &str, need_dmft: bool) -> Result<(), CliError> {
        if self.run.engines.is_empty() {
            return Err(config_error(source, "run", "engines", "at least one engine is required"));
        }
        if need_dmft && self.dmft.is_none() {
            return Err(CliError::Config("missing [dmft] section".into()));
        }
        if self.run.engines.iter().any(|e| e.needs_sim()) && self.sim.is_none() {
            return Err(CliError::Config("missing [sim] section required by the selected engines".into()));
        }
        if self.run.engines.contains(&EngineName::Dmft) && self.dmft.is_none() {
            return Err(CliError::Config("missing [dmft] section required by engine \"dmft\"".into()));
        }
        if self.threads == Some(0) {
            return Err(config_error(source, "", "threads", "must be at least 1"));
        }
        self.model_spec(None).map_err(|e| config_error(source, "model", e.0, e.1))?;
        if let Some(sim) = &self.sim {
            if sim.trials == 0 {
                return Err(config_error(source, "sim", "trials", "must be at least 1"));
            }
            let grid = self.sim_grid().map_err(|m| config_error(source, "sim", "horizon", m))?;
            let cfg = self.sim_config(grid, None);
            cfg.validate().map_err(|e| config_error(source, "sim", sim_key(&e.to_string()), e.to_string()))?;
            if let (Some(dm), Some(h)) = (&self.dmft, sim.horizon) {
                if h != dm.horizon {
                    return Err(config_error(
                        source,
                        "sim",
                        "horizon",
                        "must equal dmft.horizon (one horizon per experiment)",
                    ));
                }
            }
        }
        if let Some(dm) = &self.dmft {
            TimeGrid::new(dm.horizon, dm.delta).map_err(|e| config_error(source, "dmft", "delta", e.to_string()))?;
            self.solve_options().validate().map_err(|e| config_error(source, "dmft", "mode", e.to_string()))?;
            if dm.drivers.as_ref().is_some_and(|d| d.is_empty()) {
                return Err(config_error(source, "dmft", "drivers", "must list at least one driver"));
            }
            if dm.predict_samples < 2 {
                return Err(config_error(source, "dmft", "predict_samples", "must be at least 2"));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() || sw.values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(config_error(source, "sweep", "values", "must be a nonempty list of positive numbers"));
            }
        }
        Ok(())
    }

    /// The model, with the swept value substituted when given.
    pub fn model_spec(&self, sweep_value: Option<f64>) -> Result<ModelSpec, (&'static str, String)> {
        let m = &self.model;
        let init = match &m.init {
            InitSection::Independent { var0, var_star } => InitLaw::independent(m.k, m.k_star, *var0, *var_star),
            InitSection::Full { cov } => {
                let n = cov.len();
                if cov.iter().any(|r| r.len() != n) {
                    return Err(("init", "covariance must be square".into()));
                }
                InitLaw::new(nalgebra::DMatrix::from_fn(n, n, |i, j| cov[i][j]))
            }
        }
        .map_err(|e| ("init", e.to_string()))?;
        let mut spec = ModelSpec {
            k: m.k,
            k_star: m.k_star,
            gamma: m.gamma,
            kappa_bar: m.kappa_bar,
            eta: m.eta.clone(),
            driver: m.driver,
            loss: m.loss,
            activation: m.activation,
            label: m.label.into(),
            regularizer: Regularizer::Ridge { lambda: m.lambda },
            init,
            noise: if m.noise_variance > 0.0 {
                NoiseLaw::Gaussian { variance: m.noise_variance }
            } else {
                NoiseLaw::None
            },
        };
        if let (Some(sw), Some(v)) = (&self.sweep, sweep_value) {
            match sw.parameter {
                SweepParameter::Eta => spec.eta = EtaSchedule::Constant(v),
                SweepParameter::Gamma => {
                    spec.gamma = v;
                    if sw.scale_lambda {
                        spec.regularizer = Regularizer::Ridge { lambda: m.lambda * v };
                    }
                }
            }
        }
        if m.noise_variance < 0.0 {
            return Err(("noise_variance", "must be nonnegative".into()));
        }
        spec.validate().map_err(|e| (model_key(&e.to_string()), e.to_string()))?;
        Ok(spec)
    }

    pub fn sim_grid(&self) -> Result<TimeGrid, String> {
        let sim = self.sim.as_ref().ok_or("no [sim] section")?;
        let horizon =
            sim.horizon.or(self.dmft.as_ref().map(|d| d.horizon)).ok_or("sim.horizon is required without [dmft]")?;
        let delta = sim.delta.or(self.dmft.as_ref().map(|d| d.delta)).ok_or("sim.delta is required without [dmft]")?;
        TimeGrid::new(horizon, delta).map_err(|e| e.to_string())
    }

    pub fn dmft_grid(&self) -> Result<TimeGrid, String> {
        let dm = self.dmft.as_ref().ok_or("no [dmft] section")?;
        TimeGrid::new(dm.horizon, dm.delta).map_err(|e| e.to_string())
    }

    /// Simulation settings; a `gamma` sweep value resets `n = round(γ d)`.
    pub fn sim_config(&self, grid: TimeGrid, sweep_value: Option<f64>) -> SimConfig {
        let s = self.sim.as_ref().expect("validated [sim] section");
        let mut cfg = SimConfig {
            n: s.n,
            d: s.d,
            alpha: s.alpha,
            kappa: s.kappa,
            grid,
            trials: s.trials,
            seed: s.seed,
            data_dist: s.data_dist,
            thresholds: s.thresholds.clone(),
            gf_step: s.gf_step,
            gf_stop_tol: s.gf_stop_tol,
        };
        if let (Some(sw), Some(v)) = (&self.sweep, sweep_value) {
            if sw.parameter == SweepParameter::Gamma {
                cfg.n = ((v * s.d as f64).round() as usize).max(1);
            }
        }
        cfg
    }

    pub fn solve_options(&self) -> SolveOptions {
        let d = self.dmft.as_ref().expect("validated [dmft] section");
        SolveOptions {
            max_iters: d.max_iters,
            tol: d.tol,
            damping: d.damping,
            mc_samples: d.mc_samples,
            mode: d.mode,
            seed: d.seed,
            rf_window: d.rf_window,
        }
    }
}

fn model_key(msg: &str) -> &'static str {
    for key in ["kappa_bar", "gamma", "k_star", "eta", "lambda", "init", "noise", "threshold"] {
        if msg.contains(key) {
            return match key {
                "threshold" => "loss",
                "noise" => "noise_variance",
                k => k,
            };
        }
    }
    "k"
}

fn sim_key(msg: &str) -> &'static str {
    for key in ["alpha", "kappa", "trials", "gf_step", "thresholds"] {
        if msg.contains(key) {
            return key;
        }
    }
    if msg.contains("CDF") {
        "thresholds"
    } else {
        "n"
    }
}
