//! Engine execution and output files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dmft_sgd::analytic::{one_pass_overlap_ode, OnePassOptions};
use dmft_sgd::dmft::save_state;
use dmft_sgd::fixed_point::{predict_observables, solve};
use dmft_sgd::highdim::{simulate, Engine};
use dmft_sgd::seed::{derive_seed, Stream};
use dmft_sgd::trace::{Observable, ObservableTrace, Series};
use dmft_sgd::{Driver, EtaSchedule, TimeGrid};

use crate::config::{EngineName, ExperimentConfig, Sweep, SweepParameter};
use crate::error::CliError;

/// One point of a sweep (or the whole experiment when there is no sweep).
#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub value: Option<f64>,
    /// Driver override for DMFT solves listed under `dmft.drivers`.
    pub driver: Option<Driver>,
}

impl Point {
    fn label(&self, cfg: &ExperimentConfig) -> String {
        let driver = match self.driver {
            Some(Driver::Poisson) => "_poisson",
            Some(Driver::Gaussian) => "_gaussian",
            None => "",
        };
        let value = match (&cfg.sweep, self.value) {
            (Some(sw), Some(v)) => {
                let p = match sw.parameter {
                    SweepParameter::Eta => "eta",
                    SweepParameter::Gamma => "gamma",
                };
                format!("_{p}{v}")
            }
            _ => String::new(),
        };
        format!("{driver}{value}")
    }
}

/// Gradient flow ignores `η` only when it is reported in `τ = ηt`.
fn depends_on(engine: EngineName, sweep: &Sweep) -> bool {
    match sweep.parameter {
        SweepParameter::Eta => engine != EngineName::Gf || !sweep.rescale_time,
        SweepParameter::Gamma => !matches!(engine, EngineName::Onepass | EngineName::Ode),
    }
}

/// `(engine, point)` pairs in execution order; engines that do not depend on
/// the swept parameter appear once.
pub fn plan(cfg: &ExperimentConfig) -> Vec<(EngineName, Point)> {
    let mut out = Vec::new();
    for &e in &cfg.run.engines {
        let drivers: Vec<Option<Driver>> = match cfg.dmft.as_ref().and_then(|d| d.drivers.as_ref()) {
            Some(list) if e == EngineName::Dmft => list.iter().map(|&d| Some(d)).collect(),
            _ => vec![None],
        };
        for driver in drivers {
            match &cfg.sweep {
                Some(sw) if depends_on(e, sw) => {
                    out.extend(sw.values.iter().map(|&v| (e, Point { value: Some(v), driver })));
                }
                _ => out.push((e, Point { value: None, driver })),
            }
        }
    }
    out
}

/// Grid on which the engine runs, and the factor mapping its times to the
/// reported time axis.
pub fn engine_grid(cfg: &ExperimentConfig, engine: EngineName, point: Point) -> Result<(TimeGrid, f64), CliError> {
    let base = if engine == EngineName::Dmft { cfg.dmft_grid() } else { cfg.sim_grid() }.map_err(CliError::Config)?;
    let sweep = cfg.sweep.as_ref().filter(|sw| sw.rescale_time);
    if engine == EngineName::Gf && sweep.is_some_and(|sw| sw.parameter == SweepParameter::Eta) {
        return Ok((base, 1.0));
    }
    let (grid, scale) = match (sweep, point.value) {
        (Some(sw), Some(v)) => {
            let g = match sw.parameter {
                SweepParameter::Eta => TimeGrid::new(base.horizon() / v, base.delta()),
                SweepParameter::Gamma => TimeGrid::new(base.horizon() / v, base.delta() / v),
            }
            .map_err(|e| CliError::Config(format!("rescaled grid for value {v}: {e}")))?;
            (g, v)
        }
        _ => (base, 1.0),
    };
    if engine != EngineName::Gf {
        return Ok((grid, scale));
    }
    // Gradient flow runs in τ = ηt; with a constant rate its records map back
    // to t exactly.
    match gf_rate(cfg, point) {
        Some(eta) => {
            let g = TimeGrid::from_steps(grid.steps(), grid.delta() * eta)
                .map_err(|e| CliError::Config(format!("gradient-flow grid: {e}")))?;
            Ok((g, scale / eta))
        }
        None => Ok((grid, scale)),
    }
}

fn gf_rate(cfg: &ExperimentConfig, point: Point) -> Option<f64> {
    match (&cfg.sweep, point.value) {
        (Some(sw), Some(v)) if sw.parameter == SweepParameter::Eta => Some(v),
        _ => match cfg.model.eta {
            EtaSchedule::Constant(eta) if eta > 0.0 => Some(eta),
            _ => None,
        },
    }
}

pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub config_name: String,
    pub out_dir: PathBuf,
}

impl Context<'_> {
    fn stem(&self, engine: EngineName, point: Point) -> String {
        format!("{}_{}{}", self.cfg.label(), engine.as_str(), point.label(self.cfg))
    }

    fn header(&self, engine: EngineName, point: Point, extra: &[String]) -> Vec<String> {
        let mut h = vec![
            format!("dmft-sgd {}", env!("CARGO_PKG_VERSION")),
            format!("config: {} (schema version {})", self.config_name, self.cfg.version),
            format!("experiment: {}", self.cfg.label()),
            format!("engine: {}", engine.as_str()),
        ];
        if let (Some(sw), Some(v)) = (&self.cfg.sweep, point.value) {
            h.push(format!("sweep: {:?} = {v}", sw.parameter).to_lowercase());
        }
        h.extend_from_slice(extra);
        h
    }

    fn write_file(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), CliError>,
    ) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(path.display(), e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| CliError::io(path.display(), e))?;
        Ok(path)
    }

    fn write_trace(&self, stem: &str, trace: &ObservableTrace, header: &[String]) -> Result<Vec<PathBuf>, CliError> {
        let mut paths = vec![self.write_file(&format!("{stem}.csv"), |w| Ok(trace.write_csv(w, header)?))?];
        if self.cfg.run.plot_data {
            paths.push(self.write_file(&format!("{stem}_wide.csv"), |w| write_wide(w, trace, header))?);
        }
        Ok(paths)
    }

    /// Runs one engine at one sweep point and writes its outputs.
    pub fn run(&self, engine: EngineName, point: Point) -> Result<Vec<PathBuf>, CliError> {
        let mut spec =
            self.cfg.model_spec(point.value).map_err(|(k, m)| CliError::Config(format!("model.{k}: {m}")))?;
        if let Some(d) = point.driver {
            spec.driver = d;
        }
        let (grid, scale) = engine_grid(self.cfg, engine, point)?;
        let stem = self.stem(engine, point);
        log::info!("running {stem}");
        match engine {
            EngineName::Dmft => {
                let opts = self.cfg.solve_options();
                let dm = self.cfg.dmft.as_ref().expect("validated [dmft] section");
                let thresholds = self.cfg.sim.as_ref().map_or(vec![1.0], |s| s.thresholds.clone());
                let sol = solve(&spec, grid, &opts)?;
                let predict_seed = derive_seed(dm.seed, Stream::Prediction, 0);
                let mut trace = predict_observables(&sol.state, &spec, &thresholds, dm.predict_samples, dm.seed)?;
                rescale(&mut trace, scale);
                let header = self.header(
                    engine,
                    point,
                    &[
                        format!("dmft mode: {:?}, driver: {:?}", opts.mode, spec.driver).to_lowercase(),
                        format!("base seed: {}", dm.seed),
                        format!("prediction seed: {predict_seed}"),
                        format!(
                            "fixed point: {} after {} iterations, final distance {:e}",
                            if sol.report.converged { "converged" } else { "not converged" },
                            sol.report.iterations(),
                            sol.report.distances.last().copied().unwrap_or(f64::NAN)
                        ),
                    ],
                );
                let mut paths = self.write_trace(&stem, &trace, &header)?;
                paths.push(self.write_file(&format!("{stem}_convergence.csv"), |w| Ok(sol.report.write_csv(w)?))?);
                let state_path = self.out_dir.join(format!("{stem}_state.bin"));
                save_state(&state_path, &sol.state)?;
                paths.push(state_path);
                Ok(paths)
            }
            EngineName::Ode => {
                let seed = self.cfg.sim.as_ref().map_or(0, |s| s.seed);
                let opts = OnePassOptions { seed, ..OnePassOptions::default() };
                let ode = one_pass_overlap_ode(&spec, &grid.times(), &opts)?;
                let mut trace = ode_trace(&ode.taus, &ode.overlap, &ode.self_overlap);
                rescale(&mut trace, scale);
                let header = self.header(
                    engine,
                    point,
                    &[
                        format!("base seed: {seed}"),
                        format!(
                            "coefficients: {}",
                            if ode.used_monte_carlo {
                                format!("monte carlo, max stderr {:e}", ode.max_coefficient_stderr)
                            } else {
                                "gauss-hermite quadrature".into()
                            }
                        ),
                    ],
                );
                self.write_trace(&stem, &trace, &header)
            }
            sim_engine => {
                let sim = self.cfg.sim_config(grid, point.value);
                let core_engine = match sim_engine {
                    EngineName::Sgd => Engine::Sgd,
                    EngineName::Sme => Engine::Sme,
                    EngineName::Poisson => Engine::Poisson,
                    EngineName::Gf => Engine::Gf,
                    _ => Engine::Onepass,
                };
                let mut trace = simulate(core_engine, &spec, &sim)?;
                rescale(&mut trace, scale);
                let mut extra = vec![
                    format!("n = {}, d = {}, trials = {}", sim.n, sim.d, sim.trials),
                    format!("base seed: {}", sim.seed),
                ];
                let eta_rescaled =
                    self.cfg.sweep.as_ref().is_some_and(|sw| sw.rescale_time && sw.parameter == SweepParameter::Eta);
                if core_engine == Engine::Gf && !eta_rescaled && gf_rate(self.cfg, point).is_none() {
                    extra.push("time axis: integrated learning rate (schedule is not constant)".into());
                }
                for i in 0..sim.trials as u64 {
                    extra.push(if core_engine == Engine::Onepass {
                        format!("trial {i} seed: dynamics {}", derive_seed(sim.seed, Stream::OnePass, i))
                    } else {
                        format!(
                            "trial {i} seeds: dataset {} dynamics {}",
                            derive_seed(sim.seed, Stream::Dataset, i),
                            derive_seed(sim.seed, Stream::Dynamics, i)
                        )
                    });
                }
                let header = self.header(engine, point, &extra);
                self.write_trace(&stem, &trace, &header)
            }
        }
    }
}

fn rescale(trace: &mut ObservableTrace, scale: f64) {
    if scale != 1.0 {
        trace.times.iter_mut().for_each(|t| *t *= scale);
    }
}

fn ode_trace(
    taus: &[f64],
    overlap: &[nalgebra::DMatrix<f64>],
    self_overlap: &[nalgebra::DMatrix<f64>],
) -> ObservableTrace {
    let mut series = Vec::new();
    let zeros = vec![0.0; taus.len()];
    let mut push = |obs, mats: &[nalgebra::DMatrix<f64>]| {
        let (r, c) = mats[0].shape();
        for i in 0..r {
            for j in 0..c {
                series.push(Series {
                    observable: obs,
                    row: i,
                    col: j,
                    mean: mats.iter().map(|m| m[(i, j)]).collect(),
                    stderr: zeros.clone(),
                    n_trials: 1,
                });
            }
        }
    };
    push(Observable::Overlap, overlap);
    push(Observable::SelfOverlap, self_overlap);
    ObservableTrace { times: taus.to_vec(), thresholds: Vec::new(), series, trials: Vec::new() }
}

/// One row per time, columns `<observable>[row,col]` and `…_stderr`.
fn write_wide(w: &mut dyn Write, trace: &ObservableTrace, header: &[String]) -> Result<(), CliError> {
    let io = |e| CliError::io("writing plot data", e);
    for line in header {
        writeln!(w, "# {line}").map_err(io)?;
    }
    let mut cols = vec!["time".to_string()];
    for s in &trace.series {
        let name = format!("{}[{},{}]", s.observable, s.row, s.col);
        cols.push(name.clone());
        cols.push(format!("{name}_stderr"));
    }
    writeln!(w, "{}", cols.join(",")).map_err(io)?;
    for (i, t) in trace.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        for s in &trace.series {
            row.push(s.mean[i].to_string());
            row.push(s.stderr[i].to_string());
        }
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn write_echo(out_dir: &Path, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let path = out_dir.join(format!("{}_resolved.toml", cfg.label()));
    fs::write(&path, cfg.to_toml()).map_err(|e| CliError::io(path.display(), e))?;
    Ok(path)
}
