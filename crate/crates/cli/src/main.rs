//! `dmft-sgd`: run simulations and DMFT solves from a TOML experiment file
//! and compare the resulting traces.

mod compare;
mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{EngineName, ExperimentConfig};
use error::CliError;

const BUNDLED: &[(&str, &str)] = &[
    ("fig1_linear", include_str!("../configs/fig1_linear.toml")),
    ("fig2_tanh_huber", include_str!("../configs/fig2_tanh_huber.toml")),
    ("fig3_sin_huber", include_str!("../configs/fig3_sin_huber.toml")),
    ("fig4_lr_sweep", include_str!("../configs/fig4_lr_sweep.toml")),
    ("fig5_gamma_sweep", include_str!("../configs/fig5_gamma_sweep.toml")),
];

#[derive(Parser)]
#[command(name = "dmft-sgd", version, about = "SGD, SME and DMFT experiments on multi-index models")]
struct Cli {
    /// Worker threads (default: all cores, or the config's `threads` key).
    #[arg(long, global = true, env = "DMFT_SGD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every engine listed in `[run]` and write one trace CSV each.
    Simulate(RunArgs),
    /// Solve the DMFT fixed point and write the state, convergence log and
    /// predicted observables.
    Dmft(RunArgs),
    /// Compare traces against the first one (differences and z-scores).
    Compare {
        #[arg(required = true, num_args = 2..)]
        traces: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print a bundled configuration (or list them without a name).
    ShowConfig { name: Option<String> },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to a TOML experiment, or the name of a bundled one.
    config: String,
    /// Ignore the `[desk_scale]` overrides.
    #[arg(long)]
    full_scale: bool,
    /// Override `run.output_dir`.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

fn read_config(arg: &str) -> Result<(String, String), CliError> {
    let path = Path::new(arg);
    if path.exists() {
        let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        let name = path.file_name().map_or_else(|| arg.to_string(), |n| n.to_string_lossy().into_owned());
        return Ok((name, src));
    }
    match BUNDLED.iter().find(|(n, _)| *n == arg) {
        Some((n, src)) => Ok((format!("{n} (bundled)"), src.to_string())),
        None => Err(CliError::Config(format!("no config file or bundled config named {arg:?}"))),
    }
}

fn init_threads(cli_threads: Option<usize>, cfg: &ExperimentConfig) -> Result<(), CliError> {
    if let Some(n) = cli_threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run_experiment(args: &RunArgs, threads: Option<usize>, dmft_only: bool) -> Result<(), CliError> {
    let (config_name, source) = read_config(&args.config)?;
    let parsed = ExperimentConfig::parse(&source)?;
    let mut cfg = parsed.resolved(args.full_scale);
    if dmft_only {
        cfg.run.engines = vec![EngineName::Dmft];
    }
    cfg.validate(&source, dmft_only)?;
    init_threads(threads, &cfg)?;

    let out_dir = args.output_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir));
    let plan = run::plan(&cfg);
    // Every sweep point must resolve before anything is written.
    for &(engine, point) in &plan {
        cfg.model_spec(point.value).map_err(|(k, m)| CliError::Config(format!("model.{k}: {m}")))?;
        run::engine_grid(&cfg, engine, point)?;
    }
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(out_dir.display(), e))?;
    let ctx = run::Context { cfg: &cfg, config_name, out_dir: out_dir.clone() };
    println!("{}", run::write_echo(&out_dir, &cfg)?.display());
    for (engine, point) in plan {
        for p in ctx.run(engine, point)? {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => run_experiment(&args, cli.threads, false),
        Command::Dmft(args) => run_experiment(&args, cli.threads, true),
        Command::Compare { traces, output } => {
            let summary = match &output {
                Some(p) => {
                    let f = std::fs::File::create(p).map_err(|e| CliError::io(p.display(), e))?;
                    let mut w = std::io::BufWriter::new(f);
                    let s = compare::compare(&traces, &mut w)?;
                    std::io::Write::flush(&mut w).map_err(|e| CliError::io(p.display(), e))?;
                    s
                }
                None => compare::compare(&traces, &mut std::io::stdout().lock())?,
            };
            for (obs, z) in summary {
                eprintln!("max |z| {obs}: {z:.3}");
            }
            Ok(())
        }
        Command::ShowConfig { name: None } => {
            for (n, _) in BUNDLED {
                println!("{n}");
            }
            Ok(())
        }
        Command::ShowConfig { name: Some(n) } => {
            let (_, src) = BUNDLED
                .iter()
                .find(|(b, _)| *b == n)
                .ok_or_else(|| CliError::Config(format!("no bundled config named {n:?}")))?;
            print!("{src}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
