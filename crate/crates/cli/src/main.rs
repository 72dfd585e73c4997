use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod validate;

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "energy-neutral", version, about = "Feasibility regions, trade-off curves and simulations for energy-harvesting sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep feasibility regions for one or more policy classes.
    Region(RunArgs),
    /// Queue/distortion trade-off of the joint and separable controllers.
    Tradeoff(RunArgs),
    /// Simulate one policy slot by slot.
    Simulate(RunArgs),
    /// Two-sensor TDMA scheduling regions.
    Schedule(RunArgs),
    /// Run coarse consistency checks on presets or a config file.
    Validate(ValidateArgs),
    /// Print a preset as a config file.
    Show {
        command: String,
        preset: String,
        #[arg(long)]
        json: bool,
    },
    /// List the shipped presets.
    Presets,
}

#[derive(Args)]
struct Source {
    /// Experiment file (TOML, or JSON by extension).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Points per grid axis, or number of trade-off weights.
    #[arg(long)]
    resolution: Option<usize>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ValidateArgs {
    /// Command the preset belongs to; all presets are checked when omitted.
    #[arg(long, requires = "preset")]
    kind: Option<String>,
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    resolution: Option<usize>,
}

enum Failure {
    Config(String),
    Validation,
}

fn load(command: &'static str, source: &Source) -> Result<ExperimentConfig, ConfigError> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), None) => config::load(path)?,
        (None, Some(name)) => config::preset(command, name)?,
        _ => return Err(ConfigError::NoSource),
    };
    if cfg.experiment.kind() != command {
        return Err(ConfigError::WrongKind { wanted: command, found: cfg.experiment.kind() });
    }
    Ok(cfg)
}

fn run(command: &'static str, args: &RunArgs) -> Result<(), Failure> {
    let cfg_err = |e: ConfigError| Failure::Config(e.to_string());
    let mut cfg = load(command, &args.source).map_err(cfg_err)?;
    if let Some(n) = args.resolution {
        cfg.experiment.set_resolution(n).map_err(cfg_err)?;
    }
    if args.seed.is_some() {
        cfg.seed = args.seed;
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out").join(command));
    let line = commands::run_experiment(&cfg, &out, args.jobs).map_err(|e| Failure::Config(e.to_string()))?;
    println!("{command}: {line}");
    println!("wrote {}", out.display());
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let cfg_err = |e: ConfigError| Failure::Config(e.to_string());
    let targets: Vec<(String, ExperimentConfig)> = match (&args.source.config, &args.source.preset, &args.kind) {
        (Some(path), None, None) => vec![(path.display().to_string(), config::load(path).map_err(cfg_err)?)],
        (None, Some(name), Some(kind)) => vec![(format!("{kind}/{name}"), config::preset(kind, name).map_err(cfg_err)?)],
        (None, None, None) => config::all_presets()
            .into_iter()
            .map(|(c, n)| Ok((format!("{c}/{n}"), config::preset(c, n)?)))
            .collect::<Result<_, ConfigError>>()
            .map_err(cfg_err)?,
        _ => return Err(Failure::Config("give --config, or --kind with --preset, or neither".into())),
    };
    let mut failed = 0;
    for (name, cfg) in &targets {
        for c in validate::validate(cfg, args.resolution).map_err(cfg_err)? {
            println!("{} {name}: {} ({})", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
            failed += usize::from(!c.ok);
        }
    }
    if failed > 0 {
        eprintln!("{failed} checks failed");
        return Err(Failure::Validation);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Region(a) => run("region", a),
        Command::Tradeoff(a) => run("tradeoff", a),
        Command::Simulate(a) => run("simulate", a),
        Command::Schedule(a) => run("schedule", a),
        Command::Validate(a) => run_validate(a),
        Command::Show { command, preset, json } => match config::preset(command, preset) {
            Ok(c) => {
                print!("{}", if *json { c.to_json() + "\n" } else { c.to_toml() });
                Ok(())
            }
            Err(e) => Err(Failure::Config(e.to_string())),
        },
        Command::Presets => {
            for (c, n) in config::all_presets() {
                println!("{c} {n}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation) => ExitCode::from(2),
    }
}
