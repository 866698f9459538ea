use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rfsched::config::{parse_arrivals, parse_channel, parse_config};
use rfsched::estimator::{empirical_rate, FitModel};
use rfsched::experiment::{
    dominance_csv, dominance_experiment, estimate_csv, fit_summary, manifest, ratefn_csv, ratefn_reports,
    reproduce_fig, sim_csv, simulate, FigureOverrides,
};
use rfsched::sim::SimConfig;

const SEED_ENV: &str = "RFSCHED_SEED";

#[derive(Parser, Debug)]
#[command(name = "rfsched", version, about = "Multi-server scheduling over ON/OFF channels")]
struct Cli {
    /// Directory for CSV, SVG and manifest files.
    #[arg(long, global = true, default_value = "rfsched-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rate-function bounds and optimality verdicts for b = 0..=b_max.
    Ratefn {
        #[arg(long, default_value_t = 12)]
        b_max: u64,
        #[arg(long, default_value = "preset(1)")]
        channel: String,
        #[arg(long, default_value = "batch(5, 0.15)")]
        arrivals: String,
    },
    /// Simulate one configuration and estimate P(W > b).
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the decay of P(W > b) across a ladder of n.
    Estimate {
        #[arg(long)]
        b: u32,
        #[arg(long, value_delimiter = ',', default_value = "4,6,8,10,12")]
        n_ladder: Vec<usize>,
        /// Base configuration; its n and warmup are replaced per rung.
        #[arg(long)]
        config: Option<PathBuf>,
        /// W samples per rung and replication.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, value_enum, default_value_t = Model::Pure)]
        model: Model,
    },
    /// Coupled dominance runs of OPF and DWM against FBS and PM.
    Dominance {
        #[arg(long, default_value_t = 200)]
        runs: u32,
        #[arg(long, default_value_t = 2000)]
        horizon: u64,
    },
    /// Regenerate a figure's curves as CSV and SVG.
    ReproduceFig {
        #[arg(value_parser = clap::value_parser!(u8).range(3..=5))]
        fig: u8,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        b_max: Option<u32>,
        #[arg(long)]
        replications: Option<u32>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Model {
    Pure,
    LogN,
}

enum Failure {
    Config(String),
    Runtime(String),
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{SEED_ENV} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Failure> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text).map_err(|e| {
        let name = path.map_or("<defaults>".into(), |p| p.display().to_string());
        Failure::Config(format!("{name}:\n{e}"))
    })?;
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Ratefn { b_max, channel, arrivals } => {
            let channel = parse_channel(&channel).map_err(|e| Failure::Config(format!("channel: {e}")))?;
            let arrivals = parse_arrivals(&arrivals).map_err(|e| Failure::Config(format!("arrivals: {e}")))?;
            let csv = ratefn_csv(&ratefn_reports(b_max, &arrivals, &channel)).map_err(runtime)?;
            print!("{csv}");
            write(out, "ratefn.csv", &csv)
        }
        Command::Simulate { config } => {
            let cfg = load_config(Some(&config))?;
            let csv = sim_csv(&simulate(&cfg).map_err(runtime)?, false).map_err(runtime)?;
            print!("{csv}");
            write(out, "simulate.csv", &csv)?;
            write(out, "manifest.cfg", &manifest(&cfg))
        }
        Command::Estimate { b, n_ladder, config, samples, model } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = samples {
                cfg.horizon = cfg.warmup + s.max(1) * cfg.sample_gap;
            }
            let model = match model {
                Model::Pure => FitModel::PureExponential,
                Model::LogN => FitModel::ExponentialWithLogN,
            };
            if n_ladder.is_empty() {
                return Err(Failure::Config("n ladder is empty".into()));
            }
            let result = empirical_rate(b, &n_ladder, &cfg, model).map_err(runtime)?;
            let csv = estimate_csv(&result).map_err(runtime)?;
            let summary = fit_summary(&result);
            print!("{csv}{summary}");
            write(out, "estimate.csv", &csv)?;
            write(out, "fit.txt", &summary)?;
            write(out, "manifest.cfg", &manifest(&cfg))
        }
        Command::Dominance { runs, horizon } => {
            if runs == 0 || horizon == 0 {
                return Err(Failure::Config("runs and horizon must be positive".into()));
            }
            let csv = dominance_csv(&dominance_experiment(runs, horizon).map_err(runtime)?).map_err(runtime)?;
            print!("{csv}");
            write(out, "dominance.csv", &csv)
        }
        Command::ReproduceFig { fig, n, samples, b_max, replications } => {
            let ov = FigureOverrides { n, samples, b_max, seed: env_seed()?, replications };
            let result = reproduce_fig(fig, &ov).map_err(|e| match e {
                rfsched::Error::InvalidSimConfig(_) | rfsched::Error::InvalidPolicy(_) => Failure::Config(e.to_string()),
                other => runtime(other),
            })?;
            write(out, &format!("fig{fig}.csv"), &result.csv)?;
            write(out, &format!("fig{fig}.svg"), &result.svg)?;
            for cfg in &result.configs {
                let id = cfg.channel.preset.unwrap_or(0);
                write(out, &format!("fig{fig}_setting{id}.cfg"), &manifest(cfg))?;
            }
            print!("{}", result.csv);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
