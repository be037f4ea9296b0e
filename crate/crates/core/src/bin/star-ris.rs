use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use star_ris::config::SystemConfig;
use star_ris::harness::{run_campaign, run_single, Campaign, Scheme};

#[derive(Parser)]
#[command(name = "star-ris", version, about = "STAR-RIS spectrum-sharing optimizer and Monte Carlo driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one channel realization and print the result.
    Run {
        /// Scenario JSON; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "star")]
        scheme: Scheme,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key, e.g. `--set max_power_dbm=30`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write the full trial record as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep described by a campaign (or manifest) JSON file.
    Campaign {
        file: PathBuf,
        /// Override a key of the base config.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        master_seed: Option<u64>,
    },
    /// Check a scenario file and print it with defaults filled in.
    ValidateConfig {
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load_config(path: Option<&PathBuf>, overrides: &[String]) -> star_ris::Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::load(p, overrides),
        None => SystemConfig::with_overrides(overrides),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> star_ris::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            scheme,
            seed,
            overrides,
            out,
        } => {
            let mut cfg = load_config(config.as_ref(), &overrides)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            let rec = run_single(&cfg, scheme);
            println!(
                "{} seed {}: SE {:.4} bits/s/Hz, primary SINR {:.2} dB, {} iterations, {}, feasible {}, {:.2}s",
                rec.scheme,
                rec.seed,
                rec.final_spectral_efficiency,
                rec.primary_sinr_db,
                rec.iterations,
                rec.status,
                rec.feasible,
                rec.wall_time_s
            );
            if let Some(path) = out {
                let text = serde_json::to_string_pretty(&rec)?;
                std::fs::write(&path, text).map_err(|e| star_ris::Error::Io { path, source: e })?;
            }
            Ok(if rec.is_error() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Campaign {
            file,
            overrides,
            out,
            trials,
            workers,
            master_seed,
        } => {
            let mut c = Campaign::load(&file)?;
            c.base_config = c.base_config.overridden(&overrides)?;
            if let Some(dir) = out {
                c.output_dir = dir;
            }
            if let Some(t) = trials {
                c.trials_per_point = t;
            }
            if workers.is_some() {
                c.workers = workers;
            }
            if let Some(s) = master_seed {
                c.master_seed = s;
            }
            let outcome = run_campaign(&c)?;
            for row in &outcome.summary {
                let point = row.swept_value.map_or("-".to_string(), |v| v.to_string());
                println!(
                    "{point:>8} {:<13} mean SE {:.4} (std {:.4}), {}/{} feasible",
                    row.scheme.as_str(),
                    row.mean_spectral_efficiency,
                    row.std_spectral_efficiency,
                    row.feasible,
                    row.trials
                );
            }
            println!("wrote {}", outcome.output_dir.display());
            if outcome.errors > 0 {
                eprintln!("{} trial(s) failed", outcome.errors);
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config, overrides } => {
            let cfg = load_config(config.as_ref(), &overrides)?;
            println!("{}", cfg.to_json_pretty());
            eprintln!("ok");
            Ok(ExitCode::SUCCESS)
        }
    }
}
