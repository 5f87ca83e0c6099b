use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use collapse_lab::cli::analytics_cmd::{append_csv, evaluate, AnalyticsCommand};
use collapse_lab::cli::{parse_config, preset, run_scenario, write_outputs, Scale, ScenarioConfig, PRESETS};
use collapse_lab::engine::SamplingMode;
use collapse_lab::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "collapse-lab", version, about = "Recursive self-training simulator for parametric models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sampling {
    Full,
    Sufficient,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a preset or a JSON scenario config and write CSV plus manifest.
    Run {
        /// Preset name or path to a config file.
        target: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, env = "COLLAPSE_LAB_THREADS")]
        parallelism: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Override the number of steps T.
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum)]
        sampling: Option<Sampling>,
        /// Use the reference replication counts for presets.
        #[arg(long)]
        full_scale: bool,
        /// Maximum random draws per grid cell.
        #[arg(long)]
        budget_cap: Option<f64>,
        #[arg(long)]
        quiet: bool,
    },
    /// List built-in presets.
    Presets,
    /// Evaluate a closed-form quantity.
    Analytics {
        #[command(subcommand)]
        quantity: AnalyticsCommand,
        /// Append rows to this CSV file.
        #[arg(long, global = true)]
        csv: Option<PathBuf>,
    },
}

fn load(target: &str, full_scale: bool) -> Result<ScenarioConfig> {
    if PRESETS.contains(&target) {
        return preset(target, if full_scale { Scale::Full } else { Scale::Desk });
    }
    let path = PathBuf::from(target);
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        return parse_config(&text);
    }
    preset(target, Scale::Desk)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            target,
            seed,
            replications,
            parallelism,
            out,
            delta,
            epsilon,
            horizon,
            sampling,
            full_scale,
            budget_cap,
            quiet,
        } => load(&target, full_scale).and_then(|mut config| {
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(r) = replications {
                config.replications = r;
            }
            if parallelism.is_some() {
                config.parallelism = parallelism;
            }
            if let Some(d) = delta {
                config.delta = d;
            }
            if let Some(e) = epsilon {
                config.epsilon = e;
            }
            if let Some(t) = horizon {
                config.horizon = t;
            }
            if let Some(m) = sampling {
                config.sampling = match m {
                    Sampling::Full => SamplingMode::Full,
                    Sampling::Sufficient => SamplingMode::Sufficient,
                };
            }
            if let Some(cap) = budget_cap {
                config.budget_cap = cap;
            }
            if let Some(o) = out {
                config.out = Some(o);
            }
            let dir = config.out.clone().unwrap_or_else(|| PathBuf::from("results"));
            let output = run_scenario(&config, !quiet)?;
            let files = write_outputs(&config, &output, &dir)?;
            println!("results:  {}", files.results.display());
            println!("manifest: {}", files.manifest.display());
            if let Some(t) = files.trajectories {
                println!("trajectories: {}", t.display());
            }
            Ok(())
        }),
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
            Ok(())
        }
        Command::Analytics { quantity, csv } => evaluate(&quantity).and_then(|rows| {
            let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
            for (label, value) in &rows {
                println!("{label:<width$} = {value}");
            }
            match csv {
                Some(path) => {
                    let name = format!("{quantity:?}");
                    let name = name.split([' ', '{']).next().unwrap_or("analytics").to_string();
                    append_csv(&path, &name, &rows)
                }
                None => Ok(()),
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
