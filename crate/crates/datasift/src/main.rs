//! CLI entry point: load an experiment config, apply overrides, run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use datasift::harness::{ExperimentConfig, Method, PartitionConfig};
use datasift::Error;

/// Run one budgeted-acquisition experiment from a config file.
#[derive(Parser, Debug)]
#[command(name = "datasift", version, about)]
struct Cli {
    /// Experiment config (.json or .toml).
    #[arg(long)]
    config: PathBuf,

    /// Override the acquisition method
    /// (random | entropy | inf | autodata | datasift | datasift-inf).
    #[arg(long)]
    method: Option<String>,

    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Run several seeds; writes each run to `<out>/seed-<s>/`.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Override the budget as a fraction of the pool size.
    #[arg(long)]
    budget_frac: Option<f64>,

    /// Override the batch size as a fraction of the budget.
    #[arg(long)]
    batch_frac: Option<f64>,

    /// Override the exploration coefficient.
    #[arg(long)]
    alpha: Option<f64>,

    /// Override the parity-gap stopping threshold.
    #[arg(long)]
    tau: Option<f64>,

    /// Force a fixed partition count instead of BIC selection.
    #[arg(long)]
    g: Option<usize>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write partitions.json (centroids, sizes, assignments).
    #[arg(long)]
    dump_partitions: bool,

    /// Also write scores.csv (predicted pool scores, when computed).
    #[arg(long)]
    dump_scores: bool,
}

fn apply_overrides(config: &mut ExperimentConfig, cli: &Cli) -> Result<(), Error> {
    if let Some(method) = &cli.method {
        config.method = Method::parse(method)?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(v) = cli.budget_frac {
        config.budget_frac = v;
    }
    if let Some(v) = cli.batch_frac {
        config.batch_frac = v;
    }
    if let Some(v) = cli.alpha {
        config.alpha = v;
    }
    if let Some(v) = cli.tau {
        config.tau = v;
    }
    if let Some(g) = cli.g {
        config.partition = PartitionConfig::FixedG { g };
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    config.dump_partitions |= cli.dump_partitions;
    config.dump_scores |= cli.dump_scores;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), anyhow::Error> {
    let mut config = ExperimentConfig::from_path(&cli.config)?;
    apply_overrides(&mut config, cli)?;

    let seeds: Vec<u64> = match &cli.seeds {
        Some(seeds) if !seeds.is_empty() => seeds.clone(),
        _ => vec![config.seed],
    };
    let fan_out = seeds.len() > 1;
    for seed in seeds {
        let mut run_config = config.clone();
        run_config.seed = seed;
        if fan_out {
            run_config.out_dir = config.out_dir.join(format!("seed-{seed}"));
        }
        let summary = datasift::run_experiment(&run_config)?;
        println!(
            "{} seed={} parity {:.4} -> {:.4} accuracy {:.4} -> {:.4} acquired {}/{} stop={} ({})",
            summary.method,
            summary.seed,
            summary.initial_parity,
            summary.final_parity,
            summary.initial_accuracy,
            summary.final_accuracy,
            summary.acquired_count,
            summary.budget,
            summary.stop_reason,
            run_config.out_dir.display(),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<Error>()
                .map(Error::exit_code)
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}
