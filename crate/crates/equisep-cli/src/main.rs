//! Command-line harness for the separation-fuzziness toolkit.
//!
//! Exit codes: 0 success, 1 user or configuration error, 2 numerical
//! failure (divergence, sweep with no survivor).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use equisep::separation::{fit_law, SeparationProfile, Split, DEFAULT_REL_TOL};
use equisep::{Error, Result};

use equisep_cli::config::ExperimentConfig;
use equisep_cli::experiment::{self, run_experiment};
use equisep_cli::report::Report;
use equisep_cli::dump;

#[derive(Parser)]
#[command(name = "equisep", version, about = "Law-of-equi-separation toolkit")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs/latest")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download and verify a dataset into a directory.
    Fetch {
        /// One of "mnist", "fashion-mnist", "cifar10".
        #[arg(long)]
        dataset: String,
    },
    /// Train with the fixed learning rate from the config and emit a report.
    Train,
    /// Sweep the learning-rate grid, keep the best law, emit a report.
    Sweep,
    /// Probe a checkpoint over the configured training split and write
    /// an activation dump.
    Probe {
        /// Checkpoint produced by a training run.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dump destination.
        #[arg(long, default_value = "probe.eqsp")]
        dump: PathBuf,
    },
    /// Fit the law to an explicit profile or a dump and print it.
    Fit {
        /// Comma-separated D values, e.g. "100,50,25,12.5".
        #[arg(long, conflicts_with = "dump")]
        values: Option<String>,
        /// Activation dump to fit instead.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Analyze an activation dump and emit a report.
    AnalyzeDump {
        #[arg(long)]
        dump: PathBuf,
        /// Comma-separated capture-point indices for block grouping.
        #[arg(long)]
        boundaries: Option<String>,
    },
    /// Re-emit the CSV tables from an existing report.json.
    Report {
        #[arg(long)]
        json: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NumericalFailure { .. } | Error::SweepFailure => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fetch { dataset } => {
            let files = equisep::dataset::fetch_dataset(dataset, &cli.out)?;
            for file in files {
                println!("verified {}", file.display());
            }
            Ok(())
        }
        Command::Train => {
            let config = load_config(cli)?;
            if config.optimizer.lr.is_none() {
                return Err(Error::Config(
                    "train needs optimizer.lr; use the sweep subcommand for grids".into(),
                ));
            }
            emit_run(cli, &config)
        }
        Command::Sweep => {
            let config = load_config(cli)?;
            if config.optimizer.lr.is_some() {
                return Err(Error::Config(
                    "sweep needs a grid; optimizer.lr is set, use the train subcommand".into(),
                ));
            }
            emit_run(cli, &config)
        }
        Command::Probe { checkpoint, dump } => {
            let config = load_config(cli)?;
            let mut network = equisep::network::load_checkpoint(checkpoint)?;
            let data = experiment::load_data(&config.dataset, config.seed)?;
            let trace = equisep::network::probe_features(
                &mut network,
                &data.train,
                config.optimizer.batch_size,
            )?;
            dump::write_dump(
                &trace.layer_outputs,
                &data.train.labels,
                data.train.num_classes,
                dump,
            )?;
            println!("wrote {}", dump.display());
            Ok(())
        }
        Command::Fit { values, dump } => {
            let profile = match (values, dump) {
                (Some(text), None) => {
                    let parsed: Vec<f64> = text
                        .split(',')
                        .map(|v| {
                            v.trim().parse::<f64>().map_err(|e| {
                                Error::Config(format!("bad profile value \"{v}\": {e}"))
                            })
                        })
                        .collect::<Result<_>>()?;
                    SeparationProfile::from_values(parsed, Split::Train, None)
                }
                (None, Some(path)) => {
                    let dump = dump::read_dump(path)?;
                    let report = experiment::analyze_dump(&dump, &[], DEFAULT_REL_TOL)?;
                    let values = report.snapshots[0].points.iter().map(|p| p.d).collect();
                    SeparationProfile::from_values(values, Split::Train, None)
                }
                _ => {
                    return Err(Error::Config(
                        "fit needs exactly one of --values or --dump".into(),
                    ))
                }
            };
            let fit = fit_law(&profile)?;
            println!("slope     {}", fit.slope);
            println!("intercept {}", fit.intercept);
            println!("pearson_r {}", fit.pearson_r);
            println!("rho       {}", fit.rho);
            match fit.half_life {
                Some(h) => println!("half_life {h}"),
                None => println!("half_life undefined (rho >= 1)"),
            }
            Ok(())
        }
        Command::AnalyzeDump { dump, boundaries } => {
            let parsed = dump::read_dump(dump)?;
            let boundaries: Vec<usize> = match boundaries {
                Some(text) => text
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::Config(format!("bad boundary \"{v}\": {e}")))
                    })
                    .collect::<Result<_>>()?,
                None => Vec::new(),
            };
            let report = experiment::analyze_dump(&parsed, &boundaries, DEFAULT_REL_TOL)?;
            report.emit(&cli.out)?;
            print_fits(&report);
            Ok(())
        }
        Command::Report { json } => {
            let report = Report::from_json(&std::fs::read_to_string(json)?)?;
            report.emit(&cli.out)?;
            println!("emitted tables to {}", cli.out.display());
            Ok(())
        }
    }
}

fn emit_run(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let outcome = run_experiment(config)?;
    outcome.report.emit(&cli.out)?;
    equisep::network::save_checkpoint(&outcome.network, &cli.out.join("final.eqnw"))?;
    print_fits(&outcome.report);
    if let Some(acc) = outcome.report.final_train_accuracy {
        println!("train accuracy {acc}");
    }
    if let Some(acc) = outcome.report.test_accuracy {
        println!("test accuracy  {acc}");
    }
    Ok(())
}

fn print_fits(report: &Report) {
    for snap in &report.snapshots {
        if let Some(fit) = &snap.fit {
            println!(
                "epoch {} {} ({}): r {} rho {} half-life {}",
                snap.epoch.map_or("-".into(), |e| e.to_string()),
                snap.split,
                snap.grouping,
                fit.pearson_r,
                fit.rho,
                fit.half_life.map_or("-".into(), |h| h.to_string()),
            );
        }
    }
}
