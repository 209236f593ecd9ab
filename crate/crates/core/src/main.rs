use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use hetlfd::data::synthetic::{generate, SyntheticConfig};
use hetlfd::data::{load_dataset, split_dataset, Dataset, SplitMode};
use hetlfd::harness::{evaluate_model, load_run_config, mean_loss, run_experiment_with, write_experiment};
use hetlfd::models::{Family, ModelSpec};
use hetlfd::pipeline::{train, TrainConfig, TrainedModel};
use hetlfd::Error;

#[derive(Parser)]
#[command(
    name = "hetlfd",
    version,
    about = "Behavioral cloning with per-demonstrator embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Replaces the seed of every config (for `experiment`, the seed list).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population into a directory.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model and write its bundle directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        family: String,
        /// JSON with optional `hidden_widths`, `embedding_length`, `cluster_count`.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        train_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train only on the training side of this split.
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
    },
    /// Per-step losses of a trained model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluate only the test side of this split (seeded like `train`).
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate or load data, train every model, evaluate and report.
    Experiment {
        #[arg(long)]
        run_config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

/// Error plus the stage it came from, which decides the exit code.
enum Failure {
    Config(Error),
    Data(Error),
    Other(Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Other(Error::Config(_)) => 2,
            Failure::Other(e) if e.is_data_error() => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Other(e) => e,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Other(e)
    }
}

fn config_file<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(Error::Config(format!("{}: {e}", path.display()))))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Config(Error::Config(format!("{}: {e}", path.display()))))
}

fn dataset_file(path: &Path) -> Result<Dataset, Failure> {
    load_dataset(path).map_err(Failure::Data)
}

fn split_mode(s: &str) -> Result<SplitMode, Failure> {
    SplitMode::parse(s).map_err(Failure::Config)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    hidden_widths: Option<Vec<usize>>,
    embedding_length: Option<usize>,
    cluster_count: Option<usize>,
}

#[derive(Serialize)]
struct EvalSummary {
    model: Family,
    #[serde(rename = "L")]
    embedding_length: usize,
    steps: usize,
    mean_loss_nats: f64,
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| {
        Failure::Other(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| {
        Failure::Other(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate { config, out } => {
            let mut cfg: SyntheticConfig = config_file(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(Failure::Config)?;
            generate(&cfg)?.save(&out)?;
        }
        Command::Train {
            dataset,
            family,
            spec,
            train_config,
            out,
            split,
            fraction,
        } => {
            let family = Family::parse(&family).map_err(Failure::Config)?;
            let overrides: SpecFile = match spec {
                Some(p) => config_file(&p)?,
                None => SpecFile::default(),
            };
            let mut cfg: TrainConfig = config_file(&train_config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(Failure::Config)?;
            let split = split.as_deref().map(split_mode).transpose()?;
            let ds = dataset_file(&dataset)?;
            let mut model_spec = ModelSpec::with_defaults(
                family,
                ds.state_dim(),
                ds.action_count(),
                overrides.embedding_length.unwrap_or(3),
                overrides.cluster_count.unwrap_or(3),
            );
            if let Some(w) = overrides.hidden_widths {
                model_spec.hidden_widths = w;
            }
            model_spec.validate().map_err(Failure::Config)?;
            let train_ds = match split {
                Some(mode) => split_dataset(&ds, mode, fraction, cfg.seed)?.0,
                None => ds,
            };
            train(&train_ds, &model_spec, &cfg)?.save(&out)?;
        }
        Command::Evaluate {
            model,
            dataset,
            split,
            fraction,
            out,
        } => {
            let split = split.as_deref().map(split_mode).transpose()?;
            let model = TrainedModel::load(&model).map_err(Failure::Data)?;
            let ds = dataset_file(&dataset)?;
            let test = match split {
                Some(mode) => {
                    let seed = cli.seed.unwrap_or(model.provenance.config.seed);
                    split_dataset(&ds, mode, fraction, seed)?.1
                }
                None => ds,
            };
            let records = evaluate_model(&model, &test)?;
            create_dir(&out)?;
            let mut csv = String::from("demonstrator_id,episode_id,step_index,episode_length,loss\n");
            for r in &records {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.demonstrator_id, r.episode_id, r.step_index, r.episode_length, r.loss
                ));
            }
            write(&out.join("records.csv"), &csv)?;
            let summary = EvalSummary {
                model: model.family(),
                embedding_length: model.spec.embedding_length,
                steps: records.len(),
                mean_loss_nats: mean_loss(&records)?,
            };
            let json = serde_json::to_string_pretty(&summary).expect("serializable") + "\n";
            write(&out.join("summary.json"), &json)?;
        }
        Command::Experiment {
            run_config,
            out,
            quiet,
        } => {
            let mut cfg = load_run_config(&run_config).map_err(Failure::Config)?;
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let outcome = run_experiment_with(&cfg, |line| {
                if !quiet {
                    eprintln!("{line}");
                }
            })?;
            write_experiment(&outcome, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error());
            ExitCode::from(f.code())
        }
    }
}
