//! `smil`: data preparation, training, evaluation, ablations and reports.
//!
//! Failures print `error: <reason-code>: <detail>` on one line to stderr.
//! Unknown ablation variants exit with status 2, other failures with 1.

use clap::{Parser, Subcommand};
use smil_core::dataset::{generate_avmnist_corpus, prepare_dataset, CorpusSpec, AUDIO_DIR, IMAGES_FILE, LABELS_FILE};
use smil_core::eval::{EvalMode, Pattern};
use smil_core::experiment::{aggregate_reports, evaluate_run, run_ablation, run_experiment, ExperimentConfig, RunReport, REPORT_FILE};
use smil_core::par::Execution;
use smil_core::signal::MfccConfig;
use smil_core::train::{Method, Variant};
use smil_core::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "smil", version, about = "Multimodal learning with severely missing modality")]
struct Cli {
    /// Run data-parallel stages on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic avMNIST-style corpus (IDX images, WAV clips).
    GenerateCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 150)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Pair images with audio, split, extract and standardize features.
    PrepareData {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, required_unless_present = "features")]
        audio_dir: Option<PathBuf>,
        /// Precomputed 20x20 feature maps, row i paired with image i.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Train one method and write checkpoint, priors, history and report.
    Train {
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Re-run the configuration echoed in a report.
        #[arg(long, conflicts_with = "config")]
        replay: Option<PathBuf>,
        /// Prepared dataset directory, overriding the config.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved checkpoint under one test-time pattern.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Prepared dataset directory; defaults to the run's own data.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "full")]
        pattern: String,
        /// Average over this many latent draws instead of using means.
        #[arg(long)]
        stochastic: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate one ablation of the full method.
    Ablate {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate run reports into one table.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, eta: Option<f64>, seed: Option<u64>, data: Option<PathBuf>, iterations: Option<usize>) {
    if let Some(e) = eta {
        cfg.train.eta = e;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    if data.is_some() {
        cfg.data_dir = data;
    }
    if let Some(i) = iterations {
        cfg.train.iterations = i;
    }
}

fn summary(report: &RunReport, out: &Path) {
    for key in
        ["method", "variant", "eta", "seed", "complete_count", "metrics.full.accuracy", "metrics.image-only.accuracy", "drop.accuracy"]
    {
        if let Some(v) = report.get(key) {
            println!("{key}: {v}");
        }
    }
    println!("report: {}", out.join(REPORT_FILE).display());
}

fn run(cli: Cli) -> Result<(), Error> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    match cli.command {
        Command::GenerateCorpus { out, per_class, seed } => {
            let spec = CorpusSpec { per_class, seed, ..CorpusSpec::default() };
            generate_avmnist_corpus(&out, &spec, exec)?;
            println!("images: {}", out.join(IMAGES_FILE).display());
            println!("labels: {}", out.join(LABELS_FILE).display());
            println!("audio_dir: {}", out.join(AUDIO_DIR).display());
        }
        Command::PrepareData { images, labels, audio_dir, features, out, train_fraction, split_seed } => {
            let p = prepare_dataset(
                &images,
                &labels,
                audio_dir.as_deref(),
                features.as_deref(),
                &out,
                &MfccConfig::default(),
                train_fraction,
                split_seed,
                exec,
            )?;
            println!("train: {}", p.train.len());
            println!("validation: {}", p.validation.len());
            println!("out: {}", out.display());
        }
        Command::Train { method, eta, seed, config, replay, data, iterations, out } => {
            let mut cfg = match replay {
                Some(r) => ExperimentConfig::from_report(&RunReport::read(&r)?)?,
                None => load_config(config.as_deref())?,
            };
            if let Some(m) = method {
                cfg.train.method = Method::parse(&m).ok_or_else(|| Error::Config(format!("unknown method {m:?}")))?;
            }
            apply_overrides(&mut cfg, eta, seed, data, iterations);
            let report = run_experiment(&cfg, &out, exec)?;
            summary(&report, &out);
        }
        Command::Eval { checkpoint, data, pattern, stochastic, out } => {
            let pattern = Pattern::parse(&pattern).ok_or_else(|| Error::Config(format!("unknown pattern {pattern:?}")))?;
            let mode = stochastic.map_or(EvalMode::Deterministic, EvalMode::Stochastic);
            let metrics = evaluate_run(&checkpoint, data.as_deref(), pattern, mode, exec)?;
            let text: String = metrics.entries().into_iter().map(|(n, v)| format!("metrics.{}.{n}: {v:?}\n", pattern.name())).collect();
            print!("{text}");
            if let Some(o) = out {
                std::fs::write(o, text)?;
            }
        }
        Command::Ablate { variant, eta, seed, config, data, iterations, out } => {
            let variant = Variant::parse(&variant)?;
            let mut cfg = load_config(config.as_deref())?;
            apply_overrides(&mut cfg, eta, seed, data, iterations);
            let report = run_ablation(&cfg, variant, &out, exec)?;
            summary(&report, &out);
        }
        Command::Report { runs, out } => {
            let reports = runs
                .iter()
                .map(|d| RunReport::read(&if d.is_dir() { d.join(REPORT_FILE) } else { d.clone() }))
                .collect::<Result<Vec<_>, _>>()?;
            let table = aggregate_reports(&reports)?;
            std::fs::write(&out, &table)?;
            print!("{table}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {detail}", e.code());
            ExitCode::from(if matches!(e, Error::UnknownVariant(_)) { 2 } else { 1 })
        }
    }
}
