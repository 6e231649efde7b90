//! Experiment configuration files, run reports and the end-to-end run.

use crate::dataset::{load_prepared, mask_modality, split_dataset, synth_bimodal, MaskedDataset, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalMode, MetricSet, Pattern};
use crate::nn::{OmegaMean, RegOp, SmilNet};
use crate::par::Execution;
use crate::priors::{ModalityPriors, PriorMethod, PriorSpace};
use crate::train::{train, MetaMode, Method, Optimizer, TrainConfig, TrainOptions, Variant};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const DATA_DIR_ENV: &str = "SMIL_DATA_DIR";
pub const CHECKPOINT_FILE: &str = "checkpoint.smilw";
pub const PRIORS_FILE: &str = "priors.smilp";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// A directory written by `prepare_dataset`.
    Avmnist,
    Synthetic,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Avmnist => "avmnist",
            Task::Synthetic => "synthetic",
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub task: Task,
    /// Prepared avMNIST directory; falls back to `SMIL_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
    pub synth: SynthSpec,
    /// Train/validation split of synthetic data.
    pub train_fraction: f64,
    pub split_seed: u64,
    pub eval: EvalMode,
    pub eval_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            task: Task::Avmnist,
            data_dir: None,
            synth: SynthSpec::new(2000, 10, 32, 32, 1.0, false, 0),
            train_fraction: 0.7,
            split_seed: 0,
            eval: EvalMode::Deterministic,
            eval_seed: 0,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

impl ExperimentConfig {
    /// Every key with its current value, in file order. Floats use the
    /// shortest representation that parses back to the same bits.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let s = &self.synth;
        vec![
            ("task", self.task.name().into()),
            ("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("method", t.method.name().into()),
            ("variant", t.variant.name().into()),
            ("eta", format!("{:?}", t.eta)),
            ("seed", t.seed.to_string()),
            ("inner_lr", format!("{:?}", t.inner_lr)),
            ("outer_lr", format!("{:?}", t.outer_lr)),
            ("inner_steps", t.inner_steps.to_string()),
            ("iterations", t.iterations.to_string()),
            ("batch_m", t.batch_m.to_string()),
            ("batch_f", t.batch_f.to_string()),
            ("mc_samples", t.mc_samples.to_string()),
            ("kl_weight", format!("{:?}", t.kl_weight)),
            ("pos_weight", format!("{:?}", t.pos_weight)),
            ("num_priors", t.num_priors.to_string()),
            ("prior_method", t.prior_method.name().into()),
            ("prior_space", t.prior_space.name().into()),
            ("prior_refresh", t.prior_refresh.to_string()),
            ("reg_op", t.reg_op.name().into()),
            ("omega_mean", t.omega_mean.name().into()),
            ("reconstruction", t.reconstruction.to_string()),
            ("regularization", t.regularization.to_string()),
            ("optimizer", t.optimizer.name().into()),
            ("clip_norm", t.clip_norm.map(|c| format!("{c:?}")).unwrap_or_else(|| "none".into())),
            ("ae_iterations", t.ae_iterations.to_string()),
            ("ignore_mask", t.ignore_mask.to_string()),
            ("meta_mode", "first-order".into()),
            ("train_fraction", format!("{:?}", self.train_fraction)),
            ("split_seed", self.split_seed.to_string()),
            ("synth_samples", s.num_samples.to_string()),
            ("synth_classes", s.num_classes.to_string()),
            ("synth_dim1", s.dim1.to_string()),
            ("synth_dim2", s.dim2.to_string()),
            ("synth_latent", s.latent_dim.to_string()),
            ("synth_noise", format!("{:?}", s.noise_scale)),
            ("synth_multi_label", s.multi_label.to_string()),
            ("synth_density", format!("{:?}", s.label_density)),
            ("synth_seed", s.seed.to_string()),
            (
                "eval_samples",
                match self.eval {
                    EvalMode::Deterministic => "0".into(),
                    EvalMode::Stochastic(l) => l.to_string(),
                },
            ),
            ("eval_seed", self.eval_seed.to_string()),
        ]
    }

    /// Sets one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let s = &mut self.synth;
        match key {
            "task" => {
                self.task = match value {
                    "avmnist" => Task::Avmnist,
                    "synthetic" => Task::Synthetic,
                    _ => return Err(bad(key, value)),
                }
            }
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "method" => t.method = Method::parse(value).ok_or_else(|| bad(key, value))?,
            "variant" => t.variant = Variant::parse(value)?,
            "eta" => t.eta = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "inner_lr" => t.inner_lr = num(key, value)?,
            "outer_lr" => t.outer_lr = num(key, value)?,
            "inner_steps" => t.inner_steps = num(key, value)?,
            "iterations" => t.iterations = num(key, value)?,
            "batch_m" => t.batch_m = num(key, value)?,
            "batch_f" => t.batch_f = num(key, value)?,
            "mc_samples" => t.mc_samples = num(key, value)?,
            "kl_weight" => t.kl_weight = num(key, value)?,
            "pos_weight" => t.pos_weight = num(key, value)?,
            "num_priors" => t.num_priors = num(key, value)?,
            "prior_method" => t.prior_method = PriorMethod::parse(value).ok_or_else(|| bad(key, value))?,
            "prior_space" => t.prior_space = PriorSpace::parse(value).ok_or_else(|| bad(key, value))?,
            "prior_refresh" => t.prior_refresh = num(key, value)?,
            "reg_op" => t.reg_op = RegOp::parse(value).ok_or_else(|| bad(key, value))?,
            "omega_mean" => t.omega_mean = OmegaMean::parse(value).ok_or_else(|| bad(key, value))?,
            "reconstruction" => t.reconstruction = flag(key, value)?,
            "regularization" => t.regularization = flag(key, value)?,
            "optimizer" => {
                t.optimizer = match value {
                    "adam" => Optimizer::Adam,
                    "sgd" => Optimizer::Sgd,
                    _ => return Err(bad(key, value)),
                }
            }
            "clip_norm" => t.clip_norm = if value == "none" { None } else { Some(num(key, value)?) },
            "ae_iterations" => t.ae_iterations = num(key, value)?,
            "ignore_mask" => t.ignore_mask = flag(key, value)?,
            "meta_mode" => {
                t.meta_mode = match value {
                    "first-order" => MetaMode::FirstOrder,
                    _ => return Err(Error::Config(format!("meta_mode {value:?} is not supported"))),
                }
            }
            "train_fraction" => self.train_fraction = num(key, value)?,
            "split_seed" => self.split_seed = num(key, value)?,
            "synth_samples" => s.num_samples = num(key, value)?,
            "synth_classes" => s.num_classes = num(key, value)?,
            "synth_dim1" => s.dim1 = num(key, value)?,
            "synth_dim2" => s.dim2 = num(key, value)?,
            "synth_latent" => s.latent_dim = num(key, value)?,
            "synth_noise" => s.noise_scale = num(key, value)?,
            "synth_multi_label" => s.multi_label = flag(key, value)?,
            "synth_density" => s.label_density = num(key, value)?,
            "synth_seed" => s.seed = num(key, value)?,
            "eval_samples" => {
                self.eval = match num::<usize>(key, value)? {
                    0 => EvalMode::Deterministic,
                    l => EvalMode::Stochastic(l),
                }
            }
            "eval_seed" => self.eval_seed = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The configuration echoed in a report.
    pub fn from_report(report: &RunReport) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = false;
        for (k, v) in &report.entries {
            if let Some(key) = k.strip_prefix("config.") {
                cfg.set(key, v)?;
                seen = true;
            }
        }
        if !seen {
            return Err(Error::Config("report has no configuration echo".into()));
        }
        Ok(cfg)
    }

    fn resolved_data_dir(&self) -> Result<PathBuf> {
        self.data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| Error::Config(format!("no data_dir configured and {DATA_DIR_ENV} is unset")))
    }

    /// Train and validation splits, both unmasked.
    pub fn load_data(&self) -> Result<(MaskedDataset, MaskedDataset)> {
        match self.task {
            Task::Avmnist => {
                let p = load_prepared(&self.resolved_data_dir()?)?;
                Ok((p.train, p.validation))
            }
            Task::Synthetic => split_dataset(synth_bimodal(&self.synth)?, self.train_fraction, self.split_seed),
        }
    }

    /// The training split as the method sees it.
    pub fn training_view(&self, train: &MaskedDataset) -> Result<MaskedDataset> {
        if self.train.method == Method::Upper && self.train.ignore_mask {
            return Ok(train.clone());
        }
        mask_modality(train, self.train.eta, self.train.seed)
    }
}

/// `key: value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub entries: Vec<(String, String)>,
}

impl RunReport {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key).ok_or_else(|| Error::Config(format!("report lacks {key}")))?;
        num(key, v)
    }

    pub fn metric(&self, pattern: Pattern, name: &str) -> Result<f64> {
        self.get_f64(&format!("metrics.{}.{name}", pattern.name()))
    }

    /// Entries that a replay must reproduce exactly: metrics, drops and
    /// final losses.
    pub fn outcome(&self) -> Vec<(String, String)> {
        self.entries
            .iter()
            .filter(|(k, _)| k.starts_with("metrics.") || k.starts_with("drop.") || k.starts_with("final."))
            .cloned()
            .collect()
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Self::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(": ")
                .or_else(|| line.strip_suffix(':').map(|k| (k, "")))
                .ok_or_else(|| Error::Config(format!("report line {}: expected key: value", n + 1)))?;
            r.push(k.trim(), v);
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn push_metrics(report: &mut RunReport, pattern: Pattern, m: &MetricSet) {
    for (name, v) in m.entries() {
        report.push(format!("metrics.{}.{name}", pattern.name()), format!("{v:?}"));
    }
}

/// Trains, evaluates under both patterns and writes checkpoint, priors,
/// loss history and `report.txt` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<RunReport> {
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let (train_split, validation) = cfg.load_data()?;
    let data = cfg.training_view(&train_split)?;
    let opts = TrainOptions { csv: Some(out.join(HISTORY_FILE)), exec, trace: false };
    let outcome = train(&data, &cfg.train, &opts)?;
    outcome.net.save(&out.join(CHECKPOINT_FILE))?;
    if let Some(p) = &outcome.priors {
        p.write(&out.join(PRIORS_FILE))?;
    }
    let metrics: Vec<(Pattern, MetricSet)> = Pattern::ALL
        .into_iter()
        .map(|p| Ok((p, evaluate(&outcome.net, outcome.priors.as_ref(), &validation, p, cfg.eval, cfg.eval_seed, exec)?)))
        .collect::<Result<_>>()?;

    let mut r = RunReport::default();
    let t = &cfg.train;
    r.push("method", t.method.name());
    r.push("variant", t.variant.name());
    r.push("task", cfg.task.name());
    r.push("eta", format!("{:?}", t.eta));
    r.push("seed", t.seed);
    r.push("train_count", outcome.train_count);
    r.push("complete_count", outcome.complete_count);
    r.push("incomplete_count", outcome.train_count - outcome.complete_count);
    r.push("validation_count", validation.len());
    r.push("iterations", outcome.history.len());
    r.push("architecture", outcome.net.arch.describe());
    r.push("architecture_hash", format!("{:016x}", outcome.net.architecture_hash()));
    r.push("checkpoint.file", out.join(CHECKPOINT_FILE).display());
    r.push("history.file", out.join(HISTORY_FILE).display());
    match &outcome.priors {
        Some(p) => {
            r.push("priors.file", out.join(PRIORS_FILE).display());
            r.push("priors.k", p.k());
            r.push("priors.dim", p.dim());
            r.push("priors.space", p.space.name());
            r.push("priors.source_count", p.source_count);
        }
        None => r.push("priors.file", "none"),
    }
    if let Some(last) = outcome.history.last() {
        r.push("final.nll", format!("{:?}", last.nll));
        r.push("final.kl_omega", format!("{:?}", last.kl_omega));
        r.push("final.kl_r", format!("{:?}", last.kl_r));
        r.push("final.total", format!("{:?}", last.total));
    }
    if let Some(mse) = outcome.imputer_mse {
        r.push("final.imputer_mse", format!("{mse:?}"));
    }
    for (p, m) in &metrics {
        push_metrics(&mut r, *p, m);
    }
    let full = metrics[0].1.accuracy;
    let image_only = metrics[1].1.accuracy;
    r.push("drop.accuracy", format!("{:?}", full - image_only));
    r.push("wall_clock_seconds", format!("{:.3}", start.elapsed().as_secs_f64()));
    let echo_dir = match cfg.task {
        Task::Avmnist => Some(cfg.resolved_data_dir()?),
        Task::Synthetic => cfg.data_dir.clone(),
    };
    let echo = ExperimentConfig { data_dir: echo_dir, ..cfg.clone() };
    for (k, v) in echo.entries() {
        r.push(format!("config.{k}"), v);
    }
    r.write(&out.join(REPORT_FILE))?;
    Ok(r)
}

/// One ablation cell: the full method with `variant` applied.
pub fn run_ablation(base: &ExperimentConfig, variant: Variant, out: &Path, exec: Execution) -> Result<RunReport> {
    let mut cfg = base.clone();
    cfg.train.method = Method::Smil;
    cfg.train.variant = variant;
    run_experiment(&cfg, out, exec)
}

/// Loads the network and priors written by [`run_experiment`] into `dir`.
pub fn load_run(dir: &Path) -> Result<(ExperimentConfig, SmilNet, Option<ModalityPriors>)> {
    let report = RunReport::read(&dir.join(REPORT_FILE))?;
    let cfg = ExperimentConfig::from_report(&report)?;
    let net = SmilNet::load(cfg.train.architecture(schema_of(&cfg)), &dir.join(CHECKPOINT_FILE))?;
    let priors_path = dir.join(PRIORS_FILE);
    let priors = if priors_path.exists() { Some(ModalityPriors::read(&priors_path)?) } else { None };
    Ok((cfg, net, priors))
}

/// Metrics of a saved run on the validation split of `data` (a prepared
/// directory), or of the run's own data when `data` is `None`.
pub fn evaluate_run(checkpoint: &Path, data: Option<&Path>, pattern: Pattern, mode: EvalMode, exec: Execution) -> Result<MetricSet> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let (cfg, _, priors) = load_run(dir)?;
    let net = SmilNet::load(cfg.train.architecture(schema_of(&cfg)), checkpoint)?;
    let validation = match data {
        Some(d) => load_prepared(d)?.validation,
        None => cfg.load_data()?.1,
    };
    evaluate(&net, priors.as_ref(), &validation, pattern, mode, cfg.eval_seed, exec)
}

fn schema_of(cfg: &ExperimentConfig) -> crate::dataset::Schema {
    match cfg.task {
        Task::Avmnist => crate::dataset::Schema::avmnist(),
        Task::Synthetic => cfg.synth.schema(),
    }
}

/// One row per report, sorted by method, eta, seed and variant.
pub fn aggregate_reports(reports: &[RunReport]) -> Result<String> {
    struct Row {
        method: String,
        variant: String,
        eta: f64,
        seed: u64,
        cells: Vec<String>,
    }
    const METRICS: [&str; 7] = [
        "metrics.full.accuracy",
        "metrics.image-only.accuracy",
        "drop.accuracy",
        "metrics.full.f1_samples",
        "metrics.full.f1_micro",
        "metrics.image-only.f1_samples",
        "complete_count",
    ];
    let mut rows = Vec::with_capacity(reports.len());
    for r in reports {
        let field = |k: &str| r.get(k).map(str::to_string).ok_or_else(|| Error::Config(format!("report lacks {k}")));
        rows.push(Row {
            method: field("method")?,
            variant: field("variant")?,
            eta: r.get_f64("eta")?,
            seed: num("seed", &field("seed")?)?,
            cells: METRICS
                .iter()
                .map(|k| match r.get(k).map(|v| v.parse::<f64>()) {
                    Some(Ok(v)) if k.starts_with("metrics.") || k.starts_with("drop.") => format!("{v:.4}"),
                    Some(_) => r.get(k).unwrap_or("-").to_string(),
                    None => "-".into(),
                })
                .collect(),
        });
    }
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.eta.total_cmp(&b.eta)).then(a.seed.cmp(&b.seed)).then(a.variant.cmp(&b.variant)));
    let mut out = String::from("method\tvariant\teta\tseed");
    for m in METRICS {
        out.push('\t');
        out.push_str(m.trim_start_matches("metrics."));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}", row.method, row.variant, row.eta, row.seed));
        for c in row.cells {
            out.push('\t');
            out.push_str(&c);
        }
        out.push('\n');
    }
    Ok(out)
}
