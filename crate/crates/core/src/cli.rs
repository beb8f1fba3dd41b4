//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 data or config error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiments::{Lab, Report, StudyConfig};
use crate::inference::{
    ensemble_logit_sum, ensemble_stacking, ensemble_vote, fit_stacking, predict_dataset, top1_accuracy,
    EnsembleMember, EnsembleMethod, EnsembleSpec, StackingConfig, TTAConfig,
};
use crate::io::logits::{load_labels, load_logits, parse_predictions, save_logits, save_predictions};
use crate::io::{generate, read_text, write_file, write_dataset_dir, Checkpoint, DataDir, SyntheticDatasetSpec};
use crate::training::{distill, train, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "foodlab", about = "Desk-scale fine-grained recognition lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic train/val/test splits into a directory.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file overriding the default dataset spec.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train a model; the per-epoch history goes to stdout as TSV.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a student against a teacher checkpoint.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        kd_weight: Option<f64>,
        #[arg(long)]
        ce_weight: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Write the logit matrix of one split.
    Predict {
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        tta: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine logit files into an `image_id,label` predictions file.
    Ensemble {
        #[arg(long, default_value = "logit_sum")]
        method: String,
        /// Comma-separated member weights, one per logit file.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Validation logit files for stacking, in member order.
        #[arg(long, value_delimiter = ',')]
        val_logits: Option<Vec<PathBuf>>,
        /// Validation labels for stacking (CSV or dataset file).
        #[arg(long)]
        val_labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(required = true)]
        logits: Vec<PathBuf>,
    },
    /// Print top-1 accuracy of a predictions file against labels.
    Eval { predictions: PathBuf, labels: PathBuf },
    /// Run the comparison studies and print the result tables.
    Report {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        config: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Preset name (`config-a`, `config-b`) or a JSON config file.
    #[arg(long, default_value = "config-b")]
    config: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the history TSV here.
    #[arg(long)]
    history: Option<PathBuf>,
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn load_config(spec: &str) -> Result<ExperimentConfig> {
    match ExperimentConfig::preset(spec) {
        Some(c) => Ok(c),
        None => ExperimentConfig::from_json(&read_text(Path::new(spec))?),
    }
}

fn resolve(run: &RunArgs) -> Result<(ExperimentConfig, DataDir)> {
    let mut cfg = load_config(&run.config)?;
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    if let Some(e) = run.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let data = DataDir::open(&run.data)?;
    if data.manifest.classes != cfg.classes {
        return Err(Error::ClassCountMismatch { expected: cfg.classes, found: data.manifest.classes });
    }
    Ok((cfg, data))
}

fn write_history(run: &RunArgs, tsv: &str, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &run.history {
        write_file(p, tsv)?;
    }
    out.write_all(tsv.as_bytes())?;
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenData { out: dir, seed, spec } => {
            let mut s = match spec {
                Some(p) => serde_json::from_str(&read_text(&p)?)?,
                None => SyntheticDatasetSpec::default(),
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let generated = generate(&s)?;
            write_dataset_dir(&s, &generated, &dir)?;
            writeln!(out, "wrote {} train, {} val, {} test images to {}", generated.train.len(), generated.val.len(), generated.test.len(), dir.display())?;
        }
        Command::Train { run } => {
            let (cfg, data) = resolve(&run)?;
            let (ckpt, history) = train(&cfg, &data.load_split("train")?, &data.load_split("val")?)?;
            ckpt.save(&run.out)?;
            write_history(&run, &history.to_tsv(), out)?;
        }
        Command::Distill { teacher, temperature, kd_weight, ce_weight, run } => {
            let (cfg, data) = resolve(&run)?;
            let teacher = Checkpoint::load(&teacher)?;
            let mut kd = cfg.kd;
            if let Some(t) = temperature {
                kd.temperature = t;
            }
            if let Some(w) = kd_weight {
                kd.kd_weight = w;
            }
            if let Some(w) = ce_weight {
                kd.ce_weight = w;
            }
            let (ckpt, history) = distill(&teacher, &cfg, &kd, &data.load_split("train")?, &data.load_split("val")?)?;
            ckpt.save(&run.out)?;
            write_history(&run, &history.to_tsv(), out)?;
        }
        Command::Predict { checkpoint, data, split, tta, out: path } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let ds = DataDir::open(&data)?.load_split(&split)?;
            let cfg = TTAConfig::for_config(&ckpt.config);
            if tta && cfg.undersized_for(&ckpt) {
                writeln!(err, "warning: test size {} is below the training size {}", cfg.test_size, ckpt.input_geometry().1)?;
            }
            let mut m = predict_dataset(&ckpt, &ds, tta.then_some(&cfg))?;
            m.model_tag = tag_of(&path);
            save_logits(&m, &path)?;
        }
        Command::Ensemble { method, weights, val_logits, val_labels, out: path, logits } => {
            let method: EnsembleMethod = method.parse()?;
            let matrices = logits.iter().map(|p| load_logits(p)).collect::<Result<Vec<_>>>()?;
            let weights = weights.unwrap_or_else(|| vec![1.0; matrices.len()]);
            if weights.len() != matrices.len() {
                return Err(Error::LengthMismatch { left: weights.len(), right: matrices.len() });
            }
            let spec = EnsembleSpec::new(
                matrices.into_iter().zip(weights).map(|(matrix, weight)| EnsembleMember { matrix, weight }).collect(),
            )?;
            let preds = match method {
                EnsembleMethod::LogitSum => ensemble_logit_sum(&spec)?,
                EnsembleMethod::Vote => ensemble_vote(&spec)?,
                EnsembleMethod::Stacking => {
                    let (Some(vl), Some(labels)) = (val_logits, val_labels) else {
                        return Err(Error::ConfigInvalid("stacking needs --val-logits and --val-labels".into()));
                    };
                    let val = vl.iter().map(|p| load_logits(p)).collect::<Result<Vec<_>>>()?;
                    let (ids, labels) = load_labels(&labels)?;
                    if ids != val[0].image_ids() {
                        return Err(Error::MemberMismatch("validation labels and logits cover different ids".into()));
                    }
                    let meta = fit_stacking(&val, &labels, &StackingConfig::default())?;
                    ensemble_stacking(&meta, &spec)?
                }
            };
            save_predictions(spec.members[0].matrix.image_ids(), &preds, &path)?;
        }
        Command::Eval { predictions, labels } => {
            let (pid, pred) = parse_predictions(&read_text(&predictions)?, &predictions)?;
            let (lid, truth) = load_labels(&labels)?;
            let acc = eval(&pid, &pred, &lid, &truth)?;
            writeln!(out, "{acc:.4}")?;
        }
        Command::Report { seeds, epochs, config, out: path } => {
            let mut base = match config {
                Some(c) => load_config(&c)?,
                None => ExperimentConfig::config_b(),
            };
            if let Some(e) = epochs {
                base.epochs = e;
            }
            let cfg = StudyConfig { base, seeds: (0..seeds).collect(), ..StudyConfig::default() };
            let mut lab = Lab::new(cfg)?;
            let text = Report::run(&mut lab)?.render();
            if let Some(p) = path {
                write_file(&p, &text)?;
            }
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn tag_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Accuracy over the labelled ids; every labelled id needs a prediction.
fn eval(pred_ids: &[u64], preds: &[usize], label_ids: &[u64], labels: &[usize]) -> Result<f64> {
    let by_id: std::collections::HashMap<u64, usize> = pred_ids.iter().copied().zip(preds.iter().copied()).collect();
    let matched = label_ids
        .iter()
        .map(|id| by_id.get(id).copied().ok_or_else(|| Error::MemberMismatch(format!("no prediction for image {id}"))))
        .collect::<Result<Vec<_>>>()?;
    top1_accuracy(&matched, labels)
}
