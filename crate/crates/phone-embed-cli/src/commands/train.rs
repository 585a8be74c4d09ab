//! `train`: single-view and multi-view runs from a JSON config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use phone_embed::corpus::{SegmentSet, Split, View, ViewPipeline};
use phone_embed::exec;
use phone_embed::net::NetConfig;
use phone_embed::train::{
    train_multi_view, train_single_view, Objective, TrainSchedule,
};

use crate::run_manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Single,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Bottleneck,
    Attribute,
}

impl From<ViewArg> for View {
    fn from(v: ViewArg) -> View {
        match v {
            ViewArg::Bottleneck => View::Bottleneck,
            ViewArg::Attribute => View::Attribute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Obj0,
    Obj1,
    Both,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Objective {
        match o {
            ObjectiveArg::Obj0 => Objective::Obj0,
            ObjectiveArg::Obj1 => Objective::Obj1,
            ObjectiveArg::Both => Objective::Both,
        }
    }
}

/// Architecture spec as written in config files; `input_dims` may be
/// omitted and inferred from the corpus.
#[derive(Debug, Clone, Deserialize)]
struct NetSpec {
    #[serde(default)]
    input_dims: Option<usize>,
    #[serde(default = "default_hidden")]
    hidden_per_direction: usize,
    #[serde(default = "default_layers")]
    num_bilstm_layers: usize,
    #[serde(default = "default_fc_dims")]
    fc_dims: Vec<usize>,
    #[serde(default = "default_dropout")]
    dropout_prob: f64,
}

fn default_hidden() -> usize {
    16
}

fn default_layers() -> usize {
    2
}

fn default_fc_dims() -> Vec<usize> {
    vec![32, 16]
}

fn default_dropout() -> f64 {
    0.4
}

impl NetSpec {
    fn resolve(&self, inferred_input_dims: usize) -> NetConfig {
        NetConfig {
            input_dims: self.input_dims.unwrap_or(inferred_input_dims),
            hidden_per_direction: self.hidden_per_direction,
            num_bilstm_layers: self.num_bilstm_layers,
            fc_dims: self.fc_dims.clone(),
            dropout_prob: self.dropout_prob,
        }
    }
}

/// The training run config file: architecture, schedule, mode, view,
/// objective. Flags override mode, view, objective, and seed.
#[derive(Debug, Deserialize)]
struct TrainRunConfig {
    net: NetSpec,
    schedule: TrainSchedule,
    #[serde(default)]
    mode: Option<TrainMode>,
    #[serde(default)]
    view: Option<View>,
    #[serde(default)]
    objective: Option<Objective>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Corpus directory containing manifest.jsonl.
    #[arg(long)]
    corpus: PathBuf,
    /// Training run config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for checkpoints, history, and the run manifest.
    #[arg(long)]
    out: PathBuf,
    /// single: Siamese triplet training; multi: cross-view training.
    #[arg(long, value_enum)]
    mode: Option<TrainMode>,
    /// Multi-source view for multi-view training.
    #[arg(long, value_enum)]
    view: Option<ViewArg>,
    /// Cross-view objective for multi-view training.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Overrides the schedule's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch parallelism (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

pub fn run(args: TrainArgs) -> Result<ExitCode> {
    let config_bytes = std::fs::read(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut config: TrainRunConfig = serde_json::from_slice(&config_bytes)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        config.schedule.seed = seed;
    }
    let mode = match args.mode.or(config.mode) {
        Some(mode) => mode,
        None => bail!("no training mode: pass --mode or set \"mode\" in the config"),
    };

    let set = SegmentSet::load_dir(&args.corpus)?;
    let corpus_digest = phone_embed::digest_dir(&args.corpus)?;
    let acoustic = ViewPipeline::fit(&set, View::Acoustic, config.schedule.pad_frames, None)?;
    let net = config.net.resolve(acoustic.output_dims());
    let seed = config.schedule.seed;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let outputs = match mode {
        TrainMode::Single => {
            let (params, history) = exec::run_with_workers(args.workers, || {
                train_single_view(&set, &net, &config.schedule)
            })?;
            params.save(&args.out.join("model.phnm"))?;
            phone_embed::atomic_write(
                &args.out.join("history.csv"),
                history.to_csv().as_bytes(),
            )?;
            report_history(&history, Split::Dev);
            vec!["model.phnm".to_string(), "history.csv".to_string()]
        }
        TrainMode::Multi => {
            let view: View = match args.view.map(View::from).or(config.view) {
                Some(view) => view,
                None => bail!("multi-view training needs --view or \"view\" in the config"),
            };
            let objective = match args.objective.map(Objective::from).or(config.objective) {
                Some(o) => o,
                None => bail!("multi-view training needs --objective or \"objective\" in the config"),
            };
            let (model, history) = exec::run_with_workers(args.workers, || {
                train_multi_view(&set, view, objective, &net, &config.schedule)
            })?;
            model.f.save(&args.out.join("model_f.phnm"))?;
            model.g.save(&args.out.join("model_g.phnm"))?;
            phone_embed::atomic_write(
                &args.out.join("history.csv"),
                history.to_csv().as_bytes(),
            )?;
            report_history(&history, Split::Dev);
            vec![
                "model_f.phnm".to_string(),
                "model_g.phnm".to_string(),
                "history.csv".to_string(),
            ]
        }
    };

    RunManifest::new(
        Some(phone_embed::sha256_hex(&config_bytes)),
        Some(corpus_digest),
        Some(seed),
        outputs,
    )
    .write(&args.out)?;
    println!("training complete; outputs in {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn report_history(history: &phone_embed::train::TrainHistory, split: Split) {
    if let (Some(epoch), Some(ap)) = (history.best_epoch, history.best_dev_ap) {
        println!("best {split} AP {ap:.4} at epoch {epoch}");
    } else {
        println!("no AP evaluations ran (max_epochs < ap_every); kept final parameters");
    }
}

/// Resolves a path argument that must exist.
pub fn existing(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}
