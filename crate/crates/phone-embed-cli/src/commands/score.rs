//! `score gop | embed | ap | eval`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};

use phone_embed::corpus::{
    AttributeInventory, SegmentSet, Split, View, ViewPipeline,
};
use phone_embed::eval::{
    average_precision, build_templates, compute_metrics, discrimination_pairs, pr_curve,
    read_outcomes_csv, templates_to_references, verification_pr_curve, verify_segment,
    write_outcomes_csv, Strategy, VerificationOutcome, VerificationReport,
};
use phone_embed::exec;
use phone_embed::gop::{gop_score, gop_verify, read_lattice, PhoneSpan, DEFAULT_GOP_THRESHOLD};
use phone_embed::net::{embed_batch, forward, Embedding, Mode, NetParams};

use crate::commands::fail;
use crate::commands::train::existing;
use crate::run_manifest::RunManifest;

#[derive(Args)]
pub struct ScoreArgs {
    #[command(subcommand)]
    command: ScoreCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Centroid,
    Crossview,
}

#[derive(Subcommand)]
enum ScoreCommand {
    /// GOP scores and decisions per segment from posterior lattices.
    Gop {
        #[arg(long)]
        corpus: PathBuf,
        /// Directory of `<segment-id>.phnf` lattices with sidecar state maps.
        #[arg(long)]
        lattices: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long, default_value_t = DEFAULT_GOP_THRESHOLD)]
        threshold: f64,
        /// Output CSV of per-segment results.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embedding-distance verification against canonical references.
    Embed {
        #[arg(long)]
        corpus: PathBuf,
        /// Acoustic model checkpoint (network f).
        #[arg(long)]
        model: PathBuf,
        /// Multi-source model checkpoint (network g), for --strategy crossview.
        #[arg(long)]
        model_g: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "centroid")]
        strategy: StrategyArg,
        #[arg(long, default_value_t = phone_embed::eval::DEFAULT_VERIFY_THRESHOLD)]
        threshold: f64,
        /// Split to verify.
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Split that provides the template embeddings (centroid strategy).
        #[arg(long, value_enum, default_value = "train")]
        template_split: SplitArg,
        #[arg(long, default_value_t = 58)]
        pad_frames: usize,
        /// PCA dims for the bottleneck view, when the model was trained with them.
        #[arg(long)]
        pca_dims: Option<usize>,
        /// Output directory for outcomes.csv and metrics.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Same/different phone discrimination AP on one split.
    Ap {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "dev")]
        split: SplitArg,
        #[arg(long, default_value_t = 10_000)]
        max_pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 58)]
        pad_frames: usize,
        /// Optional PR-curve CSV (threshold, precision, recall).
        #[arg(long)]
        pr_csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Metrics report (and optional PR curve) from an outcomes CSV.
    Eval {
        /// Outcomes CSV produced by `score embed`.
        #[arg(long)]
        outcomes: PathBuf,
        /// Metrics report JSON to write.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        /// Optional verification PR-curve CSV.
        #[arg(long)]
        pr_csv: Option<PathBuf>,
    },
}

pub fn run(args: ScoreArgs) -> Result<ExitCode> {
    match args.command {
        ScoreCommand::Gop {
            corpus,
            lattices,
            split,
            threshold,
            out,
        } => gop(&corpus, &lattices, split.into(), threshold, &out),
        ScoreCommand::Embed {
            corpus,
            model,
            model_g,
            strategy,
            threshold,
            split,
            template_split,
            pad_frames,
            pca_dims,
            out_dir,
            workers,
        } => exec::run_with_workers(workers, || {
            embed(
                &corpus,
                &model,
                model_g.as_deref(),
                strategy,
                threshold,
                split.into(),
                template_split.into(),
                pad_frames,
                pca_dims,
                &out_dir,
            )
        }),
        ScoreCommand::Ap {
            corpus,
            model,
            split,
            max_pairs,
            seed,
            pad_frames,
            pr_csv,
            workers,
        } => exec::run_with_workers(workers, || {
            ap(
                &corpus,
                &model,
                split.into(),
                max_pairs,
                seed,
                pad_frames,
                pr_csv.as_deref(),
            )
        }),
        ScoreCommand::Eval {
            outcomes,
            report,
            threshold,
            pr_csv,
        } => eval(&outcomes, &report, threshold, pr_csv.as_deref()),
    }
}

fn gop(
    corpus: &Path,
    lattices: &Path,
    split: Split,
    threshold: f64,
    out: &Path,
) -> Result<ExitCode> {
    if threshold < 0.0 {
        bail!("threshold must be >= 0");
    }
    existing(lattices, "lattice directory")?;
    let set = SegmentSet::load_dir(corpus)?;
    let mut rows = String::from("segment,canonical,log_posterior,gop,best_competitor,decision\n");
    let mut scored = 0usize;
    for segment in set.split(split) {
        let lattice_path = lattices.join(format!("{}.phnf", segment.id));
        if !lattice_path.exists() {
            return fail(format!("missing lattice for `{}`: {}", segment.id, lattice_path.display()));
        }
        let lattice = read_lattice(&lattice_path)?;
        let pool = lattice.phone_pool();
        let span = PhoneSpan::new(segment.canonical.clone(), 0, lattice.frames());
        let result = gop_score(&lattice, &segment.canonical, &span, &pool)?;
        let decision = gop_verify(&result, threshold);
        rows.push_str(&format!(
            "{},{},{},{},{},{}\n",
            segment.id,
            result.phone,
            result.log_posterior,
            result.gop,
            result.best_competitor,
            match decision {
                phone_embed::gop::Decision::Accept => "accept",
                phone_embed::gop::Decision::Reject => "reject",
            }
        ));
        scored += 1;
    }
    if scored == 0 {
        return fail(format!("no segments in split {split}"));
    }
    phone_embed::atomic_write(out, rows.as_bytes())?;
    println!("scored {scored} segments at GOP threshold {threshold}; wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn embed(
    corpus: &Path,
    model: &Path,
    model_g: Option<&Path>,
    strategy: StrategyArg,
    threshold: f64,
    split: Split,
    template_split: Split,
    pad_frames: usize,
    pca_dims: Option<usize>,
    out_dir: &Path,
) -> Result<ExitCode> {
    existing(model, "model checkpoint")?;
    let set = SegmentSet::load_dir(corpus)?;
    let params = NetParams::load(model)?;
    let pipeline = ViewPipeline::fit(&set, View::Acoustic, pad_frames, pca_dims)?;
    if pipeline.output_dims() != params.config().input_dims {
        bail!(
            "model expects {}-dim inputs but the acoustic pipeline produces {}",
            params.config().input_dims,
            pipeline.output_dims()
        );
    }

    let references: BTreeMap<String, Embedding> = match strategy {
        StrategyArg::Centroid => {
            let prepared = pipeline.prepare(&set, &[template_split])?;
            let embedded = embed_batch(&params, &prepared)?;
            let mut by_phone: BTreeMap<String, Vec<Embedding>> = BTreeMap::new();
            for segment in set.split(template_split) {
                if !segment.is_correct() {
                    continue;
                }
                by_phone
                    .entry(segment.spoken.clone())
                    .or_default()
                    .push(embedded[&segment.id].clone());
            }
            templates_to_references(&build_templates(&by_phone)?)
        }
        StrategyArg::Crossview => {
            let g_path = match model_g {
                Some(path) => path,
                None => bail!("--strategy crossview needs --model-g"),
            };
            existing(g_path, "multi-source model checkpoint")?;
            let g_params = NetParams::load(g_path)?;
            let inventory_path = corpus.join("attributes.json");
            let inventory = if inventory_path.exists() {
                AttributeInventory::from_file(&inventory_path)?
            } else {
                AttributeInventory::default_mandarin()
            };
            if g_params.config().input_dims != phone_embed::corpus::NUM_ATTRIBUTES {
                bail!(
                    "crossview references need an attribute-view model g \
                     ({}–dim input), got {}",
                    phone_embed::corpus::NUM_ATTRIBUTES,
                    g_params.config().input_dims
                );
            }
            let mut references = BTreeMap::new();
            let mut canonicals: Vec<&str> =
                set.split(split).map(|s| s.canonical.as_str()).collect();
            canonicals.sort_unstable();
            canonicals.dedup();
            for phone in canonicals {
                let pattern = inventory.encode_pattern(phone)?.to_matrix();
                let (embedding, _) = forward(&g_params, &pattern, Mode::Eval)?;
                references.insert(phone.to_string(), embedding);
            }
            references
        }
    };

    let prepared = pipeline.prepare(&set, &[split])?;
    let embedded = embed_batch(&params, &prepared)?;
    let outcomes: Vec<VerificationOutcome> = set
        .split(split)
        .map(|segment| verify_segment(segment, &embedded[&segment.id], &references, threshold))
        .collect::<phone_embed::Result<_>>()?;
    if outcomes.is_empty() {
        return fail(format!("no segments in split {split}"));
    }

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    write_outcomes_csv(&out_dir.join("outcomes.csv"), &outcomes)?;
    let metrics = compute_metrics(&outcomes)?;
    let report = VerificationReport::new(
        &metrics,
        threshold,
        match strategy {
            StrategyArg::Centroid => Strategy::Centroid,
            StrategyArg::Crossview => Strategy::CrossView,
        },
        Some(phone_embed::sha256_file(model)?),
    );
    phone_embed::atomic_write(&out_dir.join("metrics.json"), report.to_json().as_bytes())?;
    RunManifest::new(
        None,
        Some(phone_embed::digest_dir(corpus)?),
        None,
        vec!["outcomes.csv".into(), "metrics.json".into()],
    )
    .write(out_dir)?;

    println!(
        "verified {} segments: DA {} FRR {} FAR {}",
        outcomes.len(),
        fmt_rate(metrics.da),
        fmt_rate(metrics.frr),
        fmt_rate(metrics.far)
    );
    Ok(ExitCode::SUCCESS)
}

fn fmt_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"))
}

fn ap(
    corpus: &Path,
    model: &Path,
    split: Split,
    max_pairs: usize,
    seed: u64,
    pad_frames: usize,
    pr_csv: Option<&Path>,
) -> Result<ExitCode> {
    existing(model, "model checkpoint")?;
    let set = SegmentSet::load_dir(corpus)?;
    let params = NetParams::load(model)?;
    let pipeline = ViewPipeline::fit(&set, View::Acoustic, pad_frames, None)?;
    let prepared = pipeline.prepare(&set, &[split])?;
    let embedded = embed_batch(&params, &prepared)?;
    let pairs = discrimination_pairs(&set, split, &embedded, max_pairs, seed)?;
    let ap = average_precision(&pairs)?;
    if let Some(path) = pr_csv {
        write_pr_csv(path, &pr_curve(&pairs)?)?;
    }
    println!("{ap}");
    Ok(ExitCode::SUCCESS)
}

fn eval(
    outcomes_path: &Path,
    report_path: &Path,
    threshold: Option<f64>,
    pr_csv: Option<&Path>,
) -> Result<ExitCode> {
    existing(outcomes_path, "outcomes CSV")?;
    let outcomes = read_outcomes_csv(outcomes_path)?;
    if outcomes.is_empty() {
        return fail("outcomes CSV is empty");
    }
    let metrics = compute_metrics(&outcomes)?;
    let report = VerificationReport::new(
        &metrics,
        threshold.unwrap_or(phone_embed::eval::DEFAULT_VERIFY_THRESHOLD),
        Strategy::Centroid,
        None,
    );
    phone_embed::atomic_write(report_path, report.to_json().as_bytes())?;
    if let Some(path) = pr_csv {
        write_pr_csv(path, &verification_pr_curve(&outcomes)?)?;
    }
    println!(
        "DA {} FRR {} FAR {} over {} outcomes",
        fmt_rate(metrics.da),
        fmt_rate(metrics.frr),
        fmt_rate(metrics.far),
        outcomes.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn write_pr_csv(path: &Path, points: &[phone_embed::eval::PrPoint]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "threshold,precision,recall")?;
    for p in points {
        writeln!(buf, "{},{},{}", p.threshold, p.precision, p.recall)?;
    }
    phone_embed::atomic_write(path, &buf)?;
    Ok(())
}
