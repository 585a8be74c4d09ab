//! `corpus synth | validate | stats`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};

use phone_embed::corpus::{
    read_feature_matrix, synth_corpus, SegmentSet, Split, SynthConfig, View,
};

use crate::commands::fail;
use crate::run_manifest::RunManifest;

#[derive(Args)]
pub struct CorpusArgs {
    #[command(subcommand)]
    command: CorpusCommand,
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Generate a deterministic synthetic multi-view corpus.
    Synth {
        /// Synthesis config (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output corpus directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check manifest and feature-file integrity.
    Validate {
        /// Corpus directory containing manifest.jsonl.
        dir: PathBuf,
    },
    /// Print label histograms and frame statistics.
    Stats {
        dir: PathBuf,
    },
}

pub fn run(args: CorpusArgs) -> Result<ExitCode> {
    match args.command {
        CorpusCommand::Synth { config, seed, out } => synth(&config, seed, &out),
        CorpusCommand::Validate { dir } => validate(&dir),
        CorpusCommand::Stats { dir } => stats(&dir),
    }
}

fn synth(config_path: &PathBuf, seed: u64, out: &PathBuf) -> Result<ExitCode> {
    let config_bytes = std::fs::read(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let config: SynthConfig = serde_json::from_slice(&config_bytes)
        .with_context(|| format!("parsing {}", config_path.display()))?;
    let set = synth_corpus(&config, seed, out)?;
    println!(
        "wrote {} segments ({} train / {} dev / {} test) to {}",
        set.len(),
        set.split(Split::Train).count(),
        set.split(Split::Dev).count(),
        set.split(Split::Test).count(),
        out.display()
    );
    RunManifest::new(
        Some(phone_embed::sha256_hex(&config_bytes)),
        Some(phone_embed::digest_dir(out)?),
        Some(seed),
        vec!["manifest.jsonl".into(), "feats".into(), "attributes.json".into()],
    )
    .write(out)?;
    Ok(ExitCode::SUCCESS)
}

fn validate(dir: &PathBuf) -> Result<ExitCode> {
    let set = match SegmentSet::load_dir(dir) {
        Ok(set) => set,
        Err(e) => return fail(e),
    };
    let mut dims_per_view: BTreeMap<View, usize> = BTreeMap::new();
    for segment in set.segments() {
        for view in View::ALL {
            if !segment.has_view(view) {
                continue;
            }
            let path = set.view_path(segment, view)?;
            let matrix = match read_feature_matrix(&path) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("invalid feature file {}: {e}", path.display());
                    return Ok(ExitCode::from(1));
                }
            };
            match dims_per_view.get(&view) {
                Some(&dims) if dims != matrix.dims() => {
                    eprintln!(
                        "inconsistent dims for {view} view at {}: {} vs {dims}",
                        path.display(),
                        matrix.dims()
                    );
                    return Ok(ExitCode::from(1));
                }
                None => {
                    dims_per_view.insert(view, matrix.dims());
                }
                _ => {}
            }
        }
    }
    println!("ok: {} segments, views {:?}", set.len(), dims_per_view);
    Ok(ExitCode::SUCCESS)
}

fn stats(dir: &PathBuf) -> Result<ExitCode> {
    let set = match SegmentSet::load_dir(dir) {
        Ok(set) => set,
        Err(e) => return fail(e),
    };
    for split in [Split::Train, Split::Dev, Split::Test] {
        let mut histogram: BTreeMap<&str, usize> = BTreeMap::new();
        let mut mispronounced = 0usize;
        for segment in set.split(split) {
            *histogram.entry(segment.spoken.as_str()).or_default() += 1;
            if !segment.is_correct() {
                mispronounced += 1;
            }
        }
        println!(
            "{split}: {} segments, {} mispronounced",
            set.split(split).count(),
            mispronounced
        );
        for (label, count) in &histogram {
            println!("  {label}: {count}");
        }
    }
    for view in View::ALL {
        let mut frames: Vec<usize> = Vec::new();
        let mut dims = None;
        for segment in set.segments() {
            if !segment.has_view(view) {
                continue;
            }
            let matrix = set.load_view(segment, view)?;
            frames.push(matrix.frames());
            dims = Some(matrix.dims());
        }
        if let Some(dims) = dims {
            frames.sort_unstable();
            println!(
                "{view}: dims {dims}, frames min {} / median {} / max {}",
                frames[0],
                frames[frames.len() / 2],
                frames[frames.len() - 1]
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
