//! Training loops for the single-view (triplet) and multi-view
//! (cross-view contrastive) embedding models.
//!
//! Whole-run determinism: every random draw derives from the schedule seed,
//! batch gradients reduce in item order, and parallelism never reorders a
//! floating-point sum, so checkpoints are byte-identical across runs and
//! worker counts.

mod adadelta;
mod sampling;

pub use adadelta::{AdadeltaConfig, AdadeltaState};
pub use sampling::{
    sample_crossview, sample_triplets, CrossViewItem, SamplingConfig, Triplet,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    FeatureMatrix, SegmentSet, Split, View, ViewPipeline, DEFAULT_TARGET_FRAMES,
};
use crate::error::{Error, Result};
use crate::eval::{average_precision, discrimination_pairs};
use crate::exec;
use crate::losses::{combined_loss, obj0_loss, obj1_loss, triplet_loss, Margin, Role};
use crate::net::{
    add_grads, backward, embed_batch, forward, Embedding, Mode, NetConfig, NetParams,
    ParamGrads, scale_grads,
};

/// Stable two-input seed mixer for per-epoch and per-item randomness.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    fn splitmix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^ (x >> 31)
    }
    splitmix(base ^ splitmix(salt))
}

fn default_max_epochs() -> usize {
    1000
}

fn default_ap_every() -> usize {
    20
}

fn default_batch_size() -> usize {
    32
}

fn default_margin() -> f64 {
    crate::losses::DEFAULT_MARGIN
}

fn default_ap_max_pairs() -> usize {
    10_000
}

fn default_pad_frames() -> usize {
    DEFAULT_TARGET_FRAMES
}

/// Everything about a training run except the architecture: epochs,
/// batching, seeding, margin, optimizer, sampling caps, preprocessing.
///
/// There is no early stopping; the best dev-AP checkpoint is retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Dev AP is computed every this many epochs.
    #[serde(default = "default_ap_every")]
    pub ap_every: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub adadelta: AdadeltaConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    /// Cap on dev pairs used for the periodic AP.
    #[serde(default = "default_ap_max_pairs")]
    pub ap_max_pairs: usize,
    /// Frames every acoustic/bottleneck input is padded or truncated to.
    #[serde(default = "default_pad_frames")]
    pub pad_frames: usize,
    /// PCA output dims for the bottleneck view (`null` keeps raw dims).
    #[serde(default)]
    pub pca_dims: Option<usize>,
}

impl TrainSchedule {
    pub fn with_seed(seed: u64) -> TrainSchedule {
        TrainSchedule {
            max_epochs: default_max_epochs(),
            ap_every: default_ap_every(),
            batch_size: default_batch_size(),
            seed,
            margin: default_margin(),
            adadelta: AdadeltaConfig::default(),
            sampling: SamplingConfig::default(),
            ap_max_pairs: default_ap_max_pairs(),
            pad_frames: default_pad_frames(),
            pca_dims: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.ap_every == 0 || self.batch_size == 0 {
            return Err(Error::invalid(
                "max_epochs, ap_every, and batch_size must be at least 1",
            ));
        }
        if self.pad_frames == 0 {
            return Err(Error::invalid("pad_frames must be at least 1"));
        }
        Margin::new(self.margin)?;
        self.adadelta.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_ap: Option<f64>,
}

impl TrainHistory {
    /// CSV with columns epoch, mean_loss, dev_ap (blank between
    /// evaluations).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss,dev_ap\n");
        for record in &self.epochs {
            let ap = record.dev_ap.map_or_else(String::new, |v| v.to_string());
            out.push_str(&format!("{},{},{ap}\n", record.epoch, record.mean_loss));
        }
        out
    }

    pub fn ap_entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.epochs
            .iter()
            .filter_map(|r| r.dev_ap.map(|ap| (r.epoch, ap)))
    }

    fn record_ap(&mut self, epoch: usize, ap: f64) -> bool {
        let improved = self.best_dev_ap.is_none_or(|best| ap > best);
        if improved {
            self.best_dev_ap = Some(ap);
            self.best_epoch = Some(epoch);
        }
        improved
    }
}

/// Which cross-view objective the multi-view trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Obj0,
    Obj1,
    Both,
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Objective::Obj0 => "obj0",
            Objective::Obj1 => "obj1",
            Objective::Both => "both",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obj0" => Ok(Objective::Obj0),
            "obj1" => Ok(Objective::Obj1),
            "both" => Ok(Objective::Both),
            other => Err(Error::invalid(format!(
                "unknown objective `{other}`, expected obj0|obj1|both"
            ))),
        }
    }
}

/// Mean triplet loss over constructed embeddings; the pure batch-loss
/// semantics of the single-view trainer, exposed so invariants can be
/// asserted without training a network.
pub fn mean_triplet_loss(
    embeddings: &BTreeMap<String, Embedding>,
    triplets: &[Triplet],
    margin: Margin,
) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::invalid("no triplets to average over"));
    }
    let mut total = 0.0;
    for t in triplets {
        let get = |id: &str| {
            embeddings
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no embedding for segment `{id}`")))
        };
        total += triplet_loss(get(&t.anchor)?, get(&t.positive)?, get(&t.negative)?, margin)?
            .value;
    }
    Ok(total / triplets.len() as f64)
}

fn prepared_matrix<'a>(
    prepared: &'a BTreeMap<String, FeatureMatrix>,
    id: &str,
) -> Result<&'a FeatureMatrix> {
    prepared
        .get(id)
        .ok_or_else(|| Error::invalid(format!("no prepared features for segment `{id}`")))
}

fn dev_ap(
    set: &SegmentSet,
    params: &NetParams,
    prepared: &BTreeMap<String, FeatureMatrix>,
    schedule: &TrainSchedule,
) -> Result<f64> {
    let dev: BTreeMap<String, FeatureMatrix> = set
        .split(Split::Dev)
        .map(|seg| prepared_matrix(prepared, &seg.id).map(|m| (seg.id.clone(), m.clone())))
        .collect::<Result<_>>()?;
    let embeddings = embed_batch(params, &dev)?;
    let pairs = discrimination_pairs(
        set,
        Split::Dev,
        &embeddings,
        schedule.ap_max_pairs,
        derive_seed(schedule.seed, 0xA9),
    )?;
    average_precision(&pairs)
}

/// Gradient of one triplet through a single tied-parameter network.
fn triplet_grads(
    params: &NetParams,
    prepared: &BTreeMap<String, FeatureMatrix>,
    triplet: &Triplet,
    margin: Margin,
    item_seed: u64,
) -> Result<(f64, ParamGrads)> {
    let run = |id: &str, role_index: u64| -> Result<_> {
        let input = prepared_matrix(prepared, id)?;
        let mode = Mode::Train {
            dropout_seed: derive_seed(item_seed, role_index),
        };
        forward(params, input, mode)
    };
    let (anchor, tape_a) = run(&triplet.anchor, 0)?;
    let (positive, tape_p) = run(&triplet.positive, 1)?;
    let (negative, tape_n) = run(&triplet.negative, 2)?;
    let loss = triplet_loss(&anchor, &positive, &negative, margin)?;
    let mut grads = params.zero_grads();
    for (role, tape) in [
        (Role::Anchor, &tape_a),
        (Role::Positive, &tape_p),
        (Role::Negative, &tape_n),
    ] {
        let grad = loss.gradient(role).expect("triplet roles present");
        add_grads(&mut grads, &backward(params, tape, grad)?);
    }
    Ok((loss.value, grads))
}

/// Trains the Siamese single-view model: one parameter set applied to all
/// three triplet inputs. Returns the best-dev-AP checkpoint and the
/// per-epoch history.
pub fn train_single_view(
    set: &SegmentSet,
    config: &NetConfig,
    schedule: &TrainSchedule,
) -> Result<(NetParams, TrainHistory)> {
    schedule.validate()?;
    config.validate()?;
    if set.split(Split::Dev).next().is_none() {
        return Err(Error::invalid("training requires a non-empty dev split"));
    }
    let pipeline = ViewPipeline::fit(set, View::Acoustic, schedule.pad_frames, None)?;
    if pipeline.output_dims() != config.input_dims {
        return Err(Error::DimensionMismatch {
            context: "acoustic input dims",
            expected: pipeline.output_dims(),
            got: config.input_dims,
        });
    }
    let prepared = pipeline.prepare(set, &[Split::Train, Split::Dev])?;
    let margin = Margin::new(schedule.margin)?;

    let mut params = NetParams::init(config, schedule.seed)?;
    let mut optimizer = AdadeltaState::new(&params, schedule.adadelta)?;
    let mut history = TrainHistory::default();
    let mut best: Option<NetParams> = None;

    for epoch in 0..schedule.max_epochs {
        let epoch_seed = derive_seed(schedule.seed, epoch as u64 + 1);
        let triplets = sample_triplets(set, Split::Train, &schedule.sampling, epoch_seed)?;

        let mut loss_total = 0.0;
        let mut item_base = 0u64;
        for batch in triplets.chunks(schedule.batch_size) {
            let jobs: Vec<(u64, &Triplet)> = batch
                .iter()
                .enumerate()
                .map(|(k, t)| (item_base + k as u64, t))
                .collect();
            let results = exec::map_ordered(&jobs, |&(idx, triplet)| {
                triplet_grads(
                    &params,
                    &prepared,
                    triplet,
                    margin,
                    derive_seed(epoch_seed, idx),
                )
            });
            let mut grads = params.zero_grads();
            for result in results {
                let (loss, item_grads) = result?;
                loss_total += loss;
                add_grads(&mut grads, &item_grads);
            }
            scale_grads(&mut grads, 1.0 / batch.len() as f64);
            optimizer.step(&mut params, &grads)?;
            item_base += batch.len() as u64;
        }

        let mean_loss = loss_total / triplets.len() as f64;
        let ap = if (epoch + 1) % schedule.ap_every == 0 {
            let ap = dev_ap(set, &params, &prepared, schedule)?;
            if history.record_ap(epoch + 1, ap) {
                best = Some(params.clone());
            }
            Some(ap)
        } else {
            None
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss,
            dev_ap: ap,
        });
    }

    Ok((best.unwrap_or(params), history))
}

/// The two parameter sets of a multi-view model: `f` embeds the acoustic
/// view, `g` the multi-source view.
#[derive(Debug, Clone)]
pub struct MultiViewModel {
    pub f: NetParams,
    pub g: NetParams,
}

struct CrossViewJob<'a> {
    item: &'a CrossViewItem,
    seed: u64,
}

fn crossview_grads(
    f_params: &NetParams,
    g_params: &NetParams,
    prepared_x: &BTreeMap<String, FeatureMatrix>,
    prepared_y: &BTreeMap<String, FeatureMatrix>,
    job: &CrossViewJob<'_>,
    objective: Objective,
    margin: Margin,
) -> Result<(f64, ParamGrads, ParamGrads)> {
    let run = |params: &NetParams,
               prepared: &BTreeMap<String, FeatureMatrix>,
               id: &str,
               role_index: u64| {
        let input = prepared_matrix(prepared, id)?;
        let mode = Mode::Train {
            dropout_seed: derive_seed(job.seed, role_index),
        };
        forward(params, input, mode)
    };
    let item = job.item;
    let (x_pos, tape_x_pos) = run(f_params, prepared_x, &item.positive, 0)?;
    let (y_pos, tape_y_pos) = run(g_params, prepared_y, &item.positive, 1)?;

    let mut f_grads = f_params.zero_grads();
    let mut g_grads = g_params.zero_grads();
    let loss = match objective {
        Objective::Obj0 => {
            let (y_neg, tape_y_neg) = run(g_params, prepared_y, &item.y_negative, 2)?;
            let loss = obj0_loss(&x_pos, &y_pos, &y_neg, margin)?;
            add_grads(
                &mut g_grads,
                &backward(g_params, &tape_y_neg, grad(&loss, Role::MultiSourceNeg))?,
            );
            loss
        }
        Objective::Obj1 => {
            let (x_neg, tape_x_neg) = run(f_params, prepared_x, &item.x_negative, 3)?;
            let loss = obj1_loss(&x_pos, &y_pos, &x_neg, margin)?;
            add_grads(
                &mut f_grads,
                &backward(f_params, &tape_x_neg, grad(&loss, Role::AcousticNeg))?,
            );
            loss
        }
        Objective::Both => {
            let (y_neg, tape_y_neg) = run(g_params, prepared_y, &item.y_negative, 2)?;
            let (x_neg, tape_x_neg) = run(f_params, prepared_x, &item.x_negative, 3)?;
            let loss = combined_loss(&x_pos, &y_pos, &y_neg, &x_neg, margin)?;
            add_grads(
                &mut g_grads,
                &backward(g_params, &tape_y_neg, grad(&loss, Role::MultiSourceNeg))?,
            );
            add_grads(
                &mut f_grads,
                &backward(f_params, &tape_x_neg, grad(&loss, Role::AcousticNeg))?,
            );
            loss
        }
    };
    add_grads(
        &mut f_grads,
        &backward(f_params, &tape_x_pos, grad(&loss, Role::AcousticPos))?,
    );
    add_grads(
        &mut g_grads,
        &backward(g_params, &tape_y_pos, grad(&loss, Role::MultiSourcePos))?,
    );
    Ok((loss.value, f_grads, g_grads))
}

fn grad<'a>(loss: &'a crate::losses::LossValue, role: Role) -> &'a [f64] {
    loss.gradient(role).expect("objective provides this role")
}

/// Trains the multi-view model: acoustic network `f` and multi-source
/// network `g` (same architecture family, view-specific input width),
/// jointly optimized by the selected objective. Dev AP is computed from
/// the acoustic embeddings `f(x)`; the best pair of checkpoints is
/// retained together.
pub fn train_multi_view(
    set: &SegmentSet,
    view: View,
    objective: Objective,
    config: &NetConfig,
    schedule: &TrainSchedule,
) -> Result<(MultiViewModel, TrainHistory)> {
    schedule.validate()?;
    config.validate()?;
    if view == View::Acoustic {
        return Err(Error::invalid(
            "the multi-source view must be bottleneck or attribute",
        ));
    }
    if set.split(Split::Dev).next().is_none() {
        return Err(Error::invalid("training requires a non-empty dev split"));
    }
    let pipeline_x = ViewPipeline::fit(set, View::Acoustic, schedule.pad_frames, None)?;
    if pipeline_x.output_dims() != config.input_dims {
        return Err(Error::DimensionMismatch {
            context: "acoustic input dims",
            expected: pipeline_x.output_dims(),
            got: config.input_dims,
        });
    }
    let pipeline_y = ViewPipeline::fit(set, view, schedule.pad_frames, schedule.pca_dims)?;
    let mut g_config = config.clone();
    g_config.input_dims = pipeline_y.output_dims();

    let prepared_x = pipeline_x.prepare(set, &[Split::Train, Split::Dev])?;
    let prepared_y = pipeline_y.prepare(set, &[Split::Train])?;
    let margin = Margin::new(schedule.margin)?;

    let mut f_params = NetParams::init(config, schedule.seed)?;
    let mut g_params = NetParams::init(&g_config, derive_seed(schedule.seed, 0x6))?;
    let mut f_opt = AdadeltaState::new(&f_params, schedule.adadelta)?;
    let mut g_opt = AdadeltaState::new(&g_params, schedule.adadelta)?;
    let mut history = TrainHistory::default();
    let mut best: Option<MultiViewModel> = None;

    for epoch in 0..schedule.max_epochs {
        let epoch_seed = derive_seed(schedule.seed, epoch as u64 + 1);
        let items = sample_crossview(set, Split::Train, view, epoch_seed)?;

        let mut loss_total = 0.0;
        let mut item_base = 0u64;
        for batch in items.chunks(schedule.batch_size) {
            let jobs: Vec<CrossViewJob<'_>> = batch
                .iter()
                .enumerate()
                .map(|(k, item)| CrossViewJob {
                    item,
                    seed: derive_seed(epoch_seed, item_base + k as u64),
                })
                .collect();
            let results = exec::map_ordered(&jobs, |job| {
                crossview_grads(
                    &f_params, &g_params, &prepared_x, &prepared_y, job, objective, margin,
                )
            });
            let mut f_grads = f_params.zero_grads();
            let mut g_grads = g_params.zero_grads();
            for result in results {
                let (loss, f_item, g_item) = result?;
                loss_total += loss;
                add_grads(&mut f_grads, &f_item);
                add_grads(&mut g_grads, &g_item);
            }
            scale_grads(&mut f_grads, 1.0 / batch.len() as f64);
            scale_grads(&mut g_grads, 1.0 / batch.len() as f64);
            f_opt.step(&mut f_params, &f_grads)?;
            g_opt.step(&mut g_params, &g_grads)?;
            item_base += batch.len() as u64;
        }

        let mean_loss = loss_total / items.len() as f64;
        let ap = if (epoch + 1) % schedule.ap_every == 0 {
            let ap = dev_ap(set, &f_params, &prepared_x, schedule)?;
            if history.record_ap(epoch + 1, ap) {
                best = Some(MultiViewModel {
                    f: f_params.clone(),
                    g: g_params.clone(),
                });
            }
            Some(ap)
        } else {
            None
        };
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            mean_loss,
            dev_ap: ap,
        });
    }

    let model = best.unwrap_or(MultiViewModel {
        f: f_params,
        g: g_params,
    });
    Ok((model, history))
}
