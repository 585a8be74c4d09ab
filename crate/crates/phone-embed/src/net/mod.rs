//! The embedding network: stacked bidirectional LSTM layers, a fully
//! connected head, exact analytic backpropagation through time, and a
//! finite-difference gradient checker.
//!
//! A segment's variable direction context is summarized by concatenating the
//! final forward and final backward hidden states of the top BiLSTM layer;
//! the fully connected stack (ReLU between layers, none after the last) maps
//! that summary to the embedding. All math is f64.

mod backward;
mod forward;
mod gradcheck;

pub use backward::{add_grads, backward, scale_grads};
pub use forward::{forward, ForwardTape, Mode};
pub use gradcheck::{grad_check, BlockCheck, GradCheckReport, LossCheck, LossKind, GRAD_CHECK_STEP};

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

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

/// Architecture of one embedding model.
///
/// Defaults are the desk-scale toy sizes; the reference setup uses
/// `hidden_per_direction: 512`, `fc_dims: [512, 256]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dims: usize,
    #[serde(default = "default_hidden")]
    pub hidden_per_direction: usize,
    #[serde(default = "default_layers")]
    pub num_bilstm_layers: usize,
    #[serde(default = "default_fc_dims")]
    pub fc_dims: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout_prob: f64,
}

impl NetConfig {
    /// Toy configuration with the given input width.
    pub fn toy(input_dims: usize) -> NetConfig {
        NetConfig {
            input_dims,
            hidden_per_direction: default_hidden(),
            num_bilstm_layers: default_layers(),
            fc_dims: default_fc_dims(),
            dropout_prob: default_dropout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dims == 0 || self.hidden_per_direction == 0 || self.num_bilstm_layers == 0 {
            return Err(Error::invalid("net dimensions must be at least 1"));
        }
        if self.fc_dims.is_empty() {
            return Err(Error::invalid("at least one fully connected layer required"));
        }
        if self.fc_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("fully connected dims must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::invalid("dropout_prob must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn embedding_dims(&self) -> usize {
        *self.fc_dims.last().expect("fc_dims is non-empty")
    }

    /// Input width of BiLSTM layer `l`: features for layer 0, the
    /// concatenated bidirectional output above that.
    pub fn layer_input_dims(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dims
        } else {
            2 * self.hidden_per_direction
        }
    }

    /// Input width of fully connected layer `i`.
    pub fn fc_input_dims(&self, i: usize) -> usize {
        if i == 0 {
            2 * self.hidden_per_direction
        } else {
            self.fc_dims[i - 1]
        }
    }
}

/// One named parameter tensor (biases are `rows x 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Tensor {
        Tensor {
            name: name.into(),
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Gate rows inside a `4h x in` input/recurrent weight matrix, in order:
/// input, forget, cell candidate, output.
pub(crate) const GATES: usize = 4;
pub(crate) const GATE_FORGET: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub(crate) const BOTH: [Direction; 2] = [Direction::Forward, Direction::Backward];

    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }
}

/// All parameters of one embedding model, as a flat list of named tensors in
/// a fixed declaration order (the checkpoint and optimizer-state order).
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    blocks: Vec<Tensor>,
}

/// Gradients with the same block layout as the parameters they refer to.
pub type ParamGrads = Vec<Tensor>;

impl NetParams {
    /// Zero-valued parameters with the layout implied by `config`.
    pub fn zeros(config: &NetConfig) -> Result<NetParams> {
        config.validate()?;
        let h = config.hidden_per_direction;
        let mut blocks = Vec::new();
        for l in 0..config.num_bilstm_layers {
            let in_dims = config.layer_input_dims(l);
            for dir in Direction::BOTH {
                let tag = dir.tag();
                blocks.push(Tensor::zeros(
                    format!("bilstm{l}.{tag}.w_in"),
                    GATES * h,
                    in_dims,
                ));
                blocks.push(Tensor::zeros(format!("bilstm{l}.{tag}.w_rec"), GATES * h, h));
                blocks.push(Tensor::zeros(format!("bilstm{l}.{tag}.bias"), GATES * h, 1));
            }
        }
        for (i, &out_dims) in config.fc_dims.iter().enumerate() {
            let in_dims = config.fc_input_dims(i);
            blocks.push(Tensor::zeros(format!("fc{i}.weight"), out_dims, in_dims));
            blocks.push(Tensor::zeros(format!("fc{i}.bias"), out_dims, 1));
        }
        Ok(NetParams {
            config: config.clone(),
            blocks,
        })
    }

    /// Seeded initialization: weights uniform in `(-1/sqrt(fan_in),
    /// +1/sqrt(fan_in))`, biases zero except the forget-gate slice at 1.
    pub fn init(config: &NetConfig, seed: u64) -> Result<NetParams> {
        let mut params = NetParams::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden_per_direction;
        for block in &mut params.blocks {
            if block.cols > 1 {
                let bound = 1.0 / (block.cols as f64).sqrt();
                for v in &mut block.data {
                    *v = rng.random_range(-bound..bound);
                }
            } else if block.name.ends_with(".bias") && block.name.starts_with("bilstm") {
                let start = GATE_FORGET * h;
                for v in &mut block.data[start..start + h] {
                    *v = 1.0;
                }
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[Tensor] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Tensor] {
        &mut self.blocks
    }

    /// Matching all-zero gradient layout.
    pub fn zero_grads(&self) -> ParamGrads {
        self.blocks
            .iter()
            .map(|b| Tensor::zeros(b.name.clone(), b.rows, b.cols))
            .collect()
    }

    pub(crate) fn bilstm_block(&self, layer: usize, dir: Direction, kind: usize) -> &Tensor {
        &self.blocks[(layer * 2 + dir.index()) * 3 + kind]
    }

    pub(crate) fn fc_block(&self, fc: usize, kind: usize) -> &Tensor {
        &self.blocks[self.config.num_bilstm_layers * 6 + fc * 2 + kind]
    }

    pub(crate) fn bilstm_block_index(layer: usize, dir: Direction, kind: usize) -> usize {
        (layer * 2 + dir.index()) * 3 + kind
    }

    pub(crate) fn fc_block_index(config: &NetConfig, fc: usize, kind: usize) -> usize {
        config.num_bilstm_layers * 6 + fc * 2 + kind
    }

    /// FNV-1a over every parameter bit; used to pair tapes with parameters.
    pub(crate) fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= u64::from(b);
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for block in &self.blocks {
            for v in &block.data {
                mix(&v.to_bits().to_le_bytes());
            }
        }
        hash
    }

    /// Serializes to the checkpoint format: magic, version, length-prefixed
    /// config JSON, then every tensor as `[rows, cols]` + f64 LE data.
    pub fn to_bytes(&self) -> Vec<u8> {
        let config_json = serde_json::to_string(&self.config).expect("config serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(io::MODEL_MAGIC);
        io::push_u32(&mut buf, io::FORMAT_VERSION);
        io::push_u32(&mut buf, config_json.len() as u32);
        buf.extend_from_slice(config_json.as_bytes());
        for block in &self.blocks {
            io::push_u32(&mut buf, 2);
            io::push_u32(&mut buf, block.rows as u32);
            io::push_u32(&mut buf, block.cols as u32);
            for v in &block.data {
                io::push_f64(&mut buf, *v);
            }
        }
        buf
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<NetParams> {
        let mut r = io::Reader::new(path, bytes);
        r.expect_magic(io::MODEL_MAGIC)?;
        r.expect_version()?;
        let json_len = r.read_u32()? as usize;
        let config: NetConfig = serde_json::from_slice(r.take(json_len)?)
            .map_err(|e| Error::invalid(format!("{}: bad checkpoint config: {e}", path.display())))?;
        let mut params = NetParams::zeros(&config)?;
        for block in &mut params.blocks {
            let ndims = r.read_u32()?;
            if ndims != 2 {
                return Err(Error::invalid(format!(
                    "{}: tensor `{}` has {ndims} dims, expected 2",
                    path.display(),
                    block.name
                )));
            }
            let rows = r.read_u32()? as usize;
            let cols = r.read_u32()? as usize;
            if rows != block.rows || cols != block.cols {
                return Err(Error::DimensionMismatch {
                    context: "checkpoint tensor shape",
                    expected: block.rows * block.cols,
                    got: rows * cols,
                });
            }
            block.data = r.read_f64s(rows * cols)?;
            for (i, v) in block.data.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("checkpoint tensor `{}`", block.name),
                        row: i / cols,
                        col: i % cols,
                    });
                }
            }
        }
        r.finish()?;
        Ok(params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<NetParams> {
        NetParams::from_bytes(path, &io::read_file(path)?)
    }
}

/// A fixed-dimensional embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Embeds every prepared segment in eval mode, in parallel, keyed by id.
pub fn embed_batch(
    params: &NetParams,
    prepared: &std::collections::BTreeMap<String, crate::corpus::FeatureMatrix>,
) -> Result<std::collections::BTreeMap<String, Embedding>> {
    let entries: Vec<(&String, &crate::corpus::FeatureMatrix)> = prepared.iter().collect();
    let embedded: Vec<Result<(String, Embedding)>> =
        crate::exec::map_ordered(&entries, |(id, matrix)| {
            let (embedding, _) = forward(params, matrix, Mode::Eval)?;
            Ok(((*id).clone(), embedding))
        });
    embedded.into_iter().collect()
}

/// Cosine distance `1 - <a, b> / (|a| |b|)`, in `[0, 2]`.
///
/// Zero-norm inputs are an error rather than a silent convention.
pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine distance",
            expected: a.len(),
            got: b.len(),
        });
    }
    let norm_a = a.norm();
    let norm_b = b.norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::ZeroNormEmbedding);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(1.0 - dot / (norm_a * norm_b))
}

// small dense kernels shared by forward and backward

/// out += W x, W row-major `rows x cols`.
pub(crate) fn matvec_acc(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
}

/// out += W^T dy.
pub(crate) fn matvec_transpose_acc(
    w: &[f64],
    rows: usize,
    cols: usize,
    dy: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(dy.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let g = dy[r];
        for c in 0..cols {
            out[c] += row[c] * g;
        }
    }
}

/// W_grad += dy x^T.
pub(crate) fn outer_acc(dy: &[f64], x: &[f64], w_grad: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w_grad.len(), dy.len() * cols);
    for (r, &g) in dy.iter().enumerate() {
        let row = &mut w_grad[r * cols..(r + 1) * cols];
        for c in 0..cols {
            row[c] += g * x[c];
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
