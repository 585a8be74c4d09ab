//! Forward pass with a replayable tape of every intermediate activation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::FeatureMatrix;
use crate::error::{Error, Result};
use crate::net::{matvec_acc, sigmoid, Direction, Embedding, NetParams};

/// Forward execution mode.
///
/// Train mode applies inverted dropout with masks drawn deterministically
/// from `dropout_seed`; eval mode is deterministic with no scaling needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

/// Per-direction activations of one BiLSTM layer, indexed by absolute frame.
#[derive(Debug, Clone)]
pub(crate) struct DirTape {
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl DirTape {
    fn with_capacity(frames: usize, h: usize) -> DirTape {
        DirTape {
            gate_i: vec![0.0; frames * h],
            gate_f: vec![0.0; frames * h],
            gate_g: vec![0.0; frames * h],
            gate_o: vec![0.0; frames * h],
            cell: vec![0.0; frames * h],
            tanh_cell: vec![0.0; frames * h],
            hidden: vec![0.0; frames * h],
        }
    }

    pub(crate) fn hidden_at(&self, t: usize, h: usize) -> &[f64] {
        &self.hidden[t * h..(t + 1) * h]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerTape {
    /// The input actually fed to this layer (post-dropout), `frames x in_dims`.
    pub input: Vec<f64>,
    pub in_dims: usize,
    pub fwd: DirTape,
    pub bwd: DirTape,
    /// Inverted-dropout scale per element of this layer's output, present
    /// only between stacked layers in train mode.
    pub output_mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct FcTape {
    /// Input vector of this fully connected layer.
    pub input: Vec<f64>,
    /// Pre-activation output.
    pub pre: Vec<f64>,
    /// Dropout scale applied after the ReLU (absent on the last layer).
    pub mask: Option<Vec<f64>>,
}

/// Everything [`backward`](crate::net::backward) needs to reproduce the
/// forward pass exactly, including dropout masks.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub(crate) fingerprint: u64,
    pub(crate) frames: usize,
    pub(crate) layers: Vec<LayerTape>,
    pub(crate) summary: Vec<f64>,
    pub(crate) fcs: Vec<FcTape>,
    pub(crate) embedding: Vec<f64>,
}

impl ForwardTape {
    /// The concatenated final-state summary fed to the FC stack.
    pub fn summary(&self) -> &[f64] {
        &self.summary
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }
}

fn draw_mask(rng: &mut ChaCha8Rng, len: usize, dropout_prob: f64) -> Vec<f64> {
    let keep_scale = 1.0 / (1.0 - dropout_prob);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < dropout_prob {
                0.0
            } else {
                keep_scale
            }
        })
        .collect()
}

/// Runs the network over one segment.
///
/// Each BiLSTM layer processes the frames once per direction; the layer
/// output at frame `t` concatenates both hidden states. The top layer's
/// final forward and final backward states summarize the sequence, and the
/// FC stack (ReLU and dropout between layers, nothing after the last) maps
/// the summary to the embedding.
pub fn forward(
    params: &NetParams,
    input: &FeatureMatrix,
    mode: Mode,
) -> Result<(Embedding, ForwardTape)> {
    let config = params.config();
    if input.dims() != config.input_dims {
        return Err(Error::DimensionMismatch {
            context: "net input",
            expected: config.input_dims,
            got: input.dims(),
        });
    }
    let frames = input.frames();
    let h = config.hidden_per_direction;
    let num_layers = config.num_bilstm_layers;

    let mut dropout_rng = match mode {
        Mode::Train { dropout_seed } if config.dropout_prob > 0.0 => {
            Some(ChaCha8Rng::seed_from_u64(dropout_seed))
        }
        _ => None,
    };

    let mut layers: Vec<LayerTape> = Vec::with_capacity(num_layers);
    let mut layer_input: Vec<f64> = input.values().to_vec();

    for l in 0..num_layers {
        let in_dims = config.layer_input_dims(l);
        let mut fwd = DirTape::with_capacity(frames, h);
        let mut bwd = DirTape::with_capacity(frames, h);

        for dir in Direction::BOTH {
            let w_in = params.bilstm_block(l, dir, 0);
            let w_rec = params.bilstm_block(l, dir, 1);
            let bias = params.bilstm_block(l, dir, 2);
            let tape = match dir {
                Direction::Forward => &mut fwd,
                Direction::Backward => &mut bwd,
            };

            let mut h_prev = vec![0.0; h];
            let mut c_prev = vec![0.0; h];
            let mut pre = vec![0.0; 4 * h];
            let order: Box<dyn Iterator<Item = usize>> = match dir {
                Direction::Forward => Box::new(0..frames),
                Direction::Backward => Box::new((0..frames).rev()),
            };
            for t in order {
                let x = &layer_input[t * in_dims..(t + 1) * in_dims];
                pre.copy_from_slice(&bias.data);
                matvec_acc(&w_in.data, 4 * h, in_dims, x, &mut pre);
                matvec_acc(&w_rec.data, 4 * h, h, &h_prev, &mut pre);

                let base = t * h;
                for k in 0..h {
                    let gi = sigmoid(pre[k]);
                    let gf = sigmoid(pre[h + k]);
                    let gg = pre[2 * h + k].tanh();
                    let go = sigmoid(pre[3 * h + k]);
                    let c = gf * c_prev[k] + gi * gg;
                    let tc = c.tanh();
                    tape.gate_i[base + k] = gi;
                    tape.gate_f[base + k] = gf;
                    tape.gate_g[base + k] = gg;
                    tape.gate_o[base + k] = go;
                    tape.cell[base + k] = c;
                    tape.tanh_cell[base + k] = tc;
                    tape.hidden[base + k] = go * tc;
                }
                h_prev.copy_from_slice(&tape.hidden[base..base + h]);
                c_prev.copy_from_slice(&tape.cell[base..base + h]);
            }
        }

        // concatenated bidirectional output feeds the next layer
        let mut output = vec![0.0; frames * 2 * h];
        for t in 0..frames {
            output[t * 2 * h..t * 2 * h + h].copy_from_slice(fwd.hidden_at(t, h));
            output[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(bwd.hidden_at(t, h));
        }
        let output_mask = if l + 1 < num_layers {
            dropout_rng.as_mut().map(|rng| {
                let mask = draw_mask(rng, output.len(), config.dropout_prob);
                for (v, m) in output.iter_mut().zip(&mask) {
                    *v *= m;
                }
                mask
            })
        } else {
            None
        };

        layers.push(LayerTape {
            input: std::mem::replace(&mut layer_input, output),
            in_dims,
            fwd,
            bwd,
            output_mask,
        });
    }

    let top = &layers[num_layers - 1];
    let mut summary = Vec::with_capacity(2 * h);
    summary.extend_from_slice(top.fwd.hidden_at(frames - 1, h));
    summary.extend_from_slice(top.bwd.hidden_at(0, h));

    let mut fcs: Vec<FcTape> = Vec::with_capacity(config.fc_dims.len());
    let mut z = summary.clone();
    for (i, &out_dims) in config.fc_dims.iter().enumerate() {
        let weight = params.fc_block(i, 0);
        let bias = params.fc_block(i, 1);
        let mut pre = bias.data.clone();
        matvec_acc(&weight.data, out_dims, z.len(), &z, &mut pre);

        let last = i + 1 == config.fc_dims.len();
        if last {
            fcs.push(FcTape {
                input: std::mem::replace(&mut z, pre.clone()),
                pre,
                mask: None,
            });
        } else {
            let mut activated: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
            let mask = dropout_rng.as_mut().map(|rng| {
                let mask = draw_mask(rng, activated.len(), config.dropout_prob);
                for (v, m) in activated.iter_mut().zip(&mask) {
                    *v *= m;
                }
                mask
            });
            fcs.push(FcTape {
                input: std::mem::replace(&mut z, activated),
                pre,
                mask,
            });
        }
    }

    let embedding = z;
    let tape = ForwardTape {
        fingerprint: params.fingerprint(),
        frames,
        layers,
        summary,
        fcs,
        embedding: embedding.clone(),
    };
    Ok((Embedding(embedding), tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;

    fn toy_input(frames: usize, dims: usize, scale: f64) -> FeatureMatrix {
        let values: Vec<f64> = (0..frames * dims)
            .map(|i| ((i as f64) * 0.7).sin() * scale)
            .collect();
        FeatureMatrix::new(frames, dims, values).unwrap()
    }

    #[test]
    fn zero_parameters_give_a_zero_embedding() {
        let config = NetConfig {
            input_dims: 5,
            hidden_per_direction: 4,
            num_bilstm_layers: 2,
            fc_dims: vec![8, 4],
            dropout_prob: 0.0,
        };
        let params = NetParams::zeros(&config).unwrap();
        let input = toy_input(6, 5, 1.0);
        let (embedding, _) = forward(&params, &input, Mode::Eval).unwrap();
        assert!(embedding.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let config = NetConfig::toy(7);
        let params = NetParams::init(&config, 3).unwrap();
        let input = toy_input(10, 7, 0.5);
        let (a, _) = forward(&params, &input, Mode::Eval).unwrap();
        let (b, _) = forward(&params, &input, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_mode_is_deterministic_given_the_dropout_seed() {
        let config = NetConfig::toy(7);
        let params = NetParams::init(&config, 3).unwrap();
        let input = toy_input(10, 7, 0.5);
        let mode = Mode::Train { dropout_seed: 11 };
        let (a, _) = forward(&params, &input, mode).unwrap();
        let (b, _) = forward(&params, &input, mode).unwrap();
        assert_eq!(a, b);
        let (c, _) = forward(&params, &input, Mode::Train { dropout_seed: 12 }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let config = NetConfig::toy(7);
        let params = NetParams::init(&config, 3).unwrap();
        let input = toy_input(4, 6, 0.5);
        assert!(forward(&params, &input, Mode::Eval).is_err());
    }

    /// A one-layer net with tied direction weights: reversing the input
    /// frames swaps the forward/backward halves of the summary.
    #[test]
    fn frame_reversal_swaps_summary_halves_under_tied_directions() {
        let config = NetConfig {
            input_dims: 5,
            hidden_per_direction: 4,
            num_bilstm_layers: 1,
            fc_dims: vec![6],
            dropout_prob: 0.0,
        };
        let mut params = NetParams::init(&config, 21).unwrap();
        // tie: copy forward-direction weights onto the backward direction
        for kind in 0..3 {
            let fwd = params
                .bilstm_block(0, Direction::Forward, kind)
                .data
                .clone();
            let idx = NetParams::bilstm_block_index(0, Direction::Backward, kind);
            params.blocks_mut()[idx].data = fwd;
        }

        let input = toy_input(9, 5, 0.8);
        let reversed_rows: Vec<Vec<f64>> =
            (0..input.frames()).rev().map(|t| input.row(t).to_vec()).collect();
        let reversed = FeatureMatrix::from_rows(&reversed_rows).unwrap();

        let (_, tape_a) = forward(&params, &input, Mode::Eval).unwrap();
        let (_, tape_b) = forward(&params, &reversed, Mode::Eval).unwrap();

        let h = config.hidden_per_direction;
        let (a_fwd, a_bwd) = tape_a.summary().split_at(h);
        let (b_fwd, b_bwd) = tape_b.summary().split_at(h);
        for k in 0..h {
            assert!((a_fwd[k] - b_bwd[k]).abs() < 1e-12);
            assert!((a_bwd[k] - b_fwd[k]).abs() < 1e-12);
        }

        // an FC head whose weight repeats the same block on both halves is
        // itself swap-invariant, so the embeddings agree too
        let fc_idx = NetParams::fc_block_index(&config, 0, 0);
        let (rows, cols) = {
            let w = &params.blocks()[fc_idx];
            (w.rows, w.cols)
        };
        let mut tied = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..h {
                let v = params.blocks()[fc_idx].data[r * cols + c];
                tied[r * cols + c] = v;
                tied[r * cols + h + c] = v;
            }
        }
        params.blocks_mut()[fc_idx].data = tied;
        let (emb_a, _) = forward(&params, &input, Mode::Eval).unwrap();
        let (emb_b, _) = forward(&params, &reversed, Mode::Eval).unwrap();
        for (x, y) in emb_a.values().iter().zip(emb_b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
