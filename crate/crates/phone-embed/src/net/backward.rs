//! Exact analytic backward pass over a recorded forward tape.

use crate::error::{Error, Result};
use crate::net::forward::{DirTape, ForwardTape};
use crate::net::{matvec_transpose_acc, outer_acc, Direction, NetParams, ParamGrads};

/// Gradient of `output_gradient . embedding` with respect to every
/// parameter, replaying the tape's activations and dropout masks.
///
/// The tape must come from [`forward`](crate::net::forward) on these exact
/// parameters.
pub fn backward(
    params: &NetParams,
    tape: &ForwardTape,
    output_gradient: &[f64],
) -> Result<ParamGrads> {
    if tape.fingerprint != params.fingerprint() {
        return Err(Error::TapeMismatch(
            "parameter fingerprint differs from the tape's".to_string(),
        ));
    }
    let config = params.config();
    if output_gradient.len() != config.embedding_dims() {
        return Err(Error::DimensionMismatch {
            context: "output gradient",
            expected: config.embedding_dims(),
            got: output_gradient.len(),
        });
    }

    let h = config.hidden_per_direction;
    let num_layers = config.num_bilstm_layers;
    let frames = tape.frames;
    let mut grads = params.zero_grads();

    // fully connected stack, last layer first
    let num_fc = config.fc_dims.len();
    let mut d_pre: Vec<f64> = output_gradient.to_vec();
    let mut d_summary: Vec<f64> = Vec::new();
    for i in (0..num_fc).rev() {
        let fc = &tape.fcs[i];
        let weight = params.fc_block(i, 0);
        let w_idx = NetParams::fc_block_index(config, i, 0);
        let b_idx = NetParams::fc_block_index(config, i, 1);
        outer_acc(&d_pre, &fc.input, &mut grads[w_idx].data);
        for (g, d) in grads[b_idx].data.iter_mut().zip(&d_pre) {
            *g += d;
        }
        let mut d_input = vec![0.0; weight.cols];
        matvec_transpose_acc(&weight.data, weight.rows, weight.cols, &d_pre, &mut d_input);
        if i == 0 {
            d_summary = d_input;
        } else {
            // through the previous layer's dropout and ReLU
            let prev = &tape.fcs[i - 1];
            if let Some(mask) = &prev.mask {
                for (d, m) in d_input.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            for (d, &a) in d_input.iter_mut().zip(&prev.pre) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
            d_pre = d_input;
        }
    }

    // gradient flowing into each layer's bidirectional output
    let mut d_out = vec![0.0; frames * 2 * h];
    d_out[(frames - 1) * 2 * h..(frames - 1) * 2 * h + h].copy_from_slice(&d_summary[..h]);
    for k in 0..h {
        d_out[h + k] += d_summary[h + k];
    }

    for l in (0..num_layers).rev() {
        let layer = &tape.layers[l];
        let in_dims = layer.in_dims;
        let mut d_input = vec![0.0; frames * in_dims];

        for dir in Direction::BOTH {
            let dir_tape: &DirTape = match dir {
                Direction::Forward => &layer.fwd,
                Direction::Backward => &layer.bwd,
            };
            let w_in = params.bilstm_block(l, dir, 0);
            let w_rec = params.bilstm_block(l, dir, 1);
            let w_in_idx = NetParams::bilstm_block_index(l, dir, 0);
            let w_rec_idx = NetParams::bilstm_block_index(l, dir, 1);
            let bias_idx = NetParams::bilstm_block_index(l, dir, 2);
            let half = dir.index() * h;

            let mut dh_carry = vec![0.0; h];
            let mut dc_carry = vec![0.0; h];
            let mut d_gates = vec![0.0; 4 * h];
            let zeros = vec![0.0; h];

            // reverse of the direction's processing order
            let order: Box<dyn Iterator<Item = usize>> = match dir {
                Direction::Forward => Box::new((0..frames).rev()),
                Direction::Backward => Box::new(0..frames),
            };
            for t in order {
                let base = t * h;
                // previous step in processing order
                let (h_prev, c_prev): (&[f64], &[f64]) = match dir {
                    Direction::Forward if t > 0 => (
                        dir_tape.hidden_at(t - 1, h),
                        &dir_tape.cell[(t - 1) * h..t * h],
                    ),
                    Direction::Backward if t + 1 < frames => (
                        dir_tape.hidden_at(t + 1, h),
                        &dir_tape.cell[(t + 1) * h..(t + 2) * h],
                    ),
                    _ => (&zeros, &zeros),
                };

                for k in 0..h {
                    let gi = dir_tape.gate_i[base + k];
                    let gf = dir_tape.gate_f[base + k];
                    let gg = dir_tape.gate_g[base + k];
                    let go = dir_tape.gate_o[base + k];
                    let tc = dir_tape.tanh_cell[base + k];

                    let dh = d_out[t * 2 * h + half + k] + dh_carry[k];
                    let dc = dh * go * (1.0 - tc * tc) + dc_carry[k];

                    d_gates[k] = dc * gg * gi * (1.0 - gi);
                    d_gates[h + k] = dc * c_prev[k] * gf * (1.0 - gf);
                    d_gates[2 * h + k] = dc * gi * (1.0 - gg * gg);
                    d_gates[3 * h + k] = dh * tc * go * (1.0 - go);

                    dc_carry[k] = dc * gf;
                }

                let x = &layer.input[t * in_dims..(t + 1) * in_dims];
                outer_acc(&d_gates, x, &mut grads[w_in_idx].data);
                outer_acc(&d_gates, h_prev, &mut grads[w_rec_idx].data);
                for (g, d) in grads[bias_idx].data.iter_mut().zip(&d_gates) {
                    *g += d;
                }

                dh_carry.fill(0.0);
                matvec_transpose_acc(&w_rec.data, 4 * h, h, &d_gates, &mut dh_carry);
                matvec_transpose_acc(
                    &w_in.data,
                    4 * h,
                    in_dims,
                    &d_gates,
                    &mut d_input[t * in_dims..(t + 1) * in_dims],
                );
            }
        }

        if l > 0 {
            // what this layer saw was the lower layer's output after dropout
            if let Some(mask) = &tape.layers[l - 1].output_mask {
                for (d, m) in d_input.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            d_out = d_input;
        }
    }

    Ok(grads)
}

/// Elementwise sum of two gradient sets with identical layouts.
pub fn add_grads(acc: &mut ParamGrads, other: &ParamGrads) {
    debug_assert_eq!(acc.len(), other.len());
    for (a, b) in acc.iter_mut().zip(other) {
        debug_assert_eq!(a.data.len(), b.data.len());
        for (x, y) in a.data.iter_mut().zip(&b.data) {
            *x += y;
        }
    }
}

/// Scales every gradient element.
pub fn scale_grads(grads: &mut ParamGrads, factor: f64) {
    for block in grads.iter_mut() {
        for v in &mut block.data {
            *v *= factor;
        }
    }
}
