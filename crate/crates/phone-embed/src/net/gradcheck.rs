//! Finite-difference verification of the analytic gradients, end to end
//! through every objective.

use std::fmt;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::FeatureMatrix;
use crate::error::Result;
use crate::losses::{combined_loss, obj0_loss, obj1_loss, triplet_loss, LossValue, Margin, Role};
use crate::net::backward::{add_grads, backward};
use crate::net::forward::{forward, Mode};
use crate::net::{NetConfig, NetParams, ParamGrads};

/// The objectives the checker drives gradients through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Sum of the raw embedding components (checks the bare network).
    EmbeddingSum,
    Triplet,
    Obj0,
    Obj1,
    Combined,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::EmbeddingSum,
        LossKind::Triplet,
        LossKind::Obj0,
        LossKind::Obj1,
        LossKind::Combined,
    ];
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::EmbeddingSum => "embedding-sum",
            LossKind::Triplet => "triplet",
            LossKind::Obj0 => "obj0",
            LossKind::Obj1 => "obj1",
            LossKind::Combined => "combined",
        })
    }
}

/// Worst relative error observed in one parameter block.
#[derive(Debug, Clone)]
pub struct BlockCheck {
    pub block: String,
    pub worst_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct LossCheck {
    pub kind: LossKind,
    pub blocks: Vec<BlockCheck>,
    pub worst: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub checks: Vec<LossCheck>,
    pub worst: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.worst < self.tolerance
    }

    /// One line per objective plus the failing blocks, if any.
    pub fn render(&self) -> String {
        let mut out = format!(
            "gradient check: step {:.0e}, tolerance {:.0e}\n",
            self.step, self.tolerance
        );
        for check in &self.checks {
            let status = if check.worst < self.tolerance {
                "PASS"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "  {:<14} worst {:>10.3e}  {status}\n",
                check.kind.to_string(),
                check.worst
            ));
            if check.worst >= self.tolerance {
                for block in &check.blocks {
                    if block.worst_rel_err >= self.tolerance {
                        out.push_str(&format!(
                            "    {:<24} {:>10.3e}\n",
                            block.block, block.worst_rel_err
                        ));
                    }
                }
            }
        }
        out.push_str(&format!(
            "overall worst {:.3e}: {}\n",
            self.worst,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fixed width the multi-source net uses in the check: different from the
/// acoustic width so non-square shapes are exercised.
fn g_config(config: &NetConfig) -> NetConfig {
    let mut g = config.clone();
    g.input_dims = config.input_dims + 3;
    g
}

const FRAMES: usize = 3;

struct Scenario {
    f_params: NetParams,
    g_params: NetParams,
    /// anchor, positive, negative acoustic inputs
    f_inputs: [FeatureMatrix; 3],
    /// positive, negative multi-source inputs
    g_inputs: [FeatureMatrix; 2],
    /// dropout seed per forward slot (anchor, pos, neg, y_pos, y_neg)
    slot_seeds: [u64; 5],
    margin: Margin,
}

fn random_input(rng: &mut ChaCha8Rng, dims: usize) -> FeatureMatrix {
    let values: Vec<f64> = (0..FRAMES * dims)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    FeatureMatrix::new(FRAMES, dims, values).expect("random input is valid")
}

impl Scenario {
    fn build(config: &NetConfig, seed: u64) -> Result<Scenario> {
        let g_cfg = g_config(config);
        // Finite differences at step 1e-4 need a well-conditioned point:
        // every hinge strictly active and away from its kink, ReLU
        // pre-activations away from zero so no unit flips under the step,
        // and embedding norms of order 1 so the cosine's higher derivatives
        // stay tame (fresh zero-bias nets emit near-zero embeddings, where
        // 1/norm^3 curvature swamps the FD step). Bias blocks are therefore
        // randomized, and draws retried until all conditions hold.
        for attempt in 0..256u64 {
            let salt = splitmix(seed.wrapping_add(attempt.wrapping_mul(977)));
            let mut rng = ChaCha8Rng::seed_from_u64(salt);
            let mut f_params = NetParams::init(config, splitmix(salt ^ 0x0f))?;
            let mut g_params = NetParams::init(&g_cfg, splitmix(salt ^ 0x67f3))?;
            for params in [&mut f_params, &mut g_params] {
                for block in params.blocks_mut() {
                    if block.cols == 1 {
                        for v in &mut block.data {
                            *v = rng.random_range(-0.5..0.5);
                        }
                    }
                }
            }
            let scenario = Scenario {
                f_params,
                g_params,
                f_inputs: [
                    random_input(&mut rng, config.input_dims),
                    random_input(&mut rng, config.input_dims),
                    random_input(&mut rng, config.input_dims),
                ],
                g_inputs: [
                    random_input(&mut rng, g_cfg.input_dims),
                    random_input(&mut rng, g_cfg.input_dims),
                ],
                slot_seeds: std::array::from_fn(|i| splitmix(salt ^ (i as u64 + 1))),
                margin: Margin::default(),
            };
            match scenario.well_conditioned(1e-2) {
                Ok(true) => return Ok(scenario),
                Ok(false) | Err(crate::error::Error::ZeroNormEmbedding) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(crate::error::Error::invalid(
            "could not find a well-conditioned gradient-check scenario",
        ))
    }

    fn slot(&self, net: Net, slot: usize) -> (&NetParams, &FeatureMatrix) {
        match net {
            Net::F => (&self.f_params, &self.f_inputs[slot]),
            Net::G => (&self.g_params, &self.g_inputs[slot - 3]),
        }
    }

    fn well_conditioned(&self, min_gap: f64) -> Result<bool> {
        let d = |a: &crate::net::Embedding, b: &crate::net::Embedding| {
            crate::net::cosine_distance(a, b)
        };
        let slots = [
            (Net::F, 0),
            (Net::F, 1),
            (Net::F, 2),
            (Net::G, 3),
            (Net::G, 4),
        ];
        let mut embeddings = Vec::with_capacity(slots.len());
        for (net, slot) in slots {
            let (params, input) = self.slot(net, slot);
            let mode = Mode::Train {
                dropout_seed: self.slot_seeds[slot],
            };
            let (embedding, tape) = forward(params, input, mode)?;
            if embedding.norm() < 0.1 {
                return Ok(false);
            }
            // a parameter step of 1e-4 must not flip any ReLU
            let fc_count = tape.fcs.len();
            for fc in &tape.fcs[..fc_count - 1] {
                if fc.pre.iter().any(|a| a.abs() < 1e-3) {
                    return Ok(false);
                }
            }
            embeddings.push(embedding);
        }
        let (anchor, pos, neg, y_pos, y_neg) = (
            &embeddings[0],
            &embeddings[1],
            &embeddings[2],
            &embeddings[3],
            &embeddings[4],
        );
        let m = self.margin.value();
        let args = [
            m + d(anchor, pos)? - d(anchor, neg)?,
            m + d(anchor, y_pos)? - d(anchor, y_neg)?,
            m + d(anchor, y_pos)? - d(neg, y_pos)?,
        ];
        // strictly active hinges make the check exercise every gradient path
        Ok(args.iter().all(|a| *a > min_gap))
    }

    /// Loss value under the given parameter sets (used for the numeric side).
    fn loss_value(&self, kind: LossKind, f: &NetParams, g: &NetParams) -> Result<f64> {
        let fwd = |params: &NetParams, input: &FeatureMatrix, slot: usize| {
            let mode = Mode::Train {
                dropout_seed: self.slot_seeds[slot],
            };
            forward(params, input, mode).map(|(e, _)| e)
        };
        let value = match kind {
            LossKind::EmbeddingSum => {
                fwd(f, &self.f_inputs[0], 0)?.values().iter().sum::<f64>()
            }
            LossKind::Triplet => {
                let a = fwd(f, &self.f_inputs[0], 0)?;
                let p = fwd(f, &self.f_inputs[1], 1)?;
                let n = fwd(f, &self.f_inputs[2], 2)?;
                triplet_loss(&a, &p, &n, self.margin)?.value
            }
            LossKind::Obj0 => {
                let a = fwd(f, &self.f_inputs[0], 0)?;
                let yp = fwd(g, &self.g_inputs[0], 3)?;
                let yn = fwd(g, &self.g_inputs[1], 4)?;
                obj0_loss(&a, &yp, &yn, self.margin)?.value
            }
            LossKind::Obj1 => {
                let a = fwd(f, &self.f_inputs[0], 0)?;
                let yp = fwd(g, &self.g_inputs[0], 3)?;
                let xn = fwd(f, &self.f_inputs[2], 2)?;
                obj1_loss(&a, &yp, &xn, self.margin)?.value
            }
            LossKind::Combined => {
                let a = fwd(f, &self.f_inputs[0], 0)?;
                let yp = fwd(g, &self.g_inputs[0], 3)?;
                let yn = fwd(g, &self.g_inputs[1], 4)?;
                let xn = fwd(f, &self.f_inputs[2], 2)?;
                combined_loss(&a, &yp, &yn, &xn, self.margin)?.value
            }
        };
        Ok(value)
    }

    /// Analytic gradients of the loss with respect to both parameter sets.
    fn analytic_grads(&self, kind: LossKind) -> Result<(ParamGrads, ParamGrads)> {
        let mut f_grads = self.f_params.zero_grads();
        let mut g_grads = self.g_params.zero_grads();
        let fwd = |net: Net, slot: usize| {
            let (params, input) = self.slot(net, slot);
            let mode = Mode::Train {
                dropout_seed: self.slot_seeds[slot],
            };
            forward(params, input, mode)
        };
        let backprop = |net: Net,
                            tape: &crate::net::ForwardTape,
                            grad: &[f64],
                            f_grads: &mut ParamGrads,
                            g_grads: &mut ParamGrads|
         -> Result<()> {
            let (params, acc) = match net {
                Net::F => (&self.f_params, f_grads),
                Net::G => (&self.g_params, g_grads),
            };
            add_grads(acc, &backward(params, tape, grad)?);
            Ok(())
        };

        match kind {
            LossKind::EmbeddingSum => {
                let (emb, tape) = fwd(Net::F, 0)?;
                let ones = vec![1.0; emb.len()];
                backprop(Net::F, &tape, &ones, &mut f_grads, &mut g_grads)?;
            }
            LossKind::Triplet => {
                let (a, tape_a) = fwd(Net::F, 0)?;
                let (p, tape_p) = fwd(Net::F, 1)?;
                let (n, tape_n) = fwd(Net::F, 2)?;
                let loss = triplet_loss(&a, &p, &n, self.margin)?;
                for (role, tape) in [
                    (Role::Anchor, &tape_a),
                    (Role::Positive, &tape_p),
                    (Role::Negative, &tape_n),
                ] {
                    backprop(Net::F, tape, grad_of(&loss, role), &mut f_grads, &mut g_grads)?;
                }
            }
            LossKind::Obj0 => {
                let (a, tape_a) = fwd(Net::F, 0)?;
                let (yp, tape_yp) = fwd(Net::G, 3)?;
                let (yn, tape_yn) = fwd(Net::G, 4)?;
                let loss = obj0_loss(&a, &yp, &yn, self.margin)?;
                backprop(Net::F, &tape_a, grad_of(&loss, Role::AcousticPos), &mut f_grads, &mut g_grads)?;
                backprop(Net::G, &tape_yp, grad_of(&loss, Role::MultiSourcePos), &mut f_grads, &mut g_grads)?;
                backprop(Net::G, &tape_yn, grad_of(&loss, Role::MultiSourceNeg), &mut f_grads, &mut g_grads)?;
            }
            LossKind::Obj1 => {
                let (a, tape_a) = fwd(Net::F, 0)?;
                let (yp, tape_yp) = fwd(Net::G, 3)?;
                let (xn, tape_xn) = fwd(Net::F, 2)?;
                let loss = obj1_loss(&a, &yp, &xn, self.margin)?;
                backprop(Net::F, &tape_a, grad_of(&loss, Role::AcousticPos), &mut f_grads, &mut g_grads)?;
                backprop(Net::G, &tape_yp, grad_of(&loss, Role::MultiSourcePos), &mut f_grads, &mut g_grads)?;
                backprop(Net::F, &tape_xn, grad_of(&loss, Role::AcousticNeg), &mut f_grads, &mut g_grads)?;
            }
            LossKind::Combined => {
                let (a, tape_a) = fwd(Net::F, 0)?;
                let (yp, tape_yp) = fwd(Net::G, 3)?;
                let (yn, tape_yn) = fwd(Net::G, 4)?;
                let (xn, tape_xn) = fwd(Net::F, 2)?;
                let loss = combined_loss(&a, &yp, &yn, &xn, self.margin)?;
                backprop(Net::F, &tape_a, grad_of(&loss, Role::AcousticPos), &mut f_grads, &mut g_grads)?;
                backprop(Net::G, &tape_yp, grad_of(&loss, Role::MultiSourcePos), &mut f_grads, &mut g_grads)?;
                backprop(Net::G, &tape_yn, grad_of(&loss, Role::MultiSourceNeg), &mut f_grads, &mut g_grads)?;
                backprop(Net::F, &tape_xn, grad_of(&loss, Role::AcousticNeg), &mut f_grads, &mut g_grads)?;
            }
        }
        Ok((f_grads, g_grads))
    }
}

fn grad_of<'a>(loss: &'a LossValue, role: Role) -> &'a [f64] {
    loss.gradient(role).expect("loss provides this role")
}

#[derive(Clone, Copy)]
enum Net {
    F,
    G,
}

/// Finite-difference step used by the checker.
pub const GRAD_CHECK_STEP: f64 = 1e-4;

/// Relative error with an absolute floor, so near-zero gradients compare by
/// absolute difference.
fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[cfg_attr(not(test), allow(dead_code))]
/// Test hook: additively corrupts one analytic gradient block of one
/// objective so the report must flag it.
pub(crate) struct Corruption {
    pub kind: LossKind,
    pub block: usize,
    pub delta: f64,
}

/// Runs the analytic-vs-numeric comparison for every objective over every
/// parameter of a seeded toy pair of networks (`f` plus a wider-input `g`).
pub fn grad_check(config: &NetConfig, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    grad_check_inner(config, seed, tolerance, None)
}

#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn grad_check_corrupted(
    config: &NetConfig,
    seed: u64,
    tolerance: f64,
    corruption: Corruption,
) -> Result<GradCheckReport> {
    grad_check_inner(config, seed, tolerance, Some(corruption))
}

fn grad_check_inner(
    config: &NetConfig,
    seed: u64,
    tolerance: f64,
    corruption: Option<Corruption>,
) -> Result<GradCheckReport> {
    if tolerance <= 0.0 {
        return Err(crate::error::Error::invalid("tolerance must be positive"));
    }
    let scenario = Scenario::build(config, seed)?;
    let step = GRAD_CHECK_STEP;
    let mut checks = Vec::new();
    let mut worst_overall = 0.0f64;

    for kind in LossKind::ALL {
        let (mut f_grads, mut g_grads) = scenario.analytic_grads(kind)?;
        if let Some(c) = &corruption {
            if c.kind == kind {
                let total_f = f_grads.len();
                let target = if c.block < total_f {
                    &mut f_grads[c.block]
                } else {
                    &mut g_grads[c.block - total_f]
                };
                for v in &mut target.data {
                    *v += c.delta;
                }
            }
        }

        let mut blocks = Vec::new();
        let mut worst_kind = 0.0f64;
        for (net, grads) in [(Net::F, &f_grads), (Net::G, &g_grads)] {
            let base = match net {
                Net::F => &scenario.f_params,
                Net::G => &scenario.g_params,
            };
            let prefix = match net {
                Net::F => "f",
                Net::G => "g",
            };
            for (bi, block) in grads.iter().enumerate() {
                let mut worst_block = 0.0f64;
                for ei in 0..block.data.len() {
                    let mut plus = base.clone();
                    plus.blocks_mut()[bi].data[ei] += step;
                    let mut minus = base.clone();
                    minus.blocks_mut()[bi].data[ei] -= step;
                    let (value_plus, value_minus) = match net {
                        Net::F => (
                            scenario.loss_value(kind, &plus, &scenario.g_params)?,
                            scenario.loss_value(kind, &minus, &scenario.g_params)?,
                        ),
                        Net::G => (
                            scenario.loss_value(kind, &scenario.f_params, &plus)?,
                            scenario.loss_value(kind, &scenario.f_params, &minus)?,
                        ),
                    };
                    let numeric = (value_plus - value_minus) / (2.0 * step);
                    worst_block = worst_block.max(rel_err(block.data[ei], numeric));
                }
                blocks.push(BlockCheck {
                    block: format!("{prefix}.{}", block.name),
                    worst_rel_err: worst_block,
                });
                worst_kind = worst_kind.max(worst_block);
            }
        }
        worst_overall = worst_overall.max(worst_kind);
        checks.push(LossCheck {
            kind,
            blocks,
            worst: worst_kind,
        });
    }

    Ok(GradCheckReport {
        step,
        tolerance,
        checks,
        worst: worst_overall,
    })
}
