//! Contrastive objectives over embeddings, with exact gradients.
//!
//! All three objectives are hinge losses on cosine distances with a shared
//! margin: the single-view triplet loss pulls same-phone embeddings
//! together, and the two cross-view objectives tie the acoustic network `f`
//! to the multi-source network `g` — one contrasting mismatched multi-source
//! inputs, the other mismatched acoustic inputs. Their sum is the combined
//! (symmetrized) objective.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::Embedding;

/// Margin shared by all objectives; 0.4 in the reference setup.
pub const DEFAULT_MARGIN: f64 = 0.4;

/// Hinge margin, `>= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin(f64);

impl Margin {
    pub fn new(m: f64) -> Result<Margin> {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::invalid(format!("margin must be finite and >= 0, got {m}")));
        }
        Ok(Margin(m))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for Margin {
    fn default() -> Margin {
        Margin(DEFAULT_MARGIN)
    }
}

/// Which input embedding a gradient belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    /// Triplet anchor (`x1`).
    Anchor,
    /// Triplet same-phone positive (`x2`).
    Positive,
    /// Triplet different-phone negative (`x3`).
    Negative,
    /// Matched acoustic embedding `f(x+)`.
    AcousticPos,
    /// Matched multi-source embedding `g(y+)`.
    MultiSourcePos,
    /// Mismatched multi-source embedding `g(y-)`.
    MultiSourceNeg,
    /// Mismatched acoustic embedding `f(x-)`.
    AcousticNeg,
}

/// A loss value plus its gradient with respect to each input embedding.
///
/// Gradients are zero vectors when the hinge is inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradients: BTreeMap<Role, Vec<f64>>,
}

impl LossValue {
    pub fn gradient(&self, role: Role) -> Option<&[f64]> {
        self.gradients.get(&role).map(Vec::as_slice)
    }
}

struct CosineWithGrads {
    value: f64,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

/// `d = 1 - <a,b>/(|a||b|)` and its gradients.
fn cosine_with_grads(a: &Embedding, b: &Embedding) -> Result<CosineWithGrads> {
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
    let sim = dot / (norm_a * norm_b);
    let grad_a = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(&ai, &bi)| sim * ai / (norm_a * norm_a) - bi / (norm_a * norm_b))
        .collect();
    let grad_b = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(&ai, &bi)| sim * bi / (norm_b * norm_b) - ai / (norm_a * norm_b))
        .collect();
    Ok(CosineWithGrads {
        value: 1.0 - sim,
        grad_a,
        grad_b,
    })
}

/// Shared hinge structure: `max(0, m + d(anchor, pos) - d(anchor_n, neg))`
/// where the two distances may share embeddings. Roles name the slots.
fn hinge_loss(
    margin: Margin,
    pos_pair: (&Embedding, &Embedding, Role, Role),
    neg_pair: (&Embedding, &Embedding, Role, Role),
) -> Result<LossValue> {
    let (pa, pb, role_pa, role_pb) = pos_pair;
    let (na, nb, role_na, role_nb) = neg_pair;
    let pos = cosine_with_grads(pa, pb)?;
    let neg = cosine_with_grads(na, nb)?;
    let arg = margin.value() + pos.value - neg.value;

    let mut gradients: BTreeMap<Role, Vec<f64>> = BTreeMap::new();
    for (role, len) in [
        (role_pa, pa.len()),
        (role_pb, pb.len()),
        (role_na, na.len()),
        (role_nb, nb.len()),
    ] {
        gradients.entry(role).or_insert_with(|| vec![0.0; len]);
    }

    // subgradient 0 at the exact hinge boundary
    if arg > 0.0 {
        let mut add = |role: Role, grad: &[f64], sign: f64| {
            let acc = gradients.get_mut(&role).expect("role present");
            for (a, g) in acc.iter_mut().zip(grad) {
                *a += sign * g;
            }
        };
        add(role_pa, &pos.grad_a, 1.0);
        add(role_pb, &pos.grad_b, 1.0);
        add(role_na, &neg.grad_a, -1.0);
        add(role_nb, &neg.grad_b, -1.0);
    }

    Ok(LossValue {
        value: arg.max(0.0),
        gradients,
    })
}

/// Single-view triplet loss: `max(0, m + d(e1, e2) - d(e1, e3))`.
///
/// `e1`/`e2` embed same-phone segments, `e3` a different phone.
pub fn triplet_loss(
    e1: &Embedding,
    e2: &Embedding,
    e3: &Embedding,
    margin: Margin,
) -> Result<LossValue> {
    hinge_loss(
        margin,
        (e1, e2, Role::Anchor, Role::Positive),
        (e1, e3, Role::Anchor, Role::Negative),
    )
}

/// Cross-view objective contrasting mismatched multi-source inputs:
/// `max(0, m + d(f(x+), g(y+)) - d(f(x+), g(y-)))`.
pub fn obj0_loss(
    fx_pos: &Embedding,
    gy_pos: &Embedding,
    gy_neg: &Embedding,
    margin: Margin,
) -> Result<LossValue> {
    hinge_loss(
        margin,
        (fx_pos, gy_pos, Role::AcousticPos, Role::MultiSourcePos),
        (fx_pos, gy_neg, Role::AcousticPos, Role::MultiSourceNeg),
    )
}

/// Cross-view objective contrasting mismatched acoustic inputs:
/// `max(0, m + d(f(x+), g(y+)) - d(f(x-), g(y+)))`.
pub fn obj1_loss(
    fx_pos: &Embedding,
    gy_pos: &Embedding,
    fx_neg: &Embedding,
    margin: Margin,
) -> Result<LossValue> {
    hinge_loss(
        margin,
        (fx_pos, gy_pos, Role::AcousticPos, Role::MultiSourcePos),
        (fx_neg, gy_pos, Role::AcousticNeg, Role::MultiSourcePos),
    )
}

/// The symmetrized objective: `obj0 + obj1`, gradients summed per role.
pub fn combined_loss(
    fx_pos: &Embedding,
    gy_pos: &Embedding,
    gy_neg: &Embedding,
    fx_neg: &Embedding,
    margin: Margin,
) -> Result<LossValue> {
    let a = obj0_loss(fx_pos, gy_pos, gy_neg, margin)?;
    let b = obj1_loss(fx_pos, gy_pos, fx_neg, margin)?;
    let mut gradients = a.gradients;
    for (role, grad) in b.gradients {
        match gradients.get_mut(&role) {
            Some(acc) => {
                for (x, y) in acc.iter_mut().zip(&grad) {
                    *x += y;
                }
            }
            None => {
                gradients.insert(role, grad);
            }
        }
    }
    Ok(LossValue {
        value: a.value + b.value,
        gradients,
    })
}
