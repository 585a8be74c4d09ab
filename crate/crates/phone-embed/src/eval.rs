//! Phone-discrimination AP, template verification, and the FRR/FAR/DA
//! metric suite.
//!
//! Naming follows the evaluation protocol this implements, which swaps the
//! usual sense of the two error rates: FRR is the fraction of
//! mispronunciations accepted as correct, FAR the fraction of correct
//! pronunciations rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{PhoneSegment, SegmentSet, Split};
use crate::error::{Error, Result};
use crate::exec;
use crate::gop::Decision;
use crate::net::{cosine_distance, Embedding};

/// Fixed verification threshold of the reference protocol.
pub const DEFAULT_VERIFY_THRESHOLD: f64 = 0.4;

/// One scored unordered segment pair (`a < b` lexicographically).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub a: String,
    pub b: String,
    pub distance: f64,
    pub same_label: bool,
}

/// Scores unordered same/different pairs of a split by embedding distance.
///
/// Enumerates every pair when there are at most `max_pairs`, otherwise
/// draws a seeded sample of distinct pairs. Pair order and content are
/// deterministic given the seed.
pub fn discrimination_pairs(
    set: &SegmentSet,
    split: Split,
    embeddings: &BTreeMap<String, Embedding>,
    max_pairs: usize,
    seed: u64,
) -> Result<Vec<ScoredPair>> {
    let mut segments: Vec<(&str, &str)> = set
        .split(split)
        .map(|s| (s.id.as_str(), s.spoken.as_str()))
        .collect();
    segments.sort();
    if segments.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 segments in {split} to form pairs, got {}",
            segments.len()
        )));
    }
    for (id, _) in &segments {
        if !embeddings.contains_key(*id) {
            return Err(Error::invalid(format!("no embedding for segment `{id}`")));
        }
    }

    let n = segments.len();
    let total = n * (n - 1) / 2;
    let flat_to_pair = |flat: usize| {
        // row-major upper triangle: i < j
        let mut i = 0usize;
        let mut remaining = flat;
        let mut row_len = n - 1;
        while remaining >= row_len {
            remaining -= row_len;
            i += 1;
            row_len -= 1;
        }
        (i, i + 1 + remaining)
    };

    let index_pairs: Vec<(usize, usize)> = if total <= max_pairs {
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = BTreeSet::new();
        while chosen.len() < max_pairs {
            chosen.insert(rng.random_range(0..total));
        }
        chosen.into_iter().map(flat_to_pair).collect()
    };

    let scored: Vec<Result<ScoredPair>> = exec::map_ordered(&index_pairs, |&(i, j)| {
        let (id_a, label_a) = segments[i];
        let (id_b, label_b) = segments[j];
        let distance = cosine_distance(&embeddings[id_a], &embeddings[id_b])?;
        Ok(ScoredPair {
            a: id_a.to_string(),
            b: id_b.to_string(),
            distance,
            same_label: label_a == label_b,
        })
    });
    scored.into_iter().collect()
}

/// Average precision of the same/different ranking by ascending distance.
///
/// Ties order by the lexicographic id pair so results are reproducible.
/// `AP = (1/P) * sum over ranks k of precision@k * [pair k is same-label]`.
pub fn average_precision(pairs: &[ScoredPair]) -> Result<f64> {
    let positives = pairs.iter().filter(|p| p.same_label).count();
    if positives == 0 {
        return Err(Error::invalid(
            "average precision needs at least one same-label pair",
        ));
    }
    let mut ranked: Vec<&ScoredPair> = pairs.iter().collect();
    ranked.sort_by(|x, y| {
        x.distance
            .partial_cmp(&y.distance)
            .expect("distances are finite")
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    let mut same_seen = 0usize;
    let mut ap = 0.0;
    for (k, pair) in ranked.iter().enumerate() {
        if pair.same_label {
            same_seen += 1;
            ap += same_seen as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

/// Precision/recall of same-label detection at every ranked cut point,
/// for PR-curve export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn pr_curve(pairs: &[ScoredPair]) -> Result<Vec<PrPoint>> {
    let positives = pairs.iter().filter(|p| p.same_label).count();
    if positives == 0 {
        return Err(Error::invalid(
            "pr curve needs at least one same-label pair",
        ));
    }
    let mut ranked: Vec<&ScoredPair> = pairs.iter().collect();
    ranked.sort_by(|x, y| {
        x.distance
            .partial_cmp(&y.distance)
            .expect("distances are finite")
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    let mut same_seen = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for (k, pair) in ranked.iter().enumerate() {
        if pair.same_label {
            same_seen += 1;
        }
        points.push(PrPoint {
            threshold: pair.distance,
            precision: same_seen as f64 / (k + 1) as f64,
            recall: same_seen as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Accept-side precision/recall of verification outcomes as the decision
/// threshold sweeps through the observed distances: at each candidate
/// threshold, precision is the fraction of accepted segments that are truly
/// correct, recall the fraction of truly correct segments accepted.
pub fn verification_pr_curve(outcomes: &[VerificationOutcome]) -> Result<Vec<PrPoint>> {
    let positives = outcomes.iter().filter(|o| o.truth_correct).count();
    if positives == 0 {
        return Err(Error::invalid(
            "verification pr curve needs at least one truly correct segment",
        ));
    }
    let mut ranked: Vec<&VerificationOutcome> = outcomes.iter().collect();
    ranked.sort_by(|x, y| {
        x.distance
            .partial_cmp(&y.distance)
            .expect("distances are finite")
            .then_with(|| x.segment.cmp(&y.segment))
    });
    let mut correct_seen = 0usize;
    let mut points = Vec::with_capacity(ranked.len());
    for (k, outcome) in ranked.iter().enumerate() {
        if outcome.truth_correct {
            correct_seen += 1;
        }
        points.push(PrPoint {
            threshold: outcome.distance,
            precision: correct_seen as f64 / (k + 1) as f64,
            recall: correct_seen as f64 / positives as f64,
        });
    }
    Ok(points)
}

/// Per-phone reference embedding: the mean of that phone's embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneTemplate {
    pub phone: String,
    pub centroid: Embedding,
    pub support: usize,
}

/// Averages embeddings per phone (native data only). Groups iterate in
/// sorted phone order; summation follows the given embedding order.
pub fn build_templates(
    by_phone: &BTreeMap<String, Vec<Embedding>>,
) -> Result<Vec<PhoneTemplate>> {
    let mut templates = Vec::with_capacity(by_phone.len());
    for (phone, embeddings) in by_phone {
        if embeddings.is_empty() {
            return Err(Error::invalid(format!(
                "phone `{phone}` has no embeddings to average"
            )));
        }
        let dims = embeddings[0].len();
        let mut centroid = vec![0.0; dims];
        for e in embeddings {
            if e.len() != dims {
                return Err(Error::DimensionMismatch {
                    context: "template embedding",
                    expected: dims,
                    got: e.len(),
                });
            }
            for (c, v) in centroid.iter_mut().zip(&e.0) {
                *c += v;
            }
        }
        for c in &mut centroid {
            *c /= embeddings.len() as f64;
        }
        templates.push(PhoneTemplate {
            phone: phone.clone(),
            centroid: Embedding(centroid),
            support: embeddings.len(),
        });
    }
    Ok(templates)
}

pub fn templates_to_references(templates: &[PhoneTemplate]) -> BTreeMap<String, Embedding> {
    templates
        .iter()
        .map(|t| (t.phone.clone(), t.centroid.clone()))
        .collect()
}

/// How the canonical reference embedding was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Per-phone centroid of native embeddings.
    Centroid,
    /// Multi-source network applied to the canonical phone's pattern.
    CrossView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub segment: String,
    pub canonical: String,
    pub distance: f64,
    pub decision: Decision,
    /// Ground truth: the segment really is the canonical phone.
    pub truth_correct: bool,
}

/// Verifies one segment against the canonical phone's reference embedding.
///
/// Accept iff `distance < threshold` (strict at the boundary).
pub fn verify_segment(
    segment: &PhoneSegment,
    embedding: &Embedding,
    references: &BTreeMap<String, Embedding>,
    threshold: f64,
) -> Result<VerificationOutcome> {
    let reference = references.get(&segment.canonical).ok_or_else(|| {
        Error::invalid(format!(
            "no reference embedding for canonical phone `{}`",
            segment.canonical
        ))
    })?;
    let distance = cosine_distance(embedding, reference)?;
    Ok(VerificationOutcome {
        segment: segment.id.clone(),
        canonical: segment.canonical.clone(),
        distance,
        decision: if distance < threshold {
            Decision::Accept
        } else {
            Decision::Reject
        },
        truth_correct: segment.is_correct(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsCounts {
    pub mis_accepted: usize,
    pub mis_rejected: usize,
    pub cor_accepted: usize,
    pub cor_rejected: usize,
}

impl MetricsCounts {
    pub fn total(&self) -> usize {
        self.mis_accepted + self.mis_rejected + self.cor_accepted + self.cor_rejected
    }
}

/// FRR/FAR/DA with the raw counts. A rate whose denominator is zero is
/// `None`, never reported as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frr: Option<f64>,
    pub far: Option<f64>,
    pub da: Option<f64>,
    pub counts: MetricsCounts,
}

pub fn compute_metrics(outcomes: &[VerificationOutcome]) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::invalid("cannot compute metrics over zero outcomes"));
    }
    let mut counts = MetricsCounts {
        mis_accepted: 0,
        mis_rejected: 0,
        cor_accepted: 0,
        cor_rejected: 0,
    };
    for outcome in outcomes {
        match (outcome.truth_correct, outcome.decision) {
            (false, Decision::Accept) => counts.mis_accepted += 1,
            (false, Decision::Reject) => counts.mis_rejected += 1,
            (true, Decision::Accept) => counts.cor_accepted += 1,
            (true, Decision::Reject) => counts.cor_rejected += 1,
        }
    }
    let ratio = |num: usize, denom: usize| {
        if denom == 0 {
            None
        } else {
            Some(num as f64 / denom as f64)
        }
    };
    let mis = counts.mis_accepted + counts.mis_rejected;
    let cor = counts.cor_accepted + counts.cor_rejected;
    Ok(MetricsReport {
        frr: ratio(counts.mis_accepted, mis),
        far: ratio(counts.cor_rejected, cor),
        da: ratio(counts.mis_rejected + counts.cor_accepted, counts.total()),
        counts,
    })
}

/// Full verification report as written to disk by the scoring commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub threshold: f64,
    pub strategy: Strategy,
    pub model_digest: Option<String>,
    pub num_outcomes: usize,
    pub frr: Option<f64>,
    pub far: Option<f64>,
    pub da: Option<f64>,
    pub counts: MetricsCounts,
}

impl VerificationReport {
    pub fn new(
        metrics: &MetricsReport,
        threshold: f64,
        strategy: Strategy,
        model_digest: Option<String>,
    ) -> VerificationReport {
        VerificationReport {
            threshold,
            strategy,
            model_digest,
            num_outcomes: metrics.counts.total(),
            frr: metrics.frr,
            far: metrics.far,
            da: metrics.da,
            counts: metrics.counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Writes outcomes as CSV: segment, canonical, distance, decision, truth.
pub fn write_outcomes_csv(path: &Path, outcomes: &[VerificationOutcome]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for outcome in outcomes {
        writer
            .serialize(outcome)
            .map_err(|e| Error::invalid(format!("csv write: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv flush: {e}")))?;
    crate::io::atomic_write(path, &bytes)
}

pub fn read_outcomes_csv(path: &Path) -> Result<Vec<VerificationOutcome>> {
    let bytes = crate::io::read_file(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::invalid(format!("{}: {e}", path.display()))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: &str, b: &str, distance: f64, same_label: bool) -> ScoredPair {
        ScoredPair {
            a: a.into(),
            b: b.into(),
            distance,
            same_label,
        }
    }

    fn outcome(id: &str, truth_correct: bool, accept: bool) -> VerificationOutcome {
        VerificationOutcome {
            segment: id.into(),
            canonical: "a".into(),
            distance: if accept { 0.1 } else { 0.9 },
            decision: if accept {
                Decision::Accept
            } else {
                Decision::Reject
            },
            truth_correct,
        }
    }

    #[test]
    fn ap_hand_example() {
        let pairs = vec![
            pair("a", "b", 0.1, true),
            pair("a", "c", 0.2, false),
            pair("b", "c", 0.3, true),
            pair("b", "d", 0.4, false),
        ];
        let ap = average_precision(&pairs).unwrap();
        assert!((ap - (0.5 * (1.0 + 2.0 / 3.0))).abs() < 1e-12, "{ap}");
        assert!((ap - 0.8333333333).abs() < 1e-9);
    }

    #[test]
    fn perfect_ranking_gives_ap_one() {
        let pairs = vec![
            pair("a", "b", 0.1, true),
            pair("a", "c", 0.2, true),
            pair("b", "c", 0.8, false),
            pair("b", "d", 0.9, false),
        ];
        assert_eq!(average_precision(&pairs).unwrap(), 1.0);
    }

    #[test]
    fn single_same_pair_is_ap_one() {
        assert_eq!(
            average_precision(&[pair("a", "b", 0.5, true)]).unwrap(),
            1.0
        );
        assert!(average_precision(&[pair("a", "b", 0.5, false)]).is_err());
    }

    #[test]
    fn ap_is_invariant_under_monotone_distance_transforms() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..50 {
            let pairs: Vec<ScoredPair> = (0..30)
                .map(|i| {
                    pair(
                        &format!("s{i:02}"),
                        &format!("t{i:02}"),
                        rng.random_range(0.0..2.0),
                        rng.random_bool(0.4),
                    )
                })
                .collect();
            if pairs.iter().all(|p| !p.same_label) {
                continue;
            }
            let base = average_precision(&pairs).unwrap();
            let transformed: Vec<ScoredPair> = pairs
                .iter()
                .map(|p| {
                    let mut q = p.clone();
                    // strictly monotone: exp(3d) + d
                    q.distance = (3.0 * p.distance).exp() + p.distance;
                    q
                })
                .collect();
            let after = average_precision(&transformed).unwrap();
            assert!((base - after).abs() < 1e-12);
        }
    }

    #[test]
    fn templates_average_and_commute() {
        let mut by_phone = BTreeMap::new();
        by_phone.insert(
            "a".to_string(),
            vec![Embedding(vec![1.0, 0.0]), Embedding(vec![0.0, 1.0])],
        );
        by_phone.insert("b".to_string(), vec![Embedding(vec![3.0, 3.0])]);
        let templates = build_templates(&by_phone).unwrap();
        assert_eq!(templates[0].centroid.values(), &[0.5, 0.5]);
        assert_eq!(templates[0].support, 2);
        assert_eq!(templates[1].centroid.values(), &[3.0, 3.0]);

        let mut swapped = BTreeMap::new();
        swapped.insert(
            "a".to_string(),
            vec![Embedding(vec![0.0, 1.0]), Embedding(vec![1.0, 0.0])],
        );
        let t2 = build_templates(&swapped).unwrap();
        for (x, y) in t2[0].centroid.values().iter().zip(templates[0].centroid.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn verify_boundary_is_strict() {
        let seg = PhoneSegment {
            id: "s0".into(),
            spoken: "a".into(),
            canonical: "a".into(),
            speaker: "spk".into(),
            split: Split::Test,
            views: BTreeMap::new(),
        };
        let mut refs = BTreeMap::new();
        refs.insert("a".to_string(), Embedding(vec![1.0, 0.0]));

        let same = verify_segment(&seg, &Embedding(vec![2.0, 0.0]), &refs, 0.4).unwrap();
        assert_eq!(same.decision, Decision::Accept);
        assert_eq!(same.distance, 0.0);

        let orthogonal = verify_segment(&seg, &Embedding(vec![0.0, 1.0]), &refs, 0.4).unwrap();
        assert_eq!(orthogonal.decision, Decision::Reject);

        // distance exactly at the threshold rejects
        let at = verify_segment(&seg, &Embedding(vec![0.6, 0.8]), &refs, 1.0 - 0.6).unwrap();
        assert!((at.distance - 0.4).abs() < 1e-12);
        assert_eq!(at.decision, Decision::Reject);

        let mut missing = seg.clone();
        missing.canonical = "zz".into();
        assert!(verify_segment(&missing, &Embedding(vec![1.0, 0.0]), &refs, 0.4).is_err());
    }

    #[test]
    fn metrics_hand_example() {
        // 4 mispronounced (1 accepted), 6 correct (2 rejected)
        let mut outcomes = vec![outcome("m0", false, true)];
        outcomes.extend((1..4).map(|i| outcome(&format!("m{i}"), false, false)));
        outcomes.extend((0..4).map(|i| outcome(&format!("c{i}"), true, true)));
        outcomes.extend((4..6).map(|i| outcome(&format!("c{i}"), true, false)));

        let report = compute_metrics(&outcomes).unwrap();
        assert_eq!(report.frr, Some(0.25));
        assert!((report.far.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.da.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(report.counts.mis_accepted, 1);
        assert_eq!(report.counts.cor_rejected, 2);
    }

    #[test]
    fn degenerate_verifiers() {
        let perfect: Vec<VerificationOutcome> = (0..5)
            .map(|i| outcome(&format!("m{i}"), false, false))
            .chain((0..5).map(|i| outcome(&format!("c{i}"), true, true)))
            .collect();
        let report = compute_metrics(&perfect).unwrap();
        assert_eq!(report.frr, Some(0.0));
        assert_eq!(report.far, Some(0.0));
        assert_eq!(report.da, Some(1.0));

        let accept_all: Vec<VerificationOutcome> = (0..4)
            .map(|i| outcome(&format!("m{i}"), false, true))
            .chain((0..6).map(|i| outcome(&format!("c{i}"), true, true)))
            .collect();
        let report = compute_metrics(&accept_all).unwrap();
        assert_eq!(report.frr, Some(1.0));
        assert_eq!(report.far, Some(0.0));
        assert_eq!(report.da, Some(0.6));

        // one truth class absent: its rate is undefined, not zero
        let only_correct: Vec<VerificationOutcome> =
            (0..3).map(|i| outcome(&format!("c{i}"), true, true)).collect();
        let report = compute_metrics(&only_correct).unwrap();
        assert_eq!(report.frr, None);
        assert_eq!(report.far, Some(0.0));

        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn da_identity_holds_exactly() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(12);
        use rand::Rng;
        for _ in 0..200 {
            let outcomes: Vec<VerificationOutcome> = (0..rng.random_range(1..40))
                .map(|i| outcome(&format!("s{i}"), rng.random_bool(0.5), rng.random_bool(0.5)))
                .collect();
            let report = compute_metrics(&outcomes).unwrap();
            let counts = report.counts;
            let total = counts.total();
            // DA * total is an integer identity
            let da_scaled = report.da.unwrap() * total as f64;
            assert!((da_scaled - (counts.mis_rejected + counts.cor_accepted) as f64).abs() < 1e-9);
            // DA = 1 - (FRR*N_mis + FAR*N_cor) / total when both defined
            if let (Some(frr), Some(far)) = (report.frr, report.far) {
                let n_mis = (counts.mis_accepted + counts.mis_rejected) as f64;
                let n_cor = (counts.cor_accepted + counts.cor_rejected) as f64;
                let da = 1.0 - (frr * n_mis + far * n_cor) / total as f64;
                assert!((report.da.unwrap() - da).abs() < 1e-12);
            }
        }
    }

    fn tiny_set(labels: &[&str]) -> (SegmentSet, BTreeMap<String, Embedding>) {
        let segments: Vec<PhoneSegment> = labels
            .iter()
            .enumerate()
            .map(|(i, label)| PhoneSegment {
                id: format!("s{i}"),
                spoken: (*label).to_string(),
                canonical: (*label).to_string(),
                speaker: "spk".into(),
                split: Split::Dev,
                views: BTreeMap::new(),
            })
            .collect();
        let set = SegmentSet::from_segments(Path::new("."), segments).unwrap();
        let embeddings = (0..labels.len())
            .map(|i| {
                let angle = i as f64 * 0.3;
                (format!("s{i}"), Embedding(vec![angle.cos(), angle.sin()]))
            })
            .collect();
        (set, embeddings)
    }

    #[test]
    fn three_segments_make_three_pairs() {
        let (set, embeddings) = tiny_set(&["a", "a", "b"]);
        let pairs = discrimination_pairs(&set, Split::Dev, &embeddings, 100, 0).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs.iter().filter(|p| p.same_label).count(), 1);
    }

    #[test]
    fn identical_embeddings_have_zero_distances() {
        let (set, mut embeddings) = tiny_set(&["a", "b", "a", "b"]);
        for e in embeddings.values_mut() {
            *e = Embedding(vec![0.6, 0.8]);
        }
        let pairs = discrimination_pairs(&set, Split::Dev, &embeddings, 100, 0).unwrap();
        assert!(pairs.iter().all(|p| p.distance.abs() < 1e-12));
    }

    #[test]
    fn pair_sampling_is_deterministic_and_capped() {
        let labels: Vec<&str> = (0..30).map(|i| if i % 3 == 0 { "a" } else { "b" }).collect();
        let (set, embeddings) = tiny_set(&labels);
        let a = discrimination_pairs(&set, Split::Dev, &embeddings, 50, 7).unwrap();
        let b = discrimination_pairs(&set, Split::Dev, &embeddings, 50, 7).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, b);
        let c = discrimination_pairs(&set, Split::Dev, &embeddings, 50, 8).unwrap();
        assert_ne!(a, c);

        let (small, small_embeddings) = tiny_set(&["a"]);
        assert!(discrimination_pairs(&small, Split::Dev, &small_embeddings, 10, 0).is_err());
    }

    #[test]
    fn outcomes_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("outcomes.csv");
        let outcomes = vec![outcome("s0", true, true), outcome("s1", false, false)];
        write_outcomes_csv(&path, &outcomes).unwrap();
        let back = read_outcomes_csv(&path).unwrap();
        assert_eq!(back, outcomes);
    }
}
