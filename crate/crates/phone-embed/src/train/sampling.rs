//! Triplet and cross-view batch sampling.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{SegmentSet, Split, View};
use crate::error::{Error, Result};

fn default_pair_cap() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Cap on enumerated same-label pairs per label per epoch.
    #[serde(default = "default_pair_cap")]
    pub max_pairs_per_label: usize,
    /// Enumerate ordered pairs (a,b) and (b,a) instead of unordered ones.
    #[serde(default)]
    pub ordered_pairs: bool,
}

impl Default for SamplingConfig {
    fn default() -> SamplingConfig {
        SamplingConfig {
            max_pairs_per_label: default_pair_cap(),
            ordered_pairs: false,
        }
    }
}

/// A single-view training unit: anchor and positive share a spoken label,
/// the negative differs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// A cross-view training unit. The positive segment provides both the
/// matched acoustic view `x+` and multi-source view `y+`; the negatives
/// come from mismatched-label segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossViewItem {
    pub positive: String,
    pub y_negative: String,
    pub x_negative: String,
}

fn by_label(set: &SegmentSet, split: Split) -> BTreeMap<&str, Vec<&str>> {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for seg in set.split(split) {
        groups.entry(&seg.spoken).or_default().push(&seg.id);
    }
    for ids in groups.values_mut() {
        ids.sort_unstable();
    }
    groups
}

/// Enumerates same-label pairs (capped per label), attaches a uniformly
/// drawn different-label negative to each, and shuffles. Deterministic
/// given the seed.
pub fn sample_triplets(
    set: &SegmentSet,
    split: Split,
    config: &SamplingConfig,
    seed: u64,
) -> Result<Vec<Triplet>> {
    let groups = by_label(set, split);
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "triplet sampling needs at least 2 distinct labels in {split}, got {}",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<(&str, &str)> = groups
        .iter()
        .flat_map(|(label, ids)| ids.iter().map(move |id| (*id, *label)))
        .collect();

    let mut triplets = Vec::new();
    for (label, ids) in &groups {
        if ids.len() < 2 {
            continue;
        }
        let mut pairs: Vec<(&str, &str)> = if config.ordered_pairs {
            ids.iter()
                .flat_map(|a| ids.iter().filter(move |b| *b != a).map(move |b| (*a, *b)))
                .collect()
        } else {
            (0..ids.len())
                .flat_map(|i| ((i + 1)..ids.len()).map(move |j| (i, j)))
                .map(|(i, j)| (ids[i], ids[j]))
                .collect()
        };
        if pairs.len() > config.max_pairs_per_label {
            pairs.shuffle(&mut rng);
            pairs.truncate(config.max_pairs_per_label);
        }
        let negatives: Vec<&str> = all
            .iter()
            .filter(|(_, l)| l != label)
            .map(|(id, _)| *id)
            .collect();
        for (anchor, positive) in pairs {
            let negative = negatives[rng.random_range(0..negatives.len())];
            triplets.push(Triplet {
                anchor: anchor.to_string(),
                positive: positive.to_string(),
                negative: negative.to_string(),
            });
        }
    }
    if triplets.is_empty() {
        return Err(Error::invalid(format!(
            "no label in {split} has 2 or more segments to pair"
        )));
    }
    triplets.shuffle(&mut rng);
    Ok(triplets)
}

/// One cross-view item per segment of the split: the negative multi-source
/// view comes from a uniformly sampled different label (then a uniform
/// segment of it), the negative acoustic view from a uniform mismatched
/// segment. Deterministic given the seed.
pub fn sample_crossview(
    set: &SegmentSet,
    split: Split,
    view: View,
    seed: u64,
) -> Result<Vec<CrossViewItem>> {
    let groups = by_label(set, split);
    if groups.len() < 2 {
        return Err(Error::invalid(format!(
            "cross-view sampling needs at least 2 distinct labels in {split}, got {}",
            groups.len()
        )));
    }
    for seg in set.split(split) {
        for needed in [View::Acoustic, view] {
            if !seg.has_view(needed) {
                return Err(Error::MissingView {
                    id: seg.id.clone(),
                    view: needed,
                });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<&str> = groups.keys().copied().collect();
    let all: Vec<(&str, &str)> = groups
        .iter()
        .flat_map(|(label, ids)| ids.iter().map(move |id| (*id, *label)))
        .collect();

    let mut positives: Vec<(&str, &str)> = all.clone();
    positives.sort_unstable();
    let mut items = Vec::with_capacity(positives.len());
    for (id, label) in positives {
        // negative multi-source: uniform label, then uniform segment of it
        let other_labels: Vec<&str> = labels.iter().copied().filter(|l| *l != label).collect();
        let neg_label = other_labels[rng.random_range(0..other_labels.len())];
        let neg_ids = &groups[neg_label];
        let y_negative = neg_ids[rng.random_range(0..neg_ids.len())];
        // negative acoustic: uniform over all mismatched segments
        let mismatched: Vec<&str> = all
            .iter()
            .filter(|(_, l)| *l != label)
            .map(|(i, _)| *i)
            .collect();
        let x_negative = mismatched[rng.random_range(0..mismatched.len())];
        items.push(CrossViewItem {
            positive: id.to_string(),
            y_negative: y_negative.to_string(),
            x_negative: x_negative.to_string(),
        });
    }
    items.shuffle(&mut rng);
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PhoneSegment;
    use std::path::Path;

    fn set_with(labels: &[(&str, &str)]) -> SegmentSet {
        let segments = labels
            .iter()
            .map(|(id, label)| PhoneSegment {
                id: (*id).to_string(),
                spoken: (*label).to_string(),
                canonical: (*label).to_string(),
                speaker: "spk".into(),
                split: Split::Train,
                views: [
                    (View::Acoustic, format!("feats/{id}.acoustic.phnf").into()),
                    (View::Attribute, format!("feats/{id}.attribute.phnf").into()),
                ]
                .into_iter()
                .collect(),
            })
            .collect();
        SegmentSet::from_segments(Path::new("."), segments).unwrap()
    }

    #[test]
    fn two_a_segments_one_b_gives_one_unordered_pair() {
        let set = set_with(&[("a0", "A"), ("a1", "A"), ("b0", "B")]);
        let config = SamplingConfig::default();
        let triplets = sample_triplets(&set, Split::Train, &config, 0).unwrap();
        assert_eq!(triplets.len(), 1);
        assert_eq!(triplets[0].negative, "b0");
        assert_ne!(triplets[0].anchor, triplets[0].positive);

        let ordered = SamplingConfig {
            ordered_pairs: true,
            ..config
        };
        let triplets = sample_triplets(&set, Split::Train, &ordered, 0).unwrap();
        assert_eq!(triplets.len(), 2);
    }

    #[test]
    fn single_label_is_an_error() {
        let set = set_with(&[("a0", "A"), ("a1", "A")]);
        assert!(sample_triplets(&set, Split::Train, &SamplingConfig::default(), 0).is_err());
        assert!(sample_crossview(&set, Split::Train, View::Attribute, 0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let labels: Vec<(String, String)> = (0..20)
            .map(|i| (format!("s{i:02}"), format!("L{}", i % 4)))
            .collect();
        let refs: Vec<(&str, &str)> = labels
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let set = set_with(&refs);
        let config = SamplingConfig {
            max_pairs_per_label: 5,
            ordered_pairs: false,
        };
        let a = sample_triplets(&set, Split::Train, &config, 42).unwrap();
        let b = sample_triplets(&set, Split::Train, &config, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_triplets(&set, Split::Train, &config, 43).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 4 * 5);
        for t in &a {
            assert_ne!(t.anchor, t.positive);
        }

        let x = sample_crossview(&set, Split::Train, View::Attribute, 9).unwrap();
        let y = sample_crossview(&set, Split::Train, View::Attribute, 9).unwrap();
        assert_eq!(x, y);
        assert_eq!(x.len(), 20);
    }

    #[test]
    fn crossview_negatives_have_mismatched_labels() {
        let set = set_with(&[
            ("a0", "A"),
            ("a1", "A"),
            ("b0", "B"),
            ("b1", "B"),
            ("c0", "C"),
        ]);
        let items = sample_crossview(&set, Split::Train, View::Attribute, 3).unwrap();
        assert_eq!(items.len(), 5);
        for item in &items {
            let pos_label = &set.get(&item.positive).unwrap().spoken;
            assert_ne!(&set.get(&item.y_negative).unwrap().spoken, pos_label);
            assert_ne!(&set.get(&item.x_negative).unwrap().spoken, pos_label);
        }
    }

    #[test]
    fn crossview_requires_the_view_on_every_segment() {
        let mut set = set_with(&[("a0", "A"), ("b0", "B")]);
        // drop the attribute view from one segment
        let segments: Vec<PhoneSegment> = set
            .segments()
            .iter()
            .map(|s| {
                let mut s = s.clone();
                if s.id == "b0" {
                    s.views.remove(&View::Attribute);
                }
                s
            })
            .collect();
        set = SegmentSet::from_segments(Path::new("."), segments).unwrap();
        assert!(matches!(
            sample_crossview(&set, Split::Train, View::Attribute, 0).unwrap_err(),
            Error::MissingView { .. }
        ));
    }
}
