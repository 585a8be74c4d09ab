//! Deterministic synthetic multi-view corpus generation.
//!
//! Each phone class gets a random mean trajectory in acoustic space.
//! Acoustic frames are trajectory samples plus Gaussian noise, the
//! bottleneck view is a fixed random linear map of the (noiseless)
//! trajectory plus noise, and the attribute view is the exact inventory
//! pattern of the class. A configurable fraction of the test split is
//! generated from a wrong class to act as mispronunciations, with
//! `spoken` recording the class the features were actually drawn from.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_feature_matrix, AttributeInventory, FeatureMatrix, PhoneSegment, SegmentSet, Split,
    View, MANIFEST_FILE,
};
use crate::error::{Error, Result};

fn default_speakers() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of phone classes, drawn in sorted order from the inventory.
    pub num_classes: usize,
    pub acoustic_dims: usize,
    pub bottleneck_dims: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Segments generated per class for each split.
    pub segments_per_class: SynthSplitSizes,
    /// Within-class Gaussian noise, per dimension.
    pub noise_sigma: f64,
    /// Fraction of the test split generated from a mismatched class.
    pub mispronunciation_rate: f64,
    #[serde(default = "default_speakers")]
    pub num_speakers: usize,
    /// Attribute inventory to use; the bundled Mandarin set when absent.
    #[serde(default)]
    pub inventory: Option<PathBuf>,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid("synth needs at least 2 classes"));
        }
        if self.acoustic_dims == 0 || self.bottleneck_dims == 0 {
            return Err(Error::invalid("synth dims must be at least 1"));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(Error::invalid(format!(
                "invalid frame range {}..={}",
                self.min_frames, self.max_frames
            )));
        }
        if !(0.0..=1.0).contains(&self.mispronunciation_rate) {
            return Err(Error::invalid("mispronunciation_rate must be in [0, 1]"));
        }
        if self.num_speakers == 0 {
            return Err(Error::invalid("synth needs at least 1 speaker"));
        }
        Ok(())
    }
}

/// Standard normal via Box-Muller; two uniform draws per sample keeps the
/// stream layout independent of any cached state.
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

struct ClassModel {
    phone: String,
    base: Vec<f64>,
    delta: Vec<f64>,
    pattern: FeatureMatrix,
}

impl ClassModel {
    fn trajectory_at(&self, u: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.delta)
            .map(|(b, d)| b + u * d)
            .collect()
    }
}

/// Writes a complete corpus under `out_dir` and returns the loaded set.
///
/// A pure function of `(config, seed)`: re-running produces byte-identical
/// files.
pub fn synth_corpus(config: &SynthConfig, seed: u64, out_dir: &Path) -> Result<SegmentSet> {
    config.validate()?;
    let inventory = match &config.inventory {
        Some(path) => AttributeInventory::from_file(path)?,
        None => AttributeInventory::default_mandarin(),
    };
    let phones = inventory.encodable_phones();
    if config.num_classes > phones.len() {
        return Err(Error::invalid(format!(
            "inventory provides {} phones, cannot make {} classes",
            phones.len(),
            config.num_classes
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let classes: Vec<ClassModel> = phones[..config.num_classes]
        .iter()
        .map(|phone| {
            let base = (0..config.acoustic_dims)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let delta = (0..config.acoustic_dims)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            Ok(ClassModel {
                phone: phone.clone(),
                base,
                delta,
                pattern: inventory.encode_pattern(phone)?.to_matrix(),
            })
        })
        .collect::<Result<_>>()?;

    // fixed linear map from acoustic to bottleneck space
    let scale = 1.0 / (config.acoustic_dims as f64).sqrt();
    let bottleneck_map: Vec<f64> = (0..config.bottleneck_dims * config.acoustic_dims)
        .map(|_| gauss(&mut rng) * scale)
        .collect();

    // which test segments are mispronounced, by flat test index
    let total_test = config.num_classes * config.segments_per_class.test;
    let quota = (config.mispronunciation_rate * total_test as f64).round() as usize;
    let mut test_order: Vec<usize> = (0..total_test).collect();
    test_order.shuffle(&mut rng);
    let mispronounced: BTreeSet<usize> = test_order.into_iter().take(quota).collect();

    let feats_dir = out_dir.join("feats");
    std::fs::create_dir_all(&feats_dir).map_err(|e| Error::io(&feats_dir, e))?;

    let mut segments = Vec::new();
    let mut test_flat = 0usize;
    for (split, count) in [
        (Split::Train, config.segments_per_class.train),
        (Split::Dev, config.segments_per_class.dev),
        (Split::Test, config.segments_per_class.test),
    ] {
        for class_idx in 0..config.num_classes {
            for i in 0..count {
                let canonical = classes[class_idx].phone.clone();
                let source_idx = if split == Split::Test {
                    let flat = test_flat;
                    test_flat += 1;
                    if mispronounced.contains(&flat) {
                        // draw features from a different class
                        let offset = rng.random_range(1..config.num_classes);
                        (class_idx + offset) % config.num_classes
                    } else {
                        class_idx
                    }
                } else {
                    class_idx
                };
                let source = &classes[source_idx];
                let spoken = source.phone.clone();
                let id = format!("{split}-{canonical}-{i:04}");
                let speaker = format!("spk{:02}", rng.random_range(0..config.num_speakers));
                let frames = rng.random_range(config.min_frames..=config.max_frames);

                let mut acoustic = Vec::with_capacity(frames * config.acoustic_dims);
                let mut clean = Vec::with_capacity(frames * config.acoustic_dims);
                for t in 0..frames {
                    let u = if frames == 1 {
                        0.0
                    } else {
                        t as f64 / (frames - 1) as f64
                    };
                    let traj = source.trajectory_at(u);
                    for v in &traj {
                        acoustic.push(v + config.noise_sigma * gauss(&mut rng));
                    }
                    clean.extend(traj);
                }
                let mut bottleneck = Vec::with_capacity(frames * config.bottleneck_dims);
                for t in 0..frames {
                    let frame = &clean[t * config.acoustic_dims..(t + 1) * config.acoustic_dims];
                    for r in 0..config.bottleneck_dims {
                        let mut acc = 0.0;
                        for (c, v) in frame.iter().enumerate() {
                            acc += bottleneck_map[r * config.acoustic_dims + c] * v;
                        }
                        bottleneck.push(acc + config.noise_sigma * gauss(&mut rng));
                    }
                }

                let views = [
                    (
                        View::Acoustic,
                        FeatureMatrix::new(frames, config.acoustic_dims, acoustic)?,
                    ),
                    (
                        View::Bottleneck,
                        FeatureMatrix::new(frames, config.bottleneck_dims, bottleneck)?,
                    ),
                    (View::Attribute, source.pattern.clone()),
                ];
                let mut view_paths = std::collections::BTreeMap::new();
                for (view, matrix) in &views {
                    let rel = PathBuf::from("feats").join(format!("{id}.{view}.phnf"));
                    write_feature_matrix(&out_dir.join(&rel), matrix)?;
                    view_paths.insert(*view, rel);
                }
                segments.push(PhoneSegment {
                    id,
                    spoken,
                    canonical,
                    speaker,
                    split,
                    views: view_paths,
                });
            }
        }
    }

    let set = SegmentSet::from_segments(out_dir, segments)?;
    set.write_manifest(&out_dir.join(MANIFEST_FILE))?;

    // ship the inventory actually used so the corpus is self-describing
    let inventory_bytes = match &config.inventory {
        Some(path) => crate::io::read_file(path)?,
        None => include_str!("../../data/mandarin_attributes_31.json")
            .as_bytes()
            .to_vec(),
    };
    crate::io::atomic_write(&out_dir.join("attributes.json"), &inventory_bytes)?;

    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest_dir;

    fn small_config() -> SynthConfig {
        SynthConfig {
            num_classes: 5,
            acoustic_dims: 4,
            bottleneck_dims: 3,
            min_frames: 5,
            max_frames: 9,
            segments_per_class: SynthSplitSizes {
                train: 20,
                dev: 2,
                test: 20,
            },
            noise_sigma: 0.2,
            mispronunciation_rate: 0.25,
            num_speakers: 4,
            inventory: None,
        }
    }

    #[test]
    fn five_classes_twenty_each_is_100_train_records() {
        let dir = tempfile::tempdir().unwrap();
        let set = synth_corpus(&small_config(), 7, dir.path()).unwrap();
        assert_eq!(set.split(Split::Train).count(), 100);
    }

    #[test]
    fn same_seed_twice_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_corpus(&small_config(), 42, a.path()).unwrap();
        synth_corpus(&small_config(), 42, b.path()).unwrap();
        assert_eq!(
            digest_dir(a.path()).unwrap(),
            digest_dir(b.path()).unwrap()
        );

        let c = tempfile::tempdir().unwrap();
        synth_corpus(&small_config(), 43, c.path()).unwrap();
        assert_ne!(
            digest_dir(a.path()).unwrap(),
            digest_dir(c.path()).unwrap()
        );
    }

    #[test]
    fn mispronunciation_quota_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        // 5 classes x 20 test segments = 100; rate 0.25 -> exactly 25
        let set = synth_corpus(&small_config(), 3, dir.path()).unwrap();
        let mispronounced = set
            .split(Split::Test)
            .filter(|s| s.spoken != s.canonical)
            .count();
        assert_eq!(mispronounced, 25);
    }

    #[test]
    fn attribute_view_is_the_exact_pattern_of_the_source_class() {
        let dir = tempfile::tempdir().unwrap();
        let set = synth_corpus(&small_config(), 9, dir.path()).unwrap();
        let inventory = AttributeInventory::default_mandarin();
        for segment in set.segments().iter().take(12) {
            let matrix = set.load_view(segment, View::Attribute).unwrap();
            let expected = inventory.encode_pattern(&segment.spoken).unwrap().to_matrix();
            assert_eq!(matrix, expected, "segment {}", segment.id);
        }
    }

    #[test]
    fn generated_corpus_loads_and_resolves_views() {
        let dir = tempfile::tempdir().unwrap();
        synth_corpus(&small_config(), 1, dir.path()).unwrap();
        let set = SegmentSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.len(), 5 * (20 + 2 + 20));
        let seg = &set.segments()[0];
        let acoustic = set.load_view(seg, View::Acoustic).unwrap();
        assert_eq!(acoustic.dims(), 4);
        assert!(acoustic.frames() >= 5 && acoustic.frames() <= 9);
    }
}
