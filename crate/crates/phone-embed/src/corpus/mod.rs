//! Corpus loading, validation, normalization, and synthesis.
//!
//! A corpus directory holds a `manifest.jsonl` (one JSON record per line)
//! plus the binary feature files it references. Views are resolved lazily:
//! loading a manifest touches no feature file.

mod attributes;
mod cmvn;
mod features;
mod pca;
mod pipeline;
mod synth;

pub use attributes::{AttributeInventory, AttributePattern, NUM_ATTRIBUTES, PATTERN_ROWS};
pub use cmvn::{CmvnStats, STDDEV_FLOOR};
pub use features::{
    feature_matrix_bytes, pad_or_truncate, read_feature_matrix, write_feature_matrix,
    FeatureMatrix, DEFAULT_TARGET_FRAMES,
};
pub use pca::{PcaModel, DEFAULT_PCA_DIMS};
pub use pipeline::ViewPipeline;
pub use synth::{synth_corpus, SynthConfig, SynthSplitSizes};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// File name of the manifest inside a corpus directory.
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// The three input views a segment may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Acoustic,
    Bottleneck,
    Attribute,
}

impl View {
    pub const ALL: [View; 3] = [View::Acoustic, View::Bottleneck, View::Attribute];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Acoustic => "acoustic",
            View::Bottleneck => "bottleneck",
            View::Attribute => "attribute",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acoustic" => Ok(View::Acoustic),
            "bottleneck" => Ok(View::Bottleneck),
            "attribute" => Ok(View::Attribute),
            other => Err(Error::invalid(format!(
                "unknown view `{other}`, expected acoustic|bottleneck|attribute"
            ))),
        }
    }
}

/// Dataset split of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!(
                "unknown split `{other}`, expected train|dev|test"
            ))),
        }
    }
}

/// One aligned phone occurrence.
///
/// `spoken == canonical` iff the segment is a correct pronunciation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhoneSegment {
    pub id: String,
    pub spoken: String,
    pub canonical: String,
    pub speaker: String,
    pub split: Split,
    /// View name to feature-file path, relative to the corpus directory.
    pub views: BTreeMap<View, PathBuf>,
}

impl PhoneSegment {
    pub fn is_correct(&self) -> bool {
        self.spoken == self.canonical
    }

    pub fn has_view(&self, view: View) -> bool {
        self.views.contains_key(&view)
    }
}

/// An immutable collection of segments with lazy view resolution.
#[derive(Debug, Clone)]
pub struct SegmentSet {
    base: PathBuf,
    segments: Vec<PhoneSegment>,
    by_id: BTreeMap<String, usize>,
}

impl SegmentSet {
    /// Loads `manifest.jsonl` from a corpus directory.
    pub fn load_dir(dir: &Path) -> Result<SegmentSet> {
        SegmentSet::load_manifest(&dir.join(MANIFEST_FILE))
    }

    /// Parses a line-delimited manifest; feature files are not touched.
    pub fn load_manifest(path: &Path) -> Result<SegmentSet> {
        let bytes = io::read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("not valid UTF-8: {e}"),
        })?;
        let base = path
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let mut segments = Vec::new();
        let mut by_id = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let segment: PhoneSegment =
                serde_json::from_str(line).map_err(|e| Error::ManifestParse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            if by_id
                .insert(segment.id.clone(), segments.len())
                .is_some()
            {
                return Err(Error::DuplicateSegment { id: segment.id });
            }
            segments.push(segment);
        }
        Ok(SegmentSet {
            base,
            segments,
            by_id,
        })
    }

    /// Builds a set from in-memory segments (used by the synthesizer).
    pub fn from_segments(base: &Path, segments: Vec<PhoneSegment>) -> Result<SegmentSet> {
        let mut by_id = BTreeMap::new();
        for (i, segment) in segments.iter().enumerate() {
            if by_id.insert(segment.id.clone(), i).is_some() {
                return Err(Error::DuplicateSegment {
                    id: segment.id.clone(),
                });
            }
        }
        Ok(SegmentSet {
            base: base.to_path_buf(),
            segments,
            by_id,
        })
    }

    /// Serializes all segments back to manifest lines.
    pub fn manifest_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for segment in &self.segments {
            out.extend_from_slice(
                serde_json::to_string(segment)
                    .expect("segments always serialize")
                    .as_bytes(),
            );
            out.push(b'\n');
        }
        out
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, &self.manifest_bytes())
    }

    pub fn base_dir(&self) -> &Path {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[PhoneSegment] {
        &self.segments
    }

    pub fn get(&self, id: &str) -> Option<&PhoneSegment> {
        self.by_id.get(id).map(|&i| &self.segments[i])
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &PhoneSegment> {
        self.segments.iter().filter(move |s| s.split == split)
    }

    /// Absolute path of a segment's view file.
    pub fn view_path(&self, segment: &PhoneSegment, view: View) -> Result<PathBuf> {
        let rel = segment.views.get(&view).ok_or_else(|| Error::MissingView {
            id: segment.id.clone(),
            view,
        })?;
        Ok(self.base.join(rel))
    }

    /// Reads one view of one segment from disk.
    pub fn load_view(&self, segment: &PhoneSegment, view: View) -> Result<FeatureMatrix> {
        let path = self.view_path(segment, view)?;
        if !path.exists() {
            return Err(Error::UnresolvedView {
                id: segment.id.clone(),
                view,
                path,
            });
        }
        read_feature_matrix(&path)
    }

    /// Distinct spoken labels in a split, sorted.
    pub fn labels(&self, split: Split) -> Vec<String> {
        let mut labels: Vec<String> = self
            .split(split)
            .map(|s| s.spoken.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        labels.sort();
        labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, spoken: &str) -> String {
        format!(
            r#"{{"id":"{id}","spoken":"{spoken}","canonical":"{spoken}","speaker":"spk0","split":"train","views":{{"acoustic":"feats/{id}.phnf"}}}}"#
        )
    }

    #[test]
    fn loads_three_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = [record("s0", "a"), record("s1", "b"), record("s2", "a")].join("\n");
        std::fs::write(&path, text).unwrap();
        let set = SegmentSet::load_manifest(&path).unwrap();
        assert_eq!(set.len(), 3);
        assert_eq!(set.get("s1").unwrap().spoken, "b");
        assert_eq!(set.labels(Split::Train), vec!["a", "b"]);
    }

    #[test]
    fn empty_manifest_is_an_empty_set() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        std::fs::write(&path, "").unwrap();
        assert_eq!(SegmentSet::load_manifest(&path).unwrap().len(), 0);
    }

    #[test]
    fn duplicate_id_is_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = [record("dup", "a"), record("dup", "b")].join("\n");
        std::fs::write(&path, text).unwrap();
        match SegmentSet::load_manifest(&path).unwrap_err() {
            Error::DuplicateSegment { id } => assert_eq!(id, "dup"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_record_reports_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = format!("{}\nnot json\n", record("s0", "a"));
        std::fs::write(&path, text).unwrap();
        match SegmentSet::load_manifest(&path).unwrap_err() {
            Error::ManifestParse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_feature_file_names_the_segment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        std::fs::write(&path, record("lost", "a")).unwrap();
        let set = segment_set(&path);
        let seg = set.get("lost").unwrap().clone();
        match set.load_view(&seg, View::Acoustic).unwrap_err() {
            Error::UnresolvedView { id, .. } => assert_eq!(id, "lost"),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(matches!(
            set.load_view(&seg, View::Bottleneck).unwrap_err(),
            Error::MissingView { .. }
        ));
    }

    fn segment_set(path: &Path) -> SegmentSet {
        SegmentSet::load_manifest(path).unwrap()
    }

    #[test]
    fn manifest_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = format!("{}\n{}\n", record("s0", "a"), record("s1", "b"));
        std::fs::write(&path, &text).unwrap();
        let set = SegmentSet::load_manifest(&path).unwrap();
        let out = dir.path().join("copy.jsonl");
        set.write_manifest(&out).unwrap();
        let second = SegmentSet::load_manifest(&out).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), second.manifest_bytes());
    }
}
