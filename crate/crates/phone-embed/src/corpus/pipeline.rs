//! Fitted per-view preprocessing: the transforms between raw feature files
//! and network inputs.
//!
//! - acoustic: global CMVN over the training split, then padding to the
//!   fixed frame count;
//! - bottleneck: optional PCA fitted on training frames, then padding;
//! - attribute: the raw 3x31 pattern, untouched.

use std::collections::BTreeMap;

use crate::corpus::{
    pad_or_truncate, CmvnStats, FeatureMatrix, PcaModel, SegmentSet, Split, View,
};
use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone)]
enum Transform {
    Cmvn(CmvnStats),
    Pca(Option<PcaModel>),
    Identity,
}

/// Preprocessing for one view, fitted on the training split.
#[derive(Debug, Clone)]
pub struct ViewPipeline {
    view: View,
    transform: Transform,
    pad_frames: Option<usize>,
    output_dims: usize,
}

impl ViewPipeline {
    /// Fits the view's transforms on the training split of `set`.
    ///
    /// `pca_dims` applies to the bottleneck view only; `None` keeps raw
    /// bottleneck dimensions.
    pub fn fit(
        set: &SegmentSet,
        view: View,
        pad_frames: usize,
        pca_dims: Option<usize>,
    ) -> Result<ViewPipeline> {
        let train: Vec<FeatureMatrix> = set
            .split(Split::Train)
            .map(|seg| set.load_view(seg, view))
            .collect::<Result<_>>()?;
        if train.is_empty() {
            return Err(Error::invalid(format!(
                "cannot fit a {view} pipeline on an empty training split"
            )));
        }
        let raw_dims = train[0].dims();
        let (transform, pad, output_dims) = match view {
            View::Acoustic => (
                Transform::Cmvn(CmvnStats::fit(train.iter())?),
                Some(pad_frames),
                raw_dims,
            ),
            View::Bottleneck => match pca_dims {
                Some(dims) => (
                    Transform::Pca(Some(PcaModel::fit(train.iter(), dims)?)),
                    Some(pad_frames),
                    dims,
                ),
                None => (Transform::Pca(None), Some(pad_frames), raw_dims),
            },
            View::Attribute => (Transform::Identity, None, raw_dims),
        };
        Ok(ViewPipeline {
            view,
            transform,
            pad_frames: pad,
            output_dims,
        })
    }

    pub fn view(&self) -> View {
        self.view
    }

    /// Width of the matrices this pipeline produces.
    pub fn output_dims(&self) -> usize {
        self.output_dims
    }

    pub fn apply(&self, matrix: &FeatureMatrix) -> Result<FeatureMatrix> {
        let transformed = match &self.transform {
            Transform::Cmvn(stats) => stats.apply(matrix)?,
            Transform::Pca(Some(model)) => model.apply(matrix)?,
            Transform::Pca(None) | Transform::Identity => matrix.clone(),
        };
        Ok(match self.pad_frames {
            Some(target) => pad_or_truncate(&transformed, target),
            None => transformed,
        })
    }

    /// Loads and preprocesses this view for every segment of the splits,
    /// keyed by segment id.
    pub fn prepare(
        &self,
        set: &SegmentSet,
        splits: &[Split],
    ) -> Result<BTreeMap<String, FeatureMatrix>> {
        let segments: Vec<&crate::corpus::PhoneSegment> = splits
            .iter()
            .flat_map(|&split| set.split(split))
            .collect();
        let prepared: Vec<Result<(String, FeatureMatrix)>> =
            exec::map_ordered(&segments, |seg| {
                let raw = set.load_view(seg, self.view)?;
                Ok((seg.id.clone(), self.apply(&raw)?))
            });
        prepared.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, SynthConfig, SynthSplitSizes};

    fn corpus() -> (tempfile::TempDir, SegmentSet) {
        let dir = tempfile::tempdir().unwrap();
        let config = SynthConfig {
            num_classes: 3,
            acoustic_dims: 4,
            bottleneck_dims: 6,
            min_frames: 10,
            max_frames: 20,
            segments_per_class: SynthSplitSizes {
                train: 6,
                dev: 2,
                test: 2,
            },
            noise_sigma: 0.1,
            mispronunciation_rate: 0.5,
            num_speakers: 2,
            inventory: None,
        };
        let set = synth_corpus(&config, 11, dir.path()).unwrap();
        (dir, set)
    }

    #[test]
    fn acoustic_pipeline_standardizes_and_pads() {
        let (_dir, set) = corpus();
        let pipeline = ViewPipeline::fit(&set, View::Acoustic, 58, None).unwrap();
        assert_eq!(pipeline.output_dims(), 4);
        let prepared = pipeline.prepare(&set, &[Split::Train, Split::Dev]).unwrap();
        assert_eq!(prepared.len(), 3 * 8);
        for matrix in prepared.values() {
            assert_eq!(matrix.frames(), 58);
            assert_eq!(matrix.dims(), 4);
        }
    }

    #[test]
    fn bottleneck_pipeline_reduces_dimensionality() {
        let (_dir, set) = corpus();
        let pipeline = ViewPipeline::fit(&set, View::Bottleneck, 58, Some(3)).unwrap();
        assert_eq!(pipeline.output_dims(), 3);
        let seg = set.split(Split::Train).next().unwrap();
        let out = pipeline
            .apply(&set.load_view(seg, View::Bottleneck).unwrap())
            .unwrap();
        assert_eq!((out.frames(), out.dims()), (58, 3));
    }

    #[test]
    fn attribute_pipeline_is_identity() {
        let (_dir, set) = corpus();
        let pipeline = ViewPipeline::fit(&set, View::Attribute, 58, None).unwrap();
        assert_eq!(pipeline.output_dims(), 31);
        let seg = set.split(Split::Train).next().unwrap();
        let raw = set.load_view(seg, View::Attribute).unwrap();
        assert_eq!(pipeline.apply(&raw).unwrap(), raw);
    }
}
