//! Turns frame-labelled clips into fixed-length training samples.
//!
//! A clip is cut into windows starting at `0, stride, 2·stride, …`. A window
//! is kept when its most frequent label covers at least
//! `⌈retain_fraction · window_len⌉` frames; the kept window then contributes
//! `subsample_count` frames spaced `subsample_step` apart. Trailing partial
//! windows are dropped.
//!
//! A sample's feature vector is the mean of the per-frame feature rows at its
//! selected frames, reduced by pairwise summation in index order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset_model::{majority, ClassId, ClipRecord, DatasetManifest};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowingConfig {
    pub window_len: usize,
    pub stride: usize,
    pub retain_fraction: f64,
    pub subsample_count: usize,
    pub subsample_step: usize,
}

impl Default for WindowingConfig {
    fn default() -> Self {
        Self {
            window_len: 64,
            stride: 64,
            retain_fraction: 0.8,
            subsample_count: 16,
            subsample_step: 4,
        }
    }
}

impl WindowingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 {
            return Err(Error::Config("window_len and stride must be at least 1".into()));
        }
        if !(self.retain_fraction > 0.0 && self.retain_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "retain_fraction must be in (0, 1], got {}",
                self.retain_fraction
            )));
        }
        if self.subsample_count == 0 || self.subsample_step == 0 {
            return Err(Error::Config("subsample_count and subsample_step must be at least 1".into()));
        }
        if self.subsample_count * self.subsample_step > self.window_len {
            return Err(Error::Config(format!(
                "subsample_count × subsample_step = {} exceeds window_len {}",
                self.subsample_count * self.subsample_step,
                self.window_len
            )));
        }
        Ok(())
    }

    /// Minimum majority-label frame count for a window to be kept.
    pub fn retain_threshold(&self) -> usize {
        let exact = self.retain_fraction * self.window_len as f64;
        let nearest = exact.round();
        // A product that lands within rounding noise of an integer is that integer.
        if (exact - nearest).abs() < 1e-9 {
            nearest as usize
        } else {
            exact.ceil() as usize
        }
    }
}

/// Identity of a sample: its clip and window start.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId {
    pub clip_id: String,
    pub start_frame: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub clip_id: String,
    pub start_frame: usize,
    pub frame_indices: Vec<usize>,
    pub label: ClassId,
    /// Empty until a [`FeatureSource`] has been applied.
    pub features: Vec<f64>,
}

impl TrainingSample {
    pub fn id(&self) -> SampleId {
        SampleId {
            clip_id: self.clip_id.clone(),
            start_frame: self.start_frame,
        }
    }
}

/// Cuts one clip into retained windows. Features are left empty.
pub fn segment_clip(clip: &ClipRecord, cfg: &WindowingConfig) -> Result<Vec<TrainingSample>> {
    cfg.validate()?;
    let threshold = cfg.retain_threshold();
    let n = clip.frame_labels.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start + cfg.window_len <= n {
        let window = &clip.frame_labels[start..start + cfg.window_len];
        if let Some((label, count)) = majority(window) {
            if count >= threshold {
                out.push(TrainingSample {
                    clip_id: clip.clip_id.clone(),
                    start_frame: start,
                    frame_indices: (0..cfg.subsample_count).map(|k| start + k * cfg.subsample_step).collect(),
                    label,
                    features: Vec::new(),
                });
            }
        }
        start += cfg.stride;
    }
    Ok(out)
}

/// Row-major `frames × dim` matrix of per-frame features for one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRows {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FrameRows {
    pub fn frames(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> Option<&[f64]> {
        self.data.get(i * self.dim..(i + 1) * self.dim)
    }
}

/// Supplies per-frame feature rows for clips.
pub trait FeatureSource {
    fn dim(&self) -> usize;
    fn frame_rows(&self, clip: &ClipRecord) -> Result<FrameRows>;
}

/// Sum with a fixed binary-tree reduction order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let mid = n.div_ceil(2);
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean of the selected rows, per dimension.
pub fn reduce_frames(rows: &FrameRows, clip_id: &str, sample: &TrainingSample) -> Result<Vec<f64>> {
    let mut column = Vec::with_capacity(sample.frame_indices.len());
    let mut out = Vec::with_capacity(rows.dim);
    for j in 0..rows.dim {
        column.clear();
        for &f in &sample.frame_indices {
            let row = rows.row(f).ok_or_else(|| Error::Feature {
                clip_id: clip_id.to_string(),
                start_frame: Some(sample.start_frame),
                msg: format!("frame {f} missing (feature file has {} rows)", rows.frames()),
            })?;
            column.push(row[j]);
        }
        out.push(pairwise_sum(&column) / column.len() as f64);
    }
    Ok(out)
}

/// Segments every record in clip-id order and attaches features.
pub fn build_sample_set(
    manifest: &DatasetManifest,
    cfg: &WindowingConfig,
    source: &dyn FeatureSource,
) -> Result<Vec<TrainingSample>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for clip in manifest.sorted_records() {
        let mut samples = segment_clip(clip, cfg)?;
        if samples.is_empty() {
            continue;
        }
        let rows = source.frame_rows(clip)?;
        if rows.dim != source.dim() {
            return Err(Error::Feature {
                clip_id: clip.clip_id.clone(),
                start_frame: None,
                msg: format!("feature dimension {} does not match source dimension {}", rows.dim, source.dim()),
            });
        }
        for s in &mut samples {
            s.features = reduce_frames(&rows, &clip.clip_id, s)?;
        }
        out.extend(samples);
    }
    Ok(out)
}

/// Reads `<dir>/<clip_id>.feat` (or the record's own `feature_path`, relative to `dir`).
#[derive(Clone, Debug)]
pub struct SidecarFeatures {
    dir: PathBuf,
    dim: usize,
}

impl SidecarFeatures {
    pub fn new(dir: impl Into<PathBuf>, dim: usize) -> Self {
        Self { dir: dir.into(), dim }
    }

    /// Takes the dimension from the first sidecar found for `manifest`.
    pub fn detect(dir: impl Into<PathBuf>, manifest: &DatasetManifest) -> Result<Self> {
        let dir = dir.into();
        let Some(first) = manifest.sorted_records().into_iter().next() else {
            return Ok(Self { dir, dim: 0 });
        };
        let path = sidecar_path(&dir, first);
        let text = fs::read_to_string(&path).map_err(|e| Error::Feature {
            clip_id: first.clip_id.clone(),
            start_frame: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        let (dim, _) = parse_sidecar_header(text.lines().next().unwrap_or(""), &first.clip_id)?;
        Ok(Self { dir, dim })
    }

    pub fn path_for(&self, clip: &ClipRecord) -> PathBuf {
        sidecar_path(&self.dir, clip)
    }
}

fn sidecar_path(dir: &Path, clip: &ClipRecord) -> PathBuf {
    match &clip.feature_path {
        Some(p) => dir.join(p),
        None => dir.join(format!("{}.feat", clip.clip_id)),
    }
}

fn parse_sidecar_header(line: &str, clip_id: &str) -> Result<(usize, usize)> {
    let ferr = |msg: String| Error::Feature {
        clip_id: clip_id.to_string(),
        start_frame: None,
        msg,
    };
    let rest = line
        .strip_prefix("#features v1")
        .ok_or_else(|| ferr(format!("bad feature header `{line}`")))?;
    let mut dim = None;
    let mut frames = None;
    for tok in rest.split_whitespace() {
        if let Some(v) = tok.strip_prefix("d=") {
            dim = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("frames=") {
            frames = v.parse::<usize>().ok();
        }
    }
    match (dim, frames) {
        (Some(d), Some(f)) if d > 0 => Ok((d, f)),
        _ => Err(ferr(format!("bad feature header `{line}`"))),
    }
}

/// Parses a feature sidecar for `clip_id`.
pub fn parse_sidecar(text: &str, clip_id: &str) -> Result<FrameRows> {
    let ferr = |msg: String| Error::Feature {
        clip_id: clip_id.to_string(),
        start_frame: None,
        msg,
    };
    let mut lines = text.lines();
    let (dim, frames) = parse_sidecar_header(lines.next().unwrap_or(""), clip_id)?;
    let mut data = Vec::with_capacity(dim * frames);
    let mut rows = 0;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|e| ferr(format!("row {}: bad value `{tok}`: {e}", rows + 1)))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(ferr(format!("row {} has {} values, expected {dim}", rows + 1, data.len() - before)));
        }
        rows += 1;
    }
    if rows != frames {
        return Err(ferr(format!("truncated or oversized: header declares {frames} rows, found {rows}")));
    }
    Ok(FrameRows { dim, data })
}

/// Renders a sidecar file. Values use the shortest exact decimal form.
pub fn format_sidecar(rows: &FrameRows) -> String {
    let mut out = format!("#features v1 d={} frames={}\n", rows.dim, rows.frames());
    for i in 0..rows.frames() {
        let row = rows.row(i).unwrap_or_default();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

impl FeatureSource for SidecarFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn frame_rows(&self, clip: &ClipRecord) -> Result<FrameRows> {
        let path = self.path_for(clip);
        let text = fs::read_to_string(&path).map_err(|e| Error::Feature {
            clip_id: clip.clip_id.clone(),
            start_frame: None,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        let rows = parse_sidecar(&text, &clip.clip_id)?;
        if rows.frames() != clip.num_frames() {
            return Err(Error::Feature {
                clip_id: clip.clip_id.clone(),
                start_frame: None,
                msg: format!("feature file has {} rows but clip has {} frames", rows.frames(), clip.num_frames()),
            });
        }
        Ok(rows)
    }
}

/// One constant feature vector per clip, repeated on every frame.
#[derive(Clone, Debug, Default)]
pub struct InMemoryFeatures {
    dim: usize,
    by_clip: HashMap<String, Vec<f64>>,
}

impl InMemoryFeatures {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            by_clip: HashMap::new(),
        }
    }

    pub fn insert(&mut self, clip_id: impl Into<String>, features: Vec<f64>) {
        debug_assert_eq!(features.len(), self.dim);
        self.by_clip.insert(clip_id.into(), features);
    }

    pub fn get(&self, clip_id: &str) -> Option<&[f64]> {
        self.by_clip.get(clip_id).map(Vec::as_slice)
    }
}

impl FeatureSource for InMemoryFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn frame_rows(&self, clip: &ClipRecord) -> Result<FrameRows> {
        let v = self.get(&clip.clip_id).ok_or_else(|| Error::Feature {
            clip_id: clip.clip_id.clone(),
            start_frame: None,
            msg: "no features registered for clip".into(),
        })?;
        let mut data = Vec::with_capacity(v.len() * clip.num_frames());
        for _ in 0..clip.num_frames() {
            data.extend_from_slice(v);
        }
        Ok(FrameRows { dim: self.dim, data })
    }
}

/// Seeded generator: each frame row is its label's prototype plus Gaussian noise.
///
/// Prototypes are drawn from the seed; the noise stream is keyed by clip id, so a
/// clip's rows do not depend on which other clips are generated.
#[derive(Clone, Debug)]
pub struct SeededFeatures {
    dim: usize,
    seed: u64,
    noise_std: f64,
    prototypes: Vec<Vec<f64>>,
}

impl SeededFeatures {
    pub fn new(dim: usize, n_classes: usize, noise_std: f64, seed: u64) -> Self {
        let mut rng = seed::rng(seed, 0);
        let prototypes = (0..n_classes)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        Self {
            dim,
            seed,
            noise_std,
            prototypes,
        }
    }
}

impl FeatureSource for SeededFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn frame_rows(&self, clip: &ClipRecord) -> Result<FrameRows> {
        let mut rng = seed::rng(self.seed, seed::key_of(&clip.clip_id));
        let mut data = Vec::with_capacity(self.dim * clip.num_frames());
        for &l in &clip.frame_labels {
            let proto = self.prototypes.get(l).ok_or_else(|| Error::Feature {
                clip_id: clip.clip_id.clone(),
                start_frame: None,
                msg: format!("label {l} has no prototype"),
            })?;
            for &p in proto {
                let z: f64 = StandardNormal.sample(&mut rng);
                data.push(p + self.noise_std * z);
            }
        }
        Ok(FrameRows { dim: self.dim, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset_model::{decode_rle, DomainTag, Fps};

    fn clip(rle: &str) -> ClipRecord {
        ClipRecord {
            clip_id: "c".into(),
            subject_id: "s".into(),
            domain: DomainTag::SynAerial,
            fps: Fps::default(),
            frame_labels: decode_rle(rle).unwrap(),
            feature_path: None,
        }
    }

    #[test]
    fn uniform_clip_gives_two_windows() {
        let s = segment_clip(&clip("3:128"), &WindowingConfig::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| x.label == 3));
        assert_eq!(s[0].frame_indices, (0..16).map(|k| 4 * k).collect::<Vec<_>>());
        assert_eq!(s[1].start_frame, 64);
        assert_eq!(s[1].frame_indices[15], 124);
    }

    #[test]
    fn threshold_is_52_of_64() {
        let cfg = WindowingConfig::default();
        assert_eq!(cfg.retain_threshold(), 52);
        let kept = segment_clip(&clip("2:52,0:12"), &cfg).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].label, 2);
        assert!(segment_clip(&clip("2:51,0:13"), &cfg).unwrap().is_empty());
    }

    #[test]
    fn exact_products_are_not_bumped() {
        let cfg = WindowingConfig {
            retain_fraction: 0.75,
            ..Default::default()
        };
        assert_eq!(cfg.retain_threshold(), 48);
        let cfg = WindowingConfig {
            window_len: 10,
            retain_fraction: 0.3,
            subsample_count: 2,
            subsample_step: 2,
            stride: 10,
        };
        assert_eq!(cfg.retain_threshold(), 3);
    }

    #[test]
    fn short_clip_and_partial_tail() {
        let cfg = WindowingConfig::default();
        assert!(segment_clip(&clip("0:63"), &cfg).unwrap().is_empty());
        assert_eq!(segment_clip(&clip("0:127"), &cfg).unwrap().len(), 1);
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = WindowingConfig {
            subsample_count: 17,
            ..Default::default()
        };
        assert!(matches!(segment_clip(&clip("0:64"), &cfg), Err(Error::Config(_))));
        let cfg = WindowingConfig {
            stride: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn pairwise_mean_of_identical_rows_is_exact() {
        let xs = vec![0.1f64; 16];
        assert_eq!(pairwise_sum(&xs) / 16.0, 0.1);
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn sidecar_round_trip() {
        let rows = FrameRows {
            dim: 2,
            data: vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0],
        };
        let text = format_sidecar(&rows);
        assert!(text.starts_with("#features v1 d=2 frames=2\n"));
        assert_eq!(parse_sidecar(&text, "c").unwrap(), rows);
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        let err = parse_sidecar(&truncated, "c").unwrap_err();
        assert!(matches!(err, Error::Feature { ref clip_id, .. } if clip_id == "c"));
    }

    #[test]
    fn seeded_source_is_clip_keyed() {
        let src = SeededFeatures::new(3, 12, 0.5, 9);
        let a = src.frame_rows(&clip("1:8")).unwrap();
        let b = src.frame_rows(&clip("1:8")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames(), 8);
    }
}
