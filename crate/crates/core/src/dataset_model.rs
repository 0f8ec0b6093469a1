//! Clip manifests: tagged collections of frame-labelled clips.
//!
//! Manifest files are line-delimited. The first line is `#manifest v1`
//! (optionally followed by a provenance string), then one record per line:
//!
//! ```text
//! clip_id<TAB>subject_id<TAB>domain<TAB>fps<TAB>rle_labels[<TAB>feature_path]
//! ```
//!
//! `rle_labels` is a comma-separated list of `label:count` runs, e.g.
//! `0:30,3:64,0:10`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Action class identifier; an index into the [`ClassRegistry`].
pub type ClassId = usize;

/// Number of classes in the canonical registry.
pub const NUM_CLASSES: usize = 12;

const CANONICAL_NAMES: [&str; NUM_CLASSES] = [
    "idle",
    "wave",
    "wave attention",
    "shake fist",
    "move forward",
    "come here",
    "take picture with phone",
    "carry a shovel",
    "carry a bat",
    "carry a phone",
    "talk on a phone",
    "hold flashlight",
];

const MANIFEST_HEADER: &str = "#manifest v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    SynAerial,
    RealGround,
    /// Evaluation-only domain; never used for training.
    RealAerial,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::SynAerial => "syn_aerial",
            DomainTag::RealGround => "real_ground",
            DomainTag::RealAerial => "real_aerial",
        }
    }

    pub fn is_trainable(self) -> bool {
        !matches!(self, DomainTag::RealAerial)
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DomainTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "syn_aerial" => Ok(DomainTag::SynAerial),
            "real_ground" => Ok(DomainTag::RealGround),
            "real_aerial" => Ok(DomainTag::RealAerial),
            other => Err(format!("unknown domain `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionClass {
    pub id: ClassId,
    pub name: String,
}

/// Ordered list of action classes; ids are dense `0..len`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRegistry {
    classes: Vec<ActionClass>,
}

impl ClassRegistry {
    /// The twelve-class action registry.
    pub fn canonical() -> Self {
        Self {
            classes: CANONICAL_NAMES
                .iter()
                .enumerate()
                .map(|(id, name)| ActionClass {
                    id,
                    name: (*name).to_string(),
                })
                .collect(),
        }
    }

    pub fn new(classes: Vec<ActionClass>) -> Result<Self> {
        for (i, c) in classes.iter().enumerate() {
            if c.id != i {
                return Err(Error::Validation(format!(
                    "class registry ids must be dense and ordered; entry {i} has id {}",
                    c.id
                )));
            }
        }
        Ok(Self { classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        id < self.classes.len()
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.classes.get(id).map(|c| c.name.as_str())
    }

    pub fn classes(&self) -> &[ActionClass] {
        &self.classes
    }

    /// Parses a registry file: one `id<TAB>name` per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "expected `id<TAB>name`".into(),
            })?;
            let id = id.trim().parse::<ClassId>().map_err(|e| Error::Parse {
                line: line_no,
                msg: format!("bad class id: {e}"),
            })?;
            classes.push(ActionClass {
                id,
                name: name.to_string(),
            });
        }
        Self::new(classes)
    }

    pub fn to_file_string(&self) -> String {
        self.classes
            .iter()
            .map(|c| format!("{}\t{}\n", c.id, c.name))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

impl Default for ClassRegistry {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Frames per second as a positive rational.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fps {
    pub num: u32,
    pub den: u32,
}

impl Fps {
    pub fn new(num: u32, den: u32) -> Option<Self> {
        (num > 0 && den > 0).then_some(Self { num, den })
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl Default for Fps {
    fn default() -> Self {
        Self { num: 30, den: 1 }
    }
}

impl fmt::Display for Fps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for Fps {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n, d),
            None => (s, "1"),
        };
        let num = n.trim().parse::<u32>().map_err(|e| format!("bad fps `{s}`: {e}"))?;
        let den = d.trim().parse::<u32>().map_err(|e| format!("bad fps `{s}`: {e}"))?;
        Fps::new(num, den).ok_or_else(|| format!("fps must be positive, got `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub subject_id: String,
    pub domain: DomainTag,
    pub fps: Fps,
    pub frame_labels: Vec<ClassId>,
    pub feature_path: Option<String>,
}

impl ClipRecord {
    pub fn num_frames(&self) -> usize {
        self.frame_labels.len()
    }

    /// Majority frame label; ties go to the smaller class id.
    pub fn majority_label(&self) -> Option<ClassId> {
        majority(&self.frame_labels).map(|(label, _)| label)
    }
}

/// Most frequent label and its count; ties go to the smaller id.
pub fn majority(labels: &[ClassId]) -> Option<(ClassId, usize)> {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    // BTreeMap iterates ascending, so `>` keeps the first (smallest) id on ties.
    let mut best: Option<(ClassId, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best
}

/// Run-length encodes frame labels as `label:count` pairs.
pub fn encode_rle(labels: &[ClassId]) -> String {
    let mut out = String::new();
    let mut iter = labels.iter().peekable();
    while let Some(&l) = iter.next() {
        let mut n = 1usize;
        while iter.peek() == Some(&&l) {
            iter.next();
            n += 1;
        }
        if !out.is_empty() {
            out.push(',');
        }
        out.push_str(&format!("{l}:{n}"));
    }
    out
}

/// Expands `label:count` runs. Zero-length runs are rejected.
pub fn decode_rle(s: &str) -> std::result::Result<Vec<ClassId>, String> {
    let mut labels = Vec::new();
    if s.trim().is_empty() {
        return Ok(labels);
    }
    for run in s.split(',') {
        let (l, n) = run
            .split_once(':')
            .ok_or_else(|| format!("run `{run}` is not `label:count`"))?;
        let l = l.trim().parse::<ClassId>().map_err(|e| format!("bad label in `{run}`: {e}"))?;
        let n = n.trim().parse::<usize>().map_err(|e| format!("bad count in `{run}`: {e}"))?;
        if n == 0 {
            return Err(format!("run `{run}` has zero length"));
        }
        labels.extend(std::iter::repeat_n(l, n));
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ClipRecord>,
    pub class_registry: ClassRegistry,
    pub provenance: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HistogramLevel {
    /// One count per clip under its majority label.
    Clip,
    /// One count per frame label.
    Frame,
}

impl DatasetManifest {
    pub fn new(records: Vec<ClipRecord>, class_registry: ClassRegistry, provenance: impl Into<String>) -> Result<Self> {
        let m = Self {
            records,
            class_registry,
            provenance: provenance.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn empty(class_registry: ClassRegistry) -> Self {
        Self {
            records: Vec::new(),
            class_registry,
            provenance: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.records.iter().map(ClipRecord::num_frames).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.clip_id.as_str()) {
                return Err(Error::Validation(format!("duplicate clip_id `{}`", r.clip_id)));
            }
            if r.frame_labels.is_empty() {
                return Err(Error::Validation(format!("clip `{}` has empty frame_labels", r.clip_id)));
            }
            if let Some(&bad) = r.frame_labels.iter().find(|&&l| !self.class_registry.contains(l)) {
                return Err(Error::Validation(format!(
                    "unknown class id {bad} in clip `{}`",
                    r.clip_id
                )));
            }
        }
        Ok(())
    }

    /// Record indices per subject.
    pub fn subject_index(&self) -> BTreeMap<String, Vec<usize>> {
        let mut idx: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            idx.entry(r.subject_id.clone()).or_default().push(i);
        }
        idx
    }

    /// Record indices per domain.
    pub fn domain_index(&self) -> BTreeMap<DomainTag, Vec<usize>> {
        let mut idx: BTreeMap<DomainTag, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            idx.entry(r.domain).or_default().push(i);
        }
        idx
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.subject_id.as_str()).collect()
    }

    /// Records sorted by clip id.
    pub fn sorted_records(&self) -> Vec<&ClipRecord> {
        let mut v: Vec<&ClipRecord> = self.records.iter().collect();
        v.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        v
    }

    /// Parses manifest text against `registry`.
    pub fn parse(text: &str, registry: ClassRegistry) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let provenance = loop {
            match lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((i, l)) => {
                    let rest = l.strip_prefix(MANIFEST_HEADER).ok_or_else(|| Error::Parse {
                        line: i + 1,
                        msg: format!("expected header `{MANIFEST_HEADER}`"),
                    })?;
                    break rest.trim().to_string();
                }
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        msg: "empty manifest file".into(),
                    })
                }
            }
        };

        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            records.push(parse_record(line, line_no)?);
        }
        Self::new(records, registry, provenance)
    }

    /// Canonical text form: header, then records sorted by clip id.
    pub fn to_file_string(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        if !self.provenance.is_empty() {
            out.push(' ');
            out.push_str(&self.provenance);
        }
        out.push('\n');
        for r in self.sorted_records() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}",
                r.clip_id,
                r.subject_id,
                r.domain,
                r.fps,
                encode_rle(&r.frame_labels)
            ));
            if let Some(p) = &r.feature_path {
                out.push('\t');
                out.push_str(p);
            }
            out.push('\n');
        }
        out
    }
}

fn parse_record(line: &str, line_no: usize) -> Result<ClipRecord> {
    let perr = |msg: String| Error::Parse { line: line_no, msg };
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if !(5..=6).contains(&fields.len()) {
        return Err(perr(format!("expected 5 or 6 tab-separated fields, found {}", fields.len())));
    }
    if fields[0].is_empty() {
        return Err(perr("empty clip_id".into()));
    }
    let domain = fields[2].parse::<DomainTag>().map_err(perr)?;
    let fps = fields[3].parse::<Fps>().map_err(perr)?;
    let frame_labels = decode_rle(fields[4]).map_err(perr)?;
    Ok(ClipRecord {
        clip_id: fields[0].to_string(),
        subject_id: fields[1].to_string(),
        domain,
        fps,
        frame_labels,
        feature_path: fields.get(5).filter(|s| !s.is_empty()).map(|s| s.to_string()),
    })
}

/// Loads and validates a manifest using the canonical class registry.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    load_manifest_with_registry(path, ClassRegistry::canonical())
}

pub fn load_manifest_with_registry(path: impl AsRef<Path>, registry: ClassRegistry) -> Result<DatasetManifest> {
    DatasetManifest::parse(&fs::read_to_string(path)?, registry)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, manifest.to_file_string())?;
    Ok(())
}

/// Per-class counts over every registry class (zeros included).
pub fn class_histogram(manifest: &DatasetManifest, level: HistogramLevel) -> BTreeMap<ClassId, usize> {
    let mut hist: BTreeMap<ClassId, usize> = (0..manifest.class_registry.len()).map(|c| (c, 0)).collect();
    for r in &manifest.records {
        match level {
            HistogramLevel::Clip => {
                if let Some(l) = r.majority_label() {
                    *hist.entry(l).or_default() += 1;
                }
            }
            HistogramLevel::Frame => {
                for &l in &r.frame_labels {
                    *hist.entry(l).or_default() += 1;
                }
            }
        }
    }
    hist
}

/// Drops every record whose subject is in `excluded`.
///
/// Returns the filtered manifest and the excluded subjects that never appeared.
pub fn filter_subjects(manifest: &DatasetManifest, excluded: &BTreeSet<String>) -> (DatasetManifest, Vec<String>) {
    let present = manifest.subjects();
    let missing: Vec<String> = excluded
        .iter()
        .filter(|s| !present.contains(s.as_str()))
        .cloned()
        .collect();
    for s in &missing {
        log::warn!("excluded subject `{s}` does not appear in the manifest");
    }
    let records = manifest
        .records
        .iter()
        .filter(|r| !excluded.contains(&r.subject_id))
        .cloned()
        .collect();
    (
        DatasetManifest {
            records,
            class_registry: manifest.class_registry.clone(),
            provenance: manifest.provenance.clone(),
        },
        missing,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, subject: &str, labels: Vec<ClassId>) -> ClipRecord {
        ClipRecord {
            clip_id: id.into(),
            subject_id: subject.into(),
            domain: DomainTag::RealGround,
            fps: Fps::default(),
            frame_labels: labels,
            feature_path: None,
        }
    }

    #[test]
    fn registry_matches_action_list() {
        let r = ClassRegistry::canonical();
        assert_eq!(r.len(), 12);
        assert_eq!(r.name(0), Some("idle"));
        assert_eq!(r.name(6), Some("take picture with phone"));
        assert_eq!(r.name(11), Some("hold flashlight"));
        assert_eq!(ClassRegistry::parse(&r.to_file_string()).unwrap(), r);
    }

    #[test]
    fn single_record_manifest() {
        let text = "#manifest v1\nc0\ts1\treal_ground\t30\t0:64\n";
        let m = DatasetManifest::parse(text, ClassRegistry::canonical()).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.records[0].frame_labels, vec![0; 64]);
        assert_eq!(m.to_file_string(), text);
    }

    #[test]
    fn unknown_class_is_rejected() {
        let text = "#manifest v1\nc0\ts1\treal_ground\t30\t12:64\n";
        let err = DatasetManifest::parse(text, ClassRegistry::canonical()).unwrap_err();
        assert!(err.to_string().contains("unknown class id"), "{err}");
    }

    #[test]
    fn duplicate_clip_and_bad_lines() {
        let dup = "#manifest v1\nc0\ts1\treal_ground\t30\t0:4\nc0\ts2\treal_ground\t30\t1:4\n";
        assert!(matches!(
            DatasetManifest::parse(dup, ClassRegistry::canonical()),
            Err(Error::Validation(_))
        ));
        let bad = "#manifest v1\nc0\ts1\treal_ground\t30\t0:4\nc1\ts1\tmars\t30\t0:4\n";
        match DatasetManifest::parse(bad, ClassRegistry::canonical()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let zero = "#manifest v1\nc0\ts1\treal_ground\t30\t0:0\n";
        assert!(matches!(
            DatasetManifest::parse(zero, ClassRegistry::canonical()),
            Err(Error::Parse { line: 2, .. })
        ));
        let no_header = "c0\ts1\treal_ground\t30\t0:4\n";
        assert!(matches!(
            DatasetManifest::parse(no_header, ClassRegistry::canonical()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn histogram_majority_and_frames() {
        let reg = ClassRegistry::canonical();
        let empty = DatasetManifest::empty(reg.clone());
        assert!(class_histogram(&empty, HistogramLevel::Clip).values().all(|&c| c == 0));

        let mut labels = vec![2; 52];
        labels.extend(vec![0; 12]);
        let m = DatasetManifest::new(vec![rec("a", "s", labels)], reg, "").unwrap();
        let clip = class_histogram(&m, HistogramLevel::Clip);
        assert_eq!(clip[&2], 1);
        assert_eq!(clip.values().sum::<usize>(), 1);
        let frame = class_histogram(&m, HistogramLevel::Frame);
        assert_eq!((frame[&2], frame[&0]), (52, 12));
        assert_eq!(frame.values().sum::<usize>(), 64);
    }

    #[test]
    fn majority_ties_prefer_smaller_id() {
        assert_eq!(majority(&[5, 5, 3, 3]), Some((3, 2)));
        assert_eq!(majority(&[]), None);
    }

    #[test]
    fn filter_reports_missing_subjects() {
        let reg = ClassRegistry::canonical();
        let m = DatasetManifest::new(
            vec![rec("a", "s1", vec![0]), rec("b", "s2", vec![1]), rec("c", "s1", vec![2])],
            reg,
            "",
        )
        .unwrap();
        let (same, missing) = filter_subjects(&m, &BTreeSet::new());
        assert_eq!(same, m);
        assert!(missing.is_empty());

        let ex: BTreeSet<String> = ["s1".to_string(), "s9".to_string()].into();
        let (out, missing) = filter_subjects(&m, &ex);
        assert_eq!(out.len(), 1);
        assert_eq!(out.records[0].clip_id, "b");
        assert_eq!(missing, vec!["s9".to_string()]);

        let all: BTreeSet<String> = ["s1".to_string(), "s2".to_string()].into();
        assert!(filter_subjects(&m, &all).0.is_empty());
    }

    #[test]
    fn rle_round_trip() {
        let labels = decode_rle("0:30,3:64,0:10").unwrap();
        assert_eq!(labels.len(), 104);
        assert_eq!(encode_rle(&labels), "0:30,3:64,0:10");
        assert_eq!(encode_rle(&decode_rle("1:2,1:3").unwrap()), "1:5");
    }

    #[test]
    fn fps_parsing() {
        assert_eq!("30".parse::<Fps>().unwrap(), Fps { num: 30, den: 1 });
        assert_eq!("30000/1001".parse::<Fps>().unwrap().to_string(), "30000/1001");
        assert!("0".parse::<Fps>().is_err());
    }
}
