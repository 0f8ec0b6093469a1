//! Sample pools, class-balanced oversampling and balanced subset splits.
//!
//! A [`SamplePool`] is an ordered multiset: each entry is one distinct sample
//! with a multiplicity. Oversampling only raises multiplicities, so a pool can
//! be archived as a list of `(identity, multiplicity)` lines and restored
//! exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::clip_pipeline::{SampleId, TrainingSample};
use crate::dataset_model::{ClassId, NUM_CLASSES};
use crate::{seed, Error, Result};

const POOL_HEADER: &str = "#pool v1";

#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub sample: Arc<TrainingSample>,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePool {
    entries: Vec<PoolEntry>,
    n_classes: usize,
    seed: u64,
    lineage: Vec<String>,
}

impl SamplePool {
    /// Pool with every sample at multiplicity one.
    pub fn from_samples(samples: Vec<TrainingSample>, seed: u64, origin: impl Into<String>) -> Self {
        Self::with_classes(samples, NUM_CLASSES, seed, origin)
    }

    pub fn with_classes(samples: Vec<TrainingSample>, n_classes: usize, seed: u64, origin: impl Into<String>) -> Self {
        Self {
            entries: samples
                .into_iter()
                .map(|s| PoolEntry {
                    sample: Arc::new(s),
                    multiplicity: 1,
                })
                .collect(),
            n_classes,
            seed,
            lineage: vec![origin.into()],
        }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lineage(&self) -> &[String] {
        &self.lineage
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn push_lineage(&mut self, note: impl Into<String>) {
        self.lineage.push(note.into());
    }

    /// Total number of samples, counting multiplicity.
    pub fn len(&self) -> usize {
        self.entries.iter().map(|e| e.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct samples.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    /// Feature dimension of the first sample, if any.
    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.sample.features.len())
    }

    /// Samples with duplicates expanded in place, in entry order.
    pub fn expanded(&self) -> impl Iterator<Item = &TrainingSample> {
        self.entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.sample.as_ref(), e.multiplicity))
    }

    pub fn identities(&self) -> Vec<SampleId> {
        self.entries.iter().map(|e| e.sample.id()).collect()
    }

    /// Per-class totals, counting multiplicity.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for e in &self.entries {
            if let Some(c) = counts.get_mut(e.sample.label) {
                *c += e.multiplicity;
            }
        }
        counts
    }

    /// Multiplicity per identity, merged across duplicate entries.
    pub fn multiset(&self) -> BTreeMap<SampleId, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.sample.id()).or_default() += e.multiplicity;
        }
        m
    }

    fn class_entry_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, e) in self.entries.iter().enumerate() {
            if let Some(v) = by_class.get_mut(e.sample.label) {
                v.push(i);
            }
        }
        by_class
    }

    /// Pool-file text (`#pool v1`), listing lineage and one line per entry.
    pub fn to_pool_string(&self) -> String {
        let mut out = format!("{POOL_HEADER} seed={} classes={}\n", self.seed, self.n_classes);
        for l in &self.lineage {
            let _ = writeln!(out, "#lineage {}", l.replace('\n', " "));
        }
        for e in &self.entries {
            let s = &e.sample;
            let _ = writeln!(out, "{}\t{}\t{}\t{}", s.clip_id, s.start_frame, s.label, e.multiplicity);
        }
        out
    }

    /// Restores a pool file, resolving identities against `catalog`.
    pub fn from_pool_string(text: &str, catalog: &SampleCatalog) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty pool file".into(),
        })?;
        let rest = header.strip_prefix(POOL_HEADER).ok_or(Error::Parse {
            line: 1,
            msg: format!("expected header `{POOL_HEADER}`"),
        })?;
        let mut seed = 0;
        let mut n_classes = NUM_CLASSES;
        for tok in rest.split_whitespace() {
            let bad = |_| Error::Parse {
                line: 1,
                msg: format!("bad header field `{tok}`"),
            };
            if let Some(v) = tok.strip_prefix("seed=") {
                seed = v.parse().map_err(bad)?;
            } else if let Some(v) = tok.strip_prefix("classes=") {
                n_classes = v.parse().map_err(bad)?;
            }
        }
        let mut pool = SamplePool {
            entries: Vec::new(),
            n_classes,
            seed,
            lineage: Vec::new(),
        };
        for (i, line) in lines {
            let line_no = i + 1;
            if let Some(l) = line.strip_prefix("#lineage ") {
                pool.lineage.push(l.to_string());
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: line_no, msg };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(perr(format!("expected 4 fields, found {}", f.len())));
            }
            let id = SampleId {
                clip_id: f[0].to_string(),
                start_frame: f[1].parse().map_err(|e| perr(format!("bad start_frame: {e}")))?,
            };
            let label: ClassId = f[2].parse().map_err(|e| perr(format!("bad label: {e}")))?;
            let multiplicity: usize = f[3].parse().map_err(|e| perr(format!("bad multiplicity: {e}")))?;
            let sample = catalog
                .get(&id)
                .ok_or_else(|| perr(format!("sample {}@{} not in catalog", id.clip_id, id.start_frame)))?;
            if sample.label != label {
                return Err(perr(format!(
                    "label {label} disagrees with catalog label {} for {}@{}",
                    sample.label, id.clip_id, id.start_frame
                )));
            }
            pool.entries.push(PoolEntry {
                sample: Arc::clone(sample),
                multiplicity,
            });
        }
        Ok(pool)
    }
}

/// Lookup from sample identity to the sample, for restoring pool files.
#[derive(Clone, Debug, Default)]
pub struct SampleCatalog {
    by_id: HashMap<SampleId, Arc<TrainingSample>>,
}

impl SampleCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_pool(&mut self, pool: &SamplePool) {
        for e in &pool.entries {
            self.by_id.insert(e.sample.id(), Arc::clone(&e.sample));
        }
    }

    pub fn add_samples(&mut self, samples: impl IntoIterator<Item = TrainingSample>) {
        for s in samples {
            self.by_id.insert(s.id(), Arc::new(s));
        }
    }

    pub fn get(&self, id: &SampleId) -> Option<&Arc<TrainingSample>> {
        self.by_id.get(id)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}

/// Raises every under-represented, non-empty class to exactly `target_per_class`.
///
/// Extra copies go round-robin over a seeded shuffle of the class's entries, so
/// multiplicities within a class differ by at most one. Classes already at or
/// above the target are left alone; empty classes stay empty and are noted in
/// the lineage.
pub fn oversample_balance(pool: &SamplePool, target_per_class: usize) -> SamplePool {
    let mut out = pool.clone();
    let counts = pool.class_counts();
    let by_class = pool.class_entry_indices();
    let mut empty = Vec::new();
    for (class, (indices, &count)) in by_class.iter().zip(&counts).enumerate() {
        if count == 0 {
            if target_per_class > 0 {
                empty.push(class);
            }
            continue;
        }
        if count >= target_per_class {
            continue;
        }
        let mut order = indices.clone();
        order.shuffle(&mut seed::rng(pool.seed, class as u64));
        for k in 0..target_per_class - count {
            out.entries[order[k % order.len()]].multiplicity += 1;
        }
    }
    out.lineage.push(format!(
        "oversample_balance target={target_per_class} seed={} before={counts:?}",
        pool.seed
    ));
    if !empty.is_empty() {
        log::warn!("oversample_balance: classes {empty:?} have no samples");
        out.lineage.push(format!("warning: empty classes {empty:?} left at 0"));
    }
    out
}

/// Splits off a class-balanced random subset holding `fraction` of each class.
///
/// Counts are over distinct entries. Per class the subset takes the floor or
/// ceiling of `fraction · n_c`, chosen in ascending class order so the running
/// total tracks `fraction` times the running class total. Both halves keep the
/// pool's entry order.
pub fn split_balanced_subset(pool: &SamplePool, fraction: f64, split_seed: u64) -> Result<(SamplePool, SamplePool)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("subset fraction must be in (0, 1), got {fraction}")));
    }
    if pool.entries.is_empty() {
        return Err(Error::Config("cannot split an empty pool".into()));
    }
    let by_class = pool.class_entry_indices();
    let mut chosen = vec![false; pool.entries.len()];
    let mut exact_total = 0.0;
    let mut taken_total = 0usize;
    let mut per_class = Vec::with_capacity(by_class.len());
    for (class, indices) in by_class.iter().enumerate() {
        let n = indices.len();
        let exact = fraction * n as f64;
        exact_total += exact;
        let want = exact_total.round() as i64 - taken_total as i64;
        let take = want.clamp(exact.floor() as i64, exact.ceil() as i64) as usize;
        taken_total += take;
        per_class.push(take);
        let mut order = indices.clone();
        order.shuffle(&mut seed::rng(split_seed, class as u64));
        for &i in &order[..take] {
            chosen[i] = true;
        }
    }
    let mut subset = SamplePool {
        entries: Vec::new(),
        n_classes: pool.n_classes,
        seed: seed::derive(split_seed, 1_000),
        lineage: pool.lineage.clone(),
    };
    let mut remainder = SamplePool {
        entries: Vec::new(),
        n_classes: pool.n_classes,
        seed: seed::derive(split_seed, 1_001),
        lineage: pool.lineage.clone(),
    };
    for (e, &c) in pool.entries.iter().zip(&chosen) {
        if c {
            subset.entries.push(e.clone());
        } else {
            remainder.entries.push(e.clone());
        }
    }
    subset
        .lineage
        .push(format!("split_balanced_subset fraction={fraction} seed={split_seed} part=subset per_class={per_class:?}"));
    remainder
        .lineage
        .push(format!("split_balanced_subset fraction={fraction} seed={split_seed} part=remainder"));
    Ok((subset, remainder))
}

/// Concatenates pools in order.
pub fn combine_pools(pools: &[&SamplePool]) -> Result<SamplePool> {
    let first = pools
        .first()
        .ok_or_else(|| Error::Config("combine_pools needs at least one pool".into()))?;
    if pools.len() == 1 {
        return Ok((*first).clone());
    }
    let mut dim = None;
    for p in pools {
        if p.n_classes != first.n_classes {
            return Err(Error::Config(format!(
                "class count mismatch: {} vs {}",
                first.n_classes, p.n_classes
            )));
        }
        if let Some(d) = p.dim() {
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => return Err(Error::Dimension { expected, got: d }),
                _ => {}
            }
        }
    }
    let mut out = SamplePool {
        entries: Vec::with_capacity(pools.iter().map(|p| p.entries.len()).sum()),
        n_classes: first.n_classes,
        seed: first.seed,
        lineage: Vec::new(),
    };
    for (i, p) in pools.iter().enumerate() {
        out.entries.extend(p.entries.iter().cloned());
        out.lineage.extend(p.lineage.iter().map(|l| format!("[{i}] {l}")));
    }
    out.lineage.push(format!("combine_pools n={}", pools.len()));
    Ok(out)
}

/// Summary counts for printing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSummary {
    pub total: usize,
    pub distinct: usize,
    pub per_class: Vec<usize>,
}

impl From<&SamplePool> for PoolSummary {
    fn from(p: &SamplePool) -> Self {
        Self {
            total: p.len(),
            distinct: p.distinct(),
            per_class: p.class_counts(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn pool_with_counts(counts: &[usize], seed: u64) -> SamplePool {
        let mut samples = Vec::new();
        for (label, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(TrainingSample {
                    clip_id: format!("c{label:02}_{i:05}"),
                    start_frame: 0,
                    frame_indices: vec![0],
                    label,
                    features: vec![label as f64, i as f64],
                });
            }
        }
        SamplePool::with_classes(samples, counts.len().max(1), seed, "test")
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let p = pool_with_counts(&[5; 12], 1);
        let out = oversample_balance(&p, 5);
        assert_eq!(out.multiset(), p.multiset());
    }

    #[test]
    fn three_samples_to_seven() {
        let p = pool_with_counts(&[3], 4);
        let out = oversample_balance(&p, 7);
        let mult: Vec<usize> = out.entries().iter().map(|e| e.multiplicity).collect();
        assert_eq!(mult.iter().sum::<usize>(), 7);
        assert!(mult.iter().max().unwrap() - mult.iter().min().unwrap() <= 1);
    }

    #[test]
    fn over_target_classes_untouched_and_empty_reported() {
        let p = pool_with_counts(&[10, 4, 9000, 0], 2);
        let out = oversample_balance(&p, 6000);
        assert_eq!(out.class_counts(), vec![6000, 6000, 9000, 0]);
        assert!(out.lineage().iter().any(|l| l.contains("empty classes [3]")));
    }

    #[test]
    fn even_split() {
        let p = pool_with_counts(&[10; 12], 3);
        let (s, r) = split_balanced_subset(&p, 0.5, 11).unwrap();
        assert_eq!(s.class_counts(), vec![5; 12]);
        assert_eq!(r.class_counts(), vec![5; 12]);
    }

    #[test]
    fn odd_class_split_alternates() {
        let p = pool_with_counts(&[7, 7, 7], 3);
        let (s, r) = split_balanced_subset(&p, 0.5, 5).unwrap();
        let sc = s.class_counts();
        assert_eq!(sc, vec![4, 3, 4]);
        for (a, b) in sc.iter().zip(r.class_counts()) {
            assert_eq!(a + b, 7);
        }
        assert!((s.distinct() as f64 - 10.5).abs() <= 1.0);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let p = pool_with_counts(&[2], 0);
        assert!(split_balanced_subset(&p, 1.0, 0).is_err());
        assert!(split_balanced_subset(&p, 0.0, 0).is_err());
        assert!(split_balanced_subset(&pool_with_counts(&[0], 0), 0.5, 0).is_err());
    }

    #[test]
    fn combine_counts_and_dims() {
        let a = pool_with_counts(&[50, 50], 1);
        let b = pool_with_counts(&[125, 125], 2);
        assert_eq!(combine_pools(&[&a]).unwrap(), a);
        assert_eq!(combine_pools(&[&a, &b]).unwrap().len(), 350);

        let mut c = pool_with_counts(&[1, 1], 2);
        Arc::make_mut(&mut c.entries[0].sample).features.push(0.0);
        c.entries.truncate(1);
        assert!(matches!(combine_pools(&[&a, &c]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pool_file_round_trip() {
        let p = oversample_balance(&pool_with_counts(&[2, 5], 7), 5);
        let text = p.to_pool_string();
        let mut cat = SampleCatalog::new();
        cat.add_pool(&p);
        let back = SamplePool::from_pool_string(&text, &cat).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.to_pool_string(), text);
    }
}

#[cfg(test)]
pub(crate) use tests::pool_with_counts;
