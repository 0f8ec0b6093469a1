//! Seeded three-domain feature benchmark.
//!
//! Every domain draws from the same class means μ_c. The target domain is
//! μ_c plus noise. The real-ground analog rotates μ_c in the (e0, e1) plane,
//! which models a viewpoint shift. The synthetic analog adds a fixed per-class
//! bias and extra noise, which models a realism gap. Each sample is emitted as
//! a 64-frame single-label clip, so the regular windowing pipeline applies.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clip_pipeline::{build_sample_set, format_sidecar, FrameRows, InMemoryFeatures, SidecarFeatures, WindowingConfig};
use crate::dataset_model::{
    load_manifest_with_registry, ActionClass, ClassRegistry, ClipRecord, DatasetManifest,
    DomainTag, Fps, NUM_CLASSES,
};
use crate::sampling::{SampleCatalog, SamplePool};
use crate::{seed, Error, Result};

/// Frames per emitted clip; one full default window.
pub const CLIP_FRAMES: usize = 64;

const MEAN_ATTEMPTS: usize = 2_000;
const MEAN_RESTARTS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub d: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    pub samples_per_class_per_domain: usize,
    pub class_separation: f64,
    /// Per-coordinate noise s.d. shared by all domains before inflation.
    pub noise_std: f64,
    /// Radians, applied to the real-ground analog.
    pub viewpoint_rotation_angle: f64,
    pub realism_bias_scale: f64,
    pub noise_inflation: f64,
    pub seed: u64,
}

fn default_classes() -> usize {
    NUM_CLASSES
}

impl BenchmarkSpec {
    /// The calibrated spec used by the acceptance fixture.
    pub fn committed_default() -> Self {
        serde_json::from_str(DEFAULT_SPEC_JSON).expect("embedded default spec parses")
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Spec(format!("d must be at least 2, got {}", self.d)));
        }
        if self.n_classes < 2 {
            return Err(Error::Spec(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if self.samples_per_class_per_domain == 0 {
            return Err(Error::Spec("samples_per_class_per_domain must be positive".into()));
        }
        for (name, v) in [
            ("class_separation", self.class_separation),
            ("noise_std", self.noise_std),
            ("realism_bias_scale", self.realism_bias_scale),
            ("noise_inflation", self.noise_inflation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Spec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.viewpoint_rotation_angle.is_finite() {
            return Err(Error::Spec("viewpoint_rotation_angle must be finite".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// The committed spec, also shipped as `fixtures/benchmark_spec.json`.
pub const DEFAULT_SPEC_JSON: &str = include_str!("../fixtures/benchmark_spec.json");

#[derive(Clone, Debug)]
pub struct BenchmarkBundle {
    pub spec: BenchmarkSpec,
    pub syn_pool: SamplePool,
    pub real_ground_pool: SamplePool,
    pub target_test_pool: SamplePool,
    pub registry: ClassRegistry,
    /// Manifests in syn, real-ground, target order.
    pub manifests: [DatasetManifest; 3],
}

impl BenchmarkBundle {
    pub fn pools(&self) -> [&SamplePool; 3] {
        [&self.syn_pool, &self.real_ground_pool, &self.target_test_pool]
    }
}

/// Registry for `n` classes: canonical names when `n` is 12, `class_k` otherwise.
pub fn registry_for(n: usize) -> Result<ClassRegistry> {
    if n == NUM_CLASSES {
        return Ok(ClassRegistry::canonical());
    }
    ClassRegistry::new(
        (0..n)
            .map(|id| ActionClass {
                id,
                name: format!("class_{id}"),
            })
            .collect(),
    )
}

/// Draws class means in `[-1, 1]^d` with pairwise distance at least `sep`.
pub fn class_means(spec: &BenchmarkSpec) -> Result<Vec<Vec<f64>>> {
    let mut rng = seed::rng(spec.seed, 0);
    'restart: for _ in 0..MEAN_RESTARTS {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.n_classes);
        while means.len() < spec.n_classes {
            let mut placed = false;
            for _ in 0..MEAN_ATTEMPTS {
                let cand: Vec<f64> = (0..spec.d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                if means.iter().all(|m| dist(m, &cand) >= spec.class_separation) {
                    means.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }
        return Ok(means);
    }
    Err(Error::Spec(format!(
        "could not place {} class means {} apart in [-1,1]^{}",
        spec.n_classes, spec.class_separation, spec.d
    )))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Rotates `v` by `angle` in the plane spanned by the first two axes.
pub fn rotate_in_plane(v: &[f64], angle: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    let (s, c) = angle.sin_cos();
    out[0] = c * v[0] - s * v[1];
    out[1] = s * v[0] + c * v[1];
    out
}

#[derive(Clone, Copy)]
enum Domain {
    Syn,
    RealGround,
    Target,
}

impl Domain {
    fn tag(self) -> DomainTag {
        match self {
            Domain::Syn => DomainTag::SynAerial,
            Domain::RealGround => DomainTag::RealGround,
            Domain::Target => DomainTag::RealAerial,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Domain::Syn => "syn",
            Domain::RealGround => "rg",
            Domain::Target => "ta",
        }
    }

    fn subject(self, i: usize) -> String {
        match self {
            Domain::Syn => format!("s{:02}", i % 10 + 1),
            Domain::RealGround => format!("g{:02}", i % 21 + 1),
            Domain::Target => format!("a{:02}", i % 5 + 1),
        }
    }

    fn counter(self) -> u64 {
        match self {
            Domain::Syn => 2,
            Domain::RealGround => 3,
            Domain::Target => 4,
        }
    }
}

fn domain_data(
    spec: &BenchmarkSpec,
    domain: Domain,
    means: &[Vec<f64>],
    biases: &[Vec<f64>],
    registry: &ClassRegistry,
) -> Result<(DatasetManifest, InMemoryFeatures)> {
    let mut rng = seed::rng(spec.seed, domain.counter());
    let mut records = Vec::new();
    let mut features = InMemoryFeatures::new(spec.d);
    for (c, mu) in means.iter().enumerate() {
        let (center, sd) = match domain {
            Domain::Target => (mu.clone(), spec.noise_std),
            Domain::RealGround => (rotate_in_plane(mu, spec.viewpoint_rotation_angle), spec.noise_std),
            Domain::Syn => (
                mu.iter().zip(&biases[c]).map(|(m, b)| m + spec.realism_bias_scale * b).collect(),
                spec.noise_std * (1.0 + spec.noise_inflation),
            ),
        };
        for i in 0..spec.samples_per_class_per_domain {
            let clip_id = format!("{}_c{c:02}_{i:05}", domain.prefix());
            let x: Vec<f64> = center
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + sd * z
                })
                .collect();
            features.insert(clip_id.clone(), x);
            records.push(ClipRecord {
                clip_id,
                subject_id: domain.subject(i),
                domain: domain.tag(),
                fps: Fps { num: 30, den: 1 },
                frame_labels: vec![c; CLIP_FRAMES],
                feature_path: None,
            });
        }
    }
    let manifest = DatasetManifest::new(records, registry.clone(), format!("benchgen seed={}", spec.seed))?;
    Ok((manifest, features))
}

fn unit_biases(spec: &BenchmarkSpec) -> Vec<Vec<f64>> {
    let mut rng = seed::rng(spec.seed, 1);
    (0..spec.n_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..spec.d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

fn pool_for(manifest: &DatasetManifest, features: &dyn crate::clip_pipeline::FeatureSource, spec: &BenchmarkSpec, counter: u64, name: &str) -> Result<SamplePool> {
    let samples = build_sample_set(manifest, &WindowingConfig::default(), features)?;
    Ok(SamplePool::with_classes(
        samples,
        spec.n_classes,
        seed::derive(spec.seed, counter),
        format!("benchgen {name} seed={}", spec.seed),
    ))
}

pub fn generate_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkBundle> {
    spec.validate()?;
    let registry = registry_for(spec.n_classes)?;
    let means = class_means(spec)?;
    let biases = unit_biases(spec);
    let (m_syn, f_syn) = domain_data(spec, Domain::Syn, &means, &biases, &registry)?;
    let (m_rg, f_rg) = domain_data(spec, Domain::RealGround, &means, &biases, &registry)?;
    let (m_ta, f_ta) = domain_data(spec, Domain::Target, &means, &biases, &registry)?;
    Ok(BenchmarkBundle {
        spec: spec.clone(),
        syn_pool: pool_for(&m_syn, &f_syn, spec, 10, "syn")?,
        real_ground_pool: pool_for(&m_rg, &f_rg, spec, 11, "real_ground")?,
        target_test_pool: pool_for(&m_ta, &f_ta, spec, 12, "target")?,
        registry,
        manifests: [m_syn, m_rg, m_ta],
    })
}

const NAMES: [&str; 3] = ["syn", "real_ground", "target"];

/// Writes `spec.json`, `registry.tsv`, `manifests/`, `features/` and `pools/` under `dir`.
pub fn emit_bundle(bundle: &BenchmarkBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    fs::create_dir_all(dir.join("manifests"))?;
    fs::create_dir_all(dir.join("features"))?;
    fs::create_dir_all(dir.join("pools"))?;
    let mut put = |path: PathBuf, body: String| -> Result<()> {
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    put(dir.join("spec.json"), bundle.spec.to_json()?)?;
    put(dir.join("registry.tsv"), bundle.registry.to_file_string())?;
    for ((name, manifest), pool) in NAMES.iter().zip(&bundle.manifests).zip(bundle.pools()) {
        put(dir.join("manifests").join(format!("{name}.manifest")), manifest.to_file_string())?;
        put(dir.join("pools").join(format!("{name}.pool")), pool.to_pool_string())?;
        // one window per clip, so the pooled feature is the per-frame row
        let by_clip: BTreeMap<&str, &[f64]> = pool
            .entries()
            .iter()
            .map(|e| (e.sample.clip_id.as_str(), e.sample.features.as_slice()))
            .collect();
        for rec in &manifest.records {
            let row = by_clip.get(rec.clip_id.as_str()).ok_or_else(|| Error::Feature {
                clip_id: rec.clip_id.clone(),
                start_frame: None,
                msg: "clip has no pooled sample".into(),
            })?;
            let rows = FrameRows {
                dim: row.len(),
                data: row.repeat(rec.num_frames()),
            };
            put(dir.join("features").join(format!("{}.feat", rec.clip_id)), format_sidecar(&rows))?;
        }
    }
    Ok(written)
}

/// Rebuilds a bundle from `emit_bundle` output by re-running windowing over the sidecars.
pub fn load_bundle(dir: &Path) -> Result<BenchmarkBundle> {
    let spec: BenchmarkSpec = serde_json::from_str(&fs::read_to_string(dir.join("spec.json"))?)?;
    spec.validate()?;
    let registry = ClassRegistry::load(dir.join("registry.tsv"))?;
    let features = SidecarFeatures::new(dir.join("features"), spec.d);
    let mut manifests = Vec::new();
    let mut pools = Vec::new();
    for name in NAMES {
        let manifest = load_manifest_with_registry(dir.join("manifests").join(format!("{name}.manifest")), registry.clone())?;
        let mut catalog = SampleCatalog::new();
        catalog.add_samples(build_sample_set(&manifest, &WindowingConfig::default(), &features)?);
        let text = fs::read_to_string(dir.join("pools").join(format!("{name}.pool")))?;
        pools.push(SamplePool::from_pool_string(&text, &catalog)?);
        manifests.push(manifest);
    }
    let [syn_pool, real_ground_pool, target_test_pool]: [SamplePool; 3] =
        pools.try_into().map_err(|_| Error::Validation("bundle needs three pools".into()))?;
    let manifests: [DatasetManifest; 3] =
        manifests.try_into().map_err(|_| Error::Validation("bundle needs three manifests".into()))?;
    Ok(BenchmarkBundle {
        spec,
        syn_pool,
        real_ground_pool,
        target_test_pool,
        registry,
        manifests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchmarkSpec {
        BenchmarkSpec {
            d: 4,
            n_classes: 3,
            samples_per_class_per_domain: 5,
            class_separation: 0.5,
            noise_std: 0.1,
            viewpoint_rotation_angle: 0.5,
            realism_bias_scale: 0.3,
            noise_inflation: 0.5,
            seed: 9,
        }
    }

    #[test]
    fn counts_and_disjointness() {
        let b = generate_benchmark(&small()).unwrap();
        for p in b.pools() {
            assert_eq!(p.class_counts(), vec![5, 5, 5]);
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in b.pools() {
            for id in p.identities() {
                assert!(ids.insert(id));
            }
        }
    }

    #[test]
    fn means_are_separated() {
        let s = small();
        let m = class_means(&s).unwrap();
        for i in 0..m.len() {
            for j in 0..i {
                assert!(dist(&m[i], &m[j]) >= s.class_separation);
            }
        }
    }

    #[test]
    fn infeasible_separation_is_a_spec_error() {
        let mut s = small();
        s.class_separation = 10.0;
        assert!(matches!(generate_benchmark(&s), Err(Error::Spec(_))));
    }

    #[test]
    fn rotation_preserves_norm() {
        let v = [3.0, 4.0, 1.0];
        let r = rotate_in_plane(&v, 1.1);
        assert!((r[0].hypot(r[1]) - 5.0).abs() < 1e-12);
        assert_eq!(r[2], 1.0);
    }

    #[test]
    fn committed_spec_parses() {
        BenchmarkSpec::committed_default().validate().unwrap();
    }
}
