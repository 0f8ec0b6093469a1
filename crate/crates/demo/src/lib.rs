//! Browser bindings for the demo page in `www/`.
//!
//! The exported functions take plain numbers and strings and return JSON
//! text; the page does the drawing. The plain-Rust versions are public so
//! they can be tested natively.

use curricula::benchgen::{generate_benchmark, BenchmarkSpec};
use curricula::clip_pipeline::{segment_clip, WindowingConfig};
use curricula::curriculum::{Direction, NoopObserver, Source, StrategyKind};
use curricula::dataset_model::{decode_rle, majority, ClipRecord, DomainTag, Fps};
use curricula::experiment::{run_strategy, ExperimentConfig};
use curricula::metrics_report::{build_efficiency_report, ReportEntry};
use curricula::svg;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct WindowView {
    pub start: usize,
    pub end: usize,
    pub majority_label: usize,
    pub majority_count: usize,
    pub kept: bool,
    pub frames: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct WindowPreview {
    pub n_frames: usize,
    pub threshold: usize,
    pub labels: Vec<usize>,
    pub windows: Vec<WindowView>,
}

/// Every full window of a run-length-encoded clip (`label:count,...`), with
/// whether the retention rule keeps it.
pub fn window_preview(rle: &str, retain_fraction: f64) -> Result<WindowPreview, String> {
    let labels = decode_rle(rle.trim())?;
    let cfg = WindowingConfig {
        retain_fraction,
        ..WindowingConfig::default()
    };
    let clip = ClipRecord {
        clip_id: "preview".into(),
        subject_id: "demo".into(),
        domain: DomainTag::SynAerial,
        fps: Fps::default(),
        frame_labels: labels.clone(),
        feature_path: None,
    };
    let kept = segment_clip(&clip, &cfg).map_err(|e| e.to_string())?;
    let mut windows = Vec::new();
    let mut start = 0;
    while start + cfg.window_len <= labels.len() {
        let (label, count) = majority(&labels[start..start + cfg.window_len]).unwrap_or((0, 0));
        let sample = kept.iter().find(|s| s.start_frame == start);
        windows.push(WindowView {
            start,
            end: start + cfg.window_len,
            majority_label: label,
            majority_count: count,
            kept: sample.is_some(),
            frames: sample.map(|s| s.frame_indices.clone()).unwrap_or_default(),
        });
        start += cfg.stride;
    }
    Ok(WindowPreview {
        n_frames: labels.len(),
        threshold: cfg.retain_threshold(),
        labels,
        windows,
    })
}

fn demo_spec(seed: u64, rotation: f64, bias: f64) -> BenchmarkSpec {
    BenchmarkSpec {
        seed,
        viewpoint_rotation_angle: rotation,
        realism_bias_scale: bias,
        ..BenchmarkSpec::committed_default()
    }
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub entries: Vec<ReportEntry>,
    pub markdown: String,
    pub scatter_svg: String,
}

/// Trains the four main strategies on a benchmark drawn with `seed` and the
/// given gaps, scores them on the target pool and renders the efficiency table.
pub fn compare_strategies(seed: u64, rotation: f64, bias: f64) -> Result<Comparison, String> {
    let bundle = generate_benchmark(&demo_spec(seed, rotation, bias)).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig::desk(bundle.spec.samples_per_class_per_domain / 2);
    let kinds = [
        StrategyKind::SingleDomain { source: Source::Syn },
        StrategyKind::SingleDomain { source: Source::Real },
        StrategyKind::NaiveCombined,
        StrategyKind::two_step(Direction::SynToReal),
        StrategyKind::two_step(Direction::RealToSyn),
        StrategyKind::progressive(),
    ];
    let mut entries = Vec::new();
    for k in &kinds {
        let r = run_strategy(
            k,
            &bundle.syn_pool,
            &bundle.real_ground_pool,
            Some(&bundle.target_test_pool),
            &cfg,
            seed,
            &mut NoopObserver,
        )
        .map_err(|e| e.to_string())?;
        let eval = r.eval.ok_or("no evaluation")?;
        entries.push(ReportEntry::from_run(&r.record, &eval));
    }
    let report = build_efficiency_report(format!("seed {seed}"), entries.clone(), "naive").map_err(|e| e.to_string())?;
    let points: Vec<(String, f64, f64)> = entries
        .iter()
        .map(|e| (e.display_name.clone(), e.total_iterations as f64, e.top1_pct))
        .collect();
    Ok(Comparison {
        entries,
        markdown: report.to_markdown(),
        scatter_svg: svg::scatter("Top-1 vs iterations", "total iterations", "top-1 (%)", &points),
    })
}

#[derive(Debug, Serialize)]
pub struct DomainCloud {
    pub name: String,
    /// `[x, y, label]` in the first two feature dimensions.
    pub points: Vec<(f64, f64, usize)>,
}

/// The three domains of a benchmark in the plane the viewpoint rotation acts on.
pub fn domain_points(seed: u64, rotation: f64, bias: f64) -> Result<Vec<DomainCloud>, String> {
    let bundle = generate_benchmark(&demo_spec(seed, rotation, bias)).map_err(|e| e.to_string())?;
    let names = ["synthetic aerial", "real ground", "real aerial (target)"];
    Ok(names
        .iter()
        .zip(bundle.pools())
        .map(|(name, pool)| DomainCloud {
            name: name.to_string(),
            points: pool
                .expanded()
                .map(|s| (s.features[0], s.features[1], s.label))
                .collect(),
        })
        .collect())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = windowPreview)]
pub fn window_preview_js(rle: &str, retain_fraction: f64) -> Result<String, JsValue> {
    to_js(window_preview(rle, retain_fraction))
}

#[wasm_bindgen(js_name = compareStrategies)]
pub fn compare_strategies_js(seed: u32, rotation: f64, bias: f64) -> Result<String, JsValue> {
    to_js(compare_strategies(u64::from(seed), rotation, bias))
}

#[wasm_bindgen(js_name = domainPoints)]
pub fn domain_points_js(seed: u32, rotation: f64, bias: f64) -> Result<String, JsValue> {
    to_js(domain_points(u64::from(seed), rotation, bias))
}
