//! Runs every strategy over ten master seeds on a benchmark spec and prints
//! per-seed target accuracy and iteration totals.
//!
//! `cargo run --release -p curricula --example pilot -- [spec.json] [target_per_class]`

use curricula::benchgen::{generate_benchmark, BenchmarkSpec};
use curricula::curriculum::{Direction, NoopObserver, Source, StrategyKind};
use curricula::experiment::{run_strategy, ExperimentConfig};

fn main() -> curricula::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let spec = match args.get(1) {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => BenchmarkSpec::committed_default(),
    };
    let bundle = generate_benchmark(&spec)?;
    let target = args
        .get(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(spec.samples_per_class_per_domain / 2);
    let mut cfg = ExperimentConfig::desk(target);
    // calibration overrides
    let env = |k: &str| std::env::var(k).ok().and_then(|v| v.parse::<f64>().ok());
    if let Some(v) = env("BASE_LR") {
        cfg.profile.base_lr = v;
    }
    if let Some(v) = env("FT_LR") {
        cfg.profile.finetune_lr = v;
    }
    if let Some(v) = env("E1") {
        cfg.profile.e1 = v as usize;
    }
    if let Some(v) = env("E2") {
        cfg.profile.e2 = v as usize;
    }
    if let Some(v) = env("PATIENCE") {
        cfg.policy.patience = v as usize;
    }
    if let Some(v) = env("MIN_DELTA") {
        cfg.policy.min_delta = v;
    }
    if let Some(v) = env("HOLDOUT") {
        cfg.policy.holdout_fraction = v;
    }
    let offset = env("SEED_OFFSET").map_or(0, |v| v as u64);
    let strategies = [
        StrategyKind::SingleDomain { source: Source::Syn },
        StrategyKind::SingleDomain { source: Source::Real },
        StrategyKind::NaiveCombined,
        StrategyKind::two_step(Direction::SynToReal),
        StrategyKind::two_step(Direction::RealToSyn),
        StrategyKind::progressive(),
    ];
    let mut sums = vec![(0.0, 0.0); strategies.len()];
    for seed in offset..offset + 10 {
        let mut line = format!("seed {seed}:");
        for (k, s) in strategies.iter().enumerate() {
            let r = run_strategy(s, &bundle.syn_pool, &bundle.real_ground_pool, Some(&bundle.target_test_pool), &cfg, seed, &mut NoopObserver)?;
            let acc = 100.0 * r.eval.map_or(0.0, |e| e.top1_accuracy);
            sums[k].0 += acc;
            sums[k].1 += r.record.total_iterations as f64;
            line += &format!(" {}={acc:.2}/{}", s.label(), r.record.total_iterations);
        }
        println!("{line}");
    }
    for (s, (a, i)) in strategies.iter().zip(&sums) {
        println!("{:<22} acc {:6.2}  iters {:8.1}", s.label(), a / 10.0, i / 10.0);
    }
    Ok(())
}
