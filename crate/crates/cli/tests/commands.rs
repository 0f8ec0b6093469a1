use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use curricula::curriculum::{DatasetSpec, Direction, RunRecord, Source};
use curricula::sampling::SamplePool;
use curricula_cli::{cmd_bench, cmd_compare, cmd_prepare, cmd_report, cmd_run, Global, EXIT_COMPARE, EXIT_INPUT};
use tempfile::TempDir;

const CONFIG: &str = r#"
target_per_class = 30
strategies = ["naive", "progressive"]
[convergence]
patience = 3
[paths]
bundle = "bench"
out = "out"
"#;

fn setup() -> (TempDir, Global) {
    let tmp = tempfile::tempdir().unwrap();
    let bench = Global {
        out: Some(tmp.path().join("bench")),
        ..Global::default()
    };
    cmd_bench(&bench, None).unwrap();
    fs::write(tmp.path().join("cfg.toml"), CONFIG).unwrap();
    let g = Global {
        config: Some(tmp.path().join("cfg.toml")),
        ..Global::default()
    };
    (tmp, g)
}

fn record(dir: &Path) -> RunRecord {
    serde_json::from_str(&fs::read_to_string(dir.join("run_record.json")).unwrap()).unwrap()
}

fn round_dirs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    v
}

#[test]
fn prepare_writes_spec_counts_and_is_repeatable() {
    let (tmp, g) = setup();
    let (outcome, names) = cmd_prepare(&g).unwrap();
    assert_eq!(names.len(), 12);
    for (name, s) in &outcome.summary {
        assert_eq!(s.per_class, vec![60; 12], "{name}");
    }
    let pools = tmp.path().join("out/pools");
    let first: Vec<Vec<u8>> = outcome.files.iter().map(|p| fs::read(p).unwrap()).collect();
    cmd_prepare(&g).unwrap();
    let second: Vec<Vec<u8>> = outcome.files.iter().map(|p| fs::read(p).unwrap()).collect();
    assert_eq!(first, second);
    assert!(pools.join("target.pool").exists());
}

#[test]
fn prepare_names_the_clip_with_a_missing_sidecar() {
    let (tmp, g) = setup();
    fs::remove_file(tmp.path().join("bench/features/rg_c03_00007.feat")).unwrap();
    let err = cmd_prepare(&g).unwrap_err();
    assert_eq!(err.code, EXIT_INPUT);
    assert!(err.message.contains("rg_c03_00007"), "{}", err.message);
}

#[test]
fn excluded_subjects_shrink_the_pools() {
    let (tmp, _) = setup();
    let cfg = CONFIG.replace("out = \"out\"", "out = \"out\"\nexclude_subjects = [\"s01\", \"g01\"]");
    fs::write(tmp.path().join("cfg.toml"), cfg).unwrap();
    let g = Global {
        config: Some(tmp.path().join("cfg.toml")),
        ..Global::default()
    };
    let (outcome, _) = cmd_prepare(&g).unwrap();
    let totals: Vec<usize> = outcome.summary.iter().map(|(_, s)| s.distinct).collect();
    assert!(totals[0] < 720 && totals[1] < 720, "{totals:?}");
    assert_eq!(totals[2], 720);
}

#[test]
fn run_layouts_follow_the_strategy() {
    let (_tmp, g) = setup();
    let dirs = cmd_run(&g, Some("naive"), None).unwrap();
    assert_eq!(round_dirs(&dirs[0]).len(), 1);
    assert_eq!(record(&dirs[0]).rounds.len(), 1);

    let dirs = cmd_run(&g, Some("progressive"), None).unwrap();
    let rounds = round_dirs(&dirs[0]);
    assert_eq!(rounds.len(), 3);
    for r in &rounds {
        for f in ["checkpoint.ckpt", "pool.pool", "log.jsonl", "plan.json", "round.json"] {
            assert!(r.join(f).exists(), "{}/{f}", r.display());
        }
    }
    let ckpt = curricula::trainer::load_checkpoint(rounds[2].join("checkpoint.ckpt")).unwrap();
    assert_eq!(ckpt.lineage.len(), 3);

    let dirs = cmd_run(&g, Some("two_step_ft"), Some(Direction::RealToSyn)).unwrap();
    assert!(dirs[0].ends_with("two_step_ft_r_to_s_seed0"));
    let order: Vec<DatasetSpec> = record(&dirs[0]).rounds.iter().map(|r| r.plan.dataset.clone()).collect();
    assert_eq!(
        order,
        vec![DatasetSpec::Full { source: Source::Real }, DatasetSpec::Full { source: Source::Syn }]
    );
}

#[test]
fn run_refuses_to_overwrite_without_force() {
    let (_tmp, g) = setup();
    let dir = cmd_run(&g, Some("naive"), None).unwrap().remove(0);
    let before = fs::read(dir.join("run_record.json")).unwrap();
    assert_eq!(cmd_run(&g, Some("naive"), None).unwrap_err().code, EXIT_INPUT);
    let forced = Global { force: true, ..g.clone() };
    cmd_run(&forced, Some("naive"), None).unwrap();
    assert_eq!(fs::read(dir.join("run_record.json")).unwrap(), before);
}

#[test]
fn seed_flag_overrides_config_and_is_archived() {
    let (_tmp, g) = setup();
    let g = Global { seed: Some(7), ..g };
    let dir = cmd_run(&g, Some("naive"), None).unwrap().remove(0);
    assert!(dir.ends_with("naive_seed7"));
    assert_eq!(record(&dir).master_seed, 7);
    let archived = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(archived.contains("master_seed = 7"));
    // archived paths are absolute so the run dir stands alone
    let cfg = curricula_cli::RunConfig::parse(&archived).unwrap();
    assert!(cfg.paths.bundle.unwrap().is_absolute());
}

#[test]
fn pool_snapshots_reload_against_the_bundle() {
    let (tmp, g) = setup();
    let dir = cmd_run(&g, Some("naive"), None).unwrap().remove(0);
    let bundle = curricula::benchgen::load_bundle(&tmp.path().join("bench")).unwrap();
    let mut catalog = curricula::sampling::SampleCatalog::new();
    catalog.add_pool(&bundle.syn_pool);
    catalog.add_pool(&bundle.real_ground_pool);
    let text = fs::read_to_string(dir.join("round_1/pool.pool")).unwrap();
    let pool = SamplePool::from_pool_string(&text, &catalog).unwrap();
    assert_eq!(pool.to_pool_string(), text);
}

#[test]
fn compare_reports_one_delta_and_is_repeatable() {
    let (tmp, g) = setup();
    let dirs = cmd_run(&g, None, None).unwrap();
    let out = Global {
        out: Some(tmp.path().join("report")),
        ..Global::default()
    };
    let report_dir = cmd_compare(&out, &dirs, "naive", None).unwrap();
    let json = fs::read_to_string(report_dir.join("report.json")).unwrap();
    let report = curricula::metrics_report::ComparisonReport::from_json(&json).unwrap();
    assert_eq!(report.efficiency[0].deltas.len(), 1);
    assert_eq!(report.efficiency[0].deltas[0].label, "progressive");
    cmd_compare(&out, &dirs, "naive", None).unwrap();
    assert_eq!(fs::read_to_string(report_dir.join("report.json")).unwrap(), json);
    assert!(report_dir.join("plots/accuracy_vs_iterations.svg").exists());

    // re-rendering from report.json reproduces the markdown
    let md = fs::read_to_string(report_dir.join("report.md")).unwrap();
    let again = Global {
        out: Some(tmp.path().join("rerender")),
        ..Global::default()
    };
    let d = cmd_report(&again, &report_dir.join("report.json")).unwrap();
    assert_eq!(fs::read_to_string(d.join("report.md")).unwrap(), md);
}

#[test]
fn compare_rejects_incomplete_runs() {
    let (_tmp, g) = setup();
    let dirs = cmd_run(&g, None, None).unwrap();
    let last = record(&dirs[1]).rounds.len();
    fs::remove_file(dirs[1].join(format!("round_{last}/checkpoint.ckpt"))).unwrap();
    assert_eq!(cmd_compare(&g, &dirs, "naive", None).unwrap_err().code, EXIT_COMPARE);
    assert_eq!(cmd_compare(&g, &dirs[..1], "naive", None).unwrap_err().code, EXIT_COMPARE);
}

#[test]
fn compare_rejects_a_tampered_checkpoint() {
    let (_tmp, g) = setup();
    let dirs = cmd_run(&g, None, None).unwrap();
    let p = dirs[0].join("round_1/checkpoint.ckpt");
    let mut bytes = fs::read(&p).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 1;
    fs::write(&p, bytes).unwrap();
    assert_eq!(cmd_compare(&g, &dirs, "naive", None).unwrap_err().code, EXIT_COMPARE);
}

#[test]
fn bench_rejects_a_bad_spec_and_occupied_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("spec.json");
    let mut bad = curricula::benchgen::BenchmarkSpec::committed_default();
    bad.noise_std = -1.0;
    fs::write(&spec, serde_json::to_string(&bad).unwrap()).unwrap();
    let g = Global {
        out: Some(tmp.path().join("b")),
        ..Global::default()
    };
    assert_eq!(cmd_bench(&g, Some(&spec)).unwrap_err().code, EXIT_INPUT);
    cmd_bench(&g, None).unwrap();
    assert_eq!(cmd_bench(&g, None).unwrap_err().code, EXIT_INPUT);
    cmd_bench(&Global { force: true, ..g }, None).unwrap();
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_curricula");
    let tmp = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(bin).args(args).current_dir(tmp.path()).status().unwrap().code();
    assert_eq!(status(&["--config", "missing.toml", "prepare"]), Some(2));
    assert_eq!(status(&["compare", "nowhere", "elsewhere"]), Some(4));
    assert_eq!(status(&["--out", "b", "bench"]), Some(0));
    assert_eq!(status(&["--out", "b", "bench"]), Some(2));
    assert_eq!(status(&["--out", "b", "--force", "bench"]), Some(0));
}
