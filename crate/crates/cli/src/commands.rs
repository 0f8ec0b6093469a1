use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use curricula::benchgen::{emit_bundle, generate_benchmark, BenchmarkSpec};
use curricula::clip_pipeline::{build_sample_set, SidecarFeatures};
use curricula::curriculum::{Direction, LogRecord, RoundPlan, RoundRecord, RunObserver, RunRecord, StrategyKind};
use curricula::dataset_model::{filter_subjects, load_manifest_with_registry, ClassRegistry};
use curricula::experiment::{run_strategy, ExperimentConfig};
use curricula::metrics_report::{
    build_efficiency_report, evaluate, write_report, AccuracyRow, AccuracyTable, ComparisonReport, NamedConfusion,
    ReportEntry,
};
use curricula::sampling::{oversample_balance, PoolSummary, SamplePool};
use curricula::trainer::load_checkpoint;
use curricula::{seed, Error};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Flags shared by every command. Flags win over config values.
#[derive(Clone, Debug, Default)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub force: bool,
}

impl Global {
    pub fn effective_config(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::input("this command needs --config <path>"))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = absolute(o)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::path::absolute(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
}

/// Config and validation problems are input errors; anything else raised
/// while training is a training error.
fn training_error(e: Error) -> CliError {
    match e {
        Error::Config(_) | Error::Validation(_) | Error::Parse { .. } | Error::Feature { .. } => CliError::input(e),
        other => CliError::training(other),
    }
}

fn write_file(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, body)?;
    Ok(())
}

/// Removes `dir` under `--force`, refuses if it already has content otherwise.
fn claim_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    let occupied = fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied {
        if !force {
            return Err(CliError::input(format!(
                "{} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

/// Windowed, subject-filtered pools for the three domains.
pub struct DomainPools {
    pub registry: ClassRegistry,
    pub syn: SamplePool,
    pub real: SamplePool,
    pub target: SamplePool,
}

fn load_registry(cfg: &RunConfig) -> Result<ClassRegistry, CliError> {
    match cfg.registry_path() {
        Some(p) => ClassRegistry::load(&p).map_err(|e| CliError::input(format!("{}: {e}", p.display()))),
        None => Ok(ClassRegistry::canonical()),
    }
}

fn load_pool(
    cfg: &RunConfig,
    registry: &ClassRegistry,
    manifest: &Path,
    origin: &str,
    trainable: bool,
    counter: u64,
) -> Result<SamplePool, CliError> {
    let m = load_manifest_with_registry(manifest, registry.clone())
        .map_err(|e| CliError::input(format!("{}: {e}", manifest.display())))?;
    if let Some(r) = m.records.iter().find(|r| r.domain.is_trainable() != trainable) {
        return Err(CliError::input(format!(
            "{}: clip `{}` has domain {} which is not allowed in the {origin} manifest",
            manifest.display(),
            r.clip_id,
            r.domain
        )));
    }
    let excluded: BTreeSet<String> = cfg.paths.exclude_subjects.iter().cloned().collect();
    let (m, _) = filter_subjects(&m, &excluded);
    let features = SidecarFeatures::detect(cfg.features_dir()?, &m).map_err(CliError::input)?;
    let samples = build_sample_set(&m, &cfg.windowing, &features).map_err(CliError::input)?;
    log::info!("{origin}: {} clips, {} windows", m.len(), samples.len());
    Ok(SamplePool::with_classes(samples, registry.len(), seed::derive(cfg.master_seed, counter), origin))
}

pub fn load_domains(cfg: &RunConfig) -> Result<DomainPools, CliError> {
    let registry = load_registry(cfg)?;
    let syn = load_pool(cfg, &registry, &cfg.syn_manifest()?, "syn", true, 1001)?;
    let real = load_pool(cfg, &registry, &cfg.real_manifest()?, "real_ground", true, 1002)?;
    let target = load_target(cfg, &registry)?;
    if syn.is_empty() && real.is_empty() {
        return Err(CliError::input("both training pools are empty after filtering"));
    }
    Ok(DomainPools {
        registry,
        syn,
        real,
        target,
    })
}

fn load_target(cfg: &RunConfig, registry: &ClassRegistry) -> Result<SamplePool, CliError> {
    load_pool(cfg, registry, &cfg.target_manifest()?, "target", false, 1003)
}

#[derive(Debug, Serialize)]
pub struct PrepareOutcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<(String, PoolSummary)>,
}

impl PrepareOutcome {
    pub fn render(&self, registry_names: &[String]) -> String {
        let mut out = String::new();
        for (name, s) in &self.summary {
            let _ = writeln!(out, "{name}: {} samples ({} distinct)", s.total, s.distinct);
            for (c, n) in s.per_class.iter().enumerate() {
                let label = registry_names.get(c).map_or("?", String::as_str);
                let _ = writeln!(out, "  {c:>2} {label:<16} {n}");
            }
        }
        out
    }
}

/// Writes `<out>/pools/{syn,real_ground,target}.pool` and `summary.json`.
///
/// Training pools are oversampled to `target_per_class`; the target pool is
/// written as windowed. Rewriting with the same config gives identical bytes.
pub fn cmd_prepare(global: &Global) -> Result<(PrepareOutcome, Vec<String>), CliError> {
    let cfg = global.effective_config()?;
    let d = load_domains(&cfg)?;
    let dir = cfg.paths.out.join("pools");
    let pools = [
        ("syn", oversample_balance(&d.syn, cfg.target_per_class)),
        ("real_ground", oversample_balance(&d.real, cfg.target_per_class)),
        ("target", d.target.clone()),
    ];
    let mut files = Vec::new();
    let mut summary = Vec::new();
    let io = |e: Error| CliError::input(e);
    for (name, pool) in &pools {
        let p = dir.join(format!("{name}.pool"));
        write_file(&p, pool.to_pool_string()).map_err(io)?;
        files.push(p);
        summary.push((name.to_string(), PoolSummary::from(pool)));
    }
    let p = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(CliError::input)? + "\n";
    write_file(&p, json).map_err(io)?;
    files.push(p);
    let names = d.registry.classes().iter().map(|c| c.name.clone()).collect();
    Ok((PrepareOutcome { files, summary }, names))
}

/// Generates the synthetic benchmark and writes the bundle directory.
///
/// Uses the committed spec when `spec` is `None`; `--seed` replaces the spec seed.
pub fn cmd_bench(global: &Global, spec: Option<&Path>) -> Result<PathBuf, CliError> {
    let mut s = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<BenchmarkSpec>(&text)
                .map_err(|e| CliError::input(format!("{}: benchmark spec error: {e}", p.display())))?
        }
        None => BenchmarkSpec::committed_default(),
    };
    if let Some(seed) = global.seed {
        s.seed = seed;
    }
    s.validate().map_err(CliError::input)?;
    let dir = absolute(global.out.as_deref().unwrap_or(Path::new("bench")))?;
    let bundle = generate_benchmark(&s).map_err(CliError::input)?;
    claim_dir(&dir, global.force)?;
    emit_bundle(&bundle, &dir).map_err(CliError::input)?;
    Ok(dir)
}

/// Writes round artifacts into a run directory as training proceeds.
struct RunDirObserver {
    dir: PathBuf,
    round_dir: PathBuf,
    log: Option<BufWriter<File>>,
}

impl RunObserver for RunDirObserver {
    fn round_started(&mut self, plan: &RoundPlan, pool: &SamplePool) -> curricula::Result<()> {
        self.round_dir = self.dir.join(format!("round_{}", plan.round_index));
        fs::create_dir_all(&self.round_dir)?;
        write_file(&self.round_dir.join("plan.json"), serde_json::to_string_pretty(plan)? + "\n")?;
        write_file(&self.round_dir.join("pool.pool"), pool.to_pool_string())?;
        self.log = Some(BufWriter::new(File::create(self.round_dir.join("log.jsonl"))?));
        Ok(())
    }

    fn step(&mut self, record: &LogRecord) -> curricula::Result<()> {
        if let Some(w) = &mut self.log {
            writeln!(w, "{}", serde_json::to_string(record)?)?;
        }
        Ok(())
    }

    fn round_finished(&mut self, record: &RoundRecord, checkpoint: &[u8]) -> curricula::Result<()> {
        if let Some(mut w) = self.log.take() {
            w.flush()?;
        }
        write_file(&self.round_dir.join("checkpoint.ckpt"), checkpoint)?;
        write_file(&self.round_dir.join("round.json"), serde_json::to_string_pretty(record)? + "\n")?;
        Ok(())
    }
}

pub fn run_dir_name(strategy: &StrategyKind, master_seed: u64) -> String {
    format!("{}_seed{master_seed}", strategy.label())
}

pub fn experiment_config(cfg: &RunConfig) -> ExperimentConfig {
    ExperimentConfig {
        profile: cfg.profile.clone(),
        policy: cfg.convergence.clone(),
        architecture: cfg.model.architecture,
        adamw: cfg.model.adamw,
        target_per_class: cfg.target_per_class,
        reset_optimizer: cfg.model.reset_optimizer,
    }
}

/// Runs one strategy (or every configured strategy when `strategy` is `None`)
/// into `<out>/runs/<label>_seed<master>/`.
pub fn cmd_run(global: &Global, strategy: Option<&str>, direction: Option<Direction>) -> Result<Vec<PathBuf>, CliError> {
    let cfg = global.effective_config()?;
    let kinds: Vec<StrategyKind> = match strategy {
        Some(s) => vec![StrategyKind::parse(s, direction).map_err(CliError::input)?],
        None => cfg
            .strategies
            .iter()
            .map(|s| StrategyKind::parse(s, direction))
            .collect::<curricula::Result<_>>()
            .map_err(CliError::input)?,
    };
    let pools = load_domains(&cfg)?;
    let exp = experiment_config(&cfg);
    let config_text = cfg.to_toml()?;
    let mut dirs = Vec::new();
    for kind in &kinds {
        let dir = cfg.paths.out.join("runs").join(run_dir_name(kind, cfg.master_seed));
        claim_dir(&dir, global.force)?;
        write_file(&dir.join("config.toml"), &config_text).map_err(CliError::input)?;
        let mut obs = RunDirObserver {
            dir: dir.clone(),
            round_dir: dir.clone(),
            log: None,
        };
        log::info!("running {kind} with master seed {}", cfg.master_seed);
        let result =
            run_strategy(kind, &pools.syn, &pools.real, None, &exp, cfg.master_seed, &mut obs).map_err(training_error)?;
        let json = serde_json::to_string_pretty(&result.record).map_err(CliError::training)? + "\n";
        write_file(&dir.join("run_record.json"), json).map_err(CliError::training)?;
        log::info!("{kind}: {} iterations", result.record.total_iterations);
        dirs.push(dir);
    }
    Ok(dirs)
}

/// Reads a run directory's record and its verified final checkpoint.
pub fn load_run(dir: &Path) -> Result<(RunRecord, curricula::trainer::ModelCheckpoint), CliError> {
    let rec_path = dir.join("run_record.json");
    let text = fs::read_to_string(&rec_path)
        .map_err(|e| CliError::compare(format!("{}: {e} (run incomplete?)", rec_path.display())))?;
    let record: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::compare(format!("{}: {e}", rec_path.display())))?;
    let last = record
        .rounds
        .last()
        .ok_or_else(|| CliError::compare(format!("{}: run has no rounds", dir.display())))?;
    let ckpt_path = dir.join(format!("round_{}", last.plan.round_index)).join("checkpoint.ckpt");
    if !ckpt_path.exists() {
        return Err(CliError::compare(format!("{}: final checkpoint missing", ckpt_path.display())));
    }
    let ckpt = load_checkpoint(&ckpt_path).map_err(|e| CliError::compare(format!("{}: {e}", ckpt_path.display())))?;
    if ckpt.content_id() != last.final_checkpoint_id {
        return Err(CliError::compare(format!(
            "{}: checkpoint id {} does not match the run record ({})",
            ckpt_path.display(),
            ckpt.content_id(),
            last.final_checkpoint_id
        )));
    }
    Ok((record, ckpt))
}

/// Scores each run's final checkpoint on the target pool and writes the report.
///
/// The target pool comes from `--config` if given, else from the first run's
/// archived config. Output goes to `--out`, else `<out>/report`.
pub fn cmd_compare(
    global: &Global,
    run_dirs: &[PathBuf],
    base: &str,
    setting: Option<&str>,
) -> Result<PathBuf, CliError> {
    let first = run_dirs
        .first()
        .ok_or_else(|| CliError::compare("compare needs at least one run directory"))?;
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let cfg = match &global.config {
        Some(_) => global.effective_config()?,
        None => {
            let p = first.join("config.toml");
            let text = fs::read_to_string(&p).map_err(|e| CliError::compare(format!("{}: {e}", p.display())))?;
            RunConfig::parse(&text).map_err(|e| CliError::compare(format!("{}: {e}", p.display())))?
        }
    };
    let registry = load_registry(&cfg).map_err(|e| CliError::compare(e.message))?;
    let target = load_target(&cfg, &registry).map_err(|e| CliError::compare(e.message))?;

    let mut labels = BTreeSet::new();
    let mut entries = Vec::new();
    let mut confusions = Vec::new();
    for (record, ckpt) in &runs {
        if !labels.insert(record.label.clone()) {
            return Err(CliError::compare(format!("strategy `{}` appears in more than one run", record.label)));
        }
        let eval = evaluate(ckpt, &target).map_err(CliError::compare)?;
        entries.push(ReportEntry::from_run(record, &eval));
        confusions.push(NamedConfusion {
            label: record.label.clone(),
            matrix: eval.confusion.clone(),
        });
    }
    let setting = setting.map_or_else(|| format!("target pool, master seed {}", cfg.master_seed), String::from);
    let accuracy = AccuracyTable {
        title: "Top-1 accuracy on the target pool".into(),
        columns: vec![setting.clone()],
        rows: entries
            .iter()
            .map(|e| AccuracyRow {
                label: e.display_name.clone(),
                values: vec![Some(e.top1_pct)],
            })
            .collect(),
    };
    let efficiency = build_efficiency_report(&setting, entries, base).map_err(CliError::compare)?;
    let report = ComparisonReport {
        title: "Strategy comparison".into(),
        accuracy: Some(accuracy),
        efficiency: vec![efficiency],
        confusions,
    };
    let dir = match &global.out {
        Some(o) => absolute(o)?,
        None => cfg.paths.out.join("report"),
    };
    write_report(&report, &dir).map_err(CliError::compare)?;
    Ok(dir)
}

/// Re-renders `report.json` (or a bare accuracy CSV) into tables and plots.
pub fn cmd_report(global: &Global, input: &Path) -> Result<PathBuf, CliError> {
    let text = fs::read_to_string(input).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?;
    let report = if input.extension().is_some_and(|e| e == "csv") {
        let title = input.file_stem().map_or("accuracy".into(), |s| s.to_string_lossy().into_owned());
        ComparisonReport {
            title: title.clone(),
            accuracy: Some(AccuracyTable::from_csv(&text, title).map_err(CliError::input)?),
            efficiency: Vec::new(),
            confusions: Vec::new(),
        }
    } else {
        ComparisonReport::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", input.display())))?
    };
    let dir = match &global.out {
        Some(o) => absolute(o)?,
        None => absolute(input.parent().unwrap_or(Path::new(".")))?,
    };
    write_report(&report, &dir).map_err(CliError::input)?;
    Ok(dir)
}
