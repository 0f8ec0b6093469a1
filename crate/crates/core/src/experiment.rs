//! One strategy end to end: init, schedule, train, score on the target pool.

use serde::{Deserialize, Serialize};

use crate::curriculum::{build_schedule, run_schedule, ConvergencePolicy, RunObserver, RunOptions, RunRecord, StrategyKind, TrainingProfile};
use crate::metrics_report::{evaluate, EvalResult};
use crate::sampling::SamplePool;
use crate::trainer::{init_model_with, AdamWConfig, Architecture, ModelCheckpoint};
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: TrainingProfile,
    #[serde(default)]
    pub policy: ConvergencePolicy,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default)]
    pub adamw: AdamWConfig,
    pub target_per_class: usize,
    #[serde(default)]
    pub reset_optimizer: bool,
}

fn default_architecture() -> Architecture {
    Architecture::Linear
}

impl ExperimentConfig {
    /// Desk profile with a linear head and patience 3, the settings the
    /// committed benchmark was calibrated with.
    pub fn desk(target_per_class: usize) -> Self {
        Self {
            profile: TrainingProfile::desk(),
            policy: ConvergencePolicy {
                patience: 3,
                ..ConvergencePolicy::default()
            },
            architecture: Architecture::Linear,
            adamw: AdamWConfig::default(),
            target_per_class,
            reset_optimizer: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub record: RunRecord,
    /// Final model scored on the target pool, if one was given.
    pub eval: Option<EvalResult>,
    pub model: ModelCheckpoint,
}

/// Runs `strategy` from a fresh model seeded by `derive(master_seed, 0)`.
///
/// Round seeds use counters from 1 upward, so they never collide with the init seed.
pub fn run_strategy(
    strategy: &StrategyKind,
    syn: &SamplePool,
    real: &SamplePool,
    target: Option<&SamplePool>,
    cfg: &ExperimentConfig,
    master_seed: u64,
    observer: &mut dyn RunObserver,
) -> Result<ExperimentResult> {
    let d = syn
        .dim()
        .or_else(|| real.dim())
        .ok_or_else(|| Error::Config("both source pools are empty".into()))?;
    let plans = build_schedule(strategy, &cfg.profile, &cfg.policy)?;
    let mut model = init_model_with(cfg.architecture, d, syn.n_classes(), cfg.adamw, seed::derive(master_seed, 0));
    let opts = RunOptions {
        strategy: strategy.clone(),
        target_per_class: cfg.target_per_class,
        batch_size: cfg.profile.batch_size,
        reset_optimizer: cfg.reset_optimizer,
    };
    let record = run_schedule(&plans, syn, real, &mut model, None, master_seed, &opts, observer)?;
    let eval = target.map(|t| evaluate(&model, t)).transpose()?;
    Ok(ExperimentResult { record, eval, model })
}
