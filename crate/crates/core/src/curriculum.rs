//! Training schedules and their execution.
//!
//! A schedule is an ordered list of [`RoundPlan`]s. Rounds run strictly in
//! sequence on one trainer, so each round starts from the weights and
//! optimizer moments the previous round left behind; only the learning rate
//! changes. Only the last round may run until convergence, measured as
//! top-1 accuracy on a class-balanced holdout carved from that round's pool.

use std::fmt;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::metrics_report::top1_accuracy;
use crate::sampling::{combine_pools, oversample_balance, split_balanced_subset, SamplePool};
use crate::trainer::{batches_per_epoch, Example, LineageStage, Trainer};
use crate::{seed, Error, Result};

/// One of the two out-of-domain training sources.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Synthetic aerial-view data.
    Syn,
    /// Real ground-view data.
    Real,
}

impl Source {
    pub fn other(self) -> Self {
        match self {
            Source::Syn => Source::Real,
            Source::Real => Source::Syn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SynToReal,
    RealToSyn,
}

impl Direction {
    pub fn first(self) -> Source {
        match self {
            Direction::SynToReal => Source::Syn,
            Direction::RealToSyn => Source::Real,
        }
    }

    pub fn second(self) -> Source {
        self.first().other()
    }

    pub fn short(self) -> &'static str {
        match self {
            Direction::SynToReal => "s_to_r",
            Direction::RealToSyn => "r_to_s",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StrategyKind {
    /// Both sources combined, trained in one convergence round.
    NaiveCombined,
    /// One source only, trained in one convergence round (lower-bound baseline).
    SingleDomain { source: Source },
    /// Pre-train on one source for `e1` epochs, fine-tune on the other.
    TwoStepFt { direction: Direction },
    /// Grow the first source over `rounds - 1` rounds, then fine-tune on the other.
    ///
    /// Without explicit `fractions` only `rounds = 3` is accepted, giving the
    /// fractions `[first_fraction, 1.0]`.
    Progressive {
        direction: Direction,
        rounds: usize,
        first_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fractions: Option<Vec<f64>>,
    },
}

impl StrategyKind {
    pub fn progressive() -> Self {
        StrategyKind::Progressive {
            direction: Direction::SynToReal,
            rounds: 3,
            first_fraction: 0.5,
            fractions: None,
        }
    }

    pub fn two_step(direction: Direction) -> Self {
        StrategyKind::TwoStepFt { direction }
    }

    /// Short machine label, used for run ids and report rows.
    pub fn label(&self) -> String {
        match self {
            StrategyKind::NaiveCombined => "naive".into(),
            StrategyKind::SingleDomain { source: Source::Syn } => "syn_only".into(),
            StrategyKind::SingleDomain { source: Source::Real } => "real_only".into(),
            StrategyKind::TwoStepFt { direction } => format!("two_step_ft_{}", direction.short()),
            StrategyKind::Progressive { direction: Direction::SynToReal, .. } => "progressive".into(),
            StrategyKind::Progressive { direction, .. } => format!("progressive_{}", direction.short()),
        }
    }

    /// Human-readable name in the style of the results table.
    pub fn display_name(&self) -> String {
        match self {
            StrategyKind::NaiveCombined => "Real (G) + Synthetic (A)".into(),
            StrategyKind::SingleDomain { source: Source::Syn } => "Synthetic Only (Aerial)".into(),
            StrategyKind::SingleDomain { source: Source::Real } => "Real Only (Ground)".into(),
            StrategyKind::TwoStepFt { direction: Direction::SynToReal } => "Non-Progressive + FT (S-to-R)".into(),
            StrategyKind::TwoStepFt { direction: Direction::RealToSyn } => "Non-Progressive + FT (R-to-S)".into(),
            StrategyKind::Progressive { direction: Direction::SynToReal, .. } => "Progressive + FT".into(),
            StrategyKind::Progressive { .. } => "Progressive + FT (R-to-S)".into(),
        }
    }

    /// Parses a CLI strategy name (`naive`, `syn_only`, `real_only`,
    /// `two_step_ft`, `progressive`) with an optional direction.
    pub fn parse(name: &str, direction: Option<Direction>) -> Result<Self> {
        let dir = direction.unwrap_or(Direction::SynToReal);
        Ok(match name {
            "naive" | "naive_combined" => StrategyKind::NaiveCombined,
            "syn_only" => StrategyKind::SingleDomain { source: Source::Syn },
            "real_only" => StrategyKind::SingleDomain { source: Source::Real },
            "two_step_ft" | "two_step" => StrategyKind::TwoStepFt { direction: dir },
            "two_step_ft_s_to_r" => StrategyKind::two_step(Direction::SynToReal),
            "two_step_ft_r_to_s" => StrategyKind::two_step(Direction::RealToSyn),
            "progressive" => StrategyKind::Progressive {
                direction: dir,
                rounds: 3,
                first_fraction: 0.5,
                fractions: None,
            },
            other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
        })
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetSpec {
    Subset { source: Source, fraction: f64 },
    Full { source: Source },
    Combined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergencePolicy {
    /// Iterations between holdout evaluations; `None` means one epoch.
    pub eval_every: Option<usize>,
    pub patience: usize,
    pub min_delta: f64,
    pub max_epochs: usize,
    pub holdout_fraction: f64,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            eval_every: None,
            patience: 10,
            min_delta: 1e-4,
            max_epochs: 200,
            holdout_fraction: 0.1,
        }
    }
}

impl ConvergencePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience and max_epochs must be at least 1".into()));
        }
        if self.eval_every == Some(0) {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config(format!(
                "holdout_fraction must be in (0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RoundDuration {
    FixedEpochs { epochs: usize },
    UntilConvergence { policy: ConvergencePolicy },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    /// 1-based.
    pub round_index: usize,
    pub dataset: DatasetSpec,
    pub duration: RoundDuration,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingProfile {
    pub name: String,
    pub base_lr: f64,
    pub finetune_lr: f64,
    pub e1: usize,
    pub e2: usize,
    pub batch_size: usize,
}

impl TrainingProfile {
    /// CNN-style settings: lr 0.1 → 0.05, 150 + 150 epochs, batch 45.
    pub fn slowfast() -> Self {
        Self {
            name: "slowfast".into(),
            base_lr: 0.1,
            finetune_lr: 0.05,
            e1: 150,
            e2: 150,
            batch_size: 45,
        }
    }

    /// Transformer-style settings: lr 1e-4 → 5e-5, 30 + 60 epochs, batch 12.
    pub fn mvitv2() -> Self {
        Self {
            name: "mvitv2".into(),
            base_lr: 1e-4,
            finetune_lr: 5e-5,
            e1: 30,
            e2: 60,
            batch_size: 12,
        }
    }

    /// Desk-scale settings for the reference trainer on the committed benchmark.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            base_lr: 0.005,
            finetune_lr: 0.0005,
            e1: 10,
            e2: 4,
            batch_size: 45,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "slowfast" => Ok(Self::slowfast()),
            "mvitv2" => Ok(Self::mvitv2()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.finetune_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.finetune_lr >= self.base_lr {
            return Err(Error::Config(format!(
                "finetune_lr ({}) must be below base_lr ({})",
                self.finetune_lr, self.base_lr
            )));
        }
        if self.batch_size == 0 || self.e1 == 0 || self.e2 == 0 {
            return Err(Error::Config("batch_size, e1 and e2 must be at least 1".into()));
        }
        Ok(())
    }
}

fn expansion_fractions(rounds: usize, first_fraction: f64, fractions: &Option<Vec<f64>>) -> Result<Vec<f64>> {
    if rounds < 2 {
        return Err(Error::Config(format!("progressive schedules need at least 2 rounds, got {rounds}")));
    }
    let fr = match fractions {
        Some(f) => f.clone(),
        None if rounds == 3 => {
            if !(first_fraction > 0.0 && first_fraction < 1.0) {
                return Err(Error::Config(format!("first_fraction must be in (0, 1), got {first_fraction}")));
            }
            vec![first_fraction, 1.0]
        }
        None => {
            return Err(Error::Config(format!(
                "{rounds}-round progressive schedules need explicit expansion fractions"
            )))
        }
    };
    if fr.len() != rounds - 1 {
        return Err(Error::Config(format!(
            "{rounds} rounds need {} expansion fractions, got {}",
            rounds - 1,
            fr.len()
        )));
    }
    let increasing = fr.windows(2).all(|w| w[0] < w[1]);
    if !increasing || fr[0] <= 0.0 || fr.last() != Some(&1.0) {
        return Err(Error::Config(format!(
            "expansion fractions must be strictly increasing in (0, 1] and end at 1.0, got {fr:?}"
        )));
    }
    Ok(fr)
}

/// Expands a strategy into its rounds.
pub fn build_schedule(
    strategy: &StrategyKind,
    profile: &TrainingProfile,
    policy: &ConvergencePolicy,
) -> Result<Vec<RoundPlan>> {
    profile.validate()?;
    policy.validate()?;
    let converge = || RoundDuration::UntilConvergence { policy: policy.clone() };
    let plan = |round_index, dataset, duration, learning_rate| RoundPlan {
        round_index,
        dataset,
        duration,
        learning_rate,
    };
    Ok(match strategy {
        StrategyKind::NaiveCombined => vec![plan(1, DatasetSpec::Combined, converge(), profile.base_lr)],
        StrategyKind::SingleDomain { source } => {
            vec![plan(1, DatasetSpec::Full { source: *source }, converge(), profile.base_lr)]
        }
        StrategyKind::TwoStepFt { direction } => vec![
            plan(
                1,
                DatasetSpec::Full {
                    source: direction.first(),
                },
                RoundDuration::FixedEpochs { epochs: profile.e1 },
                profile.base_lr,
            ),
            plan(
                2,
                DatasetSpec::Full {
                    source: direction.second(),
                },
                converge(),
                profile.finetune_lr,
            ),
        ],
        StrategyKind::Progressive {
            direction,
            rounds,
            first_fraction,
            fractions,
        } => {
            let fr = expansion_fractions(*rounds, *first_fraction, fractions)?;
            let mut plans: Vec<RoundPlan> = fr
                .iter()
                .enumerate()
                .map(|(i, &f)| {
                    let source = direction.first();
                    let dataset = if f < 1.0 {
                        DatasetSpec::Subset { source, fraction: f }
                    } else {
                        DatasetSpec::Full { source }
                    };
                    let epochs = if i == 0 { profile.e1 } else { profile.e2 };
                    plan(i + 1, dataset, RoundDuration::FixedEpochs { epochs }, profile.base_lr)
                })
                .collect();
            plans.push(plan(
                *rounds,
                DatasetSpec::Full {
                    source: direction.second(),
                },
                converge(),
                profile.finetune_lr,
            ));
            plans
        }
    })
}

/// Assembles one round's training pool.
///
/// Subsets are split off before oversampling; every source pool is brought up
/// to `target_per_class` separately before any combination.
pub fn stage_dataset(
    spec: &DatasetSpec,
    syn: &SamplePool,
    real: &SamplePool,
    target_per_class: usize,
    stage_seed: u64,
) -> Result<SamplePool> {
    let pick = |s: Source| match s {
        Source::Syn => syn,
        Source::Real => real,
    };
    let balanced = |p: &SamplePool, counter| oversample_balance(&p.clone().with_seed(seed::derive(stage_seed, counter)), target_per_class);
    let mut pool = match spec {
        DatasetSpec::Subset { source, fraction } => {
            let (subset, _) = split_balanced_subset(pick(*source), *fraction, seed::derive(stage_seed, 0))?;
            balanced(&subset, 1)
        }
        DatasetSpec::Full { source } => balanced(pick(*source), 1),
        DatasetSpec::Combined => combine_pools(&[&balanced(syn, 1), &balanced(real, 2)])?,
    };
    pool.push_lineage(format!("stage_dataset {} seed={stage_seed}", serde_json::to_string(spec)?));
    Ok(pool)
}

/// Gradient steps for `epochs` passes over `n_samples` in batches of `batch_size`.
pub fn iterations_for(n_samples: usize, batch_size: usize, epochs: usize) -> usize {
    epochs * batches_per_epoch(n_samples, batch_size)
}

/// One structured training-log line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub round: usize,
    pub epoch: usize,
    pub iteration: usize,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub plan: RoundPlan,
    pub seed: u64,
    /// Training examples per epoch (holdout excluded), counting duplicates.
    pub pool_size: usize,
    pub holdout_size: usize,
    pub iterations: usize,
    pub epochs_completed: usize,
    pub stopped_early: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_holdout_accuracy: Option<f64>,
    /// Top-1 on the run's evaluation set after this round; reported only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_top1: Option<f64>,
    pub final_checkpoint_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: StrategyKind,
    pub label: String,
    pub master_seed: u64,
    pub rounds: Vec<RoundRecord>,
    pub total_iterations: usize,
}

impl RunRecord {
    pub fn seeds(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.seed).collect()
    }

    pub fn final_checkpoint_id(&self) -> Option<&str> {
        self.rounds.last().map(|r| r.final_checkpoint_id.as_str())
    }
}

/// Receives run artifacts as they are produced.
pub trait RunObserver {
    fn round_started(&mut self, _plan: &RoundPlan, _pool: &SamplePool) -> Result<()> {
        Ok(())
    }
    fn step(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }
    fn round_finished(&mut self, _record: &RoundRecord, _checkpoint: &[u8]) -> Result<()> {
        Ok(())
    }
}

/// Observer that discards everything.
pub struct NoopObserver;

impl RunObserver for NoopObserver {}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub strategy: StrategyKind,
    pub target_per_class: usize,
    pub batch_size: usize,
    /// Zero the optimizer moments at every round boundary instead of carrying them.
    pub reset_optimizer: bool,
}

/// Holdout early-stopping state.
#[derive(Clone, Debug)]
pub struct ConvergenceTracker {
    patience: usize,
    min_delta: f64,
    best: Option<f64>,
    stale: usize,
}

impl ConvergenceTracker {
    pub fn new(policy: &ConvergencePolicy) -> Self {
        Self {
            patience: policy.patience,
            min_delta: policy.min_delta,
            best: None,
            stale: 0,
        }
    }

    /// Records one evaluation; returns `true` once `patience` consecutive
    /// evaluations have failed to beat the best by `min_delta`.
    pub fn observe(&mut self, metric: f64) -> bool {
        match self.best {
            Some(b) if metric <= b + self.min_delta => self.stale += 1,
            _ => {
                self.best = Some(metric);
                self.stale = 0;
            }
        }
        self.stale >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

fn examples(pool: &SamplePool) -> Vec<Example<'_>> {
    pool.expanded()
        .map(|s| Example {
            x: &s.features,
            y: s.label,
        })
        .collect()
}

/// Runs `plans` in order on `trainer`.
///
/// Round `r` draws every random choice from streams keyed by
/// `(master_seed, r)`: dataset staging, the holdout split and the epoch
/// shuffles. `eval_set`, when given, is scored after each round for reporting
/// only; it never influences training.
pub fn run_schedule(
    plans: &[RoundPlan],
    syn: &SamplePool,
    real: &SamplePool,
    trainer: &mut dyn Trainer,
    eval_set: Option<&SamplePool>,
    master_seed: u64,
    opts: &RunOptions,
    observer: &mut dyn RunObserver,
) -> Result<RunRecord> {
    if plans.is_empty() {
        return Err(Error::Config("schedule has no rounds".into()));
    }
    if let Some(pos) = plans
        .iter()
        .position(|p| matches!(p.duration, RoundDuration::UntilConvergence { .. }))
    {
        if pos != plans.len() - 1 {
            return Err(Error::Config("only the final round may run until convergence".into()));
        }
    }
    if opts.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let label = opts.strategy.label();
    let eval_examples = eval_set.map(examples);
    let mut record = RunRecord {
        strategy: opts.strategy.clone(),
        label: label.clone(),
        master_seed,
        rounds: Vec::with_capacity(plans.len()),
        total_iterations: 0,
    };

    for (i, plan) in plans.iter().enumerate() {
        let round_seed = seed::derive(master_seed, plan.round_index as u64);
        let staged = stage_dataset(&plan.dataset, syn, real, opts.target_per_class, seed::derive(round_seed, 0))?;
        let (train_pool, holdout) = match &plan.duration {
            RoundDuration::UntilConvergence { policy } => {
                let (holdout, rest) = split_balanced_subset(&staged, policy.holdout_fraction, seed::derive(round_seed, 1))?;
                (rest, Some(holdout))
            }
            RoundDuration::FixedEpochs { .. } => (staged, None),
        };
        observer.round_started(plan, &train_pool)?;

        if i > 0 && opts.reset_optimizer {
            trainer.reset_optimizer();
        }
        trainer.reseed(seed::derive(round_seed, 2));

        let train_examples = examples(&train_pool);
        let holdout_examples = holdout.as_ref().map(examples).unwrap_or_default();
        let per_epoch = batches_per_epoch(train_examples.len(), opts.batch_size);
        let round = plan.round_index;
        let mut observer_error = None;
        let mut tracker = None;
        let mut stopped_early = false;
        let (epochs, eval_every) = match &plan.duration {
            RoundDuration::FixedEpochs { epochs } => (*epochs, None),
            RoundDuration::UntilConvergence { policy } => {
                tracker = Some(ConvergenceTracker::new(policy));
                (policy.max_epochs, Some(policy.eval_every.unwrap_or(per_epoch).max(1)))
            }
        };
        let outcome = trainer.run_epochs(
            &train_examples,
            opts.batch_size,
            plan.learning_rate,
            epochs,
            &mut |clf, s| {
                let mut holdout_accuracy = None;
                let mut stop = false;
                if let (Some(every), Some(t)) = (eval_every, tracker.as_mut()) {
                    if s.iteration % every == 0 {
                        match top1_accuracy(clf, &holdout_examples) {
                            Ok(acc) => {
                                holdout_accuracy = Some(acc);
                                stop = t.observe(acc);
                            }
                            Err(e) => {
                                observer_error = Some(e);
                                return ControlFlow::Break(());
                            }
                        }
                    }
                }
                let rec = LogRecord {
                    round,
                    epoch: s.epoch,
                    iteration: s.iteration,
                    loss: s.loss,
                    holdout_accuracy,
                };
                if let Err(e) = observer.step(&rec) {
                    observer_error = Some(e);
                    return ControlFlow::Break(());
                }
                if stop {
                    stopped_early = true;
                    return ControlFlow::Break(());
                }
                ControlFlow::Continue(())
            },
        );
        if let Some(e) = observer_error {
            return Err(e);
        }
        let outcome = outcome.map_err(|e| {
            let last = record.final_checkpoint_id().unwrap_or("none").to_string();
            Error::Trainer(format!("round {round} failed: {e}; last durable checkpoint: {last}"))
        })?;

        trainer.push_lineage(LineageStage {
            strategy: label.clone(),
            round,
        });
        let bytes = trainer.save();
        let eval_top1 = match &eval_examples {
            Some(ex) => Some(top1_accuracy(&*trainer, ex)?),
            None => None,
        };
        let rr = RoundRecord {
            plan: plan.clone(),
            seed: round_seed,
            pool_size: train_examples.len(),
            holdout_size: holdout_examples.len(),
            iterations: outcome.iterations,
            epochs_completed: outcome.epochs_completed,
            stopped_early,
            best_holdout_accuracy: tracker.as_ref().and_then(ConvergenceTracker::best),
            eval_top1,
            final_checkpoint_id: format!("{:08x}", crc32fast::hash(&bytes)),
        };
        record.total_iterations += rr.iterations;
        observer.round_finished(&rr, &bytes)?;
        record.rounds.push(rr);
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::pool_with_counts;
    use crate::trainer::{init_model_with, AdamWConfig, Architecture};

    fn policy() -> ConvergencePolicy {
        ConvergencePolicy::default()
    }

    #[test]
    fn progressive_mvitv2_schedule() {
        let plans = build_schedule(&StrategyKind::progressive(), &TrainingProfile::mvitv2(), &policy()).unwrap();
        assert_eq!(plans.len(), 3);
        assert_eq!(
            plans[0].dataset,
            DatasetSpec::Subset {
                source: Source::Syn,
                fraction: 0.5
            }
        );
        assert_eq!(plans[0].duration, RoundDuration::FixedEpochs { epochs: 30 });
        assert_eq!(plans[0].learning_rate, 1e-4);
        assert_eq!(plans[1].dataset, DatasetSpec::Full { source: Source::Syn });
        assert_eq!(plans[1].duration, RoundDuration::FixedEpochs { epochs: 60 });
        assert_eq!(plans[1].learning_rate, 1e-4);
        assert_eq!(plans[2].dataset, DatasetSpec::Full { source: Source::Real });
        assert!(matches!(plans[2].duration, RoundDuration::UntilConvergence { .. }));
        assert_eq!(plans[2].learning_rate, 5e-5);
    }

    #[test]
    fn naive_and_two_step_schedules() {
        let p = TrainingProfile::slowfast();
        let naive = build_schedule(&StrategyKind::NaiveCombined, &p, &policy()).unwrap();
        assert_eq!(naive.len(), 1);
        assert_eq!(naive[0].dataset, DatasetSpec::Combined);
        assert_eq!(naive[0].learning_rate, 0.1);

        let two = build_schedule(&StrategyKind::two_step(Direction::SynToReal), &p, &policy()).unwrap();
        assert_eq!(two[0].dataset, DatasetSpec::Full { source: Source::Syn });
        assert_eq!(two[0].duration, RoundDuration::FixedEpochs { epochs: 150 });
        assert_eq!(two[0].learning_rate, 0.1);
        assert_eq!(two[1].dataset, DatasetSpec::Full { source: Source::Real });
        assert_eq!(two[1].learning_rate, 0.05);

        let rev = build_schedule(&StrategyKind::two_step(Direction::RealToSyn), &p, &policy()).unwrap();
        assert_eq!(rev[0].dataset, DatasetSpec::Full { source: Source::Real });
        assert_eq!(rev[1].dataset, DatasetSpec::Full { source: Source::Syn });
    }

    #[test]
    fn every_schedule_ends_in_one_convergence_round() {
        let strategies = [
            StrategyKind::NaiveCombined,
            StrategyKind::SingleDomain { source: Source::Real },
            StrategyKind::two_step(Direction::SynToReal),
            StrategyKind::two_step(Direction::RealToSyn),
            StrategyKind::progressive(),
            StrategyKind::Progressive {
                direction: Direction::RealToSyn,
                rounds: 4,
                first_fraction: 0.5,
                fractions: Some(vec![0.25, 0.5, 1.0]),
            },
        ];
        for s in &strategies {
            let plans = build_schedule(s, &TrainingProfile::desk(), &policy()).unwrap();
            let conv: Vec<usize> = plans
                .iter()
                .enumerate()
                .filter(|(_, p)| matches!(p.duration, RoundDuration::UntilConvergence { .. }))
                .map(|(i, _)| i)
                .collect();
            assert_eq!(conv, vec![plans.len() - 1], "{s}");
            let ft: Vec<bool> = plans.iter().map(|p| p.learning_rate == TrainingProfile::desk().finetune_lr).collect();
            let expect_ft = !matches!(s, StrategyKind::NaiveCombined | StrategyKind::SingleDomain { .. });
            assert_eq!(ft.last(), Some(&expect_ft));
            assert!(ft[..ft.len() - 1].iter().all(|&x| !x));
        }
    }

    #[test]
    fn progressive_round_count_rules() {
        let p = TrainingProfile::desk();
        let four = StrategyKind::Progressive {
            direction: Direction::SynToReal,
            rounds: 4,
            first_fraction: 0.5,
            fractions: None,
        };
        assert!(matches!(build_schedule(&four, &p, &policy()), Err(Error::Config(_))));
        let bad = StrategyKind::Progressive {
            direction: Direction::SynToReal,
            rounds: 4,
            first_fraction: 0.5,
            fractions: Some(vec![0.5, 0.4, 1.0]),
        };
        assert!(build_schedule(&bad, &p, &policy()).is_err());
        let short = StrategyKind::Progressive {
            direction: Direction::SynToReal,
            rounds: 1,
            first_fraction: 0.5,
            fractions: None,
        };
        assert!(build_schedule(&short, &p, &policy()).is_err());
        let mut profile = p.clone();
        profile.finetune_lr = profile.base_lr;
        assert!(build_schedule(&StrategyKind::NaiveCombined, &profile, &policy()).is_err());
    }

    #[test]
    fn iteration_formula() {
        assert_eq!(iterations_for(90, 45, 150), 300);
        assert_eq!(iterations_for(6000 * 12, 12, 30), 180_000);
        assert_eq!(iterations_for(100, 45, 1), 3);
    }

    #[test]
    fn staging_subset_and_combined() {
        let syn = pool_with_counts(&[10; 12], 1);
        let real = pool_with_counts(&[10; 12], 2);
        let sub = stage_dataset(
            &DatasetSpec::Subset {
                source: Source::Syn,
                fraction: 0.5,
            },
            &syn,
            &real,
            10,
            3,
        )
        .unwrap();
        assert_eq!(sub.class_counts(), vec![10; 12]);
        assert_eq!(sub.distinct(), 60);
        let again = stage_dataset(
            &DatasetSpec::Subset {
                source: Source::Syn,
                fraction: 0.5,
            },
            &syn,
            &real,
            10,
            3,
        )
        .unwrap();
        assert_eq!(sub.to_pool_string(), again.to_pool_string());
        let comb = stage_dataset(&DatasetSpec::Combined, &syn, &real, 10, 3).unwrap();
        assert_eq!(comb.class_counts(), vec![20; 12]);
    }

    #[test]
    fn convergence_tracker_patience() {
        let mut t = ConvergenceTracker::new(&ConvergencePolicy {
            patience: 2,
            min_delta: 0.01,
            ..Default::default()
        });
        assert!(!t.observe(0.5));
        assert!(!t.observe(0.505));
        assert!(!t.observe(0.6));
        assert!(!t.observe(0.6));
        assert!(t.observe(0.59));
        assert_eq!(t.best(), Some(0.6));
    }

    #[test]
    fn fixed_round_iterations() {
        let syn = pool_with_counts(&[90], 1);
        let real = syn.clone();
        let plans = vec![RoundPlan {
            round_index: 1,
            dataset: DatasetSpec::Full { source: Source::Syn },
            duration: RoundDuration::FixedEpochs { epochs: 2 },
            learning_rate: 0.01,
        }];
        let mut model = init_model_with(Architecture::Linear, 2, 1, AdamWConfig::default(), 0);
        let opts = RunOptions {
            strategy: StrategyKind::SingleDomain { source: Source::Syn },
            target_per_class: 0,
            batch_size: 45,
            reset_optimizer: false,
        };
        let rec = run_schedule(&plans, &syn, &real, &mut model, None, 1, &opts, &mut NoopObserver).unwrap();
        assert_eq!(rec.rounds[0].iterations, 4);
        assert_eq!(rec.total_iterations, 4);
        assert_eq!(model.lineage.len(), 1);
    }
}
