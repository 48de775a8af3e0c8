//! Stage orchestration: each pipeline stage (demo collection, detector
//! training, behavior-cloning pretrain, fine-tune, evaluation) as one
//! function over [`RunConfig`], deterministic given its seed. The CLI is a
//! thin shell around these.

use std::path::Path;

use thiserror::Error;

use crate::bc::{self, BcError};
use crate::classifier::{
    build_dataset, train_classifier, ClassifierError, ClassifierModel, TrainReport,
};
use crate::config::RunConfig;
use crate::env::{collect_demos, collect_failures, run_policy_episode, CollectError, GraspEnv};
use crate::episodes::Episode;
use crate::harness::{
    percentile, run_async_distributed, Harness, HarnessError, RewardSource,
};
use crate::metrics::{EpisodeRow, EvalTrialRow, MetricsRow};
use crate::net::{init_policy_params, sample_policy_batch, NetError, ParamVector};
use crate::seeding::{derive_seed, Domain};
use crate::ACT_DIM;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error(transparent)]
    Collect(#[from] CollectError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Bc(#[from] BcError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error("fine-tune halted by learner failure: {0}")]
    LearnerHalted(String),
}

/// Scripted-expert demonstrations under the `demos.*` settings.
pub fn collect_demo_set(cfg: &RunConfig, seed: u64) -> Result<Vec<Episode>, PipelineError> {
    Ok(collect_demos(
        &cfg.env,
        cfg.demos.count,
        cfg.demos.reset,
        cfg.demos.expert_noise,
        seed,
        cfg.demos.attempts_factor,
    )?)
}

/// Random-policy failure episodes for the detector's negative class.
pub fn collect_failure_set(cfg: &RunConfig, seed: u64) -> Result<Vec<Episode>, PipelineError> {
    Ok(collect_failures(
        &cfg.env,
        cfg.classifier.failures,
        cfg.demos.reset,
        seed,
        cfg.demos.attempts_factor,
    )?)
}

/// Train the success detector on demo frames (positives from the success
/// frame onward) plus failure frames. The split is episode-level inside
/// `train_classifier`.
pub fn train_reward_classifier(
    cfg: &RunConfig,
    demos: &[Episode],
    failures: &[Episode],
    seed: u64,
) -> Result<(ClassifierModel, TrainReport), PipelineError> {
    let mut episodes = Vec::with_capacity(demos.len() + failures.len());
    episodes.extend_from_slice(demos);
    episodes.extend_from_slice(failures);
    let (frames, _counts) = build_dataset(&episodes)?;
    Ok(train_classifier(&frames, &cfg.classifier.train, seed)?)
}

/// Behavior-cloning pretraining: fresh policy parameters, then supervised
/// regression onto the demo actions.
pub fn pretrain_actor(
    cfg: &RunConfig,
    demos: &[Episode],
    seed: u64,
) -> Result<bc::PretrainOutput, PipelineError> {
    let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
    let initial = init_policy_params(&spec, derive_seed(seed, Domain::NetInit, 0), -1.0)?;
    let mut bc_cfg = cfg.bc;
    bc_cfg.seed = seed;
    Ok(bc::pretrain(demos, &spec, initial, &bc_cfg)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinetuneMode {
    /// Actor and learner fused on one thread; bit-exactly reproducible.
    Single,
    /// Same schedule with every message through the wire encoding.
    LockstepDistributed,
    /// Two threads over loopback TCP, wall-clock paced.
    AsyncDistributed,
}

/// Transport/pacing counters from an async run.
#[derive(Clone, Debug)]
pub struct AsyncStats {
    pub transitions_sent: u64,
    pub transitions_ingested: u64,
    pub drop_count: u64,
    pub reconnects: u64,
    pub snapshots_installed: usize,
    pub tick_p50_ms: f64,
    pub tick_p95_ms: f64,
}

pub struct FinetuneOutcome {
    pub final_actor: ParamVector,
    pub metrics: Vec<MetricsRow>,
    pub episode_rows: Vec<EpisodeRow>,
    pub env_steps: u64,
    pub episodes_done: u64,
    pub update_count: u64,
    pub last_lambda: f64,
    pub async_stats: Option<AsyncStats>,
}

/// Regularized fine-tuning from a pretrained actor. `checkpoint_path` (in
/// the synchronous modes) is overwritten at every episode boundary and can
/// resume the run bit-exactly; async mode is wall-clock paced and not
/// replayable, so it takes no checkpoint.
pub fn finetune(
    cfg: &RunConfig,
    pretrained: ParamVector,
    demos: &[Episode],
    reward: RewardSource,
    mode: FinetuneMode,
    seed: u64,
    checkpoint_path: Option<&Path>,
) -> Result<FinetuneOutcome, PipelineError> {
    let hc = cfg.harness_config(reward);
    match mode {
        FinetuneMode::Single | FinetuneMode::LockstepDistributed => {
            let transported = mode == FinetuneMode::LockstepDistributed;
            let mut harness = Harness::new(hc, pretrained, demos, seed, transported)?;
            harness.run(checkpoint_path)?;
            Ok(FinetuneOutcome {
                final_actor: harness.driver.state.actor.clone(),
                env_steps: harness.driver.env_steps,
                episodes_done: harness.driver.episodes_done,
                update_count: harness.driver.state.update_count,
                last_lambda: harness.driver.state.last_lambda,
                metrics: harness.driver.metrics,
                episode_rows: harness.driver.episode_rows,
                async_stats: None,
            })
        }
        FinetuneMode::AsyncDistributed => {
            let report = run_async_distributed(hc, pretrained, demos, seed, cfg.async_options())?;
            if let Some(e) = report.learner_error {
                return Err(PipelineError::LearnerHalted(e));
            }
            let deltas: Vec<f64> = report.ticks.iter().map(|t| t.delta_ms).collect();
            let (p50, p95) = if deltas.is_empty() {
                (0.0, 0.0)
            } else {
                (percentile(&deltas, 0.5), percentile(&deltas, 0.95))
            };
            let last_lambda = report.metrics.last().map_or(0.0, |m| m.lambda);
            Ok(FinetuneOutcome {
                final_actor: report.final_actor,
                env_steps: report.env_steps,
                episodes_done: report.episodes_done,
                update_count: report.update_count,
                last_lambda,
                metrics: report.metrics,
                episode_rows: report.episode_rows,
                async_stats: Some(AsyncStats {
                    transitions_sent: report.transitions_sent,
                    transitions_ingested: report.transitions_ingested,
                    drop_count: report.drop_count,
                    reconnects: report.reconnects,
                    snapshots_installed: report.snapshot_ids_installed.len(),
                    tick_p50_ms: p50,
                    tick_p95_ms: p95,
                }),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean steps from episode start to the success step, over successful
    /// trials only; `None` when nothing succeeded.
    pub mean_ct: Option<f64>,
    pub rows: Vec<EvalTrialRow>,
}

/// Evaluate an actor with deterministic (squashed-mean) actions against
/// ground-truth success, over `eval.trials` fresh episodes. Completion
/// time counts steps from the start through the success step.
pub fn evaluate(cfg: &RunConfig, actor: &ParamVector, seed: u64) -> Result<EvalReport, PipelineError> {
    let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
    let mut env = GraspEnv::new(cfg.env);
    let mut rows = Vec::with_capacity(cfg.eval.trials);
    let mut successes = 0usize;
    let mut ct_sum = 0.0;
    for trial in 0..cfg.eval.trials {
        let episode_seed = derive_seed(seed, Domain::Eval, trial as u64);
        let episode = run_policy_episode(&mut env, episode_seed, cfg.eval.reset, |_, obs| {
            let batch =
                sample_policy_batch(actor, &spec, obs, 1, None).expect("actor matches spec");
            let mut a = [0.0; ACT_DIM];
            a.copy_from_slice(&batch.actions);
            a
        })?;
        let steps_to_success = episode.success_frame.map(|f| f as i64 + 1);
        if episode.success {
            successes += 1;
            ct_sum += steps_to_success.expect("successful episode has a success frame") as f64;
        }
        rows.push(EvalTrialRow {
            trial: trial as u32,
            success: episode.success,
            steps_to_success: steps_to_success.unwrap_or(-1),
            episode_len: episode.len() as u32,
        });
    }
    Ok(EvalReport {
        trials: cfg.eval.trials,
        successes,
        success_rate: successes as f64 / cfg.eval.trials as f64,
        mean_ct: (successes > 0).then(|| ct_sum / successes as f64),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{scripted_expert, ResetMode};
    use crate::learner::Objective;

    fn quick_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.env.sensor_noise = 0.0;
        cfg.demos.count = 4;
        cfg.demos.expert_noise = 0.05;
        cfg.classifier.failures = 4;
        cfg.classifier.train.epochs = 30;
        cfg.bc.epochs = 10;
        cfg.rl.hidden_dims = vec![8];
        cfg.rl.hp.ensemble_size = 2;
        cfg.rl.hp.subset_size = 2;
        cfg.rl.hp.utd_ratio = 1;
        cfg.rl.hp.batch_size = 16;
        cfg.rl.hp.objective = Objective::Alg1;
        cfg.rl.min_online_transitions = 64;
        cfg.rl.max_env_steps = 300;
        cfg.eval.trials = 5;
        cfg
    }

    #[test]
    fn stages_chain_end_to_end_and_are_seed_deterministic() {
        let cfg = quick_cfg();
        let demos = collect_demo_set(&cfg, 7).unwrap();
        assert_eq!(demos.len(), 4);
        let failures = collect_failure_set(&cfg, 7).unwrap();
        assert_eq!(failures.len(), 4);
        let (model, report) = train_reward_classifier(&cfg, &demos, &failures, 7).unwrap();
        assert!(report.accuracy > 0.5, "detector worse than chance");
        let pretrain = pretrain_actor(&cfg, &demos, 7).unwrap();
        assert_eq!(pretrain.loss_curve.len(), 10);

        let outcome = finetune(
            &cfg,
            pretrain.params.clone(),
            &demos,
            RewardSource::Classifier(model),
            FinetuneMode::Single,
            7,
            None,
        )
        .unwrap();
        assert!(outcome.env_steps >= 300);
        assert!(outcome.update_count > 0);
        assert_eq!(
            outcome.metrics.last().unwrap().update_count,
            outcome.update_count
        );

        // same seeds, same bits
        let pretrain2 = pretrain_actor(&cfg, &demos, 7).unwrap();
        assert_eq!(pretrain.params.values, pretrain2.params.values);
        let demos2 = collect_demo_set(&cfg, 7).unwrap();
        assert_eq!(demos[0].transitions[0].obs, demos2[0].transitions[0].obs);
    }

    #[test]
    fn expert_policy_evaluates_near_perfectly() {
        let mut cfg = quick_cfg();
        cfg.eval.trials = 8;
        // evaluate the scripted expert by wrapping it as the "actor" path
        // is exercised separately; here just sanity-check the report math
        // on hand-built outcomes via the real evaluator on a BC actor.
        let demos = collect_demo_set(&cfg, 11).unwrap();
        let mut full_bc = cfg.clone();
        full_bc.bc.epochs = 150;
        let out = pretrain_actor(&full_bc, &demos, 11).unwrap();
        let report = evaluate(&cfg, &out.params, 11).unwrap();
        assert_eq!(report.trials, 8);
        assert_eq!(report.rows.len(), 8);
        assert_eq!(
            report.successes,
            report.rows.iter().filter(|r| r.success).count()
        );
        if report.successes == 0 {
            assert!(report.mean_ct.is_none());
        } else {
            let ct = report.mean_ct.unwrap();
            assert!(ct >= 1.0 && ct <= f64::from(cfg.env.horizon));
        }
        // deterministic evaluation
        let report2 = evaluate(&cfg, &out.params, 11).unwrap();
        assert_eq!(report, report2);

        // the scripted expert itself: direct rollouts all succeed
        let mut env = GraspEnv::new(cfg.env);
        for trial in 0..5 {
            let seed = derive_seed(999, Domain::Eval, trial);
            let ep = run_policy_episode(&mut env, seed, ResetMode::Random, |state, _| {
                scripted_expert(&cfg.env, state, 0.0, &mut crate::seeding::rng_for(1, Domain::ExpertNoise, trial))
            })
            .unwrap();
            assert!(ep.success, "expert failed trial {trial}");
        }
    }

    #[test]
    fn failed_eval_reports_na_completion_time() {
        let mut cfg = quick_cfg();
        cfg.eval.trials = 3;
        // an actor pushing constantly away from the object never succeeds
        let spec = cfg.harness_config(RewardSource::Oracle).actor_spec();
        let mut params = ParamVector::zeros(&spec).unwrap();
        let last = *params.layout.last().unwrap();
        params.values[last.bias_offset()] = -5.0; // vx mean strongly negative
        params.values[last.bias_offset() + 1] = -5.0;
        let report = evaluate(&cfg, &params, 3).unwrap();
        assert_eq!(report.successes, 0);
        assert_eq!(report.success_rate, 0.0);
        assert!(report.mean_ct.is_none());
        assert!(report.rows.iter().all(|r| r.steps_to_success == -1));
        assert!(report
            .rows
            .iter()
            .all(|r| r.episode_len == cfg.env.horizon));
    }
}
