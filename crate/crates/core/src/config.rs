//! Run configuration: a flat `key = value` text file covering every
//! tunable in the pipeline, grouped by dotted prefix (`env.*`, `demos.*`,
//! `classifier.*`, `bc.*`, `rl.*`, `dist.*`, `eval.*`).
//!
//! Parsing is strict: unknown keys, unparseable values, and duplicate
//! assignments are errors with line numbers. Missing keys take the pinned
//! defaults. [`RunConfig::resolved_text`] renders the fully resolved
//! configuration back into the same format — the copy every run directory
//! stores — and parsing that text reproduces the config exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::bc::BcConfig;
use crate::classifier::ClassifierTrainConfig;
use crate::env::{EnvConfig, ResetMode};
use crate::harness::{AsyncOptions, EarlyStop, Exploration, HarnessConfig, RewardSource};
use crate::learner::{Objective, RlHyperparams};

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: key `{key}` assigned twice")]
    DuplicateKey { line: usize, key: String },
    #[error("config line {line}: bad value for `{key}`: {detail}")]
    BadValue {
        line: usize,
        key: String,
        detail: String,
    },
}

/// Which signal grades transitions during fine-tuning. The config only
/// names the kind; loading an actual detector model is the caller's job.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardKind {
    Oracle,
    Classifier,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoSettings {
    pub count: usize,
    /// Uniform half-width of the noise added to scripted expert actions.
    pub expert_noise: f64,
    pub reset: ResetMode,
    /// Collection gives up after `attempts_factor * count` rollouts.
    pub attempts_factor: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierSettings {
    pub train: ClassifierTrainConfig,
    /// Random-policy failure episodes mixed into the training set.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlSettings {
    pub hp: RlHyperparams,
    pub hidden_dims: Vec<usize>,
    pub online_capacity: usize,
    pub min_online_transitions: usize,
    pub updates_per_env_step: u64,
    pub max_env_steps: u64,
    pub param_refresh_interval: u64,
    pub reset: ResetMode,
    pub reward: RewardKind,
    pub early_stop: bool,
    pub stop: EarlyStop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistSettings {
    pub control_period_ms: u64,
    pub queue_capacity: usize,
    pub heartbeat_interval_ms: u64,
    pub heartbeat_timeout_ms: u64,
    /// 0 = no wall-clock limit.
    pub wall_limit_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub trials: usize,
    pub reset: ResetMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub demos: DemoSettings,
    pub classifier: ClassifierSettings,
    pub bc: BcConfig,
    pub rl: RlSettings,
    pub dist: DistSettings,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvConfig::default(),
            demos: DemoSettings {
                count: 30,
                expert_noise: 0.1,
                reset: ResetMode::Random,
                attempts_factor: 20,
            },
            classifier: ClassifierSettings {
                train: ClassifierTrainConfig::default(),
                failures: 30,
            },
            bc: BcConfig::default(),
            rl: RlSettings {
                hp: RlHyperparams::default(),
                hidden_dims: vec![64, 64],
                online_capacity: 100_000,
                min_online_transitions: 500,
                updates_per_env_step: 1,
                max_env_steps: 10_000,
                param_refresh_interval: 50,
                reset: ResetMode::Random,
                reward: RewardKind::Classifier,
                early_stop: false,
                stop: EarlyStop {
                    min_env_steps: 2_000,
                    success_window: 30,
                    success_threshold: 0.95,
                    lambda_window: 200,
                    lambda_max: 0.05,
                },
            },
            dist: DistSettings {
                control_period_ms: 20,
                queue_capacity: 4096,
                heartbeat_interval_ms: 1_000,
                heartbeat_timeout_ms: 5_000,
                wall_limit_s: 0.0,
            },
            eval: EvalSettings {
                trials: 100,
                reset: ResetMode::Random,
            },
        }
    }
}

fn reset_name(mode: ResetMode) -> &'static str {
    match mode {
        ResetMode::Fixed => "fixed",
        ResetMode::Random => "random",
    }
}

fn reward_name(kind: RewardKind) -> &'static str {
    match kind {
        RewardKind::Oracle => "oracle",
        RewardKind::Classifier => "classifier",
    }
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Alg1 => "alg1",
        Objective::Eq2 => "eq2",
    }
}

fn hidden_name(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

struct Line<'a> {
    number: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn bad(&self, detail: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            line: self.number,
            key: self.key.to_string(),
            detail: detail.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, what: &str) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.bad(format!("expected {what}, got `{}`", self.value)))
    }

    fn parse_bool(&self) -> Result<bool, ConfigError> {
        match self.value {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.bad(format!("expected true or false, got `{}`", self.value))),
        }
    }

    fn parse_reset(&self) -> Result<ResetMode, ConfigError> {
        match self.value {
            "fixed" => Ok(ResetMode::Fixed),
            "random" => Ok(ResetMode::Random),
            _ => Err(self.bad(format!("expected fixed or random, got `{}`", self.value))),
        }
    }

    fn parse_hidden(&self) -> Result<Vec<usize>, ConfigError> {
        let dims: Result<Vec<usize>, _> = self
            .value
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect();
        match dims {
            Ok(d) if !d.is_empty() && d.iter().all(|&w| w > 0) => Ok(d),
            _ => Err(self.bad(format!(
                "expected comma-separated positive widths, got `{}`",
                self.value
            ))),
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_str_strict(&std::fs::read_to_string(path)?)
    }

    /// Parse config text over the defaults. Unknown keys, duplicate keys,
    /// and malformed values are all errors.
    pub fn from_str_strict(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let number = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: number,
                    text: line.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line: number,
                    key: key.to_string(),
                });
            }
            cfg.set(&Line { number, key, value })?;
        }
        Ok(cfg)
    }

    fn set(&mut self, l: &Line) -> Result<(), ConfigError> {
        match l.key {
            "env.horizon" => self.env.horizon = l.parse("a positive integer")?,
            "env.max_step" => self.env.max_step = l.parse("a real")?,
            "env.reach_threshold" => self.env.reach_threshold = l.parse("a real")?,
            "env.close_threshold" => self.env.close_threshold = l.parse("a real")?,
            "env.drop_threshold" => self.env.drop_threshold = l.parse("a real")?,
            "env.lift_threshold" => self.env.lift_threshold = l.parse("a real")?,
            "env.lift_increment" => self.env.lift_increment = l.parse("a real")?,
            "env.sensor_noise" => self.env.sensor_noise = l.parse("a real")?,
            "env.home_x" => self.env.home[0] = l.parse("a real")?,
            "env.home_y" => self.env.home[1] = l.parse("a real")?,
            "env.fixed_obj_x" => self.env.fixed_obj[0] = l.parse("a real")?,
            "env.fixed_obj_y" => self.env.fixed_obj[1] = l.parse("a real")?,
            "env.region_min" => self.env.region_min = l.parse("a real")?,
            "env.region_max" => self.env.region_max = l.parse("a real")?,

            "demos.count" => self.demos.count = l.parse("a positive integer")?,
            "demos.expert_noise" => self.demos.expert_noise = l.parse("a real")?,
            "demos.reset" => self.demos.reset = l.parse_reset()?,
            "demos.attempts_factor" => self.demos.attempts_factor = l.parse("a positive integer")?,

            "classifier.hidden" => self.classifier.train.hidden_dims = l.parse_hidden()?,
            "classifier.epochs" => self.classifier.train.epochs = l.parse("a positive integer")?,
            "classifier.batch_size" => {
                self.classifier.train.batch_size = l.parse("a positive integer")?
            }
            "classifier.learning_rate" => {
                self.classifier.train.learning_rate = l.parse("a real")?
            }
            "classifier.class_balance" => self.classifier.train.class_balance = l.parse_bool()?,
            "classifier.threshold" => {
                self.classifier.train.decision_threshold = l.parse("a real")?
            }
            "classifier.failures" => self.classifier.failures = l.parse("a positive integer")?,

            "bc.epochs" => self.bc.epochs = l.parse("a positive integer")?,
            "bc.batch_size" => self.bc.batch_size = l.parse("a positive integer")?,
            "bc.learning_rate" => self.bc.learning_rate = l.parse("a real")?,

            "rl.gamma" => self.rl.hp.gamma = l.parse("a real")?,
            "rl.alpha" => self.rl.hp.alpha = l.parse("a real")?,
            "rl.beta" => self.rl.hp.beta = l.parse("a real")?,
            "rl.rho" => self.rl.hp.rho = l.parse("a real")?,
            "rl.ensemble_size" => self.rl.hp.ensemble_size = l.parse("a positive integer")?,
            "rl.subset_size" => self.rl.hp.subset_size = l.parse("a positive integer")?,
            "rl.utd_ratio" => self.rl.hp.utd_ratio = l.parse("a positive integer")?,
            "rl.batch_size" => self.rl.hp.batch_size = l.parse("a positive integer")?,
            "rl.critic_lr" => self.rl.hp.critic_lr = l.parse("a real")?,
            "rl.actor_lr" => self.rl.hp.actor_lr = l.parse("a real")?,
            "rl.objective" => {
                self.rl.hp.objective = match l.value {
                    "alg1" => Objective::Alg1,
                    "eq2" => Objective::Eq2,
                    _ => return Err(l.bad(format!("expected alg1 or eq2, got `{}`", l.value))),
                }
            }
            "rl.auto_alpha" => self.rl.hp.auto_alpha = l.parse_bool()?,
            "rl.target_entropy" => self.rl.hp.target_entropy = l.parse("a real")?,
            "rl.hidden" => self.rl.hidden_dims = l.parse_hidden()?,
            "rl.online_capacity" => self.rl.online_capacity = l.parse("a positive integer")?,
            "rl.min_online_transitions" => {
                self.rl.min_online_transitions = l.parse("a positive integer")?
            }
            "rl.updates_per_env_step" => {
                self.rl.updates_per_env_step = l.parse("a positive integer")?
            }
            "rl.max_env_steps" => self.rl.max_env_steps = l.parse("a positive integer")?,
            "rl.param_refresh_interval" => {
                self.rl.param_refresh_interval = l.parse("a positive integer")?
            }
            "rl.reset" => self.rl.reset = l.parse_reset()?,
            "rl.reward" => {
                self.rl.reward = match l.value {
                    "oracle" => RewardKind::Oracle,
                    "classifier" => RewardKind::Classifier,
                    _ => {
                        return Err(
                            l.bad(format!("expected oracle or classifier, got `{}`", l.value))
                        )
                    }
                }
            }
            "rl.early_stop" => self.rl.early_stop = l.parse_bool()?,
            "rl.stop_min_env_steps" => self.rl.stop.min_env_steps = l.parse("an integer")?,
            "rl.stop_success_window" => {
                self.rl.stop.success_window = l.parse("a positive integer")?
            }
            "rl.stop_success_threshold" => {
                self.rl.stop.success_threshold = l.parse("a real in [0,1]")?
            }
            "rl.stop_lambda_window" => self.rl.stop.lambda_window = l.parse("a positive integer")?,
            "rl.stop_lambda_max" => self.rl.stop.lambda_max = l.parse("a real in [0,1]")?,

            "dist.control_period_ms" => {
                self.dist.control_period_ms = l.parse("a positive integer")?
            }
            "dist.queue_capacity" => self.dist.queue_capacity = l.parse("a positive integer")?,
            "dist.heartbeat_interval_ms" => {
                self.dist.heartbeat_interval_ms = l.parse("a positive integer")?
            }
            "dist.heartbeat_timeout_ms" => {
                self.dist.heartbeat_timeout_ms = l.parse("a positive integer")?
            }
            "dist.wall_limit_s" => self.dist.wall_limit_s = l.parse("a real")?,

            "eval.trials" => self.eval.trials = l.parse("a positive integer")?,
            "eval.reset" => self.eval.reset = l.parse_reset()?,

            _ => {
                return Err(ConfigError::UnknownKey {
                    line: l.number,
                    key: l.key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Render every key with its effective value, grouped by section.
    /// Parsing the output reproduces `self` exactly.
    pub fn resolved_text(&self) -> String {
        let mut s = String::new();
        let kv: Vec<(&str, String)> = vec![
            ("env.horizon", self.env.horizon.to_string()),
            ("env.max_step", self.env.max_step.to_string()),
            ("env.reach_threshold", self.env.reach_threshold.to_string()),
            ("env.close_threshold", self.env.close_threshold.to_string()),
            ("env.drop_threshold", self.env.drop_threshold.to_string()),
            ("env.lift_threshold", self.env.lift_threshold.to_string()),
            ("env.lift_increment", self.env.lift_increment.to_string()),
            ("env.sensor_noise", self.env.sensor_noise.to_string()),
            ("env.home_x", self.env.home[0].to_string()),
            ("env.home_y", self.env.home[1].to_string()),
            ("env.fixed_obj_x", self.env.fixed_obj[0].to_string()),
            ("env.fixed_obj_y", self.env.fixed_obj[1].to_string()),
            ("env.region_min", self.env.region_min.to_string()),
            ("env.region_max", self.env.region_max.to_string()),
            ("demos.count", self.demos.count.to_string()),
            ("demos.expert_noise", self.demos.expert_noise.to_string()),
            ("demos.reset", reset_name(self.demos.reset).to_string()),
            ("demos.attempts_factor", self.demos.attempts_factor.to_string()),
            ("classifier.hidden", hidden_name(&self.classifier.train.hidden_dims)),
            ("classifier.epochs", self.classifier.train.epochs.to_string()),
            ("classifier.batch_size", self.classifier.train.batch_size.to_string()),
            (
                "classifier.learning_rate",
                self.classifier.train.learning_rate.to_string(),
            ),
            (
                "classifier.class_balance",
                self.classifier.train.class_balance.to_string(),
            ),
            (
                "classifier.threshold",
                self.classifier.train.decision_threshold.to_string(),
            ),
            ("classifier.failures", self.classifier.failures.to_string()),
            ("bc.epochs", self.bc.epochs.to_string()),
            ("bc.batch_size", self.bc.batch_size.to_string()),
            ("bc.learning_rate", self.bc.learning_rate.to_string()),
            ("rl.gamma", self.rl.hp.gamma.to_string()),
            ("rl.alpha", self.rl.hp.alpha.to_string()),
            ("rl.beta", self.rl.hp.beta.to_string()),
            ("rl.rho", self.rl.hp.rho.to_string()),
            ("rl.ensemble_size", self.rl.hp.ensemble_size.to_string()),
            ("rl.subset_size", self.rl.hp.subset_size.to_string()),
            ("rl.utd_ratio", self.rl.hp.utd_ratio.to_string()),
            ("rl.batch_size", self.rl.hp.batch_size.to_string()),
            ("rl.critic_lr", self.rl.hp.critic_lr.to_string()),
            ("rl.actor_lr", self.rl.hp.actor_lr.to_string()),
            ("rl.objective", objective_name(self.rl.hp.objective).to_string()),
            ("rl.auto_alpha", self.rl.hp.auto_alpha.to_string()),
            ("rl.target_entropy", self.rl.hp.target_entropy.to_string()),
            ("rl.hidden", hidden_name(&self.rl.hidden_dims)),
            ("rl.online_capacity", self.rl.online_capacity.to_string()),
            (
                "rl.min_online_transitions",
                self.rl.min_online_transitions.to_string(),
            ),
            (
                "rl.updates_per_env_step",
                self.rl.updates_per_env_step.to_string(),
            ),
            ("rl.max_env_steps", self.rl.max_env_steps.to_string()),
            (
                "rl.param_refresh_interval",
                self.rl.param_refresh_interval.to_string(),
            ),
            ("rl.reset", reset_name(self.rl.reset).to_string()),
            ("rl.reward", reward_name(self.rl.reward).to_string()),
            ("rl.early_stop", self.rl.early_stop.to_string()),
            ("rl.stop_min_env_steps", self.rl.stop.min_env_steps.to_string()),
            ("rl.stop_success_window", self.rl.stop.success_window.to_string()),
            (
                "rl.stop_success_threshold",
                self.rl.stop.success_threshold.to_string(),
            ),
            ("rl.stop_lambda_window", self.rl.stop.lambda_window.to_string()),
            ("rl.stop_lambda_max", self.rl.stop.lambda_max.to_string()),
            ("dist.control_period_ms", self.dist.control_period_ms.to_string()),
            ("dist.queue_capacity", self.dist.queue_capacity.to_string()),
            (
                "dist.heartbeat_interval_ms",
                self.dist.heartbeat_interval_ms.to_string(),
            ),
            (
                "dist.heartbeat_timeout_ms",
                self.dist.heartbeat_timeout_ms.to_string(),
            ),
            ("dist.wall_limit_s", self.dist.wall_limit_s.to_string()),
            ("eval.trials", self.eval.trials.to_string()),
            ("eval.reset", reset_name(self.eval.reset).to_string()),
        ];
        let mut section = "";
        for (key, value) in kv {
            let this_section = key.split('.').next().unwrap_or("");
            if this_section != section {
                if !section.is_empty() {
                    s.push('\n');
                }
                section = this_section;
            }
            writeln!(s, "{key} = {value}").expect("string write");
        }
        s
    }

    /// Assemble the fine-tune harness configuration. The caller supplies
    /// the reward source (a loaded detector for `rl.reward = classifier`).
    pub fn harness_config(&self, reward: RewardSource) -> HarnessConfig {
        HarnessConfig {
            env: self.env,
            reset_mode: self.rl.reset,
            exploration: Exploration::Stochastic,
            reward,
            hp: self.rl.hp.clone(),
            hidden_dims: self.rl.hidden_dims.clone(),
            online_capacity: self.rl.online_capacity,
            min_online_transitions: self.rl.min_online_transitions,
            updates_per_env_step: self.rl.updates_per_env_step,
            max_env_steps: self.rl.max_env_steps,
            param_refresh_interval: self.rl.param_refresh_interval,
            early_stop: self.rl.early_stop.then_some(self.rl.stop),
        }
    }

    /// Async-mode pacing options (fault injection stays at default: none).
    pub fn async_options(&self) -> AsyncOptions {
        AsyncOptions {
            control_period: Duration::from_millis(self.dist.control_period_ms),
            wall_limit: (self.dist.wall_limit_s > 0.0)
                .then(|| Duration::from_secs_f64(self.dist.wall_limit_s)),
            queue_capacity: self.dist.queue_capacity,
            heartbeat_interval: Duration::from_millis(self.dist.heartbeat_interval_ms),
            heartbeat_timeout: Duration::from_millis(self.dist.heartbeat_timeout_ms),
            fault: Default::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_echo_and_reparse_exactly() {
        let cfg = RunConfig::default();
        let text = cfg.resolved_text();
        assert!(text.contains("rl.gamma = 0.99"));
        assert!(text.contains("rl.objective = alg1"));
        assert!(text.contains("rl.hidden = 64,64"));
        assert!(text.contains("eval.trials = 100"));
        let reparsed = RunConfig::from_str_strict(&text).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn non_default_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.env.sensor_noise = 0.0;
        cfg.rl.hp.beta = 0.0;
        cfg.rl.hp.objective = Objective::Eq2;
        cfg.rl.hidden_dims = vec![32];
        cfg.rl.reset = ResetMode::Fixed;
        cfg.rl.reward = RewardKind::Oracle;
        cfg.rl.early_stop = true;
        cfg.demos.count = 7;
        cfg.dist.wall_limit_s = 12.5;
        let reparsed = RunConfig::from_str_strict(&cfg.resolved_text()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn comments_blanks_and_spacing_are_tolerated() {
        let text = "\n# experiment: narrower nets\n  rl.hidden = 32, 16  # inline note\n\nrl.gamma=0.95\ndemos.reset = fixed\n";
        let cfg = RunConfig::from_str_strict(text).unwrap();
        assert_eq!(cfg.rl.hidden_dims, vec![32, 16]);
        assert_eq!(cfg.rl.hp.gamma, 0.95);
        assert_eq!(cfg.demos.reset, ResetMode::Fixed);
        // untouched keys keep defaults
        assert_eq!(cfg.rl.hp.alpha, 0.05);
    }

    #[test]
    fn unknown_key_rejected_with_line_number() {
        let text = "rl.gamma = 0.9\nrl.gamm = 0.9\n";
        match RunConfig::from_str_strict(text) {
            Err(ConfigError::UnknownKey { line, key }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "rl.gamm");
            }
            other => panic!("expected UnknownKey, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = "rl.beta = 1.0\n\nrl.beta = 0.0\n";
        match RunConfig::from_str_strict(text) {
            Err(ConfigError::DuplicateKey { line, key }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "rl.beta");
            }
            other => panic!("expected DuplicateKey, got {other:?}"),
        }
    }

    #[test]
    fn bad_values_and_syntax_rejected() {
        match RunConfig::from_str_strict("rl.gamma = fast\n") {
            Err(ConfigError::BadValue { line: 1, key, .. }) => assert_eq!(key, "rl.gamma"),
            other => panic!("expected BadValue, got {other:?}"),
        }
        match RunConfig::from_str_strict("rl.objective = sac\n") {
            Err(ConfigError::BadValue { key, .. }) => assert_eq!(key, "rl.objective"),
            other => panic!("expected BadValue, got {other:?}"),
        }
        match RunConfig::from_str_strict("rl.hidden = 64,,64\n") {
            Err(ConfigError::BadValue { key, .. }) => assert_eq!(key, "rl.hidden"),
            other => panic!("expected BadValue, got {other:?}"),
        }
        match RunConfig::from_str_strict("just some words\n") {
            Err(ConfigError::Syntax { line: 1, .. }) => {}
            other => panic!("expected Syntax, got {other:?}"),
        }
    }

    #[test]
    fn harness_config_carries_early_stop_only_when_enabled() {
        let mut cfg = RunConfig::default();
        let hc = cfg.harness_config(RewardSource::Oracle);
        assert!(hc.early_stop.is_none());
        assert_eq!(hc.max_env_steps, 10_000);
        cfg.rl.early_stop = true;
        let hc = cfg.harness_config(RewardSource::Oracle);
        assert_eq!(hc.early_stop.unwrap().success_window, 30);
        hc.validate().unwrap();
    }

    #[test]
    fn async_options_translate_zero_wall_limit_to_none() {
        let mut cfg = RunConfig::default();
        assert!(cfg.async_options().wall_limit.is_none());
        cfg.dist.wall_limit_s = 1.5;
        assert_eq!(
            cfg.async_options().wall_limit,
            Some(Duration::from_millis(1500))
        );
        assert_eq!(
            cfg.async_options().control_period,
            Duration::from_millis(20)
        );
    }
}
