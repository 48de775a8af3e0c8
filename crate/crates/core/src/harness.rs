//! Actor–learner training harness.
//!
//! Three execution modes share one actor implementation and one learner
//! driver:
//!
//! * **single-process** — actor and learner fused on one thread, messages
//!   handed over directly; the reference mode, bit-exactly reproducible.
//! * **lockstep distributed** — the same schedule, but every message
//!   round-trips through the wire encoding. Produces bit-identical results
//!   to single-process mode, which makes it the correctness oracle for the
//!   transport.
//! * **async distributed** — two threads over a loopback TCP socket. The
//!   actor ticks at a fixed control period and never blocks on the
//!   learner: frames queue up (bounded, drop-oldest) while the learner
//!   trains at its own pace and publishes parameter snapshots back.
//!
//! The actor's environment stepping, exploration noise, and episode seeds
//! are all counter-derived, so single and lockstep runs replay exactly;
//! async runs trade that for wall-clock decoupling.

use std::collections::{HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::classifier::ClassifierModel;
use crate::env::{Action, EnvConfig, EnvError, GraspEnv, Observation, ResetMode};
use crate::episodes::{Episode, EpisodeError, Transition};
use crate::learner::{
    learner_iteration, LearnerError, LearnerState, RlHyperparams,
};
use crate::metrics::{EpisodeRow, MetricsRow};
use crate::net::{
    params_from_bytes, params_to_bytes, sample_policy_batch, Activation, MlpSpec, NetError,
    ParamVector, SnapshotError,
};
use crate::replay::{DualBuffer, ReplayError};
use crate::seeding::{derive_seed, rng_for, Domain};
use crate::wire::{serialize_frame, write_frame, FrameReader, Message, WireError};
use crate::{ACT_DIM, OBS_DIM};

#[derive(Error, Debug)]
pub enum HarnessError {
    #[error("invalid harness config: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("harness io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt run checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("worker thread failed: {0}")]
    Thread(String),
}

/// Where the training reward comes from. `Oracle` uses the simulator's
/// ground truth; `Classifier` replaces it with the learned detector's
/// verdict on the next observation (an episode also ends the moment the
/// detector fires, since the reward is terminal by construction).
#[derive(Clone)]
pub enum RewardSource {
    Oracle,
    Classifier(ClassifierModel),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exploration {
    /// Sample from the squashed Gaussian (training default).
    Stochastic,
    /// Act on the squashed mean.
    Deterministic,
}

/// Stop early once all three hold at an episode boundary: enough
/// environment steps, the rolling success rate over the last
/// `success_window` episodes at or above `success_threshold`, and the mean
/// λ over the last `lambda_window` updates at or below `lambda_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStop {
    pub min_env_steps: u64,
    pub success_window: usize,
    pub success_threshold: f64,
    pub lambda_window: usize,
    pub lambda_max: f64,
}

/// Bound on the early-stop windows (they are serialized into run
/// checkpoints whole).
pub const MAX_STOP_WINDOW: usize = 512;

#[derive(Clone)]
pub struct HarnessConfig {
    pub env: EnvConfig,
    pub reset_mode: ResetMode,
    pub exploration: Exploration,
    pub reward: RewardSource,
    pub hp: RlHyperparams,
    /// Hidden widths for both actor and critics.
    pub hidden_dims: Vec<usize>,
    pub online_capacity: usize,
    /// Online transitions required before the first learner iteration.
    pub min_online_transitions: usize,
    /// Learner iterations per ingested transition (single/lockstep modes).
    pub updates_per_env_step: u64,
    /// Hard cap; checked at episode boundaries.
    pub max_env_steps: u64,
    /// Learner updates between published parameter snapshots.
    pub param_refresh_interval: u64,
    pub early_stop: Option<EarlyStop>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            env: EnvConfig::default(),
            reset_mode: ResetMode::Random,
            exploration: Exploration::Stochastic,
            reward: RewardSource::Oracle,
            hp: RlHyperparams::default(),
            hidden_dims: vec![64, 64],
            online_capacity: 100_000,
            min_online_transitions: 500,
            updates_per_env_step: 1,
            max_env_steps: 10_000,
            param_refresh_interval: 50,
            early_stop: None,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.hp.validate()?;
        if self.hidden_dims.is_empty() {
            return Err(HarnessError::BadConfig("hidden_dims must be non-empty"));
        }
        if self.online_capacity == 0 || self.min_online_transitions == 0 {
            return Err(HarnessError::BadConfig(
                "online capacity and training gate must be positive",
            ));
        }
        if self.updates_per_env_step == 0 {
            return Err(HarnessError::BadConfig("updates_per_env_step must be >= 1"));
        }
        if self.max_env_steps == 0 {
            return Err(HarnessError::BadConfig("max_env_steps must be >= 1"));
        }
        if self.param_refresh_interval == 0 {
            return Err(HarnessError::BadConfig("param_refresh_interval must be >= 1"));
        }
        if let Some(stop) = &self.early_stop {
            if stop.success_window == 0 || stop.success_window > MAX_STOP_WINDOW {
                return Err(HarnessError::BadConfig("success_window out of range"));
            }
            if stop.lambda_window == 0 || stop.lambda_window > MAX_STOP_WINDOW {
                return Err(HarnessError::BadConfig("lambda_window out of range"));
            }
            if !(0.0..=1.0).contains(&stop.success_threshold)
                || !(0.0..=1.0).contains(&stop.lambda_max)
            {
                return Err(HarnessError::BadConfig("early-stop thresholds out of range"));
            }
        }
        Ok(())
    }

    pub fn actor_spec(&self) -> MlpSpec {
        MlpSpec::new(OBS_DIM, &self.hidden_dims, 2 * ACT_DIM, Activation::Relu)
    }
}

/// Learner half: owns the training state and replay buffers, consumes
/// transitions and episode ends, and produces metrics rows.
pub struct LearnerDriver {
    pub state: LearnerState,
    pub buffer: DualBuffer,
    pub env_steps: u64,
    pub episodes_done: u64,
    pub metrics: Vec<MetricsRow>,
    pub episode_rows: Vec<EpisodeRow>,
    min_online: usize,
    open_episodes: HashMap<u32, Vec<Transition>>,
    recent_successes: VecDeque<bool>,
    recent_lambdas: VecDeque<f64>,
    /// Frames a learner has no business receiving (e.g. snapshots).
    pub unexpected_frames: u64,
}

impl LearnerDriver {
    pub fn new(
        cfg: &HarnessConfig,
        pretrained: ParamVector,
        demos: &[Episode],
        base_seed: u64,
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let state = LearnerState::new(
            pretrained,
            cfg.actor_spec(),
            &cfg.hidden_dims,
            &cfg.hp,
            base_seed,
        )?;
        let mut buffer = DualBuffer::new(cfg.online_capacity);
        buffer.load_demos(demos);
        if buffer.demo_len() == 0 {
            return Err(HarnessError::BadConfig("demo buffer must not start empty"));
        }
        Ok(LearnerDriver {
            state,
            buffer,
            env_steps: 0,
            episodes_done: 0,
            metrics: Vec::new(),
            episode_rows: Vec::new(),
            min_online: cfg.min_online_transitions,
            open_episodes: HashMap::new(),
            recent_successes: VecDeque::new(),
            recent_lambdas: VecDeque::new(),
            unexpected_frames: 0,
        })
    }

    pub fn ingest_transition(&mut self, episode_id: u32, transition: Transition) {
        self.open_episodes
            .entry(episode_id)
            .or_default()
            .push(transition);
        self.buffer.push_online(transition);
        self.env_steps += 1;
    }

    pub fn ingest_episode_end(
        &mut self,
        episode_id: u32,
        success: bool,
        success_frame: Option<u32>,
    ) -> Result<EpisodeRow, HarnessError> {
        let transitions = self.open_episodes.remove(&episode_id).unwrap_or_default();
        let steps = transitions.len() as u32;
        if success {
            let episode = Episode {
                transitions,
                success,
                success_frame: success_frame.map(|f| f as usize),
            };
            self.buffer.promote_episode(&episode)?;
        }
        let row = EpisodeRow {
            episode_index: self.episodes_done,
            env_steps: self.env_steps,
            steps,
            success,
            success_frame: success_frame.map_or(-1, |f| f as i64),
        };
        self.episodes_done += 1;
        self.episode_rows.push(row);
        self.recent_successes.push_back(success);
        if self.recent_successes.len() > MAX_STOP_WINDOW {
            self.recent_successes.pop_front();
        }
        Ok(row)
    }

    /// Route one wire message. Heartbeats are liveness-only; snapshots are
    /// counted as unexpected (the learner publishes them, never receives).
    pub fn ingest_message(&mut self, msg: Message) -> Result<(), HarnessError> {
        match msg {
            Message::Transition {
                episode_id,
                transition,
            } => {
                self.ingest_transition(episode_id, transition);
            }
            Message::EpisodeEnd {
                episode_id,
                success,
                success_frame,
            } => {
                self.ingest_episode_end(episode_id, success, success_frame)?;
            }
            Message::Heartbeat => {}
            Message::ParamSnapshot { .. } => self.unexpected_frames += 1,
        }
        Ok(())
    }

    pub fn ready_to_train(&self) -> bool {
        self.buffer.online_len() >= self.min_online
    }

    pub fn train_once(
        &mut self,
        hp: &RlHyperparams,
        base_seed: u64,
    ) -> Result<MetricsRow, HarnessError> {
        let m = learner_iteration(&mut self.state, &self.buffer, hp, base_seed)?;
        let row = MetricsRow {
            update_count: m.update_count,
            critic_loss_mean: m.critic_loss_mean,
            actor_q_term: m.actor_q_term,
            entropy_term: m.entropy_term,
            bc_term: m.bc_term,
            lambda: m.lambda,
            env_steps: self.env_steps,
        };
        self.metrics.push(row);
        self.recent_lambdas.push_back(m.lambda);
        if self.recent_lambdas.len() > MAX_STOP_WINDOW {
            self.recent_lambdas.pop_front();
        }
        Ok(row)
    }

    pub fn rolling_success_rate(&self, window: usize) -> Option<f64> {
        if window == 0 || self.recent_successes.len() < window {
            return None;
        }
        let hits = self
            .recent_successes
            .iter()
            .rev()
            .take(window)
            .filter(|&&s| s)
            .count();
        Some(hits as f64 / window as f64)
    }

    pub fn recent_lambda_mean(&self, window: usize) -> Option<f64> {
        if window == 0 || self.recent_lambdas.len() < window {
            return None;
        }
        Some(self.recent_lambdas.iter().rev().take(window).sum::<f64>() / window as f64)
    }

    /// Stop check, valid at episode boundaries.
    pub fn should_stop(&self, cfg: &HarnessConfig) -> bool {
        if self.env_steps >= cfg.max_env_steps {
            return true;
        }
        let Some(stop) = &cfg.early_stop else {
            return false;
        };
        if self.env_steps < stop.min_env_steps {
            return false;
        }
        let sr_ok = self
            .rolling_success_rate(stop.success_window)
            .is_some_and(|sr| sr >= stop.success_threshold);
        let lambda_ok = self
            .recent_lambda_mean(stop.lambda_window)
            .is_some_and(|l| l <= stop.lambda_max);
        sr_ok && lambda_ok
    }
}

/// What one actor tick produced.
pub struct StepEvent {
    pub episode_id: u32,
    pub transition: Transition,
    pub end: Option<(bool, Option<u32>)>,
}

/// Actor half: owns the environment and a snapshot of the policy, produces
/// transitions. Episode seeds and exploration noise derive from
/// `(base_seed, domain, episode_index)`.
pub struct ActorSide {
    env: GraspEnv,
    reset_mode: ResetMode,
    exploration: Exploration,
    reward: RewardSource,
    actor_spec: MlpSpec,
    acting: ParamVector,
    pub snapshot_id: u64,
    base_seed: u64,
    pub episode_index: u64,
    action_rng: ChaCha8Rng,
    obs: Observation,
    steps_this_episode: u32,
}

impl ActorSide {
    pub fn new(
        cfg: &HarnessConfig,
        initial: ParamVector,
        base_seed: u64,
        start_episode_index: u64,
    ) -> Self {
        ActorSide {
            env: GraspEnv::new(cfg.env),
            reset_mode: cfg.reset_mode,
            exploration: cfg.exploration,
            reward: cfg.reward.clone(),
            actor_spec: cfg.actor_spec(),
            acting: initial,
            snapshot_id: 0,
            base_seed,
            episode_index: start_episode_index,
            action_rng: rng_for(base_seed, Domain::ActionNoise, start_episode_index),
            obs: [0.0; OBS_DIM],
            steps_this_episode: 0,
        }
    }

    /// Install a complete parameter snapshot. Ids must never move backward.
    pub fn install(&mut self, params: ParamVector, snapshot_id: u64) {
        debug_assert!(snapshot_id >= self.snapshot_id, "snapshot ids regressed");
        self.acting = params;
        self.snapshot_id = snapshot_id;
    }

    pub fn begin_episode(&mut self) {
        let seed = derive_seed(self.base_seed, Domain::EnvEpisode, self.episode_index);
        self.obs = self.env.reset(seed, self.reset_mode);
        self.action_rng = rng_for(self.base_seed, Domain::ActionNoise, self.episode_index);
        self.steps_this_episode = 0;
    }

    fn select_action(&mut self) -> Result<Action, HarnessError> {
        let noise: Option<Vec<f64>> = match self.exploration {
            Exploration::Stochastic => Some(
                (0..ACT_DIM)
                    .map(|_| self.action_rng.sample(StandardNormal))
                    .collect(),
            ),
            Exploration::Deterministic => None,
        };
        let batch = sample_policy_batch(
            &self.acting,
            &self.actor_spec,
            &self.obs,
            1,
            noise.as_deref(),
        )?;
        let mut action = [0.0; ACT_DIM];
        action.copy_from_slice(&batch.actions);
        Ok(action)
    }

    /// One control tick: act, step the environment, grade the step with the
    /// configured reward source. A reward of 1 always ends the episode, so
    /// recorded episodes keep the single-terminal-reward shape.
    pub fn step_once(&mut self) -> Result<StepEvent, HarnessError> {
        let action = self.select_action()?;
        let prev_obs = self.obs;
        let (next_obs, env_reward, env_done) = self.env.step(action)?;
        let (reward, done) = match &self.reward {
            RewardSource::Oracle => (env_reward, env_done),
            RewardSource::Classifier(model) => {
                let r = model.predict_reward(&next_obs);
                (r, env_done || r == 1.0)
            }
        };
        let transition = Transition {
            obs: prev_obs,
            action,
            reward,
            next_obs,
            done,
        };
        self.obs = next_obs;
        let frame_index = self.steps_this_episode;
        self.steps_this_episode += 1;
        let end = if done {
            let success = reward == 1.0;
            self.episode_index += 1;
            Some((success, success.then_some(frame_index)))
        } else {
            None
        };
        Ok(StepEvent {
            episode_id: (self.episode_index - u64::from(end.is_some())) as u32,
            transition,
            end,
        })
    }
}

const RUN_MAGIC: &[u8; 4] = b"RGCK";
const RUN_VERSION: u16 = 1;

/// Fused or lockstep-transported training session. All modes step the same
/// code; `transported` only decides whether messages pass through the wire
/// encoding on the way.
pub struct Harness {
    pub cfg: HarnessConfig,
    pub base_seed: u64,
    pub driver: LearnerDriver,
    pub actor: ActorSide,
    next_snapshot_id: u64,
    transported: bool,
}

impl Harness {
    pub fn new(
        cfg: HarnessConfig,
        pretrained: ParamVector,
        demos: &[Episode],
        base_seed: u64,
        transported: bool,
    ) -> Result<Self, HarnessError> {
        let driver = LearnerDriver::new(&cfg, pretrained.clone(), demos, base_seed)?;
        // snapshot id 0 is the pretrained policy itself
        let actor = ActorSide::new(&cfg, pretrained, base_seed, 0);
        Ok(Harness {
            cfg,
            base_seed,
            driver,
            actor,
            next_snapshot_id: 1,
            transported,
        })
    }

    fn publish_snapshot(&mut self) -> Result<(), HarnessError> {
        let id = self.next_snapshot_id;
        self.next_snapshot_id += 1;
        if self.transported {
            let msg = Message::ParamSnapshot {
                snapshot_id: id,
                params: params_to_bytes(&self.driver.state.actor)?,
            };
            let bytes = serialize_frame(&msg);
            let (parsed, _) = crate::wire::parse_frame(&bytes)?;
            match parsed {
                Message::ParamSnapshot {
                    snapshot_id,
                    params,
                } => {
                    self.actor.install(params_from_bytes(&params)?, snapshot_id);
                }
                _ => unreachable!("serialize/parse changed the message type"),
            }
        } else {
            self.actor.install(self.driver.state.actor.clone(), id);
        }
        Ok(())
    }

    fn forward_event(&mut self, ev: &StepEvent) -> Result<Option<EpisodeRow>, HarnessError> {
        if self.transported {
            let bytes = serialize_frame(&Message::Transition {
                episode_id: ev.episode_id,
                transition: ev.transition,
            });
            let (msg, _) = crate::wire::parse_frame(&bytes)?;
            self.driver.ingest_message(msg)?;
            if let Some((success, frame)) = ev.end {
                let bytes = serialize_frame(&Message::EpisodeEnd {
                    episode_id: ev.episode_id,
                    success,
                    success_frame: frame,
                });
                let (msg, _) = crate::wire::parse_frame(&bytes)?;
                self.driver.ingest_message(msg)?;
                return Ok(Some(*self.driver.episode_rows.last().expect("row just pushed")));
            }
            Ok(None)
        } else {
            self.driver.ingest_transition(ev.episode_id, ev.transition);
            if let Some((success, frame)) = ev.end {
                return Ok(Some(self.driver.ingest_episode_end(
                    ev.episode_id,
                    success,
                    frame,
                )?));
            }
            Ok(None)
        }
    }

    pub fn run_one_episode(&mut self) -> Result<EpisodeRow, HarnessError> {
        self.actor.begin_episode();
        loop {
            let ev = self.actor.step_once()?;
            let ended = self.forward_event(&ev)?;
            if self.driver.ready_to_train() {
                for _ in 0..self.cfg.updates_per_env_step {
                    let row = self.driver.train_once(&self.cfg.hp.clone(), self.base_seed)?;
                    if row.update_count % self.cfg.param_refresh_interval == 0 {
                        self.publish_snapshot()?;
                    }
                }
            }
            if let Some(row) = ended {
                return Ok(row);
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.driver.should_stop(&self.cfg)
    }

    /// Run episodes until the stop condition, optionally overwriting a run
    /// checkpoint at every episode boundary.
    pub fn run(&mut self, checkpoint_path: Option<&Path>) -> Result<(), HarnessError> {
        while !self.should_stop() {
            self.run_one_episode()?;
            if let Some(path) = checkpoint_path {
                let tmp = path.with_extension("tmp");
                let mut f = std::fs::File::create(&tmp)?;
                self.write_checkpoint(&mut f)?;
                f.sync_all()?;
                std::fs::rename(&tmp, path)?;
            }
        }
        Ok(())
    }

    /// Serialize the whole run at an episode boundary: learner state,
    /// replay buffers, actor snapshot, counters, and the early-stop
    /// windows. Together with the (externally stored) config and seed this
    /// resumes bit-exactly.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<(), HarnessError> {
        w.write_all(RUN_MAGIC)?;
        w.write_all(&RUN_VERSION.to_le_bytes())?;
        w.write_all(&self.base_seed.to_le_bytes())?;
        w.write_all(&self.driver.env_steps.to_le_bytes())?;
        w.write_all(&self.driver.episodes_done.to_le_bytes())?;
        w.write_all(&self.actor.episode_index.to_le_bytes())?;
        w.write_all(&self.next_snapshot_id.to_le_bytes())?;
        w.write_all(&self.actor.snapshot_id.to_le_bytes())?;
        crate::net::write_params(w, &self.actor.acting)?;
        self.driver.state.write_to(w)?;
        self.driver.buffer.write_checkpoint(w)?;
        let succ: Vec<u8> = self.driver.recent_successes.iter().map(|&s| u8::from(s)).collect();
        w.write_all(&(succ.len() as u32).to_le_bytes())?;
        w.write_all(&succ)?;
        w.write_all(&(self.driver.recent_lambdas.len() as u32).to_le_bytes())?;
        for l in &self.driver.recent_lambdas {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    /// Resume from [`write_checkpoint`](Self::write_checkpoint) output.
    /// `cfg` must be the configuration the run was started with (the run
    /// directory's resolved copy); only counters and tensors live here.
    pub fn resume<R: Read>(
        cfg: HarnessConfig,
        r: &mut R,
        transported: bool,
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != RUN_MAGIC {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "bad magic {magic:?}"
            )));
        }
        let mut v = [0u8; 2];
        r.read_exact(&mut v)?;
        if u16::from_le_bytes(v) != RUN_VERSION {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "unsupported version {}",
                u16::from_le_bytes(v)
            )));
        }
        let mut u64buf = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64, HarnessError> {
            r.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let base_seed = next_u64(r)?;
        let env_steps = next_u64(r)?;
        let episodes_done = next_u64(r)?;
        let episode_index = next_u64(r)?;
        let next_snapshot_id = next_u64(r)?;
        let actor_snapshot_id = next_u64(r)?;
        let acting = crate::net::read_params(r)?;
        let state = LearnerState::read_from(r)?;
        let buffer = DualBuffer::read_checkpoint(r, cfg.online_capacity)?;
        let mut lenbuf = [0u8; 4];
        r.read_exact(&mut lenbuf)?;
        let n_succ = u32::from_le_bytes(lenbuf) as usize;
        if n_succ > MAX_STOP_WINDOW {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "success window {n_succ} exceeds {MAX_STOP_WINDOW}"
            )));
        }
        let mut succ = vec![0u8; n_succ];
        r.read_exact(&mut succ)?;
        let recent_successes: VecDeque<bool> = succ.iter().map(|&b| b != 0).collect();
        r.read_exact(&mut lenbuf)?;
        let n_lam = u32::from_le_bytes(lenbuf) as usize;
        if n_lam > MAX_STOP_WINDOW {
            return Err(HarnessError::CorruptCheckpoint(format!(
                "lambda window {n_lam} exceeds {MAX_STOP_WINDOW}"
            )));
        }
        let mut recent_lambdas = VecDeque::with_capacity(n_lam);
        for _ in 0..n_lam {
            r.read_exact(&mut u64buf)?;
            recent_lambdas.push_back(f64::from_le_bytes(u64buf));
        }

        let mut actor = ActorSide::new(&cfg, acting, base_seed, episode_index);
        actor.snapshot_id = actor_snapshot_id;
        let driver = LearnerDriver {
            state,
            buffer,
            env_steps,
            episodes_done,
            metrics: Vec::new(),
            episode_rows: Vec::new(),
            min_online: cfg.min_online_transitions,
            open_episodes: HashMap::new(),
            recent_successes,
            recent_lambdas,
            unexpected_frames: 0,
        };
        Ok(Harness {
            cfg,
            base_seed,
            driver,
            actor,
            next_snapshot_id,
            transported,
        })
    }
}

/// Reference fused trainer: runs to the stop condition and returns the
/// harness for inspection (final actor is `driver.state.actor`).
pub fn run_single_process(
    cfg: HarnessConfig,
    pretrained: ParamVector,
    demos: &[Episode],
    base_seed: u64,
) -> Result<Harness, HarnessError> {
    let mut harness = Harness::new(cfg, pretrained, demos, base_seed, false)?;
    harness.run(None)?;
    Ok(harness)
}

/// Same schedule as [`run_single_process`], but every actor↔learner
/// message round-trips through the wire encoding. Bit-identical results
/// are the transport-correctness oracle.
pub fn run_lockstep_distributed(
    cfg: HarnessConfig,
    pretrained: ParamVector,
    demos: &[Episode],
    base_seed: u64,
) -> Result<Harness, HarnessError> {
    let mut harness = Harness::new(cfg, pretrained, demos, base_seed, true)?;
    harness.run(None)?;
    Ok(harness)
}

// ---------------------------------------------------------------------------
// Async distributed mode
// ---------------------------------------------------------------------------

/// Pause the learner (no reads, no training) `after` run start, for
/// `duration` — an induced stall for the control-rate isolation property.
#[derive(Clone, Copy, Debug)]
pub struct StallSpec {
    pub after: Duration,
    pub duration: Duration,
}

/// Fault injection for the async harness.
#[derive(Clone, Copy, Debug, Default)]
pub struct FaultSpec {
    pub stall: Option<StallSpec>,
    /// Learner drops the connection once, this long into the run; the
    /// actor must redial and resume streaming.
    pub disconnect_after: Option<Duration>,
}

#[derive(Clone, Debug)]
pub struct AsyncOptions {
    /// Actor tick period (wall clock).
    pub control_period: Duration,
    /// Hard wall-clock limit; the run also stops when the learner reaches
    /// its stop condition.
    pub wall_limit: Option<Duration>,
    /// Actor→learner frame queue bound; overflow drops the oldest frame.
    pub queue_capacity: usize,
    pub heartbeat_interval: Duration,
    /// No frames for this long → the learner treats the connection as dead
    /// and waits for a redial.
    pub heartbeat_timeout: Duration,
    pub fault: FaultSpec,
}

impl Default for AsyncOptions {
    fn default() -> Self {
        AsyncOptions {
            control_period: Duration::from_millis(20),
            wall_limit: None,
            queue_capacity: 4096,
            heartbeat_interval: Duration::from_secs(1),
            heartbeat_timeout: Duration::from_secs(5),
            fault: FaultSpec::default(),
        }
    }
}

/// One actor tick observation: when it happened (seconds since run start)
/// and the gap since the previous tick.
#[derive(Clone, Copy, Debug)]
pub struct TickSample {
    pub at_secs: f64,
    pub delta_ms: f64,
}

pub struct AsyncRunReport {
    pub final_actor: ParamVector,
    pub metrics: Vec<MetricsRow>,
    pub episode_rows: Vec<EpisodeRow>,
    pub env_steps: u64,
    pub episodes_done: u64,
    pub update_count: u64,
    pub transitions_sent: u64,
    pub transitions_ingested: u64,
    /// Order-independent digests of transition frames on each side; equal
    /// when the transport neither corrupted nor duplicated anything.
    pub sent_digest: u64,
    pub ingested_digest: u64,
    pub drop_count: u64,
    pub unexpected_frames: u64,
    pub malformed_frames: u64,
    pub reconnects: u64,
    pub snapshot_ids_installed: Vec<u64>,
    pub ticks: Vec<TickSample>,
    /// Actual stall window (seconds since run start), when one was injected.
    pub stall_window: Option<(f64, f64)>,
    /// A learner-side failure that halted training. The report still
    /// carries the state reached, so the caller can checkpoint it.
    pub learner_error: Option<String>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// q-th percentile (0..=1) by nearest-rank on a copy of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let idx = ((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    sorted[idx]
}

struct LearnerOutcome {
    driver: LearnerDriver,
    reconnects: u64,
    ingested_digest: u64,
    malformed_frames: u64,
    stall_window: Option<(f64, f64)>,
    error: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn learner_thread_main(
    mut driver: LearnerDriver,
    cfg: HarnessConfig,
    base_seed: u64,
    listener: TcpListener,
    stop: Arc<AtomicBool>,
    opts: AsyncOptions,
    run_start: Instant,
) -> LearnerOutcome {
    let mut reconnects = 0u64;
    let mut ingested_digest = 0u64;
    let mut malformed_frames = 0u64;
    let mut stall_window = None;
    let mut stall_pending = opts.fault.stall;
    let mut disconnect_pending = opts.fault.disconnect_after;
    let mut next_snapshot_id = 1u64;
    let mut error = None;

    'accept: loop {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        // bounded accept wait so a stopped run cannot hang here
        listener.set_nonblocking(true).expect("listener mode switch");
        let conn = loop {
            match listener.accept() {
                Ok((s, _)) => break s,
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    if stop.load(Ordering::SeqCst) {
                        break 'accept;
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => {
                    error = Some(format!("accept: {e}"));
                    break 'accept;
                }
            }
        };
        if conn
            .set_read_timeout(Some(Duration::from_millis(2)))
            .is_err()
        {
            continue;
        }
        let mut conn = conn;
        let mut reader = FrameReader::new();
        let mut buf = [0u8; 1 << 16];
        let mut last_rx = Instant::now();

        loop {
            // induced one-shot stall: no reads, no training
            if let Some(stall) = stall_pending {
                if run_start.elapsed() >= stall.after {
                    stall_pending = None;
                    let begin = run_start.elapsed().as_secs_f64();
                    let until = Instant::now() + stall.duration;
                    while Instant::now() < until && !stop.load(Ordering::SeqCst) {
                        thread::sleep(Duration::from_millis(5));
                    }
                    stall_window = Some((begin, run_start.elapsed().as_secs_f64()));
                    last_rx = Instant::now();
                }
            }
            // induced one-shot disconnect
            if let Some(after) = disconnect_pending {
                if run_start.elapsed() >= after {
                    disconnect_pending = None;
                    reconnects += 1;
                    let _ = conn.shutdown(Shutdown::Both);
                    continue 'accept;
                }
            }

            let mut saw_eof = false;
            match conn.read(&mut buf) {
                Ok(0) => saw_eof = true,
                Ok(n) => {
                    last_rx = Instant::now();
                    reader.extend(&buf[..n]);
                }
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(_) => {
                    if stop.load(Ordering::SeqCst) {
                        break 'accept;
                    }
                    reconnects += 1;
                    continue 'accept;
                }
            }
            loop {
                match reader.next_frame() {
                    Ok(Some(msg)) => {
                        if let Message::Transition { .. } = &msg {
                            ingested_digest =
                                ingested_digest.wrapping_add(fnv1a(&serialize_frame(&msg)));
                        }
                        if let Err(e) = driver.ingest_message(msg) {
                            error = Some(format!("ingest: {e}"));
                            break 'accept;
                        }
                    }
                    Ok(None) => break,
                    Err(WireError::Oversized { .. }) => {
                        // framing is unrecoverable: drop the connection
                        malformed_frames += 1;
                        reconnects += 1;
                        let _ = conn.shutdown(Shutdown::Both);
                        continue 'accept;
                    }
                    Err(_) => {
                        // invalid but complete frame: drop it, keep reading
                        malformed_frames += 1;
                    }
                }
            }

            if driver.ready_to_train() && !stop.load(Ordering::SeqCst) {
                match driver.train_once(&cfg.hp, base_seed) {
                    Ok(row) => {
                        if row.update_count % cfg.param_refresh_interval == 0 {
                            let snap = Message::ParamSnapshot {
                                snapshot_id: next_snapshot_id,
                                params: match params_to_bytes(&driver.state.actor) {
                                    Ok(b) => b,
                                    Err(e) => {
                                        error = Some(format!("snapshot: {e}"));
                                        break 'accept;
                                    }
                                },
                            };
                            next_snapshot_id += 1;
                            if write_frame(&mut (&conn), &snap).is_err() && !stop.load(Ordering::SeqCst)
                            {
                                reconnects += 1;
                                continue 'accept;
                            }
                        }
                    }
                    Err(e) => {
                        error = Some(format!("train: {e}"));
                        break 'accept;
                    }
                }
            } else if !driver.ready_to_train() {
                // nothing to train on yet; don't spin on the read timeout
                thread::sleep(Duration::from_millis(1));
            }

            if driver.should_stop(&cfg) {
                stop.store(true, Ordering::SeqCst);
            }
            if saw_eof {
                if stop.load(Ordering::SeqCst) || reader.buffered_len() == 0 {
                    break 'accept;
                }
            } else if !stop.load(Ordering::SeqCst) && last_rx.elapsed() > opts.heartbeat_timeout {
                // silent peer: assume the connection died and wait for redial
                reconnects += 1;
                let _ = conn.shutdown(Shutdown::Both);
                continue 'accept;
            }
            if stop.load(Ordering::SeqCst) && saw_eof {
                break 'accept;
            }
        }
    }

    LearnerOutcome {
        driver,
        reconnects,
        ingested_digest,
        malformed_frames,
        stall_window,
        error,
    }
}

struct ActorShared {
    queue: Mutex<VecDeque<Vec<u8>>>,
    drops: AtomicU64,
    latest_snapshot: Mutex<Option<(u64, Vec<u8>)>>,
    snapshot_log: Mutex<Vec<u64>>,
    tick_done: AtomicBool,
    io_failed: AtomicBool,
}

fn push_bounded(shared: &ActorShared, capacity: usize, frame: Vec<u8>) {
    let mut q = shared.queue.lock().expect("queue lock");
    while q.len() >= capacity {
        q.pop_front();
        shared.drops.fetch_add(1, Ordering::Relaxed);
    }
    q.push_back(frame);
}

fn actor_io_thread_main(
    addr: std::net::SocketAddr,
    shared: Arc<ActorShared>,
    stop: Arc<AtomicBool>,
    opts: AsyncOptions,
) {
    let dial = |attempts: u32| -> Option<TcpStream> {
        for _ in 0..attempts {
            match TcpStream::connect(addr) {
                Ok(s) => {
                    let _ = s.set_read_timeout(Some(Duration::from_millis(1)));
                    let _ = s.set_nodelay(true);
                    return Some(s);
                }
                Err(_) => thread::sleep(Duration::from_millis(50)),
            }
        }
        None
    };
    let Some(mut conn) = dial(100) else {
        shared.io_failed.store(true, Ordering::SeqCst);
        stop.store(true, Ordering::SeqCst);
        return;
    };
    let mut reader = FrameReader::new();
    let mut buf = [0u8; 1 << 16];
    let mut last_hb = Instant::now();
    let mut shutdown_sent = false;

    loop {
        // drain the outbound queue
        let pending: Vec<Vec<u8>> = {
            let mut q = shared.queue.lock().expect("queue lock");
            q.drain(..).collect()
        };
        let mut io_broken = false;
        for frame in &pending {
            if conn.write_all(frame).is_err() {
                io_broken = true;
                // frames in `pending` after this point are lost; count them
                shared.drops.fetch_add(1, Ordering::Relaxed);
            }
        }
        if !io_broken && !shutdown_sent && last_hb.elapsed() >= opts.heartbeat_interval {
            last_hb = Instant::now();
            io_broken = write_frame(&mut (&conn), &Message::Heartbeat).is_err();
        }

        if !io_broken {
            match conn.read(&mut buf) {
                Ok(0) => io_broken = true,
                Ok(n) => reader.extend(&buf[..n]),
                Err(e)
                    if e.kind() == std::io::ErrorKind::WouldBlock
                        || e.kind() == std::io::ErrorKind::TimedOut => {}
                Err(_) => io_broken = true,
            }
            while let Ok(Some(msg)) = reader.next_frame() {
                if let Message::ParamSnapshot {
                    snapshot_id,
                    params,
                } = msg
                {
                    shared
                        .snapshot_log
                        .lock()
                        .expect("snapshot log lock")
                        .push(snapshot_id);
                    *shared.latest_snapshot.lock().expect("snapshot lock") =
                        Some((snapshot_id, params));
                }
            }
        }

        if io_broken {
            if stop.load(Ordering::SeqCst) || shared.tick_done.load(Ordering::SeqCst) {
                return;
            }
            // the learner may have dropped us deliberately: redial
            match dial(100) {
                Some(fresh) => {
                    conn = fresh;
                    reader = FrameReader::new();
                    shutdown_sent = false;
                }
                None => {
                    shared.io_failed.store(true, Ordering::SeqCst);
                    stop.store(true, Ordering::SeqCst);
                    return;
                }
            }
            continue;
        }

        let tick_done = shared.tick_done.load(Ordering::SeqCst);
        let queue_empty = shared.queue.lock().expect("queue lock").is_empty();
        if tick_done && queue_empty {
            if !shutdown_sent {
                let _ = conn.shutdown(Shutdown::Write);
                shutdown_sent = true;
            }
            if stop.load(Ordering::SeqCst) {
                return;
            }
        }
    }
}

/// Two execution contexts over loopback TCP: the actor ticks at
/// `control_period` wall time and never blocks on the learner; the learner
/// trains as fast as data and CPU allow and publishes snapshots back.
pub fn run_async_distributed(
    cfg: HarnessConfig,
    pretrained: ParamVector,
    demos: &[Episode],
    base_seed: u64,
    opts: AsyncOptions,
) -> Result<AsyncRunReport, HarnessError> {
    cfg.validate()?;
    if opts.queue_capacity == 0 {
        return Err(HarnessError::BadConfig("queue_capacity must be >= 1"));
    }
    let driver = LearnerDriver::new(&cfg, pretrained.clone(), demos, base_seed)?;
    let mut actor = ActorSide::new(&cfg, pretrained, base_seed, 0);

    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let shared = Arc::new(ActorShared {
        queue: Mutex::new(VecDeque::new()),
        drops: AtomicU64::new(0),
        latest_snapshot: Mutex::new(None),
        snapshot_log: Mutex::new(Vec::new()),
        tick_done: AtomicBool::new(false),
        io_failed: AtomicBool::new(false),
    });
    let run_start = Instant::now();

    let learner_handle = {
        let cfg = cfg.clone();
        let stop = Arc::clone(&stop);
        let opts = opts.clone();
        thread::spawn(move || {
            learner_thread_main(driver, cfg, base_seed, listener, stop, opts, run_start)
        })
    };
    let io_handle = {
        let shared = Arc::clone(&shared);
        let stop = Arc::clone(&stop);
        let opts = opts.clone();
        thread::spawn(move || actor_io_thread_main(addr, shared, stop, opts))
    };

    // --- actor tick loop (this thread) ---
    let mut ticks = Vec::new();
    let mut transitions_sent = 0u64;
    let mut sent_digest = 0u64;
    let mut prev_tick: Option<Instant> = None;
    let mut deadline = Instant::now() + opts.control_period;
    actor.begin_episode();
    let tick_error: Option<HarnessError> = loop {
        if stop.load(Ordering::SeqCst) {
            break None;
        }
        if let Some(limit) = opts.wall_limit {
            if run_start.elapsed() >= limit {
                stop.store(true, Ordering::SeqCst);
                break None;
            }
        }
        let now = Instant::now();
        if now < deadline {
            thread::sleep(deadline - now);
        }
        let t = Instant::now();
        if let Some(p) = prev_tick {
            ticks.push(TickSample {
                at_secs: (t - run_start).as_secs_f64(),
                delta_ms: (t - p).as_secs_f64() * 1000.0,
            });
        }
        prev_tick = Some(t);

        // newest snapshot wins; installs are whole frames, never partial
        let latest = shared.latest_snapshot.lock().expect("snapshot lock").take();
        if let Some((id, bytes)) = latest {
            match params_from_bytes(&bytes) {
                Ok(params) => actor.install(params, id),
                Err(e) => break Some(HarnessError::from(e)),
            }
        }

        let ev = match actor.step_once() {
            Ok(ev) => ev,
            Err(e) => break Some(e),
        };
        let frame = serialize_frame(&Message::Transition {
            episode_id: ev.episode_id,
            transition: ev.transition,
        });
        sent_digest = sent_digest.wrapping_add(fnv1a(&frame));
        transitions_sent += 1;
        push_bounded(&shared, opts.queue_capacity, frame);
        if let Some((success, frame_idx)) = ev.end {
            push_bounded(
                &shared,
                opts.queue_capacity,
                serialize_frame(&Message::EpisodeEnd {
                    episode_id: ev.episode_id,
                    success,
                    success_frame: frame_idx,
                }),
            );
            actor.begin_episode();
        }
        deadline += opts.control_period;
        // if we fell far behind (e.g. suspended), restart the cadence
        if deadline + opts.control_period * 10 < Instant::now() {
            deadline = Instant::now() + opts.control_period;
        }
    };

    shared.tick_done.store(true, Ordering::SeqCst);
    // give the io thread a moment to flush, then release it
    let flush_deadline = Instant::now() + Duration::from_secs(10);
    while Instant::now() < flush_deadline {
        if shared.queue.lock().expect("queue lock").is_empty()
            || shared.io_failed.load(Ordering::SeqCst)
        {
            break;
        }
        thread::sleep(Duration::from_millis(5));
    }
    stop.store(true, Ordering::SeqCst);
    io_handle
        .join()
        .map_err(|_| HarnessError::Thread("actor io thread panicked".into()))?;
    let outcome = learner_handle
        .join()
        .map_err(|_| HarnessError::Thread("learner thread panicked".into()))?;

    if let Some(e) = tick_error {
        return Err(e);
    }
    if outcome.error.is_none() && shared.io_failed.load(Ordering::SeqCst) {
        return Err(HarnessError::Thread("actor io could not reach the learner".into()));
    }

    let driver = outcome.driver;
    let snapshot_ids_installed = shared
        .snapshot_log
        .lock()
        .expect("snapshot log lock")
        .clone();
    Ok(AsyncRunReport {
        final_actor: driver.state.actor.clone(),
        env_steps: driver.env_steps,
        episodes_done: driver.episodes_done,
        update_count: driver.state.update_count,
        transitions_ingested: driver.env_steps,
        unexpected_frames: driver.unexpected_frames,
        metrics: driver.metrics,
        episode_rows: driver.episode_rows,
        transitions_sent,
        sent_digest,
        ingested_digest: outcome.ingested_digest,
        drop_count: shared.drops.load(Ordering::Relaxed),
        malformed_frames: outcome.malformed_frames,
        reconnects: outcome.reconnects,
        snapshot_ids_installed,
        ticks,
        stall_window: outcome.stall_window,
        learner_error: outcome.error,
    })
}
