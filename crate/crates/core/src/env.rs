//! Planar grasping simulator with a scripted expert.
//!
//! The task: a point end-effector with a 1-D gripper aperture starts at a
//! home corner, must reach a small object, close around it, and carry it
//! toward home; carrying toward home raises the object, and raising it past
//! a threshold is success. Reward is sparse binary: 1 exactly at the success
//! step (which terminates the episode), 0 otherwise.
//!
//! The transition rules live in the pure function [`step_kinematics`] so
//! tests can hand-trace them on constructed states; [`GraspEnv`] adds the
//! episode state machine and sensor noise.

use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::episodes::{Episode, Transition};
use crate::seeding::{rng_for, Domain};
use crate::{ACT_DIM, OBS_DIM};

#[derive(Error, Debug)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    EpisodeOver,
}

#[derive(Error, Debug)]
pub enum CollectError {
    #[error("policy produced no {wanted} episode in {attempts} attempts ({collected} collected)")]
    Exhausted {
        wanted: &'static str,
        attempts: usize,
        collected: usize,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Object placement at reset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResetMode {
    /// Object at the configured fixed position.
    Fixed,
    /// Object uniform over the configured square region.
    Random,
}

/// All environment constants. Defaults are the pinned task definition;
/// tests override individual fields (e.g. zero sensor noise).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvConfig {
    pub horizon: u32,
    /// Action scale: workspace units moved per unit action component.
    pub max_step: f64,
    /// Grasp latch distance.
    pub reach_threshold: f64,
    /// Aperture below which the latch can engage.
    pub close_threshold: f64,
    /// Aperture above which a held object is dropped.
    pub drop_threshold: f64,
    /// Object height at which the task succeeds.
    pub lift_threshold: f64,
    /// Height gained per carrying step.
    pub lift_increment: f64,
    /// Uniform sensor noise half-width on observed object position.
    pub sensor_noise: f64,
    pub home: [f64; 2],
    pub fixed_obj: [f64; 2],
    /// Random-reset region is `[region_min, region_max]²`.
    pub region_min: f64,
    pub region_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            horizon: 100,
            max_step: 0.05,
            reach_threshold: 0.06,
            close_threshold: 0.3,
            drop_threshold: 0.5,
            lift_threshold: 0.15,
            lift_increment: 0.05,
            sensor_noise: 0.01,
            home: [-0.8, -0.8],
            fixed_obj: [0.3, 0.2],
            region_min: 0.0,
            region_max: 0.6,
        }
    }
}

/// Full simulator state. `obj_height > 0` only while `grasped` (a drop
/// resets the height to zero in the same step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub ee_pos: [f64; 2],
    /// Gripper opening in [0, 1]; 0 is fully closed.
    pub aperture: f64,
    pub obj_pos: [f64; 2],
    pub obj_height: f64,
    pub grasped: bool,
    pub step_index: u32,
}

/// Observation: `[ee_x, ee_y, aperture, obj_x + ν, obj_y + ν, obj_height, grasped]`
/// with ν uniform in ±`sensor_noise`.
pub type Observation = [f64; OBS_DIM];

pub type Action = [f64; ACT_DIM];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    /// True ground-truth success (reward 1) this step.
    pub success: bool,
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Pure transition function. Rule order per step:
///
/// 1. clamp the action to `[-1, 1]` per component;
/// 2. move `ee_pos` by `max_step · (dx, dy)`, clamped to the workspace
///    `[-1, 1]²`; move `aperture` by `max_step · d_aperture`, clamped to `[0, 1]`;
/// 3. if holding: the object tracks the end-effector; opening past
///    `drop_threshold` drops it (height resets to 0); otherwise a step that
///    strictly reduced the distance to home raises it by `lift_increment`;
/// 4. if not holding: the latch engages when the end-effector is within
///    `reach_threshold` of the object with aperture below `close_threshold`
///    (carrying, and hence lifting, starts with the *next* step);
/// 5. success — holding with `obj_height ≥ lift_threshold` — gives reward 1
///    and terminates; the horizon also terminates.
pub fn step_kinematics(cfg: &EnvConfig, state: &EnvState, action: Action) -> StepOutcome {
    let mut next = *state;
    let dx = action[0].clamp(-1.0, 1.0);
    let dy = action[1].clamp(-1.0, 1.0);
    let da = action[2].clamp(-1.0, 1.0);

    let old_ee = next.ee_pos;
    next.ee_pos[0] = (next.ee_pos[0] + cfg.max_step * dx).clamp(-1.0, 1.0);
    next.ee_pos[1] = (next.ee_pos[1] + cfg.max_step * dy).clamp(-1.0, 1.0);
    next.aperture = (next.aperture + cfg.max_step * da).clamp(0.0, 1.0);

    if state.grasped {
        next.obj_pos = next.ee_pos;
        if next.aperture > cfg.drop_threshold {
            next.grasped = false;
            next.obj_height = 0.0;
        } else if dist2(next.ee_pos, cfg.home) < dist2(old_ee, cfg.home) {
            next.obj_height += cfg.lift_increment;
        }
    } else if dist2(next.ee_pos, next.obj_pos) < cfg.reach_threshold
        && next.aperture < cfg.close_threshold
    {
        next.grasped = true;
    }

    next.step_index += 1;

    let success = next.grasped && next.obj_height >= cfg.lift_threshold;
    let reward = if success { 1.0 } else { 0.0 };
    let done = success || next.step_index >= cfg.horizon;
    StepOutcome {
        state: next,
        reward,
        done,
        success,
    }
}

/// Episodic simulator: owns the state, the per-episode RNG (object
/// placement + sensor noise), and the done latch.
pub struct GraspEnv {
    cfg: EnvConfig,
    state: EnvState,
    rng: ChaCha8Rng,
    done: bool,
}

impl GraspEnv {
    pub fn new(cfg: EnvConfig) -> Self {
        GraspEnv {
            cfg,
            state: EnvState {
                ee_pos: cfg.home,
                aperture: 1.0,
                obj_pos: cfg.fixed_obj,
                obj_height: 0.0,
                grasped: false,
                step_index: 0,
            },
            rng: rng_for(0, Domain::EnvEpisode, 0),
            done: true,
        }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Start an episode. Deterministic given `(seed, mode)`.
    pub fn reset(&mut self, seed: u64, mode: ResetMode) -> Observation {
        self.rng = rng_for(seed, Domain::EnvEpisode, 0);
        let obj_pos = match mode {
            ResetMode::Fixed => self.cfg.fixed_obj,
            ResetMode::Random => {
                let dist = Uniform::new_inclusive(self.cfg.region_min, self.cfg.region_max);
                [dist.sample(&mut self.rng), dist.sample(&mut self.rng)]
            }
        };
        self.state = EnvState {
            ee_pos: self.cfg.home,
            aperture: 1.0,
            obj_pos,
            obj_height: 0.0,
            grasped: false,
            step_index: 0,
        };
        self.done = false;
        self.observe()
    }

    /// Advance one step. Errors when the episode already finished.
    pub fn step(&mut self, action: Action) -> Result<(Observation, f64, bool), EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let outcome = step_kinematics(&self.cfg, &self.state, action);
        self.state = outcome.state;
        self.done = outcome.done;
        Ok((self.observe(), outcome.reward, outcome.done))
    }

    fn observe(&mut self) -> Observation {
        let noise = self.cfg.sensor_noise;
        let (nx, ny) = if noise > 0.0 {
            let dist = Uniform::new(-noise, noise);
            (dist.sample(&mut self.rng), dist.sample(&mut self.rng))
        } else {
            (0.0, 0.0)
        };
        [
            self.state.ee_pos[0],
            self.state.ee_pos[1],
            self.state.aperture,
            self.state.obj_pos[0] + nx,
            self.state.obj_pos[1] + ny,
            self.state.obj_height,
            f64::from(u8::from(self.state.grasped)),
        ]
    }
}

#[inline]
fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n < 1e-12 {
        [0.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Scripted expert: reach (move toward the object, keep the gripper open),
/// close (inside the latch radius, close), lift (once holding, retreat
/// toward home, staying closed). Uniform ±`noise` on every component; the
/// result is clamped to the action box. Draws 3 values from `rng` per call
/// when `noise > 0`, none otherwise.
pub fn scripted_expert(cfg: &EnvConfig, state: &EnvState, noise: f64, rng: &mut ChaCha8Rng) -> Action {
    let mut action = if state.grasped {
        let dir = normalize([cfg.home[0] - state.ee_pos[0], cfg.home[1] - state.ee_pos[1]]);
        [dir[0], dir[1], -1.0]
    } else if dist2(state.ee_pos, state.obj_pos) < cfg.reach_threshold {
        [0.0, 0.0, -1.0]
    } else {
        let dir = normalize([state.obj_pos[0] - state.ee_pos[0], state.obj_pos[1] - state.ee_pos[1]]);
        [dir[0], dir[1], 1.0]
    };
    if noise > 0.0 {
        let dist = Uniform::new(-noise, noise);
        for a in &mut action {
            *a = (*a + dist.sample(rng)).clamp(-1.0, 1.0);
        }
    }
    action
}

/// Run one episode under `policy` (which sees the true state and the noisy
/// observation) and record it. The returned episode carries the ground-truth
/// success annotation: `success_frame` is the index of the reward-1 step.
pub fn run_policy_episode<F>(
    env: &mut GraspEnv,
    seed: u64,
    mode: ResetMode,
    mut policy: F,
) -> Result<Episode, EnvError>
where
    F: FnMut(&EnvState, &Observation) -> Action,
{
    let mut obs = env.reset(seed, mode);
    let mut transitions = Vec::new();
    let mut success_frame = None;
    loop {
        let action = policy(env.state(), &obs);
        let prev_obs = obs;
        let (next_obs, reward, done) = env.step(action)?;
        transitions.push(Transition {
            obs: prev_obs,
            action,
            reward,
            next_obs,
            done,
        });
        if reward == 1.0 {
            success_frame = Some(transitions.len() - 1);
        }
        obs = next_obs;
        if done {
            break;
        }
    }
    Ok(Episode {
        success: success_frame.is_some(),
        success_frame,
        transitions,
    })
}

fn collect_filtered<F>(
    env_cfg: &EnvConfig,
    n: usize,
    mode: ResetMode,
    base_seed: u64,
    keep_success: bool,
    attempts_factor: usize,
    mut make_policy: F,
) -> Result<Vec<Episode>, CollectError>
where
    F: FnMut(u64) -> Box<dyn FnMut(&EnvState, &Observation) -> Action>,
{
    assert!(n >= 1, "must request at least one episode");
    let mut env = GraspEnv::new(*env_cfg);
    let mut episodes = Vec::with_capacity(n);
    let max_attempts = attempts_factor * n;
    let mut attempt = 0u64;
    while episodes.len() < n {
        if attempt as usize >= max_attempts {
            return Err(CollectError::Exhausted {
                wanted: if keep_success { "successful" } else { "failed" },
                attempts: max_attempts,
                collected: episodes.len(),
            });
        }
        let mut policy = make_policy(attempt);
        let episode = run_policy_episode(
            &mut env,
            crate::seeding::derive_seed(base_seed, Domain::EnvEpisode, attempt),
            mode,
            |state, obs| policy(state, obs),
        )?;
        if episode.success == keep_success {
            episodes.push(episode);
        }
        attempt += 1;
    }
    Ok(episodes)
}

/// Collect `n` successful expert episodes (retrying failures up to
/// `attempts_factor · n` attempts).
pub fn collect_demos(
    env_cfg: &EnvConfig,
    n: usize,
    mode: ResetMode,
    expert_noise: f64,
    base_seed: u64,
    attempts_factor: usize,
) -> Result<Vec<Episode>, CollectError> {
    let cfg = *env_cfg;
    collect_filtered(env_cfg, n, mode, base_seed, true, attempts_factor, move |attempt| {
        let mut rng = rng_for(base_seed, Domain::ExpertNoise, attempt);
        Box::new(move |state, _obs| scripted_expert(&cfg, state, expert_noise, &mut rng))
    })
}

/// Collect `n` failed episodes from a uniform-random policy (classifier
/// negatives).
pub fn collect_failures(
    env_cfg: &EnvConfig,
    n: usize,
    mode: ResetMode,
    base_seed: u64,
    attempts_factor: usize,
) -> Result<Vec<Episode>, CollectError> {
    let cfg = *env_cfg;
    collect_filtered(env_cfg, n, mode, base_seed, false, attempts_factor, move |attempt| {
        let mut rng = rng_for(base_seed, Domain::FailureRollout, attempt);
        match attempt % 3 {
            // Aimless wandering: never comes near the object.
            0 => Box::new(move |_state, _obs| {
                [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ]
            }),
            // Botched lift: grasp like the expert, raise the object a
            // little, then open and drop it — the frames just below the
            // lift threshold are the negatives the detector must get right.
            1 => {
                let mut dropping = false;
                Box::new(move |state: &EnvState, _obs: &Observation| {
                    if state.grasped && (dropping || state.obj_height >= cfg.lift_increment) {
                        // freeze in place and open until the object releases;
                        // any home-ward drift would keep lifting it
                        dropping = true;
                        [0.0, 0.0, 1.0]
                    } else if dropping {
                        [
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-0.2..1.0),
                        ]
                    } else {
                        let mut a = scripted_expert(&cfg, state, 0.0, &mut rng);
                        for v in &mut a {
                            *v = (*v + rng.gen_range(-0.05..0.05)).clamp(-1.0, 1.0);
                        }
                        a
                    }
                })
            }
            // Grasp and freeze: holds the object on the table without ever
            // lifting, covering the near-success region at zero height.
            _ => Box::new(move |state: &EnvState, _obs: &Observation| {
                if state.grasped {
                    [0.0, 0.0, rng.gen_range(-0.6..-0.1)]
                } else {
                    let mut a = scripted_expert(&cfg, state, 0.0, &mut rng);
                    for v in &mut a {
                        *v = (*v + rng.gen_range(-0.05..0.05)).clamp(-1.0, 1.0);
                    }
                    a
                }
            }),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> EnvConfig {
        EnvConfig {
            sensor_noise: 0.0,
            ..EnvConfig::default()
        }
    }

    fn on_object_state(aperture: f64) -> EnvState {
        EnvState {
            ee_pos: [0.3, 0.2],
            aperture,
            obj_pos: [0.3, 0.2],
            obj_height: 0.0,
            grasped: false,
            step_index: 0,
        }
    }

    #[test]
    fn fixed_reset_is_pinned() {
        let mut env = GraspEnv::new(noiseless());
        for seed in 0..5 {
            let obs = env.reset(seed, ResetMode::Fixed);
            assert_eq!(env.state().obj_pos, [0.3, 0.2]);
            assert_eq!(env.state().ee_pos, [-0.8, -0.8]);
            assert_eq!(env.state().aperture, 1.0);
            assert_eq!(env.state().obj_height, 0.0);
            assert!(!env.state().grasped);
            assert_eq!(obs[5], 0.0);
            assert_eq!(obs[6], 0.0);
        }
    }

    #[test]
    fn random_reset_mean_covers_region_center() {
        let mut env = GraspEnv::new(noiseless());
        let mut sum = [0.0, 0.0];
        let n = 1000;
        for seed in 0..n {
            env.reset(seed, ResetMode::Random);
            sum[0] += env.state().obj_pos[0];
            sum[1] += env.state().obj_pos[1];
            let p = env.state().obj_pos;
            assert!(p[0] >= 0.0 && p[0] <= 0.6 && p[1] >= 0.0 && p[1] <= 0.6);
        }
        let mean = [sum[0] / n as f64, sum[1] / n as f64];
        assert!((mean[0] - 0.3).abs() < 0.05, "mean x {}", mean[0]);
        assert!((mean[1] - 0.3).abs() < 0.05, "mean y {}", mean[1]);
    }

    #[test]
    fn null_action_only_advances_step_index() {
        let mut env = GraspEnv::new(noiseless());
        env.reset(3, ResetMode::Fixed);
        let before = *env.state();
        let (_, reward, done) = env.step([0.0, 0.0, 0.0]).unwrap();
        assert_eq!(reward, 0.0);
        assert!(!done);
        let after = *env.state();
        assert_eq!(after.ee_pos, before.ee_pos);
        assert_eq!(after.aperture, before.aperture);
        assert_eq!(after.obj_pos, before.obj_pos);
        assert_eq!(after.step_index, before.step_index + 1);
    }

    #[test]
    fn hand_traced_grasp_and_lift_sequence() {
        // From a state on the object with aperture 0.34:
        //   step 1: close (0,0,-1)   → aperture 0.29 < 0.3 → latch engages
        //   steps 2-4: move toward home while closed → height 0.05/0.10/0.15
        //   step 4 crosses the 0.15 threshold → reward 1, done.
        let cfg = noiseless();
        let mut s = on_object_state(0.34);

        let out1 = step_kinematics(&cfg, &s, [0.0, 0.0, -1.0]);
        assert!(out1.state.grasped, "latch after closing to {}", out1.state.aperture);
        assert!(out1.state.aperture < 0.3);
        assert_eq!(out1.state.obj_height, 0.0); // carrying starts next step
        assert_eq!(out1.reward, 0.0);
        s = out1.state;

        let toward_home = [-1.0, -1.0, 0.0];
        let mut rewards = Vec::new();
        for _ in 0..3 {
            let out = step_kinematics(&cfg, &s, toward_home);
            rewards.push(out.reward);
            s = out.state;
        }
        assert_eq!(rewards, vec![0.0, 0.0, 1.0]);
        assert!(s.obj_height >= 0.15);
        assert_eq!(s.obj_pos, s.ee_pos); // object tracked the gripper
        let final_out = step_kinematics(&cfg, &s, toward_home);
        // state was already terminal at the reward step; the env layer
        // enforces that via the done latch
        assert!(final_out.done);
    }

    #[test]
    fn opening_past_drop_threshold_drops_object() {
        let cfg = noiseless();
        let mut s = on_object_state(0.42);
        s.grasped = true;
        s.obj_height = 0.10;

        // 0.42 → 0.47: still below the 0.5 drop threshold.
        let out1 = step_kinematics(&cfg, &s, [0.0, 0.0, 1.0]);
        assert!(out1.state.grasped);
        assert!(out1.state.aperture <= 0.5);
        // 0.47 → 0.52: above the threshold → dropped, height reset.
        let out2 = step_kinematics(&cfg, &out1.state, [0.0, 0.0, 1.0]);
        assert!(!out2.state.grasped);
        assert_eq!(out2.state.obj_height, 0.0);
        assert_eq!(out2.reward, 0.0);
    }

    #[test]
    fn step_after_done_errors() {
        let cfg = EnvConfig {
            horizon: 2,
            sensor_noise: 0.0,
            ..EnvConfig::default()
        };
        let mut env = GraspEnv::new(cfg);
        env.reset(0, ResetMode::Fixed);
        env.step([0.0, 0.0, 0.0]).unwrap();
        let (_, _, done) = env.step([0.0, 0.0, 0.0]).unwrap();
        assert!(done);
        assert!(matches!(env.step([0.0, 0.0, 0.0]), Err(EnvError::EpisodeOver)));
    }

    #[test]
    fn trajectories_are_bit_exact_given_seed() {
        let run = || {
            let mut env = GraspEnv::new(EnvConfig::default());
            let mut obs = env.reset(99, ResetMode::Random);
            let mut trace = vec![obs];
            let mut rng = rng_for(5, Domain::ActionNoise, 0);
            for _ in 0..50 {
                let action = [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                let (next, _, done) = env.step(action).unwrap();
                obs = next;
                trace.push(obs);
                if done {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn expert_phases_without_noise() {
        let cfg = noiseless();
        let mut rng = rng_for(0, Domain::ExpertNoise, 0);

        // Far from the object: normalized direction toward it, gripper opening.
        let state = EnvState {
            ee_pos: [-0.8, -0.8],
            aperture: 1.0,
            obj_pos: [0.3, 0.2],
            obj_height: 0.0,
            grasped: false,
            step_index: 0,
        };
        let a = scripted_expert(&cfg, &state, 0.0, &mut rng);
        let d: [f64; 2] = [1.1, 1.0];
        let norm = (d[0] * d[0] + d[1] * d[1]).sqrt();
        assert!((a[0] - d[0] / norm).abs() < 1e-12);
        assert!((a[1] - d[1] / norm).abs() < 1e-12);
        assert_eq!(a[2], 1.0);

        // Within the latch radius and open: pure closing.
        let a = scripted_expert(&cfg, &on_object_state(0.9), 0.0, &mut rng);
        assert_eq!(a, [0.0, 0.0, -1.0]);

        // Holding: retreat toward home, staying closed.
        let mut held = on_object_state(0.1);
        held.grasped = true;
        let a = scripted_expert(&cfg, &held, 0.0, &mut rng);
        assert!(a[0] < 0.0 && a[1] < 0.0);
        assert_eq!(a[2], -1.0);
    }

    #[test]
    fn expert_succeeds_on_random_resets() {
        // Regression-pinned competence bar: measured 200/200 at the pinned
        // defaults; the floor below allows a little future drift only.
        let cfg = EnvConfig::default();
        let mut env = GraspEnv::new(cfg);
        let mut successes = 0;
        let n = 200;
        for attempt in 0..n {
            let mut rng = rng_for(7, Domain::ExpertNoise, attempt);
            let ep = run_policy_episode(&mut env, attempt * 31 + 1, ResetMode::Random, |state, _| {
                scripted_expert(&cfg, state, 0.1, &mut rng)
            })
            .unwrap();
            if ep.success {
                successes += 1;
            }
        }
        assert!(
            successes as f64 / n as f64 >= 0.95,
            "expert success rate {}/{n}",
            successes
        );
    }

    #[test]
    fn reward_one_implies_done_and_height_implies_grasp() {
        let cfg = EnvConfig::default();
        let mut env = GraspEnv::new(cfg);
        for attempt in 0..40u64 {
            let mut rng = rng_for(11, Domain::ExpertNoise, attempt);
            let ep = run_policy_episode(&mut env, attempt, ResetMode::Random, |state, _| {
                scripted_expert(&cfg, state, 0.3, &mut rng) // extra-noisy: exercise drops
            })
            .unwrap();
            for t in &ep.transitions {
                assert!(t.reward == 0.0 || t.reward == 1.0);
                if t.reward == 1.0 {
                    assert!(t.done);
                }
                // height visible in the observation implies a grasp flag
                if t.next_obs[5] > 0.0 {
                    assert_eq!(t.next_obs[6], 1.0);
                }
            }
            ep.validate().unwrap();
        }
    }

    #[test]
    fn collect_demos_returns_annotated_successes() {
        let cfg = EnvConfig::default();
        let demos = collect_demos(&cfg, 30, ResetMode::Random, 0.1, 42, 10).unwrap();
        assert_eq!(demos.len(), 30);
        let mut total = 0;
        for ep in &demos {
            assert!(ep.success);
            ep.validate().unwrap();
            let frame = ep.success_frame.unwrap();
            for (i, t) in ep.transitions.iter().enumerate() {
                assert_eq!(t.reward, if i == frame { 1.0 } else { 0.0 });
            }
            total += ep.len();
        }
        assert!(total <= 30 * cfg.horizon as usize);
    }

    #[test]
    fn collect_demos_exhaustion_errors() {
        // A horizonful of null actions never succeeds: the attempt budget
        // must trip, not loop forever.
        let cfg = EnvConfig {
            horizon: 5,
            ..EnvConfig::default()
        };
        let err = collect_filtered(&cfg, 2, ResetMode::Fixed, 0, true, 10, |_| {
            Box::new(|_state, _obs| [0.0, 0.0, 0.0])
        })
        .unwrap_err();
        assert!(matches!(err, CollectError::Exhausted { attempts: 20, .. }));
    }

    #[test]
    fn collect_failures_returns_failures() {
        let cfg = EnvConfig::default();
        let fails = collect_failures(&cfg, 10, ResetMode::Random, 3, 10).unwrap();
        assert_eq!(fails.len(), 10);
        for ep in &fails {
            assert!(!ep.success);
            ep.validate().unwrap();
        }
    }
}
