//! Behavior-cloning pretraining of the squashed-Gaussian actor.
//!
//! The objective is the mean squared error between expert actions and the
//! *deterministic* policy output `tanh(mean(s))`; the log-std head gets no
//! gradient from it (it is initialized to a constant and left for the RL
//! stage to adapt). The trained parameter vector doubles as the frozen
//! imitation reference the fine-tuning stage compares against, so callers
//! must clone it before mutating.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::episodes::Episode;
use crate::net::{
    accumulate_mean_path_grad, backward_batch, sample_policy_batch, AdamState, MlpSpec, NetError,
    ParamVector,
};
use crate::seeding::{rng_for, Domain};
use crate::{ACT_DIM, OBS_DIM};

#[derive(Error, Debug)]
pub enum BcError {
    #[error("behavior cloning needs at least one demo transition")]
    NoData,
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BcConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            epochs: 200,
            batch_size: 256,
            learning_rate: 3e-4,
            seed: 0,
        }
    }
}

impl BcConfig {
    pub fn validate(&self) -> Result<(), BcError> {
        if self.epochs == 0 {
            return Err(BcError::BadConfig("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(BcError::BadConfig("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(BcError::BadConfig("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// Imitation loss and its parameter gradient on one batch:
/// `(1/n)·Σ_j ‖a^e_j − tanh(mean(s_j))‖²`. `states` and `expert_actions`
/// are column-major (`OBS_DIM × n`, `ACT_DIM × n`).
pub fn bc_loss(
    params: &ParamVector,
    spec: &MlpSpec,
    states: &[f64],
    expert_actions: &[f64],
    n: usize,
) -> Result<(f64, Vec<f64>), BcError> {
    if n == 0 {
        return Err(BcError::NoData);
    }
    if expert_actions.len() != ACT_DIM * n {
        return Err(BcError::Net(NetError::DimMismatch {
            context: "bc expert actions",
            expected: ACT_DIM * n,
            got: expert_actions.len(),
        }));
    }
    let batch = sample_policy_batch(params, spec, states, n, None)?;
    let mut loss = 0.0;
    let mut d_action = vec![0.0; ACT_DIM * n];
    for k in 0..ACT_DIM * n {
        let diff = batch.actions[k] - expert_actions[k];
        loss += diff * diff;
        d_action[k] = 2.0 * diff / n as f64;
    }
    loss /= n as f64;
    let mut d_raw = vec![0.0; 2 * ACT_DIM * n];
    accumulate_mean_path_grad(&mut d_raw, &batch.actions, &d_action, ACT_DIM);
    let (grads, _) = backward_batch(params, spec, &batch.cache, &d_raw)?;
    Ok((loss, grads))
}

pub struct PretrainOutput {
    pub params: ParamVector,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
}

/// Minimize [`bc_loss`] over every demo transition with Adam; `initial`
/// should come from the policy initializer (constant log-std head).
/// Deterministic given the config seed.
pub fn pretrain(
    demos: &[Episode],
    spec: &MlpSpec,
    initial: ParamVector,
    cfg: &BcConfig,
) -> Result<PretrainOutput, BcError> {
    cfg.validate()?;
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for ep in demos {
        for t in &ep.transitions {
            states.push(t.obs);
            actions.push(t.action);
        }
    }
    let total = states.len();
    if total == 0 {
        return Err(BcError::NoData);
    }

    let mut params = initial;
    let mut adam = AdamState::new(params.values.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..total).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.seed, Domain::BcShuffle, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let mut s = vec![0.0; OBS_DIM * n];
            let mut a = vec![0.0; ACT_DIM * n];
            for (j, &idx) in chunk.iter().enumerate() {
                s[j * OBS_DIM..(j + 1) * OBS_DIM].copy_from_slice(&states[idx]);
                a[j * ACT_DIM..(j + 1) * ACT_DIM].copy_from_slice(&actions[idx]);
            }
            let (loss, grads) = bc_loss(&params, spec, &s, &a, n)?;
            if !loss.is_finite() {
                return Err(BcError::NonFiniteLoss { epoch });
            }
            adam.step(&mut params.values, &grads).map_err(NetError::from)?;
            epoch_loss += loss * n as f64;
        }
        loss_curve.push(epoch_loss / total as f64);
    }
    Ok(PretrainOutput { params, loss_curve })
}
