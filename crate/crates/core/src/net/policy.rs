//! Squashed-Gaussian policy head.
//!
//! The actor network outputs `2·action_dim` values per state: a mean vector
//! and a raw log-std vector. Actions are `tanh(mean + std · ε)` with
//! `ε ~ N(0, I)` (reparameterized), so every component is strictly inside
//! `(-1, 1)`. Log-densities include the squash correction
//! `ln(1 - tanh(u)²)`, evaluated in the numerically stable form
//! `2·(ln 2 - u - softplus(-2u))`.
//!
//! Gradient rules used by training (ε held fixed, `a = tanh(u)`,
//! `u = m + σ·ε`, `σ = exp(ls)`, `ls` clamped to `[LOG_STD_MIN, LOG_STD_MAX]`):
//!
//! ```text
//!   ∂a/∂m      = 1 - a²
//!   ∂a/∂ls     = (1 - a²) · σ · ε          (zero where the clamp is active)
//!   ∂logπ/∂m   = 2a
//!   ∂logπ/∂ls  = -1 + 2a · σ · ε           (zero where the clamp is active)
//! ```

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::mlp::{
    forward, forward_batch_cached, init_params, BatchCache, MlpSpec, NetError, ParamVector,
};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918938533204672741780329736406; // 0.5·ln(2π)

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(u)²)` without catastrophic cancellation for large |u|.
#[inline]
fn squash_correction(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// One policy evaluation at a single state.
#[derive(Clone, Debug)]
pub struct GaussianPolicyOutput {
    /// Pre-squash mean head output.
    pub mean: Vec<f64>,
    /// Log standard deviation after clamping.
    pub log_std: Vec<f64>,
    /// Action, every component strictly in (-1, 1).
    pub sampled_action: Vec<f64>,
    /// Squash-corrected log density of `sampled_action`; `None` when deterministic.
    pub log_prob: Option<f64>,
    /// `u = mean + std·ε` (equals `mean` when deterministic).
    pub pre_squash: Vec<f64>,
    /// The ε draw (zeros when deterministic).
    pub noise: Vec<f64>,
}

/// Initialize actor parameters: standard fan-in init for everything, then
/// the output-layer rows feeding the log-std head are zeroed with bias
/// `log_std_bias`, so the initial policy has a constant, known std.
pub fn init_policy_params(spec: &MlpSpec, seed: u64, log_std_bias: f64) -> Result<ParamVector, NetError> {
    if spec.output_dim % 2 != 0 {
        return Err(NetError::InvalidSpec(
            "policy net must output 2·action_dim values".into(),
        ));
    }
    let mut params = init_params(spec, seed)?;
    let act_dim = spec.output_dim / 2;
    let last = *params.layout.last().expect("validated spec has layers");
    for o in act_dim..2 * act_dim {
        let row = last.offset + o * last.in_dim;
        for w in &mut params.values[row..row + last.in_dim] {
            *w = 0.0;
        }
        params.values[last.bias_offset() + o] = log_std_bias;
    }
    Ok(params)
}

fn check_policy_spec(spec: &MlpSpec) -> Result<usize, NetError> {
    if spec.output_dim % 2 != 0 || spec.output_dim == 0 {
        return Err(NetError::InvalidSpec(
            "policy net must output 2·action_dim values".into(),
        ));
    }
    Ok(spec.output_dim / 2)
}

/// Evaluate the policy at `state`. With `deterministic`, the action is the
/// squashed mean and no log-density is reported; otherwise a reparameterized
/// sample is drawn from an RNG seeded with `noise_seed`.
pub fn sample_policy(
    params: &ParamVector,
    spec: &MlpSpec,
    state: &[f64],
    noise_seed: u64,
    deterministic: bool,
) -> Result<GaussianPolicyOutput, NetError> {
    let act_dim = check_policy_spec(spec)?;
    let raw = forward(params, spec, state)?;
    let mean = raw[..act_dim].to_vec();
    let log_std: Vec<f64> = raw[act_dim..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();

    if deterministic {
        let action: Vec<f64> = mean.iter().map(|m| m.tanh()).collect();
        return Ok(GaussianPolicyOutput {
            pre_squash: mean.clone(),
            noise: vec![0.0; act_dim],
            mean,
            log_std,
            sampled_action: action,
            log_prob: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise: Vec<f64> = (0..act_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let mut pre_squash = vec![0.0; act_dim];
    let mut action = vec![0.0; act_dim];
    let mut log_prob = 0.0;
    for i in 0..act_dim {
        let std = log_std[i].exp();
        let u = mean[i] + std * noise[i];
        pre_squash[i] = u;
        action[i] = u.tanh();
        log_prob += -0.5 * noise[i] * noise[i] - HALF_LN_2PI - log_std[i] - squash_correction(u);
    }
    Ok(GaussianPolicyOutput {
        mean,
        log_std,
        sampled_action: action,
        log_prob: Some(log_prob),
        pre_squash,
        noise,
    })
}

/// Squash-corrected log density of an arbitrary `action` under
/// `(mean, log_std)`. Used by density tests; training differentiates through
/// sampled actions instead.
pub fn log_prob_of_action(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut log_prob = 0.0;
    for i in 0..mean.len() {
        let a = action[i].clamp(-1.0 + 1e-12, 1.0 - 1e-12);
        let u = a.atanh();
        let std = log_std[i].exp();
        let eps = (u - mean[i]) / std;
        log_prob += -0.5 * eps * eps - HALF_LN_2PI - log_std[i] - squash_correction(u);
    }
    log_prob
}

/// Batched policy evaluation over `n` states (column-major matrices, one
/// column per sample; see `net::mlp`). Retains everything the actor update
/// needs to run the backward pass.
pub struct PolicyBatch {
    pub n: usize,
    pub act_dim: usize,
    /// Mean head outputs, `act_dim × n`.
    pub mean: Vec<f64>,
    /// Clamped log-std, `act_dim × n`.
    pub log_std: Vec<f64>,
    /// 1.0 where the raw log-std was inside the clamp bounds, else 0.0.
    pub clamp_mask: Vec<f64>,
    /// ε draws, `act_dim × n` (zeros when deterministic).
    pub noise: Vec<f64>,
    /// `u = mean + std·ε`, `act_dim × n`.
    pub pre_squash: Vec<f64>,
    /// `tanh(u)`, `act_dim × n`.
    pub actions: Vec<f64>,
    /// Per-sample log densities (empty when deterministic).
    pub log_probs: Vec<f64>,
    /// Forward cache for the underlying MLP.
    pub cache: BatchCache,
}

/// Batched policy evaluation. `noise` must be `act_dim × n` ε values for a
/// stochastic pass, or `None` for the deterministic (squashed-mean) pass.
pub fn sample_policy_batch(
    params: &ParamVector,
    spec: &MlpSpec,
    states: &[f64],
    n: usize,
    noise: Option<&[f64]>,
) -> Result<PolicyBatch, NetError> {
    let act_dim = check_policy_spec(spec)?;
    let (raw, cache) = forward_batch_cached(params, spec, states, n)?;
    if let Some(eps) = noise {
        if eps.len() != act_dim * n {
            return Err(NetError::DimMismatch {
                context: "policy batch noise",
                expected: act_dim * n,
                got: eps.len(),
            });
        }
    }
    let mut mean = vec![0.0; act_dim * n];
    let mut log_std = vec![0.0; act_dim * n];
    let mut clamp_mask = vec![0.0; act_dim * n];
    for j in 0..n {
        for i in 0..act_dim {
            let m = raw[j * 2 * act_dim + i];
            let ls_raw = raw[j * 2 * act_dim + act_dim + i];
            mean[j * act_dim + i] = m;
            log_std[j * act_dim + i] = ls_raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            clamp_mask[j * act_dim + i] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&ls_raw) {
                1.0
            } else {
                0.0
            };
        }
    }

    match noise {
        None => {
            let actions: Vec<f64> = mean.iter().map(|m| m.tanh()).collect();
            Ok(PolicyBatch {
                n,
                act_dim,
                pre_squash: mean.clone(),
                noise: vec![0.0; act_dim * n],
                mean,
                log_std,
                clamp_mask,
                actions,
                log_probs: Vec::new(),
                cache,
            })
        }
        Some(eps) => {
            let mut pre_squash = vec![0.0; act_dim * n];
            let mut actions = vec![0.0; act_dim * n];
            let mut log_probs = vec![0.0; n];
            for j in 0..n {
                let mut lp = 0.0;
                for i in 0..act_dim {
                    let k = j * act_dim + i;
                    let std = log_std[k].exp();
                    let u = mean[k] + std * eps[k];
                    pre_squash[k] = u;
                    actions[k] = u.tanh();
                    lp += -0.5 * eps[k] * eps[k] - HALF_LN_2PI - log_std[k] - squash_correction(u);
                }
                log_probs[j] = lp;
            }
            Ok(PolicyBatch {
                n,
                act_dim,
                mean,
                log_std,
                clamp_mask,
                noise: eps.to_vec(),
                pre_squash,
                actions,
                log_probs,
                cache,
            })
        }
    }
}

/// Build the raw-output gradient (`2·act_dim × n`, column-major) of a loss
/// whose per-sample dependence on the *stochastic* path is
/// `Σ d_action[k]·a[k] + d_logprob[j]·logπ_j` with ε fixed. Applies the
/// chain rules listed in the module docs.
pub fn stochastic_path_grad(batch: &PolicyBatch, d_action: &[f64], d_logprob: &[f64]) -> Vec<f64> {
    let (d, n) = (batch.act_dim, batch.n);
    assert_eq!(d_action.len(), d * n);
    assert_eq!(d_logprob.len(), n);
    assert!(!batch.log_probs.is_empty(), "stochastic gradient on a deterministic batch");
    let mut d_raw = vec![0.0; 2 * d * n];
    for j in 0..n {
        for i in 0..d {
            let k = j * d + i;
            let a = batch.actions[k];
            let one_minus_a2 = 1.0 - a * a;
            let sigma_eps = batch.log_std[k].exp() * batch.noise[k];
            let da = d_action[k];
            let dlp = d_logprob[j];
            d_raw[j * 2 * d + i] = da * one_minus_a2 + dlp * 2.0 * a;
            d_raw[j * 2 * d + d + i] =
                batch.clamp_mask[k] * (da * one_minus_a2 * sigma_eps + dlp * (-1.0 + 2.0 * a * sigma_eps));
        }
    }
    d_raw
}

/// Accumulate into `d_raw` the mean-head gradient of a loss term that goes
/// through the *deterministic* action `a_det = tanh(mean)` (imitation terms):
/// `∂a_det/∂mean = 1 - a_det²`. `a_det` and `d_action_det` are `act_dim × n`.
pub fn accumulate_mean_path_grad(d_raw: &mut [f64], a_det: &[f64], d_action_det: &[f64], act_dim: usize) {
    let n = a_det.len() / act_dim;
    assert_eq!(d_raw.len(), 2 * act_dim * n);
    assert_eq!(d_action_det.len(), act_dim * n);
    for j in 0..n {
        for i in 0..act_dim {
            let k = j * act_dim + i;
            let a = a_det[k];
            d_raw[j * 2 * act_dim + i] += d_action_det[k] * (1.0 - a * a);
        }
    }
}
