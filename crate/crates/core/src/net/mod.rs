//! Minimal differentiable-network core: fully connected networks with
//! analytic backpropagation, an Adam optimizer, a squashed-Gaussian policy
//! head, and a binary parameter-snapshot format.
//!
//! There is no computation graph. Topologies are fixed MLPs described by
//! [`MlpSpec`]; gradients are hand-written and checked against central
//! finite differences in the test suites. Two execution paths exist:
//! per-sample loops (reference; used for single-observation inference) and
//! column-major batched GEMM (used by training). The batched path is
//! verified against the reference path but is not required to be
//! bit-identical to it — reproducibility only requires that the *same*
//! path is used for the same purpose in every run, which it is.

mod adam;
mod mlp;
mod policy;
mod snapshot;

pub use adam::AdamState;
pub use mlp::{
    backward, backward_batch, forward, forward_batch, forward_batch_cached, init_params,
    Activation, BatchCache, LayerLayout, MlpSpec, NetError, ParamVector,
};
pub use policy::{
    accumulate_mean_path_grad, init_policy_params, log_prob_of_action, sample_policy,
    sample_policy_batch, stochastic_path_grad, PolicyBatch, GaussianPolicyOutput, LOG_STD_MAX,
    LOG_STD_MIN,
};
pub use snapshot::{
    params_from_bytes, params_to_bytes, read_params, write_params, SnapshotError, SNAPSHOT_MAGIC,
    SNAPSHOT_VERSION,
};

#[cfg(test)]
pub(crate) use mlp::test_util;
