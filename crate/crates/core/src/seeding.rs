//! Deterministic seed derivation.
//!
//! Every random draw in this crate comes from a `ChaCha8Rng` seeded via
//! [`derive_seed`] with a `(base, domain, counter)` triple. Keyed derivation
//! — instead of one shared RNG stream — makes randomness independent of
//! *when* a consumer draws: the fused single-process trainer and the
//! lockstep distributed trainer consume seeds in different wall-clock
//! orders but derive identical values, so their runs are bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Randomness domains. Each `(domain, counter)` pair under one base seed is
/// an independent stream; counters are stable quantities such as episode
/// index, global environment step, or learner update count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Network initialization; counter = network index within the run.
    NetInit = 1,
    /// Environment episode stream (reset position + sensor noise); counter = episode index.
    EnvEpisode = 2,
    /// Exploration noise for action sampling; counter = global environment step.
    ActionNoise = 3,
    /// Expert action noise during demo collection; counter = attempt index.
    ExpertNoise = 4,
    /// Symmetric batch sampling for critic passes; counter = update_count * G + pass.
    CriticBatch = 5,
    /// Target-critic subset choice; counter = update_count * G + pass.
    SubsetChoice = 6,
    /// Next-action sampling inside target computation; counter = update_count * G + pass.
    TargetNoise = 7,
    /// Symmetric batch sampling for the actor pass; counter = update_count.
    ActorBatch = 8,
    /// Reparameterization noise for the actor pass; counter = update_count.
    ActorNoise = 9,
    /// Classifier training (split, shuffling); counter = stage-local.
    Classifier = 10,
    /// Behavior-cloning minibatch shuffling; counter = stage-local.
    BcShuffle = 11,
    /// Evaluation episodes; counter = trial index.
    Eval = 12,
    /// Random-action rollouts for failure collection; counter = attempt index.
    FailureRollout = 13,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed for one `(domain, counter)` stream under `base`.
pub fn derive_seed(base: u64, domain: Domain, counter: u64) -> u64 {
    let a = splitmix64(base);
    let b = splitmix64(a ^ (domain as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(b ^ counter.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

/// RNG for one `(domain, counter)` stream under `base`.
pub fn rng_for(base: u64, domain: Domain, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, domain, counter))
}
