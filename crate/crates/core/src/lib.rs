//! Core library for `regrasp`: a desk-scale pipeline that learns a planar
//! grasping task in two stages — behavior-cloning pretraining on scripted
//! expert demonstrations, followed by off-policy actor-critic fine-tuning
//! that is regularized toward the pretrained policy by an adaptive
//! imitation weight.
//!
//! Layout:
//!
//! ```text
//!   seeding     deterministic seed derivation (one stream per consumer)
//!   net         MLPs with hand-written backprop, Adam, squashed-Gaussian
//!               policy head, parameter snapshot files
//!   env         planar grasp simulator, scripted expert, demo collection
//!   episodes    transition/episode records and the episode file format
//!   replay      online + demo buffers with symmetric sampling
//!   classifier  learned binary success detector used as the RL reward
//!   bc          behavior-cloning pretraining of the actor
//!   learner     ensemble-critic RL with the adaptive imitation penalty
//!   wire        length-prefixed binary framing for actor/learner traffic
//!   harness     single-process, lockstep-distributed, and socket-based
//!               actor/learner training drivers; checkpointing
//!   metrics     training metrics and evaluation report CSV schemas
//!   config      flat key=value run configuration with defaults
//!   pipeline    stage functions shared by the CLI and the test suites
//! ```
//!
//! All floating-point math is `f64`. Every source of randomness is a
//! counter-keyed `ChaCha8Rng` (see [`seeding`]), which is what makes the
//! fused single-process trainer and the lockstep distributed trainer
//! bit-identical.

pub mod bc;
pub mod classifier;
pub mod config;
pub mod env;
pub mod episodes;
pub mod harness;
pub mod learner;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod replay;
pub mod seeding;
pub mod wire;

/// Observation vector length: `[ee_x, ee_y, aperture, obj_x, obj_y, obj_height, grasped]`.
pub const OBS_DIM: usize = 7;
/// Action vector length: `[dx, dy, d_aperture]`, each in `[-1, 1]`.
pub const ACT_DIM: usize = 3;
