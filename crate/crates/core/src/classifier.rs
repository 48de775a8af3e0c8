//! Learned binary success detector.
//!
//! Recorded episodes are turned into per-frame labeled data (a frame is the
//! observation *after* a step; positives are the frames at/after the success
//! step), an MLP logit head is trained with weighted logistic loss, and the
//! resulting model replaces the ground-truth success signal as the reward
//! source during fine-tuning. The decision threshold is deliberately high
//! (default 0.9): an unearned reward poisons training, a late detection only
//! delays it.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::env::Observation;
use crate::episodes::Episode;
use crate::net::{
    backward_batch, forward, forward_batch, forward_batch_cached, init_params, params_from_bytes,
    params_to_bytes, Activation, AdamState, MlpSpec, NetError, ParamVector, SnapshotError,
};
use crate::seeding::{derive_seed, rng_for, Domain};
use crate::OBS_DIM;

#[derive(Error, Debug)]
pub enum ClassifierError {
    #[error("dataset has no positive frames; need at least one successful episode")]
    NoPositives,
    #[error("{split} split lost all {class} frames; re-seed or add episodes")]
    MissingClass { split: &'static str, class: &'static str },
    #[error("need at least 2 episodes to hold out a test split, got {0}")]
    TooFewEpisodes(usize),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("decision threshold must lie in (0,1), got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("model file: {0}")]
    Io(#[from] std::io::Error),
}

/// One training frame. `episode_index` ties the frame to its source episode
/// so the train/test split can be made at episode granularity.
#[derive(Clone, Copy, Debug)]
pub struct LabeledFrame {
    pub observation: Observation,
    pub label: u8,
    pub episode_index: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub positives: usize,
    pub negatives: usize,
}

/// Frames from recorded episodes: frame `i` of an episode is
/// `transitions[i].next_obs` — the state the step produced, which is what a
/// success detector will see during rollouts. Label 1 iff the episode
/// succeeded and `i ≥ success_frame`.
pub fn build_dataset(
    episodes: &[Episode],
) -> Result<(Vec<LabeledFrame>, ClassCounts), ClassifierError> {
    let mut frames = Vec::new();
    let mut counts = ClassCounts::default();
    for (episode_index, ep) in episodes.iter().enumerate() {
        for (i, t) in ep.transitions.iter().enumerate() {
            let positive = ep.success && i >= ep.success_frame.unwrap_or(usize::MAX);
            if positive {
                counts.positives += 1;
            } else {
                counts.negatives += 1;
            }
            frames.push(LabeledFrame {
                observation: t.next_obs,
                label: u8::from(positive),
                episode_index,
            });
        }
    }
    if counts.positives == 0 {
        return Err(ClassifierError::NoPositives);
    }
    Ok((frames, counts))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierTrainConfig {
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Reweight positives by the train-split negative/positive ratio.
    pub class_balance: bool,
    pub decision_threshold: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig {
            hidden_dims: vec![32, 32],
            epochs: 100,
            batch_size: 256,
            learning_rate: 3e-4,
            class_balance: true,
            decision_threshold: 0.9,
        }
    }
}

/// Trained detector: a relu MLP producing one logit, plus the fixed
/// decision threshold.
#[derive(Clone, Debug)]
pub struct ClassifierModel {
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub decision_threshold: f64,
}

/// Held-out metrics, computed on the episode-level test split.
#[derive(Clone, Copy, Debug)]
pub struct TrainReport {
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub final_train_loss: f64,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl ClassifierModel {
    pub fn new(
        spec: MlpSpec,
        params: ParamVector,
        decision_threshold: f64,
    ) -> Result<Self, ClassifierError> {
        if !(decision_threshold > 0.0 && decision_threshold < 1.0) {
            return Err(ClassifierError::BadThreshold(decision_threshold));
        }
        Ok(ClassifierModel {
            spec,
            params,
            decision_threshold,
        })
    }

    pub fn logit(&self, observation: &Observation) -> f64 {
        forward(&self.params, &self.spec, observation).expect("model spec matches params")[0]
    }

    pub fn probability(&self, observation: &Observation) -> f64 {
        sigmoid(self.logit(observation))
    }

    /// The reward signal: 1.0 iff `sigmoid(logit)` strictly exceeds the
    /// decision threshold.
    pub fn predict_reward(&self, observation: &Observation) -> f64 {
        if self.probability(observation) > self.decision_threshold {
            1.0
        } else {
            0.0
        }
    }

    /// Parameter snapshot with the threshold (f64 LE) appended.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ClassifierError> {
        let bytes = params_to_bytes(&self.params)?;
        w.write_all(&bytes)?;
        w.write_all(&self.decision_threshold.to_le_bytes())?;
        Ok(())
    }

    /// Inverse of [`write_to`](Self::write_to). The snapshot records layer
    /// dims but not the activation; classifier files are always relu.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, ClassifierError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 8 {
            return Err(ClassifierError::Snapshot(SnapshotError::Truncated {
                reading: "decision threshold",
            }));
        }
        let split = bytes.len() - 8;
        let params = params_from_bytes(&bytes[..split])?;
        let threshold = f64::from_le_bytes(bytes[split..].try_into().expect("8 bytes"));
        let spec = MlpSpec::from_layout(&params.layout, Activation::Relu)?;
        ClassifierModel::new(spec, params, threshold)
    }

    pub fn write_to_path(&self, path: &std::path::Path) -> Result<(), ClassifierError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)
    }

    pub fn read_from_path(path: &std::path::Path) -> Result<Self, ClassifierError> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }
}

/// Split frames at episode granularity (~20% of episodes held out, at least
/// one), train with Adam on the weighted logistic loss, and report held-out
/// metrics. Deterministic given `seed`.
pub fn train_classifier(
    frames: &[LabeledFrame],
    cfg: &ClassifierTrainConfig,
    seed: u64,
) -> Result<(ClassifierModel, TrainReport), ClassifierError> {
    if !(cfg.decision_threshold > 0.0 && cfg.decision_threshold < 1.0) {
        return Err(ClassifierError::BadThreshold(cfg.decision_threshold));
    }
    let n_episodes = frames
        .iter()
        .map(|f| f.episode_index + 1)
        .max()
        .unwrap_or(0);
    if n_episodes < 2 {
        return Err(ClassifierError::TooFewEpisodes(n_episodes));
    }

    let mut episode_order: Vec<usize> = (0..n_episodes).collect();
    let mut rng = rng_for(seed, Domain::Classifier, 0);
    episode_order.shuffle(&mut rng);
    let n_test_episodes = (n_episodes / 5).max(1);
    let test_episodes: std::collections::HashSet<usize> =
        episode_order[..n_test_episodes].iter().copied().collect();

    let train: Vec<&LabeledFrame> = frames
        .iter()
        .filter(|f| !test_episodes.contains(&f.episode_index))
        .collect();
    let test: Vec<&LabeledFrame> = frames
        .iter()
        .filter(|f| test_episodes.contains(&f.episode_index))
        .collect();

    let train_pos = train.iter().filter(|f| f.label == 1).count();
    let train_neg = train.len() - train_pos;
    for (class, count) in [("positive", train_pos), ("negative", train_neg)] {
        if count == 0 {
            return Err(ClassifierError::MissingClass {
                split: "train",
                class,
            });
        }
    }
    let pos_weight = if cfg.class_balance {
        train_neg as f64 / train_pos as f64
    } else {
        1.0
    };

    let spec = MlpSpec::new(OBS_DIM, &cfg.hidden_dims, 1, Activation::Relu);
    let mut params = init_params(&spec, derive_seed(seed, Domain::Classifier, 1))?;
    let mut adam = AdamState::new(params.values.len(), cfg.learning_rate);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut final_train_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = rng_for(seed, Domain::Classifier, 2 + epoch as u64);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let mut inputs = vec![0.0; OBS_DIM * n];
            for (j, &idx) in chunk.iter().enumerate() {
                inputs[j * OBS_DIM..(j + 1) * OBS_DIM].copy_from_slice(&train[idx].observation);
            }
            let (logits, cache) = forward_batch_cached(&params, &spec, &inputs, n)?;
            let mut loss = 0.0;
            let mut dz = vec![0.0; n];
            for (j, &idx) in chunk.iter().enumerate() {
                let y = f64::from(train[idx].label);
                let w = if train[idx].label == 1 { pos_weight } else { 1.0 };
                let z = logits[j];
                loss += w * (softplus(z) - y * z);
                dz[j] = w * (sigmoid(z) - y) / n as f64;
            }
            loss /= n as f64;
            if !loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            let (grads, _) = backward_batch(&params, &spec, &cache, &dz)?;
            adam.step(&mut params.values, &grads).map_err(NetError::from)?;
            epoch_loss += loss * n as f64;
        }
        final_train_loss = epoch_loss / train.len() as f64;
    }

    let model = ClassifierModel::new(spec, params, cfg.decision_threshold)?;

    // Held-out confusion counts at the decision threshold.
    let mut inputs = vec![0.0; OBS_DIM * test.len()];
    for (j, f) in test.iter().enumerate() {
        inputs[j * OBS_DIM..(j + 1) * OBS_DIM].copy_from_slice(&f.observation);
    }
    let logits = forward_batch(&model.params, &model.spec, &inputs, test.len())?;
    let (mut tp, mut tn, mut fp, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (j, f) in test.iter().enumerate() {
        let predicted = sigmoid(logits[j]) > cfg.decision_threshold;
        match (f.label == 1, predicted) {
            (true, true) => tp += 1,
            (true, false) => fne += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    let rate = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let report = TrainReport {
        accuracy: rate(tp + tn, test.len()),
        false_positive_rate: rate(fp, fp + tn),
        false_negative_rate: rate(fne, fne + tp),
        n_train: train.len(),
        n_test: test.len(),
        final_train_loss,
    };
    Ok((model, report))
}
