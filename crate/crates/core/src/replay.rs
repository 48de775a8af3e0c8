//! Dual replay buffer: a FIFO online buffer plus an append-only demo buffer.
//!
//! Training batches are *symmetric*: exactly half the items come from each
//! buffer, drawn uniformly with replacement, and every item carries a
//! [`Source`] tag because downstream consumers treat the halves differently
//! (the imitation weight is computed on the online half only, the imitation
//! loss on the demo half only).
//!
//! Successful online episodes are *promoted*: their transitions are appended
//! to the demo buffer as additional high-quality data (they also remain in
//! the online buffer, where they arrived step by step).
//!
//! The buffer itself is single-threaded; concurrent harnesses serialize
//! access externally (one ingestion writer, one sampling reader, whole
//! transitions at a time).

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::episodes::{read_episode_file, write_episode_file, Episode, EpisodeError, Transition};

#[derive(Error, Debug)]
pub enum ReplayError {
    #[error("{which} buffer is empty; collect more data before updating")]
    EmptyBuffer { which: &'static str },
    #[error("symmetric batch size must be even and positive, got {0}")]
    BadBatchSize(usize),
    #[error("only successful episodes can be promoted to the demo buffer")]
    NotSuccessful,
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] EpisodeError),
}

/// Which buffer a sampled transition came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Online,
    Demo,
}

pub struct DualBuffer {
    online: VecDeque<Transition>,
    online_capacity: usize,
    demo: Vec<Transition>,
}

impl DualBuffer {
    pub fn new(online_capacity: usize) -> Self {
        assert!(online_capacity >= 1);
        DualBuffer {
            online: VecDeque::with_capacity(online_capacity.min(1 << 16)),
            online_capacity,
            demo: Vec::new(),
        }
    }

    pub fn online_len(&self) -> usize {
        self.online.len()
    }

    pub fn demo_len(&self) -> usize {
        self.demo.len()
    }

    pub fn online_capacity(&self) -> usize {
        self.online_capacity
    }

    /// Append to the online ring, evicting the oldest item at capacity.
    pub fn push_online(&mut self, transition: Transition) {
        if self.online.len() == self.online_capacity {
            self.online.pop_front();
        }
        self.online.push_back(transition);
    }

    /// Seed the demo buffer directly (initial offline data).
    pub fn push_demo(&mut self, transition: Transition) {
        self.demo.push(transition);
    }

    /// Load whole episodes into the demo buffer.
    pub fn load_demos(&mut self, episodes: &[Episode]) {
        for ep in episodes {
            self.demo.extend_from_slice(&ep.transitions);
        }
    }

    /// Append a successful episode's transitions to the demo buffer.
    /// The online buffer is untouched: the same transitions already arrived
    /// there step by step.
    pub fn promote_episode(&mut self, episode: &Episode) -> Result<(), ReplayError> {
        if !episode.success {
            return Err(ReplayError::NotSuccessful);
        }
        self.demo.extend_from_slice(&episode.transitions);
        Ok(())
    }

    /// Draw a batch of `n` transitions: the first `n/2` uniformly with
    /// replacement from the online buffer, the last `n/2` from the demo
    /// buffer, each tagged with its [`Source`]. With-replacement sampling
    /// needs only non-empty buffers (a single item then fills its whole
    /// half).
    pub fn sample_symmetric(
        &self,
        n: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<(Transition, Source)>, ReplayError> {
        if n == 0 || n % 2 != 0 {
            return Err(ReplayError::BadBatchSize(n));
        }
        if self.online.is_empty() {
            return Err(ReplayError::EmptyBuffer { which: "online" });
        }
        if self.demo.is_empty() {
            return Err(ReplayError::EmptyBuffer { which: "demo" });
        }
        let half = n / 2;
        let mut batch = Vec::with_capacity(n);
        let online_idx = Uniform::new(0, self.online.len());
        for _ in 0..half {
            batch.push((self.online[online_idx.sample(rng)], Source::Online));
        }
        let demo_idx = Uniform::new(0, self.demo.len());
        for _ in 0..half {
            batch.push((self.demo[demo_idx.sample(rng)], Source::Demo));
        }
        Ok(batch)
    }

    /// Serialize both buffers into the episode file container (two raw
    /// records: online in eviction order, then demo). Buffer contents are
    /// raw transition runs, not validated episodes.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<(), ReplayError> {
        let online = Episode {
            transitions: self.online.iter().copied().collect(),
            success: false,
            success_frame: None,
        };
        let demo = Episode {
            transitions: self.demo.clone(),
            success: false,
            success_frame: None,
        };
        write_episode_file(w, &[online, demo])?;
        Ok(())
    }

    /// Restore from [`write_checkpoint`](Self::write_checkpoint) output.
    /// Capacity comes from configuration, not the file.
    pub fn read_checkpoint<R: Read>(
        r: &mut R,
        online_capacity: usize,
    ) -> Result<Self, ReplayError> {
        let mut records = read_episode_file(r)?;
        if records.len() != 2 {
            return Err(ReplayError::Checkpoint(EpisodeError::Corrupt(format!(
                "buffer checkpoint holds {} records, expected 2",
                records.len()
            ))));
        }
        let demo = records.pop().expect("len checked");
        let online = records.pop().expect("len checked");
        let mut buffer = DualBuffer::new(online_capacity);
        for t in online.transitions {
            buffer.push_online(t);
        }
        buffer.demo = demo.transitions;
        Ok(buffer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::test_util::{dummy_transition, failure_episode, success_episode};
    use crate::seeding::{rng_for, Domain};

    /// Transition whose identity is recoverable from `obs[0]`.
    fn keyed(i: usize) -> Transition {
        let mut t = dummy_transition(0.5, 0.0, false);
        t.obs[0] = i as f64;
        t
    }

    fn key(t: &Transition) -> usize {
        t.obs[0] as usize
    }

    #[test]
    fn online_overflow_evicts_oldest() {
        let mut buf = DualBuffer::new(3);
        for i in 0..4 {
            buf.push_online(keyed(i));
        }
        assert_eq!(buf.online_len(), 3);
        let kept: Vec<usize> = buf.online.iter().map(key).collect();
        assert_eq!(kept, vec![1, 2, 3]);
    }

    #[test]
    fn eviction_order_matches_shadow_list() {
        let capacity = 100;
        let mut buf = DualBuffer::new(capacity);
        let mut shadow: Vec<usize> = Vec::new();
        for i in 0..1000 {
            buf.push_online(keyed(i));
            shadow.push(i);
            assert!(buf.online_len() <= capacity);
        }
        let window = &shadow[shadow.len() - capacity..];
        let kept: Vec<usize> = buf.online.iter().map(key).collect();
        assert_eq!(kept, window);
    }

    #[test]
    fn pushed_item_is_sampleable() {
        let mut buf = DualBuffer::new(8);
        buf.push_online(keyed(7));
        buf.push_demo(keyed(9));
        let mut rng = rng_for(0, Domain::CriticBatch, 0);
        let batch = buf.sample_symmetric(2, &mut rng).unwrap();
        assert_eq!(key(&batch[0].0), 7);
        assert_eq!(key(&batch[1].0), 9);
    }

    #[test]
    fn promotion_appends_to_demo_only() {
        let mut buf = DualBuffer::new(100);
        buf.push_demo(keyed(0));
        let lengths = [3usize, 1, 4, 1, 5];
        let mut expected = 1;
        for (i, &len) in lengths.iter().enumerate() {
            let ep = success_episode(len);
            buf.promote_episode(&ep).unwrap();
            expected += len;
            assert_eq!(buf.demo_len(), expected, "after promotion {i}");
            assert_eq!(buf.online_len(), 0);
        }
    }

    #[test]
    fn failed_episode_promotion_rejected() {
        let mut buf = DualBuffer::new(100);
        let err = buf.promote_episode(&failure_episode(4)).unwrap_err();
        assert!(matches!(err, ReplayError::NotSuccessful));
        assert_eq!(buf.demo_len(), 0);
    }

    #[test]
    fn symmetric_batch_composition() {
        let mut buf = DualBuffer::new(512);
        for i in 0..10 {
            buf.push_online(keyed(i));
            buf.push_demo(keyed(100 + i));
        }
        let mut rng = rng_for(1, Domain::CriticBatch, 0);
        let batch = buf.sample_symmetric(256, &mut rng).unwrap();
        assert_eq!(batch.len(), 256);
        assert!(batch[..128].iter().all(|(t, s)| *s == Source::Online && key(t) < 100));
        assert!(batch[128..].iter().all(|(t, s)| *s == Source::Demo && key(t) >= 100));
    }

    #[test]
    fn single_online_item_fills_its_half() {
        let mut buf = DualBuffer::new(8);
        buf.push_online(keyed(42));
        for i in 0..10 {
            buf.push_demo(keyed(i));
        }
        let mut rng = rng_for(2, Domain::CriticBatch, 0);
        let batch = buf.sample_symmetric(256, &mut rng).unwrap();
        assert!(batch[..128].iter().all(|(t, _)| key(t) == 42));
    }

    #[test]
    fn empty_buffer_sampling_errors() {
        let mut buf = DualBuffer::new(8);
        let mut rng = rng_for(3, Domain::CriticBatch, 0);
        assert!(matches!(
            buf.sample_symmetric(2, &mut rng),
            Err(ReplayError::EmptyBuffer { which: "online" })
        ));
        buf.push_online(keyed(0));
        assert!(matches!(
            buf.sample_symmetric(2, &mut rng),
            Err(ReplayError::EmptyBuffer { which: "demo" })
        ));
        buf.push_demo(keyed(1));
        assert!(matches!(
            buf.sample_symmetric(3, &mut rng),
            Err(ReplayError::BadBatchSize(3))
        ));
        assert!(buf.sample_symmetric(2, &mut rng).is_ok());
    }

    #[test]
    fn sampling_is_chi_squared_uniform() {
        // 10 items per buffer, 10^5 draws per buffer; χ² with 9 degrees of
        // freedom must stay below the p = 0.01 critical value 21.666.
        let mut buf = DualBuffer::new(16);
        for i in 0..10 {
            buf.push_online(keyed(i));
            buf.push_demo(keyed(i));
        }
        let mut rng = rng_for(4, Domain::CriticBatch, 0);
        let mut online_counts = [0usize; 10];
        let mut demo_counts = [0usize; 10];
        let draws_per_half = 100_000usize;
        let batches = draws_per_half / 100;
        for _ in 0..batches {
            let batch = buf.sample_symmetric(200, &mut rng).unwrap();
            for (t, s) in batch {
                match s {
                    Source::Online => online_counts[key(&t)] += 1,
                    Source::Demo => demo_counts[key(&t)] += 1,
                }
            }
        }
        let expected = draws_per_half as f64 / 10.0;
        for (name, counts) in [("online", online_counts), ("demo", demo_counts)] {
            let chi2: f64 = counts
                .iter()
                .map(|&c| {
                    let d = c as f64 - expected;
                    d * d / expected
                })
                .sum();
            assert!(chi2 < 21.666, "{name} χ² = {chi2}");
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_contents_and_order() {
        let mut buf = DualBuffer::new(5);
        for i in 0..8 {
            buf.push_online(keyed(i)); // wraps: keeps 3..8
        }
        for i in 0..4 {
            buf.push_demo(keyed(50 + i));
        }
        let mut bytes = Vec::new();
        buf.write_checkpoint(&mut bytes).unwrap();
        let restored = DualBuffer::read_checkpoint(&mut bytes.as_slice(), 5).unwrap();
        assert_eq!(restored.online_capacity(), 5);
        let online: Vec<usize> = restored.online.iter().map(key).collect();
        assert_eq!(online, vec![3, 4, 5, 6, 7]);
        let demo: Vec<usize> = restored.demo.iter().map(key).collect();
        assert_eq!(demo, vec![50, 51, 52, 53]);
        // restored ring continues evicting from the right place
        let mut restored = restored;
        restored.push_online(keyed(8));
        let online: Vec<usize> = restored.online.iter().map(key).collect();
        assert_eq!(online, vec![4, 5, 6, 7, 8]);
    }

    #[test]
    fn empty_buffers_checkpoint_round_trip() {
        let buf = DualBuffer::new(3);
        let mut bytes = Vec::new();
        buf.write_checkpoint(&mut bytes).unwrap();
        let restored = DualBuffer::read_checkpoint(&mut bytes.as_slice(), 3).unwrap();
        assert_eq!(restored.online_len(), 0);
        assert_eq!(restored.demo_len(), 0);
    }
}
