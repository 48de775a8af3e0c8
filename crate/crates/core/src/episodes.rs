//! Transition and episode records, and the binary episode file format.
//!
//! ```text
//!   magic   "RGEP" (4 bytes)
//!   version u16 LE (currently 1)
//!   count   u32 LE episode count
//!   per episode:
//!     success        u8 (0/1)
//!     success_frame  i32 LE (-1 when absent)
//!     transitions    u32 LE count
//!     per transition: obs 7×f64, action 3×f64, reward f64,
//!                     next_obs 7×f64, done u8 — all little-endian
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::{ACT_DIM, OBS_DIM};

pub const EPISODE_MAGIC: [u8; 4] = *b"RGEP";
pub const EPISODE_VERSION: u16 = 1;

/// Serialized size of one transition record in bytes.
pub const TRANSITION_WIRE_LEN: usize = OBS_DIM * 8 + ACT_DIM * 8 + 8 + OBS_DIM * 8 + 1;

#[derive(Error, Debug)]
pub enum EpisodeError {
    #[error("bad magic: expected \"RGEP\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported episode file version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated episode file while reading {reading}")]
    Truncated { reading: &'static str },
    #[error("corrupt episode file: {0}")]
    Corrupt(String),
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
    #[error("episode io: {0}")]
    Io(#[from] io::Error),
}

/// One environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

impl Transition {
    /// All values finite, reward in {0, 1}.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        let finite = self.obs.iter().chain(self.next_obs.iter()).chain(self.action.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(EpisodeError::InvalidTransition("non-finite value".into()));
        }
        if self.reward != 0.0 && self.reward != 1.0 {
            return Err(EpisodeError::InvalidTransition(format!(
                "reward {} not in {{0, 1}}",
                self.reward
            )));
        }
        Ok(())
    }

    pub fn write_to(&self, buf: &mut Vec<u8>) {
        for v in &self.obs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.action {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&self.reward.to_le_bytes());
        for v in &self.next_obs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.push(u8::from(self.done));
    }

    /// Decode one transition from exactly [`TRANSITION_WIRE_LEN`] bytes.
    pub fn read_from(bytes: &[u8]) -> Result<Transition, EpisodeError> {
        if bytes.len() < TRANSITION_WIRE_LEN {
            return Err(EpisodeError::Truncated { reading: "transition" });
        }
        let mut pos = 0usize;
        let mut next_f64 = |bytes: &[u8]| {
            let v = f64::from_le_bytes(bytes[pos..pos + 8].try_into().expect("length checked"));
            pos += 8;
            v
        };
        let mut obs = [0.0; OBS_DIM];
        for o in &mut obs {
            *o = next_f64(bytes);
        }
        let mut action = [0.0; ACT_DIM];
        for a in &mut action {
            *a = next_f64(bytes);
        }
        let reward = next_f64(bytes);
        let mut next_obs = [0.0; OBS_DIM];
        for o in &mut next_obs {
            *o = next_f64(bytes);
        }
        let done = match bytes[pos] {
            0 => false,
            1 => true,
            other => {
                return Err(EpisodeError::Corrupt(format!("done flag byte {other}")));
            }
        };
        Ok(Transition {
            obs,
            action,
            reward,
            next_obs,
            done,
        })
    }
}

/// Ordered transitions of one episode plus its success annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub success: bool,
    /// Index of the first (and only) success step, when `success`.
    pub success_frame: Option<usize>,
}

impl Episode {
    /// Environment-produced episodes obey: success ⇔ success_frame present ⇔
    /// the final transition has reward 1; all other rewards are 0.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        if self.transitions.is_empty() {
            return Err(EpisodeError::InvalidEpisode("empty episode".into()));
        }
        for t in &self.transitions {
            t.validate()?;
        }
        let last = self.transitions.len() - 1;
        for (i, t) in self.transitions.iter().enumerate() {
            if i != last && t.reward != 0.0 {
                return Err(EpisodeError::InvalidEpisode(format!(
                    "nonzero reward at non-final step {i}"
                )));
            }
        }
        let terminal_reward = self.transitions[last].reward == 1.0;
        match (self.success, self.success_frame) {
            (true, Some(frame)) => {
                if frame != last {
                    return Err(EpisodeError::InvalidEpisode(format!(
                        "success_frame {frame} is not the final step {last}"
                    )));
                }
                if !terminal_reward {
                    return Err(EpisodeError::InvalidEpisode(
                        "success without terminal reward 1".into(),
                    ));
                }
            }
            (false, None) => {
                if terminal_reward {
                    return Err(EpisodeError::InvalidEpisode(
                        "terminal reward 1 without success flag".into(),
                    ));
                }
            }
            _ => {
                return Err(EpisodeError::InvalidEpisode(
                    "success flag and success_frame disagree".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], reading: &'static str) -> Result<(), EpisodeError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            EpisodeError::Truncated { reading }
        } else {
            EpisodeError::Io(e)
        }
    })
}

/// Write episodes in the file format. Performs no invariant validation:
/// replay-buffer checkpoints reuse this container for raw transition runs.
pub fn write_episode_file<W: Write>(w: &mut W, episodes: &[Episode]) -> Result<(), EpisodeError> {
    w.write_all(&EPISODE_MAGIC)?;
    w.write_all(&EPISODE_VERSION.to_le_bytes())?;
    w.write_all(&(episodes.len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for ep in episodes {
        buf.clear();
        buf.push(u8::from(ep.success));
        let frame: i32 = match ep.success_frame {
            Some(f) => i32::try_from(f).map_err(|_| EpisodeError::Corrupt("success_frame overflow".into()))?,
            None => -1,
        };
        buf.extend_from_slice(&frame.to_le_bytes());
        buf.extend_from_slice(&(ep.transitions.len() as u32).to_le_bytes());
        for t in &ep.transitions {
            t.write_to(&mut buf);
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Read an episode file written by [`write_episode_file`].
pub fn read_episode_file<R: Read>(r: &mut R) -> Result<Vec<Episode>, EpisodeError> {
    let mut magic = [0u8; 4];
    read_exact_or(r, &mut magic, "magic")?;
    if magic != EPISODE_MAGIC {
        return Err(EpisodeError::BadMagic { found: magic });
    }
    let mut u16buf = [0u8; 2];
    read_exact_or(r, &mut u16buf, "version")?;
    let version = u16::from_le_bytes(u16buf);
    if version != EPISODE_VERSION {
        return Err(EpisodeError::UnsupportedVersion(version));
    }
    let mut u32buf = [0u8; 4];
    read_exact_or(r, &mut u32buf, "episode count")?;
    let count = u32::from_le_bytes(u32buf);
    let mut episodes = Vec::with_capacity(count as usize);
    let mut tbuf = vec![0u8; TRANSITION_WIRE_LEN];
    for _ in 0..count {
        let mut byte = [0u8; 1];
        read_exact_or(r, &mut byte, "success flag")?;
        let success = match byte[0] {
            0 => false,
            1 => true,
            other => return Err(EpisodeError::Corrupt(format!("success flag byte {other}"))),
        };
        let mut i32buf = [0u8; 4];
        read_exact_or(r, &mut i32buf, "success frame")?;
        let frame = i32::from_le_bytes(i32buf);
        let success_frame = if frame < 0 { None } else { Some(frame as usize) };
        read_exact_or(r, &mut u32buf, "transition count")?;
        let n = u32::from_le_bytes(u32buf);
        let mut transitions = Vec::with_capacity(n as usize);
        for _ in 0..n {
            read_exact_or(r, &mut tbuf, "transition")?;
            transitions.push(Transition::read_from(&tbuf)?);
        }
        episodes.push(Episode {
            transitions,
            success,
            success_frame,
        });
    }
    Ok(episodes)
}

pub fn write_episode_file_path(path: &std::path::Path, episodes: &[Episode]) -> Result<(), EpisodeError> {
    let mut file = io::BufWriter::new(std::fs::File::create(path)?);
    write_episode_file(&mut file, episodes)?;
    file.flush()?;
    Ok(())
}

pub fn read_episode_file_path(path: &std::path::Path) -> Result<Vec<Episode>, EpisodeError> {
    let mut file = io::BufReader::new(std::fs::File::open(path)?);
    read_episode_file(&mut file)
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn transition_validation() {
        assert!(dummy_transition(1.0, 0.0, false).validate().is_ok());
        assert!(dummy_transition(1.0, 1.0, true).validate().is_ok());
        assert!(dummy_transition(f64::NAN, 0.0, false).validate().is_err());
        assert!(dummy_transition(1.0, 0.5, false).validate().is_err());
    }

    #[test]
    fn episode_invariants() {
        assert!(success_episode(5).validate().is_ok());
        assert!(failure_episode(5).validate().is_ok());

        // success flag without terminal reward
        let mut ep = success_episode(5);
        ep.transitions.last_mut().unwrap().reward = 0.0;
        assert!(ep.validate().is_err());

        // terminal reward without success flag
        let mut ep = failure_episode(5);
        ep.transitions.last_mut().unwrap().reward = 1.0;
        assert!(ep.validate().is_err());

        // nonzero reward before the final step
        let mut ep = success_episode(5);
        ep.transitions[1].reward = 1.0;
        assert!(ep.validate().is_err());

        // frame index must point at the final step
        let mut ep = success_episode(5);
        ep.success_frame = Some(1);
        assert!(ep.validate().is_err());
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let episodes = vec![success_episode(4), failure_episode(7), success_episode(1)];
        let mut bytes = Vec::new();
        write_episode_file(&mut bytes, &episodes).unwrap();
        let back = read_episode_file(&mut io::Cursor::new(&bytes)).unwrap();
        assert_eq!(episodes, back);
    }

    #[test]
    fn corrupt_files_rejected() {
        let episodes = vec![success_episode(3)];
        let mut bytes = Vec::new();
        write_episode_file(&mut bytes, &episodes).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Z';
        assert!(matches!(
            read_episode_file(&mut io::Cursor::new(&bad_magic)),
            Err(EpisodeError::BadMagic { .. })
        ));

        let truncated = &bytes[..bytes.len() - 10];
        assert!(matches!(
            read_episode_file(&mut io::Cursor::new(truncated)),
            Err(EpisodeError::Truncated { .. })
        ));

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(matches!(
            read_episode_file(&mut io::Cursor::new(&bad_version)),
            Err(EpisodeError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn transition_wire_len_matches_encoding() {
        let mut buf = Vec::new();
        dummy_transition(2.0, 0.0, true).write_to(&mut buf);
        assert_eq!(buf.len(), TRANSITION_WIRE_LEN);
        assert_eq!(TRANSITION_WIRE_LEN, 145);
    }
}
