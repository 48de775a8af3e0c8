//! Run metrics: CSV schemas for training updates, episodes, and
//! evaluation trials, with small read/write helpers the plotting command
//! consumes back.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum MetricsError {
    #[error("metrics io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path} line {line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
}

pub const METRICS_HEADER: &str =
    "update_count,critic_loss_mean,actor_Q_term,entropy_term,bc_term,lambda,env_steps";

/// One training-update row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub update_count: u64,
    pub critic_loss_mean: f64,
    pub actor_q_term: f64,
    pub entropy_term: f64,
    pub bc_term: f64,
    pub lambda: f64,
    pub env_steps: u64,
}

pub const EPISODES_HEADER: &str = "episode_index,env_steps,steps,success,success_frame";

/// One finished training episode. `env_steps` is the cumulative transition
/// count at the episode's end; `success_frame` is −1 when the episode
/// never succeeded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRow {
    pub episode_index: u64,
    pub env_steps: u64,
    pub steps: u32,
    pub success: bool,
    pub success_frame: i64,
}

pub const EVAL_HEADER: &str = "trial,success,steps_to_success,episode_len";

/// One evaluation trial. `steps_to_success` is −1 on failure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalTrialRow {
    pub trial: u32,
    pub success: bool,
    pub steps_to_success: i64,
    pub episode_len: u32,
}

fn open_csv(path: &Path, header: &str) -> Result<BufWriter<File>, MetricsError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    Ok(w)
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), MetricsError> {
    let mut w = open_csv(path, METRICS_HEADER)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.update_count,
            r.critic_loss_mean,
            r.actor_q_term,
            r.entropy_term,
            r.bc_term,
            r.lambda,
            r.env_steps
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_episodes_csv(path: &Path, rows: &[EpisodeRow]) -> Result<(), MetricsError> {
    let mut w = open_csv(path, EPISODES_HEADER)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.episode_index,
            r.env_steps,
            r.steps,
            u8::from(r.success),
            r.success_frame
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_eval_csv(path: &Path, rows: &[EvalTrialRow]) -> Result<(), MetricsError> {
    let mut w = open_csv(path, EVAL_HEADER)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.trial,
            u8::from(r.success),
            r.steps_to_success,
            r.episode_len
        )?;
    }
    w.flush()?;
    Ok(())
}

struct CsvLines {
    path: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl CsvLines {
    fn open(path: &Path, expected_header: &str) -> Result<Self, MetricsError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines
            .next()
            .transpose()?
            .unwrap_or_default();
        if header.trim() != expected_header {
            return Err(MetricsError::Parse {
                path: path.display().to_string(),
                line: 1,
                detail: format!("expected header {expected_header:?}, got {header:?}"),
            });
        }
        Ok(CsvLines {
            path: path.display().to_string(),
            lines,
            line_no: 1,
        })
    }

    fn next_fields(&mut self, n: usize) -> Result<Option<Vec<String>>, MetricsError> {
        loop {
            let Some(line) = self.lines.next().transpose()? else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(str::to_string).collect();
            if fields.len() != n {
                return Err(MetricsError::Parse {
                    path: self.path.clone(),
                    line: self.line_no,
                    detail: format!("expected {n} fields, got {}", fields.len()),
                });
            }
            return Ok(Some(fields));
        }
    }

    fn error(&self, detail: String) -> MetricsError {
        MetricsError::Parse {
            path: self.path.clone(),
            line: self.line_no,
            detail,
        }
    }
}

fn parse_field<T: std::str::FromStr>(
    csv: &CsvLines,
    fields: &[String],
    idx: usize,
    name: &str,
) -> Result<T, MetricsError> {
    fields[idx]
        .parse()
        .map_err(|_| csv.error(format!("bad {name}: {:?}", fields[idx])))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>, MetricsError> {
    let mut csv = CsvLines::open(path, METRICS_HEADER)?;
    let mut rows = Vec::new();
    while let Some(f) = csv.next_fields(7)? {
        rows.push(MetricsRow {
            update_count: parse_field(&csv, &f, 0, "update_count")?,
            critic_loss_mean: parse_field(&csv, &f, 1, "critic_loss_mean")?,
            actor_q_term: parse_field(&csv, &f, 2, "actor_Q_term")?,
            entropy_term: parse_field(&csv, &f, 3, "entropy_term")?,
            bc_term: parse_field(&csv, &f, 4, "bc_term")?,
            lambda: parse_field(&csv, &f, 5, "lambda")?,
            env_steps: parse_field(&csv, &f, 6, "env_steps")?,
        });
    }
    Ok(rows)
}

pub fn read_episodes_csv(path: &Path) -> Result<Vec<EpisodeRow>, MetricsError> {
    let mut csv = CsvLines::open(path, EPISODES_HEADER)?;
    let mut rows = Vec::new();
    while let Some(f) = csv.next_fields(5)? {
        let success: u8 = parse_field(&csv, &f, 3, "success")?;
        if success > 1 {
            return Err(csv.error(format!("success flag must be 0 or 1, got {success}")));
        }
        rows.push(EpisodeRow {
            episode_index: parse_field(&csv, &f, 0, "episode_index")?,
            env_steps: parse_field(&csv, &f, 1, "env_steps")?,
            steps: parse_field(&csv, &f, 2, "steps")?,
            success: success == 1,
            success_frame: parse_field(&csv, &f, 4, "success_frame")?,
        });
    }
    Ok(rows)
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalTrialRow>, MetricsError> {
    let mut csv = CsvLines::open(path, EVAL_HEADER)?;
    let mut rows = Vec::new();
    while let Some(f) = csv.next_fields(4)? {
        let success: u8 = parse_field(&csv, &f, 1, "success")?;
        if success > 1 {
            return Err(csv.error(format!("success flag must be 0 or 1, got {success}")));
        }
        rows.push(EvalTrialRow {
            trial: parse_field(&csv, &f, 0, "trial")?,
            success: success == 1,
            steps_to_success: parse_field(&csv, &f, 2, "steps_to_success")?,
            episode_len: parse_field(&csv, &f, 3, "episode_len")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_header_is_the_pinned_schema() {
        assert_eq!(
            METRICS_HEADER,
            "update_count,critic_loss_mean,actor_Q_term,entropy_term,bc_term,lambda,env_steps"
        );
    }

    #[test]
    fn metrics_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let rows = vec![
            MetricsRow {
                update_count: 1,
                critic_loss_mean: 0.25,
                actor_q_term: -1.5,
                entropy_term: 0.0625,
                bc_term: 0.125,
                lambda: 0.375,
                env_steps: 512,
            },
            MetricsRow {
                update_count: 2,
                critic_loss_mean: 0.125,
                actor_q_term: 2.0,
                entropy_term: 0.03125,
                bc_term: 0.0,
                lambda: 0.0,
                env_steps: 513,
            },
        ];
        write_metrics_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(METRICS_HEADER), "header first: {text}");
        // powers of two survive the decimal round trip exactly
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
    }

    #[test]
    fn episodes_and_eval_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let epath = dir.path().join("episodes.csv");
        let erows = vec![
            EpisodeRow {
                episode_index: 0,
                env_steps: 47,
                steps: 47,
                success: true,
                success_frame: 46,
            },
            EpisodeRow {
                episode_index: 1,
                env_steps: 147,
                steps: 100,
                success: false,
                success_frame: -1,
            },
        ];
        write_episodes_csv(&epath, &erows).unwrap();
        assert_eq!(read_episodes_csv(&epath).unwrap(), erows);

        let vpath = dir.path().join("eval.csv");
        let vrows = vec![
            EvalTrialRow {
                trial: 0,
                success: true,
                steps_to_success: 24,
                episode_len: 24,
            },
            EvalTrialRow {
                trial: 1,
                success: false,
                steps_to_success: -1,
                episode_len: 100,
            },
        ];
        write_eval_csv(&vpath, &vrows).unwrap();
        assert_eq!(read_eval_csv(&vpath).unwrap(), vrows);
    }

    #[test]
    fn malformed_rows_rejected_with_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            format!("{METRICS_HEADER}\n1,0.5,0.5,0.5,0.5,0.5,10\n2,oops,0,0,0,0,11\n"),
        )
        .unwrap();
        match read_metrics_csv(&path) {
            Err(MetricsError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected positioned parse error, got {other:?}"),
        }

        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(
            read_metrics_csv(&path),
            Err(MetricsError::Parse { line: 1, .. })
        ));
    }
}
