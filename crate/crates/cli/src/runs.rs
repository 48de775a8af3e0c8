//! Run-directory management: every command writes its artifacts into a
//! fresh timestamped directory under `--out`, alongside the resolved
//! configuration and the seed record that reproduce it.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use regrasp_core::config::RunConfig;

/// days-since-epoch → (year, month, day), proleptic Gregorian.
fn civil_from_days(days: i64) -> (i64, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (yoe + era * 400 + i64::from(m <= 2), m, d)
}

/// `YYYYMMDD-HHMMSS` in UTC.
pub fn timestamp() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_secs() as i64;
    let (y, mo, d) = civil_from_days(secs.div_euclid(86_400));
    let tod = secs.rem_euclid(86_400);
    format!(
        "{y:04}{mo:02}{d:02}-{:02}{:02}{:02}",
        tod / 3600,
        (tod % 3600) / 60,
        tod % 60
    )
}

/// Create `<out>/<stamp>-<command>/` (suffixing `-2`, `-3`, … on a name
/// collision) and return its path.
pub fn create_run_dir(out: &Path, command: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output root {}", out.display()))?;
    let base = format!("{}-{command}", timestamp());
    for attempt in 0..100u32 {
        let name = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}-{}", attempt + 1)
        };
        let dir = out.join(&name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => {
                return Err(e).with_context(|| format!("creating run dir {}", dir.display()))
            }
        }
    }
    anyhow::bail!("could not find a free run directory name under {}", out.display());
}

/// Write the reproducibility pair: the fully resolved config (after CLI
/// overrides) and the seed record.
pub fn write_run_inputs(dir: &Path, cfg: &RunConfig, seed: u64) -> anyhow::Result<()> {
    std::fs::write(dir.join("resolved_config.txt"), cfg.resolved_text())
        .context("writing resolved_config.txt")?;
    std::fs::write(dir.join("seed.txt"), format!("seed = {seed}\n")).context("writing seed.txt")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn civil_conversion_matches_known_dates() {
        assert_eq!(civil_from_days(0), (1970, 1, 1));
        assert_eq!(civil_from_days(19_723), (2024, 1, 1)); // 2024-01-01
        assert_eq!(civil_from_days(11_016), (2000, 2, 29)); // leap day
        assert_eq!(civil_from_days(-1), (1969, 12, 31));
    }

    #[test]
    fn run_dirs_never_collide() {
        let tmp = tempfile::tempdir().unwrap();
        let a = create_run_dir(tmp.path(), "test").unwrap();
        let b = create_run_dir(tmp.path(), "test").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
    }

    #[test]
    fn run_inputs_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        write_run_inputs(tmp.path(), &cfg, 42).unwrap();
        let text = std::fs::read_to_string(tmp.path().join("resolved_config.txt")).unwrap();
        assert_eq!(RunConfig::from_str_strict(&text).unwrap(), cfg);
        assert_eq!(
            std::fs::read_to_string(tmp.path().join("seed.txt")).unwrap(),
            "seed = 42\n"
        );
    }
}
