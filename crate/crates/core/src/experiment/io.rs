use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const CONFIG_ECHO: &str = "config.toml";
pub const RUN_CONFIG: &str = "run.toml";
pub const LOCK_FILE: &str = ".lock";
pub const POLICY_CHECKPOINT: &str = "policy.json";
pub const CRITIC_CHECKPOINT: &str = "critic.json";
pub const LAST_GOOD_POLICY: &str = "policy_last_good.json";
pub const LAST_GOOD_CRITIC: &str = "critic_last_good.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const WARMUP_LOG: &str = "warmup_log.csv";
pub const STRATEGY_SUMMARY: &str = "strategy_summary.csv";
pub const STRATEGY_BANDS: &str = "strategy_bands.csv";
pub const TERMINAL_WEALTH: &str = "terminal_wealth.csv";
pub const TERMINAL_HISTOGRAM: &str = "terminal_histogram.csv";
pub const TERMINAL_QUANTILES: &str = "terminal_quantiles.csv";
pub const MORTALITY_DIR: &str = "mortality";
pub const LEE_CARTER: &str = "lee_carter.csv";
pub const KAPPA: &str = "kappa.csv";
pub const KAPPA_FIT: &str = "kappa_fit.json";
pub const KAPPA_PROJECTION: &str = "kappa_projection.csv";
pub const COHORT: &str = "cohort.csv";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn wrap_csv(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// The `seed_<n>` subdirectories of a bundle, sorted by seed.
pub fn seed_dirs(root: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for e in entries {
        let e = e.map_err(|err| Error::io(root, err))?;
        let name = e.file_name();
        let Some(seed) = name
            .to_str()
            .and_then(|n| n.strip_prefix("seed_"))
            .and_then(|s| s.parse().ok())
        else {
            continue;
        };
        if e.path().is_dir() {
            out.push((seed, e.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        create_dir(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "output directory {} is locked by another run (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Confirms that `path` exists and is a readable file.
pub fn require_file(path: &Path) -> Result<()> {
    File::open(path).map(|_| ()).map_err(|e| Error::io(path, e))
}
