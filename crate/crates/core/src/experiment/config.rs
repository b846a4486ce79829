use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actor_critic::TrainConfig;
use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::mdp::PensionPlanSpec;
use crate::mortality::CalibrationOptions;
use crate::risk::CvarPair;

/// CVaR levels of the member and the beneficiary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    pub alpha_a: f64,
    pub alpha_b: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            alpha_a: 0.1,
            alpha_b: 0.1,
        }
    }
}

impl RiskConfig {
    pub fn pair(&self) -> Result<CvarPair> {
        CvarPair::new(self.alpha_a, self.alpha_b)
            .map_err(|e| Error::Config(format!("risk levels: {e}")))
    }
}

/// Where death rates come from and how the period index is projected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MortalityConfig {
    /// Period life table in the HMD text layout; a synthetic table is used
    /// when absent.
    pub table: Option<PathBuf>,
    pub age_cap: u32,
    /// Inclusive year window used for calibration.
    pub years: Option<(i32, i32)>,
    pub calibration: CalibrationOptions,
    pub projection_paths: usize,
    pub projection_seed: u64,
    pub synthetic_seed: u64,
}

impl Default for MortalityConfig {
    fn default() -> Self {
        Self {
            table: None,
            age_cap: 100,
            years: None,
            calibration: CalibrationOptions::default(),
            projection_paths: 1000,
            projection_seed: 0,
            synthetic_seed: 0,
        }
    }
}

/// Everything needed to reproduce one output bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// One training run per seed; `train.seed` is replaced by each in turn.
    pub seeds: Vec<u64>,
    /// Paths simulated under each trained policy.
    pub eval_paths: usize,
    pub out_dir: PathBuf,
    pub plan: PensionPlanSpec,
    pub market: MarketParams,
    pub risk: RiskConfig,
    pub mortality: MortalityConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seeds: vec![0],
            eval_paths: 5000,
            out_dir: PathBuf::from("runs/experiment"),
            plan: PensionPlanSpec::default(),
            market: MarketParams::default(),
            risk: RiskConfig::default(),
            mortality: MortalityConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

const MAX_INCLUDE_DEPTH: usize = 8;

/// Overlays `top` onto `base`, merging nested tables key by key.
fn deep_merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => deep_merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &Path, depth: usize) -> Result<toml::Table> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::Config(format!(
            "includes nested deeper than {MAX_INCLUDE_DEPTH} at {path:?}"
        )));
    }
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("config file {path:?} not found")),
        _ => Error::io(path, e),
    })?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::String(s)) => vec![s],
        Some(toml::Value::Array(a)) => a
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(Error::Config(format!(
                    "include entry {other} is not a path"
                ))),
            })
            .collect::<Result<_>>()?,
        Some(other) => return Err(Error::Config(format!("include = {other} is not a path"))),
    };
    let mut merged = toml::Table::new();
    for inc in includes {
        deep_merge(&mut merged, read_table(&dir.join(inc), depth + 1)?);
    }
    resolve_table_path(&mut table, dir);
    deep_merge(&mut merged, table);
    Ok(merged)
}

/// Makes `mortality.table` relative to the file that names it.
fn resolve_table_path(table: &mut toml::Table, dir: &Path) {
    let Some(toml::Value::Table(m)) = table.get_mut("mortality") else {
        return;
    };
    if let Some(toml::Value::String(p)) = m.get_mut("table") {
        let path = Path::new(p.as_str());
        if path.is_relative() {
            *p = dir.join(path).to_string_lossy().into_owned();
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file, applying `include = ["base.toml", ...]` files
    /// first; later files and the including file win key by key.
    pub fn load(path: &Path) -> Result<Self> {
        let table = read_table(path, 0)?;
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.eval_paths == 0 {
            return Err(Error::Config("eval_paths must be at least 1".into()));
        }
        if self.mortality.projection_paths == 0 {
            return Err(Error::Config(
                "mortality.projection_paths must be at least 1".into(),
            ));
        }
        if let Some(p) = &self.mortality.table {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "mortality table {p:?} does not exist"
                )));
            }
        }
        self.plan.validate()?;
        self.market
            .validate()
            .map_err(|e| Error::Config(format!("market: {e}")))?;
        self.risk.pair()?;
        self.train.validate()?;
        Ok(())
    }

    /// The configuration of the run for one seed.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.train.seed = seed;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn include_merges_nested_tables() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("base.toml"),
            "seeds = [1, 2]\n[train]\nepochs = 7\nminibatch = 5\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("top.toml"),
            "include = \"base.toml\"\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let c = ExperimentConfig::load(&dir.path().join("top.toml")).unwrap();
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.minibatch, 5);
    }

    #[test]
    fn unknown_keys_and_empty_seeds_are_config_errors() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1")
            .unwrap_err()
            .is_config());
        assert!(ExperimentConfig::from_toml_str("seeds = []")
            .unwrap_err()
            .is_config());
        let missing =
            ExperimentConfig::from_toml_str("[mortality]\ntable = \"/nonexistent/x.txt\"");
        assert!(missing.unwrap_err().is_config());
    }
}
