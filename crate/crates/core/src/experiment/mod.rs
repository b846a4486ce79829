//! Config-driven runs: mortality calibration, training, evaluation and the
//! files they leave behind.
//!
//! A bundle directory holds `config.toml`, a `mortality/` directory and one
//! `seed_<n>/` directory per training seed with checkpoints, logs, the
//! strategy summary, quantile bands and terminal-wealth data.

mod compare;
mod config;
mod evaluate;
pub mod io;

pub use compare::{
    compare_runs, Comparison, SignTest, SummaryDelta, TerminalDelta, CLAIM_STOCK_AT_ENTRY,
    CLAIM_TERMINAL_MEDIAN,
};
pub use config::{ExperimentConfig, MortalityConfig, RiskConfig};
pub use evaluate::{
    histogram, quantile_markers, simulate_policy, BandRow, HistogramBin, PolicySimulation,
    QuantileMarker, StrategyRow, StrategySummary, TerminalWealth,
};

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::actor_critic::{Environment, TrainLog, Trainer};
use crate::error::{Error, Result};
use crate::mdp::MortalityMode;
use crate::mortality::{
    calibrate, load_mortality_table, projected_cohort, quantile_bands, static_cohort,
    synthetic_table, CohortRates, JumpDiffusionParams, MortalityCalibration, MortalityTable,
    SyntheticSpec,
};
use crate::nn::{Checkpoint, PolicyNet};
use io::*;

/// Calibrated mortality and the cohort rates used for training.
#[derive(Debug, Clone)]
pub struct MortalityStage {
    /// Table path, or `synthetic` when none was configured.
    pub source: String,
    pub calibration: MortalityCalibration,
    pub cohort: CohortRates,
    /// Simulated period-index paths, in projection mode only.
    pub projection: Option<Vec<Vec<f64>>>,
}

pub fn load_table(cfg: &MortalityConfig) -> Result<(String, MortalityTable)> {
    let (source, table) = match &cfg.table {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            (
                p.display().to_string(),
                load_mortality_table(&text, cfg.age_cap)?,
            )
        }
        None => {
            log::warn!("no mortality table configured; calibrating on a synthetic table");
            let s = synthetic_table(&SyntheticSpec::default(), cfg.synthetic_seed)?;
            ("synthetic".to_string(), s.table)
        }
    };
    let table = match cfg.years {
        Some((from, to)) => {
            let ages = table.ages();
            table.restrict((ages[0], ages[ages.len() - 1]), (from, to))?
        }
        None => table,
    };
    Ok((source, table))
}

pub fn mortality_stage(cfg: &ExperimentConfig) -> Result<MortalityStage> {
    let (source, table) = load_table(&cfg.mortality)?;
    let calibration = calibrate(&table, &cfg.mortality.calibration)?;
    let (age, horizon) = (cfg.plan.entry_age, cfg.plan.horizon);
    let (cohort, projection) = match cfg.plan.mortality_mode {
        MortalityMode::Static => (static_cohort(&calibration.fit, age, horizon)?, None),
        MortalityMode::LeeCarter => {
            let (c, paths) = projected_cohort(
                &calibration,
                age,
                horizon,
                cfg.mortality.projection_paths,
                cfg.mortality.projection_seed,
            )?;
            (c, Some(paths))
        }
    };
    Ok(MortalityStage {
        source,
        calibration,
        cohort,
        projection,
    })
}

#[derive(Serialize, Deserialize)]
struct LeeCarterRow {
    age: u32,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct KappaRow {
    year: i32,
    kappa_first_phase: f64,
    kappa: f64,
    outlier: bool,
}

#[derive(Serialize, Deserialize)]
struct CohortRow {
    t: usize,
    age: u32,
    year: i32,
    q: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct ProjectionRow {
    step: usize,
    year: i32,
    mean: f64,
    p05: f64,
    p95: f64,
}

/// Estimated period-index dynamics as written to `kappa_fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFitReport {
    pub source: String,
    pub outlier_years: Vec<i32>,
    pub dynamics: JumpDiffusionParams,
    /// Level at the last observed year, where projections start.
    pub projection_origin: f64,
}

pub fn write_mortality_outputs(dir: &Path, stage: &MortalityStage) -> Result<()> {
    create_dir(dir)?;
    let cal = &stage.calibration;
    let fit = &cal.fit;
    let lc: Vec<LeeCarterRow> = fit
        .ages
        .iter()
        .enumerate()
        .map(|(i, &age)| LeeCarterRow {
            age,
            a: fit.a[i],
            b: fit.b[i],
        })
        .collect();
    write_csv(&dir.join(LEE_CARTER), &lc)?;
    let kappa: Vec<KappaRow> = fit
        .years
        .iter()
        .enumerate()
        .map(|(j, &year)| KappaRow {
            year,
            kappa_first_phase: cal.first_phase.kappa[j],
            kappa: fit.kappa[j],
            outlier: cal.outlier_years.contains(&year),
        })
        .collect();
    write_csv(&dir.join(KAPPA), &kappa)?;
    write_json(
        &dir.join(KAPPA_FIT),
        &KappaFitReport {
            source: stage.source.clone(),
            outlier_years: cal.outlier_years.clone(),
            dynamics: cal.dynamics.clone(),
            projection_origin: cal.projection_dynamics().kappa0,
        },
    )?;
    let c = &stage.cohort;
    let cohort: Vec<CohortRow> = (0..c.len())
        .map(|t| CohortRow {
            t,
            age: c.start_age + t as u32,
            year: c.start_year + t as i32,
            q: c.q()[t],
            p: c.p()[t],
        })
        .collect();
    write_csv(&dir.join(COHORT), &cohort)?;
    if let Some(paths) = &stage.projection {
        let mean = crate::mortality::mean_path(paths);
        let bands = quantile_bands(paths, 0.05, 0.95);
        let rows: Vec<ProjectionRow> = mean
            .iter()
            .zip(&bands)
            .enumerate()
            .map(|(step, (m, (lo, hi)))| ProjectionRow {
                step,
                year: cal.last_year() + step as i32,
                mean: *m,
                p05: *lo,
                p95: *hi,
            })
            .collect();
        write_csv(&dir.join(KAPPA_PROJECTION), &rows)?;
    }
    Ok(())
}

pub fn environment(cfg: &ExperimentConfig, cohort: CohortRates) -> Result<Environment> {
    Environment::new(cfg.plan.clone(), cfg.market, cohort, cfg.risk.pair()?)
}

#[derive(Serialize, Deserialize)]
struct WarmupRow {
    step: usize,
    critic_loss: f64,
}

fn write_train_logs(dir: &Path, log: &TrainLog) -> Result<()> {
    write_csv(&dir.join(TRAIN_LOG), &log.records)?;
    let warm: Vec<WarmupRow> = log
        .warmup_losses
        .iter()
        .enumerate()
        .map(|(i, &critic_loss)| WarmupRow {
            step: i + 1,
            critic_loss,
        })
        .collect();
    write_csv(&dir.join(WARMUP_LOG), &warm)
}

/// Trains one seed, writing checkpoints and logs into `dir`. On an abort the
/// last good parameters are saved next to a partial log.
pub fn train_seed(
    cfg: &ExperimentConfig,
    env: &Environment,
    seed: u64,
    dir: &Path,
) -> Result<TrainLog> {
    let run = cfg.for_seed(seed);
    let mut trainer = Trainer::new(run.train.clone(), env.clone())?;
    let start = Instant::now();
    let mut result = trainer.warmup();
    while result.is_ok() && trainer.epoch() < run.train.epochs {
        result = trainer.run_epoch().map(|_| ());
    }
    if let Err(e) = result {
        let (p, c) = &trainer.last_good;
        Checkpoint::Policy {
            policy: p.clone(),
            optimizer: None,
        }
        .save(&dir.join(LAST_GOOD_POLICY))?;
        Checkpoint::Critic {
            critic: c.clone(),
            optimizer: None,
        }
        .save(&dir.join(LAST_GOOD_CRITIC))?;
        write_train_logs(dir, &trainer.log)?;
        log::error!(
            "seed {seed}: {e}; last good checkpoints saved in {}",
            dir.display()
        );
        return Err(e);
    }
    log::info!(
        "seed {seed}: trained in {:.1} s",
        start.elapsed().as_secs_f64()
    );
    Checkpoint::Policy {
        policy: trainer.policy.clone(),
        optimizer: Some(trainer.policy_opt.clone()),
    }
    .save(&dir.join(POLICY_CHECKPOINT))?;
    Checkpoint::Critic {
        critic: trainer.critic.clone(),
        optimizer: Some(trainer.critic_opt.clone()),
    }
    .save(&dir.join(CRITIC_CHECKPOINT))?;
    write_train_logs(dir, &trainer.log)?;
    Ok(trainer.log)
}

/// Loads a policy checkpoint and checks it against the plan.
pub fn load_policy(path: &Path, env: &Environment) -> Result<PolicyNet> {
    let policy = Checkpoint::load(path)?.into_policy()?;
    if policy.horizon != env.plan.horizon || policy.gamma != env.plan.gamma {
        return Err(Error::Checkpoint(format!(
            "checkpoint for horizon {} and gamma {} does not fit horizon {} and gamma {}",
            policy.horizon, policy.gamma, env.plan.horizon, env.plan.gamma
        )));
    }
    Ok(policy)
}

/// Rolls the saved policy of one seed forward and writes the evaluation files.
pub fn evaluate_seed(
    cfg: &ExperimentConfig,
    env: &Environment,
    seed: u64,
    dir: &Path,
) -> Result<PolicySimulation> {
    let policy = load_policy(&dir.join(POLICY_CHECKPOINT), env)?;
    let sim = simulate_policy(&policy, env, cfg.eval_paths, seed)?;
    write_csv(&dir.join(STRATEGY_SUMMARY), &sim.summary.rows)?;
    write_csv(&dir.join(STRATEGY_BANDS), &sim.bands)?;
    let tw: Vec<TerminalWealth> = sim
        .terminal_wealth
        .iter()
        .enumerate()
        .map(|(path_id, &wealth_kusd)| TerminalWealth {
            path_id,
            wealth_kusd,
        })
        .collect();
    write_csv(&dir.join(TERMINAL_WEALTH), &tw)?;
    write_csv(
        &dir.join(TERMINAL_HISTOGRAM),
        &histogram(&sim.terminal_wealth)?,
    )?;
    write_csv(
        &dir.join(TERMINAL_QUANTILES),
        &quantile_markers(&sim.terminal_wealth),
    )?;
    Ok(sim)
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub log: TrainLog,
    pub simulation: PolicySimulation,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub mortality: MortalityStage,
    pub seeds: Vec<SeedOutcome>,
}

fn prepare_bundle(cfg: &ExperimentConfig) -> Result<(OutputLock, MortalityStage)> {
    cfg.validate()?;
    let lock = OutputLock::acquire(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join(CONFIG_ECHO), &cfg.to_toml()?)?;
    let stage = mortality_stage(cfg).map_err(|e| e.in_stage("mortality"))?;
    write_mortality_outputs(&cfg.out_dir.join(MORTALITY_DIR), &stage)
        .map_err(|e| e.in_stage("mortality"))?;
    Ok((lock, stage))
}

/// Calibrates mortality only and writes the `mortality/` files.
pub fn fit_mortality(cfg: &ExperimentConfig) -> Result<MortalityStage> {
    let (_lock, stage) = prepare_bundle(cfg)?;
    Ok(stage)
}

/// Calibration, training and evaluation for every configured seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (_lock, stage) = prepare_bundle(cfg)?;
    let env = environment(cfg, stage.cohort.clone()).map_err(|e| e.in_stage("setup"))?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.out_dir, seed);
        create_dir(&dir)?;
        write_text(&dir.join(RUN_CONFIG), &cfg.for_seed(seed).to_toml()?)?;
        let log = train_seed(cfg, &env, seed, &dir).map_err(|e| e.in_stage("training"))?;
        let simulation =
            evaluate_seed(cfg, &env, seed, &dir).map_err(|e| e.in_stage("evaluation"))?;
        seeds.push(SeedOutcome {
            seed,
            log,
            simulation,
        });
    }
    Ok(ExperimentOutcome {
        mortality: stage,
        seeds,
    })
}

/// Re-evaluates the saved policies of an existing bundle.
pub fn simulate_bundle(cfg: &ExperimentConfig) -> Result<Vec<(u64, PolicySimulation)>> {
    let (_lock, stage) = prepare_bundle(cfg)?;
    let env = environment(cfg, stage.cohort).map_err(|e| e.in_stage("setup"))?;
    cfg.seeds
        .iter()
        .map(|&seed| {
            let dir = seed_dir(&cfg.out_dir, seed);
            evaluate_seed(cfg, &env, seed, &dir)
                .map(|s| (seed, s))
                .map_err(|e| e.in_stage("evaluation"))
        })
        .collect()
}

/// Writes the comparison of two bundles into `out`.
pub fn write_comparison(out: &Path, cmp: &Comparison) -> Result<()> {
    create_dir(out)?;
    write_csv(&out.join("summary_deltas.csv"), &cmp.summary)?;
    write_csv(&out.join("terminal_deltas.csv"), &cmp.terminal)?;
    write_csv(&out.join("sign_tests.csv"), &cmp.sign_tests)
}
