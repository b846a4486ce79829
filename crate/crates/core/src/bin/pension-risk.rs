use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pension_risk::experiment::{
    compare_runs, fit_mortality, io, run_experiment, simulate_bundle, write_comparison,
    ExperimentConfig, StrategyRow, TerminalWealth,
};
use pension_risk::mdp::{EvaluationMode, MortalityMode};
use pension_risk::{Error, Result};

const SMOKE_CONFIG: &str = include_str!("../../../../configs/smoke.toml");

#[derive(Parser)]
#[command(
    name = "pension-risk",
    version,
    about = "Dynamic-CVaR pension investment and insurance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunFlags {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["periodic", "nonperiodic"])]
    mode: Option<String>,
    #[arg(long, value_parser = ["static", "lc"])]
    mortality: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate Lee-Carter mortality with jump dynamics.
    FitMortality(RunFlags),
    /// Calibrate, train every seed and evaluate the trained policies.
    Train(RunFlags),
    /// Re-evaluate the saved policies of an existing bundle.
    Simulate(RunFlags),
    /// Compare two bundles seed by seed (deltas are B minus A).
    Compare {
        bundle_a: PathBuf,
        bundle_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tiny end-to-end run that checks every output file parses.
    Smoke(RunFlags),
}

fn load_config(flags: &RunFlags, fallback: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match (&flags.config, fallback) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(text)) => ExperimentConfig::from_toml_str(text)?,
        (None, None) => return Err(Error::Config("--config is required".into())),
    };
    if let Some(s) = flags.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &flags.out {
        cfg.out_dir = o.clone();
    }
    if let Some(m) = &flags.mode {
        cfg.plan.evaluation_mode = m.parse::<EvaluationMode>()?;
    }
    if let Some(m) = &flags.mortality {
        cfg.plan.mortality_mode = m.parse::<MortalityMode>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_bundle(root: &Path, cfg: &ExperimentConfig) -> Result<()> {
    ExperimentConfig::load(&root.join(io::CONFIG_ECHO))?;
    for f in [io::LEE_CARTER, io::KAPPA, io::COHORT] {
        io::require_file(&root.join(io::MORTALITY_DIR).join(f))?;
    }
    for &seed in &cfg.seeds {
        let dir = io::seed_dir(root, seed);
        let rows: Vec<StrategyRow> = io::read_csv(&dir.join(io::STRATEGY_SUMMARY))?;
        let wealth: Vec<TerminalWealth> = io::read_csv(&dir.join(io::TERMINAL_WEALTH))?;
        if rows.len() != cfg.plan.horizon || wealth.len() != cfg.eval_paths {
            return Err(Error::Contract(format!(
                "incomplete outputs in {}",
                dir.display()
            )));
        }
        for f in [
            io::POLICY_CHECKPOINT,
            io::CRITIC_CHECKPOINT,
            io::TRAIN_LOG,
            io::STRATEGY_BANDS,
            io::TERMINAL_HISTOGRAM,
            io::TERMINAL_QUANTILES,
        ] {
            io::require_file(&dir.join(f))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::FitMortality(flags) => {
            let cfg = load_config(&flags, None)?;
            let stage = fit_mortality(&cfg)?;
            let d = &stage.calibration.dynamics;
            println!(
                "{}: outliers {:?}, family {}, theta {:.4}, sigma {:.5}, drift {:.5}",
                stage.source,
                stage.calibration.outlier_years,
                d.interarrival.map(|f| f.name()).unwrap_or("none"),
                d.theta_jump,
                d.sigma,
                d.drift_h
            );
        }
        Command::Train(flags) => {
            let cfg = load_config(&flags, None)?;
            let out = run_experiment(&cfg)?;
            for s in &out.seeds {
                let last = s.log.records.last();
                println!(
                    "seed {}: final critic loss {:.4e}, mu_alpha at entry {:.4}",
                    s.seed,
                    last.map_or(f64::NAN, |r| r.critic_loss),
                    s.simulation.summary.rows[0].mu_alpha_kusd
                );
            }
            println!("outputs in {}", cfg.out_dir.display());
        }
        Command::Simulate(flags) => {
            let cfg = load_config(&flags, None)?;
            for (seed, sim) in simulate_bundle(&cfg)? {
                let mut w = sim.terminal_wealth.clone();
                w.sort_by(f64::total_cmp);
                println!(
                    "seed {seed}: terminal wealth median {:.3}",
                    pension_risk::stats::quantile_sorted(&w, 0.5)
                );
            }
        }
        Command::Compare {
            bundle_a,
            bundle_b,
            out,
        } => {
            let cmp = compare_runs(&bundle_a, &bundle_b)?;
            for s in &cmp.sign_tests {
                println!(
                    "{}: {} up, {} down, {} tied, p = {:.4}",
                    s.claim, s.positive, s.negative, s.ties, s.p_value
                );
            }
            if let Some(o) = out {
                write_comparison(&o, &cmp)?;
            }
        }
        Command::Smoke(flags) => {
            let mut cfg = load_config(&flags, Some(SMOKE_CONFIG))?;
            if flags.out.is_none() {
                cfg.out_dir =
                    std::env::temp_dir().join(format!("pension-risk-smoke-{}", std::process::id()));
            }
            run_experiment(&cfg)?;
            check_bundle(&cfg.out_dir, &cfg)?;
            println!("smoke run ok: {}", cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
