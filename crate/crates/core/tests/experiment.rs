use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pension_risk::actor_critic::{Environment, TrainConfig, Trainer};
use pension_risk::experiment::{
    compare_runs, io, run_experiment, simulate_policy, ExperimentConfig,
};
use pension_risk::market::MarketParams;
use pension_risk::mdp::PensionPlanSpec;
use pension_risk::mortality::CohortRates;
use pension_risk::nn::ConstantFractions;
use pension_risk::risk::CvarPair;

const SMOKE: &str = include_str!("../../../configs/smoke.toml");

fn smoke_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(SMOKE).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn flat_env(horizon: usize) -> Environment {
    let plan = PensionPlanSpec {
        horizon,
        ..Default::default()
    };
    let cohort = CohortRates::flat(22, 2022, 0.002, horizon).unwrap();
    Environment::new(
        plan,
        MarketParams::default(),
        cohort,
        CvarPair::new(0.1, 0.1).unwrap(),
    )
    .unwrap()
}

#[test]
fn smoke_bundle_is_complete_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bundle");
    let cfg = smoke_config(&out);
    let first = run_experiment(&cfg).unwrap();
    assert_eq!(first.seeds.len(), 1);
    let seed = io::seed_dir(&out, 0);
    for f in [
        io::POLICY_CHECKPOINT,
        io::CRITIC_CHECKPOINT,
        io::TRAIN_LOG,
        io::WARMUP_LOG,
        io::STRATEGY_SUMMARY,
        io::STRATEGY_BANDS,
        io::TERMINAL_WEALTH,
        io::TERMINAL_HISTOGRAM,
        io::TERMINAL_QUANTILES,
        io::RUN_CONFIG,
    ] {
        assert!(seed.join(f).is_file(), "{f}");
    }
    assert!(out.join(io::MORTALITY_DIR).join(io::COHORT).is_file());
    assert!(!out.join(io::LOCK_FILE).exists());

    let kept = tmp.path().join("first");
    fs::rename(&out, &kept).unwrap();
    run_experiment(&cfg).unwrap();
    let files = files_under(&kept);
    assert_eq!(files, files_under(&out));
    for f in files {
        assert_eq!(
            fs::read(kept.join(&f)).unwrap(),
            fs::read(out.join(&f)).unwrap(),
            "{}",
            f.display()
        );
    }
}

#[test]
fn comparing_a_bundle_with_itself_gives_zero_deltas() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bundle");
    run_experiment(&smoke_config(&out)).unwrap();
    let cmp = compare_runs(&out, &out).unwrap();
    assert_eq!(cmp.seeds, vec![0]);
    assert!(cmp.summary.iter().all(|d| d.delta == 0.0));
    assert!(cmp.terminal.iter().all(|d| d.delta_kusd == 0.0));
    for s in &cmp.sign_tests {
        assert_eq!((s.positive, s.negative, s.ties, s.p_value), (0, 0, 1, 1.0));
    }
    assert!(compare_runs(&out, tmp.path())
        .unwrap_err()
        .to_string()
        .contains("share no seeds"));
}

#[test]
fn simulation_invariants() {
    let env = flat_env(10);
    let rule = ConstantFractions {
        stock: 0.7,
        premium: 0.1,
        gamma: env.plan.gamma,
    };
    let sim = simulate_policy(&rule, &env, 200, 5).unwrap();
    assert_eq!(sim.terminal_wealth.len(), 200);
    assert_eq!(sim.summary.rows.len(), 10);
    assert_eq!(sim.bands.len(), 40);
    for r in &sim.summary.rows {
        assert!((r.stock_fraction - 0.7).abs() < 1e-12);
        assert!((r.insurance_fraction - 0.1).abs() < 1e-12);
        assert_eq!((r.sigma_alpha_kusd, r.sigma_premium_kusd), (0.0, 0.0));
    }
    for b in &sim.bands {
        assert!(b.p05 <= b.p50 && b.p50 <= b.p95);
    }
    assert!(sim.terminal_wealth.iter().all(|w| *w >= 0.0));
    assert_eq!(sim, simulate_policy(&rule, &env, 200, 5).unwrap());
    assert_ne!(
        sim.terminal_wealth,
        simulate_policy(&rule, &env, 200, 6)
            .unwrap()
            .terminal_wealth
    );
}

/// Diagnostic only: bootstrapped targets move while the critic fits, so the
/// early loss need not fall. Prints how often it does.
#[test]
fn critic_loss_over_the_first_steps() {
    let env = flat_env(20);
    let (mut improved, mut strictly) = (0, 0);
    for seed in 1..=3 {
        let cfg = TrainConfig {
            n_outer: 30,
            m_inner: 30,
            minibatch: 10,
            warmup_critic_epochs: 10,
            critic_lr: 1e-3,
            seed,
            ..Default::default()
        };
        let mut trainer = Trainer::new(cfg, env.clone()).unwrap();
        trainer.warmup().unwrap();
        let l = &trainer.log.warmup_losses;
        assert_eq!(l.len(), 10);
        assert!(l.iter().all(|v| v.is_finite() && *v >= 0.0));
        improved += usize::from(l[9] < l[0]);
        strictly += usize::from(l.windows(2).all(|w| w[1] < w[0]));
    }
    eprintln!("critic loss after 10 steps: lower in {improved}/3 seeds, strictly decreasing in {strictly}/3");
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pension-risk"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("smoke");
    let ok = cli(&["smoke", "--out", out.to_str().unwrap()]);
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );

    assert_eq!(cli(&["train"]).status.code(), Some(2));
    assert_eq!(
        cli(&["train", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(2)
    );
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seeds = []\n").unwrap();
    assert_eq!(
        cli(&["train", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(cli(&["smoke", "--mode", "weekly"]).status.code(), Some(2));

    let cmp = tmp.path().join("cmp");
    let s = out.to_str().unwrap();
    assert!(cli(&["compare", s, s, "--out", cmp.to_str().unwrap()])
        .status
        .success());
    assert!(cmp.join("sign_tests.csv").is_file());
}
