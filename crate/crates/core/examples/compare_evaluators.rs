//! Periodic against non-periodic risk evaluation: two small trainings on the
//! same seed and their terminal-wealth quantiles.

use pension_risk::actor_critic::{train, Environment, TrainConfig};
use pension_risk::experiment::simulate_policy;
use pension_risk::market::MarketParams;
use pension_risk::mdp::{EvaluationMode, PensionPlanSpec};
use pension_risk::mortality::CohortRates;
use pension_risk::risk::CvarPair;
use pension_risk::stats::quantile;

fn main() -> pension_risk::Result<()> {
    for mode in [EvaluationMode::Periodic, EvaluationMode::Nonperiodic] {
        let plan = PensionPlanSpec {
            evaluation_mode: mode,
            ..Default::default()
        };
        let cohort = CohortRates::flat(plan.entry_age, 2022, 0.002, plan.horizon)?;
        let env = Environment::new(
            plan,
            MarketParams::default(),
            cohort,
            CvarPair::new(0.1, 0.1)?,
        )?;
        let config = TrainConfig {
            n_outer: 40,
            m_inner: 40,
            epochs: 4,
            minibatch: 20,
            critic_epochs: 5,
            actor_epochs: 3,
            critic_lr: 1e-3,
            actor_lr: 1e-3,
            warmup_critic_epochs: 30,
            seed: 2,
            ..Default::default()
        };
        let out = train(config, env.clone())?;
        let sim = simulate_policy(&out.policy, &env, 2000, 2)?;
        let w = &sim.terminal_wealth;
        println!(
            "{mode:?}: terminal wealth p05 {:.1}, median {:.1}, p95 {:.1} k$; stock at entry {:.2} of budget",
            quantile(w, 0.05),
            quantile(w, 0.5),
            quantile(w, 0.95),
            sim.summary.rows[0].stock_fraction
        );
    }
    Ok(())
}
