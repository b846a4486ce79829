//! Trains a small actor-critic on a flat mortality table and rolls the
//! policy forward.

use pension_risk::actor_critic::{train, Environment, TrainConfig};
use pension_risk::experiment::simulate_policy;
use pension_risk::market::MarketParams;
use pension_risk::mdp::PensionPlanSpec;
use pension_risk::mortality::CohortRates;
use pension_risk::risk::CvarPair;
use pension_risk::stats::quantile;

fn main() -> pension_risk::Result<()> {
    let plan = PensionPlanSpec::default();
    let cohort = CohortRates::flat(plan.entry_age, 2022, 0.002, plan.horizon)?;
    let env = Environment::new(
        plan,
        MarketParams::default(),
        cohort,
        CvarPair::new(0.1, 0.1)?,
    )?;
    let config = TrainConfig {
        n_outer: 50,
        m_inner: 50,
        epochs: 5,
        minibatch: 20,
        critic_epochs: 5,
        actor_epochs: 3,
        critic_lr: 1e-3,
        actor_lr: 1e-3,
        warmup_critic_epochs: 30,
        seed: 1,
        ..Default::default()
    };
    let out = train(config, env.clone())?;
    println!(
        "critic loss after warm-up {:.2}",
        out.log.post_warmup_loss().unwrap_or(f64::NAN)
    );
    for r in &out.log.records {
        println!(
            "epoch {}: critic loss {:.2}, actor gradient norm {:.3e}",
            r.epoch, r.critic_loss, r.actor_grad_norm
        );
    }
    let sim = simulate_policy(&out.policy, &env, 1000, 1)?;
    for row in sim.summary.rows.iter().step_by(11) {
        println!(
            "age {}: stock {:.2}, insurance {:.3} of budget",
            row.age, row.stock_fraction, row.insurance_fraction
        );
    }
    println!(
        "terminal wealth median {:.1} k$",
        quantile(&sim.terminal_wealth, 0.5)
    );
    Ok(())
}
