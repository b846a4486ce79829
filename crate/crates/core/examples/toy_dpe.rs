//! Exact dynamic-CVaR values of a small toy problem by brute force and by
//! the dual recursion.
//!
//! Usage: `cargo run --example toy_dpe [toy.json]`.

use pension_risk::mdp::toy::{dpe_value_bruteforce, dpe_value_dual, DiscreteToyMdp};

const DEFAULT: &str = include_str!("../tests/fixtures/toy_two_period.json");

fn main() -> pension_risk::Result<()> {
    let text = match std::env::args().nth(1) {
        Some(p) => std::fs::read_to_string(&p).map_err(|e| pension_risk::Error::io(&p, e))?,
        None => DEFAULT.to_string(),
    };
    let toy = DiscreteToyMdp::from_json(&text)?;
    let brute = dpe_value_bruteforce(&toy, &toy.policy)?;
    let dual = dpe_value_dual(&toy, &toy.policy)?;
    println!("{}: {} periods", toy.name, toy.horizon);
    for (t, (lb, ld)) in brute
        .levels
        .iter()
        .zip(&dual.levels)
        .enumerate()
        .take(toy.horizon)
    {
        let gap = lb
            .iter()
            .zip(ld)
            .map(|(a, b)| (a.1 - b.1).abs())
            .fold(0.0, f64::max);
        println!("t = {t}: {} nodes, max gap {gap:.2e}", lb.len());
    }
    for (s, v) in &dual.levels[0] {
        println!("V(W = {}, Y = {}) = {v:.6}", s.wealth, s.income);
    }
    Ok(())
}
