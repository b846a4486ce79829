//! CVaR of a small loss distribution by the primal formula and by its dual
//! envelope point.

use pension_risk::risk::{cvar_dual, cvar_primal, envelope_check, CvarSpec, DiscreteDistribution};

fn main() -> pension_risk::Result<()> {
    let losses = DiscreteDistribution::uniform((1..=10).map(f64::from).collect())?;
    for alpha in [0.05, 0.1, 0.25, 0.5, 1.0] {
        let spec = CvarSpec::new(alpha)?;
        let saddle = cvar_dual(&losses, spec);
        println!(
            "alpha {alpha:<4}  primal {:7.4}  dual {:7.4}  lambda {:5.2}  xi {:?}  in envelope {}",
            cvar_primal(&losses, spec),
            saddle.value,
            saddle.lambda,
            saddle.xi,
            envelope_check(&saddle.xi, &losses, spec)
        );
    }
    Ok(())
}
