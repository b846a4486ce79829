//! Saddle-point policy gradient of a two-period toy against central finite
//! differences of its exact value.

use pension_risk::mdp::toy::{toy_policy_gradient, DiscreteToyMdp, SoftmaxToyPolicy};

const TOY: &str = include_str!("../tests/fixtures/toy_gradient.json");

fn main() -> pension_risk::Result<()> {
    let toy = DiscreteToyMdp::from_json(TOY)?;
    let h = 1e-5;
    for theta in [[0.0, 0.0], [2.0, -1.0], [-3.0, 3.0], [1.0, 4.0]] {
        let g = toy_policy_gradient(&toy, SoftmaxToyPolicy { theta })?;
        let mut fd = [0.0; 2];
        for j in 0..2 {
            let (mut up, mut dn) = (theta, theta);
            up[j] += h;
            dn[j] -= h;
            let vu = toy_policy_gradient(&toy, SoftmaxToyPolicy { theta: up })?.value;
            let vd = toy_policy_gradient(&toy, SoftmaxToyPolicy { theta: dn })?.value;
            fd[j] = (vu - vd) / (2.0 * h);
        }
        println!(
            "theta {theta:?}: value {:.6}, gradient [{:.6}, {:.6}], differences [{:.6}, {:.6}]",
            g.value, g.grad[0], g.grad[1], fd[0], fd[1]
        );
    }
    Ok(())
}
