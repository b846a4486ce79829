use pension_risk::risk::{cvar_dual, cvar_primal, envelope_check, CvarSpec, DiscreteDistribution};
use proptest::prelude::*;

const TOL: f64 = 1e-10;

fn distribution() -> impl Strategy<Value = DiscreteDistribution> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3f64..1e3, n),
            prop::collection::vec(0.01f64..1.0, n),
            any::<bool>(),
        )
            .prop_map(|(z, w, coarse)| {
                let z = if coarse {
                    z.iter().map(|v| (v / 100.0).round() * 100.0).collect()
                } else {
                    z
                };
                let s: f64 = w.iter().sum();
                let mut p: Vec<f64> = w.iter().map(|x| x / s).collect();
                let residue = 1.0 - p.iter().sum::<f64>();
                *p.last_mut().unwrap() += residue;
                DiscreteDistribution::new(z, p).unwrap()
            })
    })
}

fn spec() -> impl Strategy<Value = CvarSpec> {
    prop_oneof![Just(1.0), 0.01f64..1.0].prop_map(|a| CvarSpec::new(a).unwrap())
}

fn rho(d: &DiscreteDistribution, f: impl Fn(f64) -> f64, s: CvarSpec) -> f64 {
    let z = d.outcomes().iter().map(|&v| f(v)).collect();
    cvar_dual(
        &DiscreteDistribution::new(z, d.probs().to_vec()).unwrap(),
        s,
    )
    .value
}

proptest! {
    #[test]
    fn dual_matches_primal_inside_the_envelope(d in distribution(), s in spec()) {
        let saddle = cvar_dual(&d, s);
        prop_assert!((saddle.value - cvar_primal(&d, s)).abs() < TOL * 1e3);
        prop_assert!(envelope_check(&saddle.xi, &d, s));
    }

    #[test]
    fn value_lies_between_mean_and_maximum(d in distribution(), s in spec()) {
        let v = cvar_dual(&d, s).value;
        let max = d.outcomes().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= d.mean() - TOL * 1e3);
        prop_assert!(v <= max + TOL * 1e3);
    }

    #[test]
    fn cash_invariance_and_homogeneity(d in distribution(), s in spec(), c in -100.0f64..100.0, k in 0.0f64..5.0) {
        let base = cvar_dual(&d, s).value;
        prop_assert!((rho(&d, |v| v + c, s) - (base + c)).abs() < TOL * 1e3);
        prop_assert!((rho(&d, |v| k * v, s) - k * base).abs() < TOL * 1e4);
    }

    #[test]
    fn monotone_under_pointwise_increase(d in distribution(), s in spec(), bump in 0.0f64..10.0) {
        prop_assert!(rho(&d, |v| v + bump * (v.abs() / 1e3), s) >= cvar_dual(&d, s).value - TOL * 1e3);
    }

    #[test]
    fn convex_along_mixtures(d in distribution(), s in spec(), w in 0.0f64..1.0) {
        let y: Vec<f64> = d.outcomes().iter().map(|v| (v * 0.37).sin() * 500.0).collect();
        let dy = DiscreteDistribution::new(y.clone(), d.probs().to_vec()).unwrap();
        let mix: Vec<f64> = d.outcomes().iter().zip(&y).map(|(a, b)| w * a + (1.0 - w) * b).collect();
        let dm = DiscreteDistribution::new(mix, d.probs().to_vec()).unwrap();
        let bound = w * cvar_dual(&d, s).value + (1.0 - w) * cvar_dual(&dy, s).value;
        prop_assert!(cvar_dual(&dm, s).value <= bound + TOL * 1e3);
    }
}
