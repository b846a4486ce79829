use pension_risk::mdp::{
    costs, is_feasible, project_action, step_wealth, EvaluationMode, PensionAction, PensionState,
};
use pension_risk::nn::{squash, SIGMA_FLOOR};
use proptest::prelude::*;

const GAMMA: f64 = 0.1;

fn state() -> impl Strategy<Value = PensionState> {
    (0usize..45, 0.0f64..1e4, 1.0f64..500.0).prop_map(|(t, wealth, income)| PensionState {
        t,
        wealth,
        income,
    })
}

proptest! {
    #[test]
    fn projection_is_feasible(s in state(), a in -1e5f64..1e5, i in -1e5f64..1e5) {
        prop_assert!(is_feasible(project_action((a, i), &s, GAMMA), &s, GAMMA));
    }

    #[test]
    fn projection_keeps_feasible_actions(s in state(), fa in 0.0f64..1.0, fi in 0.0f64..1.0) {
        let b = s.budget(GAMMA);
        let raw = (fa * b, (1.0 - fa) * fi * b);
        let p = project_action(raw, &s, GAMMA);
        prop_assert_eq!((p.alpha, p.premium), raw);
    }

    #[test]
    fn wealth_stays_nonnegative(
        s in state(), a in -1e4f64..1e4, i in -1e4f64..1e4,
        bond in 0.9f64..1.1, stock in 0.01f64..3.0,
    ) {
        let act = project_action((a, i), &s, GAMMA);
        prop_assert!(step_wealth(&s, act, bond, stock, GAMMA).unwrap() >= 0.0);
    }

    #[test]
    fn periodic_member_cost_is_the_wealth_change(s in state(), fa in 0.0f64..1.0, stock in 0.5f64..1.5, q in 0.001f64..1.0) {
        let act = PensionAction { alpha: fa * s.budget(GAMMA), premium: 0.0 };
        let w = step_wealth(&s, act, 1.02, stock, GAMMA).unwrap();
        let c = costs(EvaluationMode::Periodic, &s, act, w, q, 0.02, GAMMA).unwrap();
        prop_assert!((c.ca - (s.budget(GAMMA) - w)).abs() < 1e-9 * s.budget(GAMMA).max(1.0));
        prop_assert!((c.cb + w).abs() < 1e-9 * w.max(1.0));
        let n = costs(EvaluationMode::Nonperiodic, &s, act, w, q, 0.02, GAMMA).unwrap();
        prop_assert_eq!(n.ca, 0.0);
    }

    #[test]
    fn squash_respects_budget_at_extreme_outputs(raw in prop::array::uniform5(-50.0f64..50.0), budget in 0.0f64..1e4) {
        let (p, jac) = squash(&raw, budget);
        prop_assert!(p.mu_alpha >= 0.0 && p.mu_premium >= 0.0);
        prop_assert!(p.mu_alpha + p.mu_premium <= budget * (1.0 + 1e-12));
        prop_assert!(p.sigma_alpha >= SIGMA_FLOOR && p.sigma_premium >= SIGMA_FLOOR);
        prop_assert!(p.rho.abs() < 1.0);
        prop_assert!(jac.iter().flatten().all(|v| v.is_finite()));
        let (logp, score) = p.log_density_and_moment_score((p.mu_alpha, p.mu_premium)).unwrap();
        prop_assert!(logp.is_finite() && score.iter().all(|v| v.is_finite()));
    }
}
