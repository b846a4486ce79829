//! The pension decision problem: states, feasible actions, wealth transition,
//! per-period costs of the member (`A`) and beneficiary (`B`), and the
//! one-step risk evaluation used as a value target.

pub mod toy;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mortality::SurvivalRow;
use crate::risk::{cvar_dual, CvarPair, CvarSaddle, DiscreteDistribution};

/// Whether the member judges wealth changes every year or only at retirement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvaluationMode {
    #[default]
    Periodic,
    Nonperiodic,
}

/// Source of the death probabilities used in costs and value weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MortalityMode {
    /// Last observed year's rates held fixed.
    #[default]
    #[serde(rename = "static")]
    Static,
    /// Cohort rates along the mean projected period index.
    #[serde(rename = "lc")]
    LeeCarter,
}

impl std::str::FromStr for EvaluationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Self::Periodic),
            "nonperiodic" => Ok(Self::Nonperiodic),
            _ => Err(Error::Config(format!("unknown evaluation mode {s:?}"))),
        }
    }
}

impl std::str::FromStr for MortalityMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "lc" => Ok(Self::LeeCarter),
            _ => Err(Error::Config(format!("unknown mortality mode {s:?}"))),
        }
    }
}

/// Member and plan parameters. Money is in thousands of dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PensionPlanSpec {
    pub entry_age: u32,
    pub horizon: usize,
    /// Share of salary contributed each year.
    pub gamma: f64,
    pub w0: f64,
    pub y0: f64,
    pub evaluation_mode: EvaluationMode,
    pub mortality_mode: MortalityMode,
}

impl Default for PensionPlanSpec {
    fn default() -> Self {
        Self {
            entry_age: 22,
            horizon: 45,
            gamma: 0.10,
            w0: 5.0,
            y0: 60.0,
            evaluation_mode: EvaluationMode::Periodic,
            mortality_mode: MortalityMode::Static,
        }
    }
}

impl PensionPlanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!(
                "gamma = {} outside (0, 1)",
                self.gamma
            )));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.w0 >= 0.0) || !self.w0.is_finite() {
            return Err(Error::Config(format!("w0 = {} must be >= 0", self.w0)));
        }
        if !(self.y0 > 0.0) || !self.y0.is_finite() {
            return Err(Error::Config(format!("y0 = {} must be > 0", self.y0)));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> PensionState {
        PensionState {
            t: 0,
            wealth: self.w0,
            income: self.y0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PensionState {
    pub t: usize,
    pub wealth: f64,
    pub income: f64,
}

impl PensionState {
    /// Money available for stock and insurance this year, `W + gamma Y`.
    pub fn budget(&self, gamma: f64) -> f64 {
        self.wealth + gamma * self.income
    }

    /// Network input `(t/T, W/100, Y/100)`.
    pub fn features(&self, horizon: usize) -> [f64; 3] {
        [
            self.t as f64 / horizon as f64,
            self.wealth / FEATURE_SCALE,
            self.income / FEATURE_SCALE,
        ]
    }
}

/// Money scale of the state features, thousands of dollars.
pub const FEATURE_SCALE: f64 = 100.0;

/// Stock holding `alpha` and insurance premium `premium`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PensionAction {
    pub alpha: f64,
    pub premium: f64,
}

fn budget_slack(budget: f64) -> f64 {
    1e-12 * budget.abs().max(1.0)
}

/// No leverage, no short insurance and the purchasing constraint.
pub fn is_feasible(action: PensionAction, state: &PensionState, gamma: f64) -> bool {
    let budget = state.budget(gamma);
    action.alpha >= 0.0
        && action.premium >= 0.0
        && action.alpha + action.premium <= budget + budget_slack(budget)
}

/// Clamps negative components to zero, then shrinks both radially onto the
/// budget line if they overspend.
pub fn project_action(raw: (f64, f64), state: &PensionState, gamma: f64) -> PensionAction {
    let alpha = raw.0.max(0.0);
    let premium = raw.1.max(0.0);
    let budget = state.budget(gamma);
    let total = alpha + premium;
    if total > budget {
        let s = budget / total;
        PensionAction {
            alpha: alpha * s,
            premium: premium * s,
        }
    } else {
        PensionAction { alpha, premium }
    }
}

/// `W' = (W + gamma Y - I - alpha) bond + alpha stock`.
pub fn step_wealth(
    state: &PensionState,
    action: PensionAction,
    bond_gross: f64,
    stock_gross: f64,
    gamma: f64,
) -> Result<f64> {
    if !is_feasible(action, state, gamma) {
        return Err(Error::Contract(format!(
            "action {action:?} infeasible at {state:?}"
        )));
    }
    let bond_holding = (state.budget(gamma) - action.premium - action.alpha).max(0.0);
    Ok(bond_holding * bond_gross + action.alpha * stock_gross)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPair {
    pub ca: f64,
    pub cb: f64,
}

/// Beneficiary cost: minus wealth minus the fair death benefit `e^r I / q`.
/// Toy problems may use `q = 1` or `q = 0`; the latter branch carries no
/// weight, so the benefit is left out rather than made infinite.
fn beneficiary_cost(w_next: f64, premium: f64, q: f64, r: f64) -> Result<f64> {
    if q == 0.0 {
        return Ok(-w_next);
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Domain(format!(
            "death probability {q} outside (0, 1)"
        )));
    }
    Ok(-w_next - r.exp() * premium / q)
}

/// `cA = W + gamma Y - W'`, `cB = -W' - e^r I / q`.
pub fn periodic_costs(
    state: &PensionState,
    action: PensionAction,
    w_next: f64,
    q: f64,
    r: f64,
    gamma: f64,
) -> Result<CostPair> {
    Ok(CostPair {
        ca: state.budget(gamma) - w_next,
        cb: beneficiary_cost(w_next, action.premium, q, r)?,
    })
}

/// Only terminal wealth is judged: `cA = 0`.
pub fn nonperiodic_costs(
    _state: &PensionState,
    action: PensionAction,
    w_next: f64,
    q: f64,
    r: f64,
    _gamma: f64,
) -> Result<CostPair> {
    Ok(CostPair {
        ca: 0.0,
        cb: beneficiary_cost(w_next, action.premium, q, r)?,
    })
}

pub fn costs(
    mode: EvaluationMode,
    state: &PensionState,
    action: PensionAction,
    w_next: f64,
    q: f64,
    r: f64,
    gamma: f64,
) -> Result<CostPair> {
    match mode {
        EvaluationMode::Periodic => periodic_costs(state, action, w_next, q, r, gamma),
        EvaluationMode::Nonperiodic => nonperiodic_costs(state, action, w_next, q, r, gamma),
    }
}

/// One simulated or enumerated transition as seen by the value target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSample {
    pub costs: CostPair,
    pub w_next: f64,
    /// Value of the next state (critic estimate or exact).
    pub v_next: f64,
}

/// A one-step evaluation with both saddle points.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEvaluation {
    pub value: f64,
    /// Saddle of the member term over `cA + e^{-r} V'`.
    pub member: CvarSaddle,
    /// Saddle of the beneficiary term over `cB`.
    pub beneficiary: CvarSaddle,
    pub member_outcomes: Vec<f64>,
}

/// `p CVaR_A(cA + e^{-r} V') + q CVaR_B(cB)` over a weighted sample.
pub fn evaluate_target(
    samples: &[TargetSample],
    probs: &[f64],
    row: SurvivalRow,
    specs: CvarPair,
    r: f64,
) -> Result<TargetEvaluation> {
    if samples.is_empty() {
        return Err(Error::Input(
            "value target needs at least one transition".into(),
        ));
    }
    let disc = (-r).exp();
    let member_outcomes: Vec<f64> = samples
        .iter()
        .map(|s| s.costs.ca + disc * s.v_next)
        .collect();
    let ben: Vec<f64> = samples.iter().map(|s| s.costs.cb).collect();
    let da = DiscreteDistribution::new(member_outcomes.clone(), probs.to_vec())?;
    let db = DiscreteDistribution::new(ben, probs.to_vec())?;
    let member = cvar_dual(&da, specs.a);
    let beneficiary = cvar_dual(&db, specs.b);
    let mut value = 0.0;
    if row.p > 0.0 {
        value += row.p * member.value;
    }
    if row.q > 0.0 {
        value += row.q * beneficiary.value;
    }
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite value target {value}")));
    }
    Ok(TargetEvaluation {
        value,
        member,
        beneficiary,
        member_outcomes,
    })
}

/// Value target over `M` equally weighted inner transitions.
pub fn value_dual_target(
    samples: &[TargetSample],
    row: SurvivalRow,
    specs: CvarPair,
    r: f64,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Input(
            "value target needs at least one transition".into(),
        ));
    }
    let probs = DiscreteDistribution::uniform(vec![0.0; samples.len()])?
        .probs()
        .to_vec();
    Ok(evaluate_target(samples, &probs, row, specs, r)?.value)
}

/// Terminal value `CVaR_A(-W_T)`, which is `-W_T` for a known terminal state.
pub fn terminal_value(wealth: f64) -> f64 {
    -wealth
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(w: f64, y: f64) -> PensionState {
        PensionState {
            t: 0,
            wealth: w,
            income: y,
        }
    }

    #[test]
    fn projection_examples() {
        let s = state(10.0, 0.0);
        assert_eq!(
            project_action((-1.0, -2.0), &s, 0.1),
            PensionAction {
                alpha: 0.0,
                premium: 0.0
            }
        );
        let a = project_action((8.0, 6.0), &s, 0.1);
        assert!((a.alpha - 5.714_286).abs() < 1e-6);
        assert!((a.premium - 4.285_714).abs() < 1e-6);
        let f = project_action((3.0, 2.0), &s, 0.1);
        assert_eq!(
            f,
            PensionAction {
                alpha: 3.0,
                premium: 2.0
            }
        );
    }

    #[test]
    fn wealth_step_examples() {
        // W = 10, gamma Y = 2
        let s = state(10.0, 20.0);
        let w = step_wealth(
            &s,
            PensionAction {
                alpha: 4.0,
                premium: 1.0,
            },
            1.0,
            1.5,
            0.1,
        )
        .unwrap();
        assert!((w - 13.0).abs() < 1e-12);
        let all_bond = step_wealth(
            &s,
            PensionAction {
                alpha: 0.0,
                premium: 0.0,
            },
            1.02,
            1.5,
            0.1,
        )
        .unwrap();
        assert!((all_bond - 12.0 * 1.02).abs() < 1e-12);
        assert!(matches!(
            step_wealth(
                &s,
                PensionAction {
                    alpha: 12.0,
                    premium: 1.0
                },
                1.0,
                1.0,
                0.1
            ),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn cost_examples() {
        let s = state(10.0, 20.0);
        let a = PensionAction {
            alpha: 4.0,
            premium: 1.0,
        };
        let c = periodic_costs(&s, a, 13.0, 0.01, 0.0, 0.1).unwrap();
        assert!((c.ca + 1.0).abs() < 1e-12);
        assert!((c.cb + 113.0).abs() < 1e-9);
        let n = nonperiodic_costs(&s, a, 13.0, 0.01, 0.0, 0.1).unwrap();
        assert_eq!(n.ca, 0.0);
        assert_eq!(n.cb, c.cb);
        assert!(periodic_costs(&s, a, 13.0, 1.5, 0.0, 0.1).is_err());
    }

    #[test]
    fn single_sample_target() {
        let sample = TargetSample {
            costs: CostPair {
                ca: -1.0,
                cb: -50.0,
            },
            w_next: 13.0,
            v_next: -20.0,
        };
        let row = SurvivalRow::new(0.1).unwrap();
        let specs = CvarPair::new(0.1, 0.1).unwrap();
        let v = value_dual_target(&[sample], row, specs, 0.02).unwrap();
        let expected = 0.9 * (-1.0 + (-0.02f64).exp() * -20.0) + 0.1 * -50.0;
        assert!((v - expected).abs() < 1e-12);
        assert!(value_dual_target(&[], row, specs, 0.02).is_err());
    }
}
