//! Lee-Carter mortality with transitory jumps and renewal arrivals.

mod jumps;
mod lee_carter;
mod projection;
mod synthetic;
mod table;

pub use jumps::{
    detect_outliers, fit_jump_diffusion, InterArrival, JumpDiffusionParams, OutlierConfig,
    THETA_FLOOR,
};
pub use lee_carter::{fit_lee_carter, reestimate_kappa, LeeCarterFit};
pub use projection::{
    central_to_q, cohort_death_probs, mean_path, project_kappa, quantile_bands, static_cohort,
    CohortRates, SurvivalRow,
};
pub use synthetic::{synthetic_table, SyntheticMortality, SyntheticSpec};
pub use table::{load_mortality_table, MortalityTable};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Which period-index estimate feeds the jump-diffusion fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KappaPhase {
    First,
    #[default]
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationOptions {
    pub outlier_threshold: f64,
    pub kappa_phase: KappaPhase,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            outlier_threshold: 2.0,
            kappa_phase: KappaPhase::Second,
        }
    }
}

/// Everything estimated from one table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MortalityCalibration {
    pub first_phase: LeeCarterFit,
    pub fit: LeeCarterFit,
    pub outlier_years: Vec<i32>,
    pub dynamics: JumpDiffusionParams,
}

impl MortalityCalibration {
    /// Dynamics restarted at the last observed year, the origin of projections.
    pub fn projection_dynamics(&self) -> JumpDiffusionParams {
        let last = self
            .fit
            .kappa
            .last()
            .copied()
            .unwrap_or(self.dynamics.kappa0);
        self.dynamics.with_origin(last)
    }

    pub fn last_year(&self) -> i32 {
        self.fit.years.last().copied().unwrap_or_default()
    }
}

pub fn calibrate(
    table: &MortalityTable,
    options: &CalibrationOptions,
) -> Result<MortalityCalibration> {
    let first_phase = fit_lee_carter(table)?;
    let second = reestimate_kappa(&first_phase, table)?;
    let fit = match options.kappa_phase {
        KappaPhase::First => first_phase.clone(),
        KappaPhase::Second => second,
    };
    let outlier_years = detect_outliers(
        &fit.years,
        &fit.kappa,
        OutlierConfig::new(options.outlier_threshold)?,
    )?;
    let dynamics = fit_jump_diffusion(&fit.years, &fit.kappa, &outlier_years)?;
    Ok(MortalityCalibration {
        first_phase,
        fit,
        outlier_years,
        dynamics,
    })
}

/// Cohort death probabilities under the projected mean period index.
pub fn projected_cohort(
    calibration: &MortalityCalibration,
    start_age: u32,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<(CohortRates, Vec<Vec<f64>>)> {
    let paths = project_kappa(&calibration.projection_dynamics(), horizon, n_paths, seed)?;
    let mean = mean_path(&paths);
    let cohort = cohort_death_probs(
        &calibration.fit,
        &mean,
        start_age,
        calibration.last_year(),
        horizon,
    )?;
    Ok((cohort, paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_pipeline_finds_the_pandemic() {
        let s = synthetic_table(&SyntheticSpec::default(), 3).unwrap();
        let cal = calibrate(&s.table, &CalibrationOptions::default()).unwrap();
        for y in [2020, 2022] {
            assert!(cal.outlier_years.contains(&y), "{:?}", cal.outlier_years);
        }
        assert!(cal.dynamics.theta_jump > 1.0);
        assert!(cal.dynamics.drift_h < 0.0);

        let (lc, _) = projected_cohort(&cal, 22, 45, 500, 1).unwrap();
        let st = static_cohort(&cal.fit, 22, 45).unwrap();
        let lower = lc.q().iter().zip(st.q()).filter(|(a, b)| a < b).count();
        assert!(lower > 45 / 2);
    }
}
