//! Projected period index and the cohort death probabilities it implies,
//! against the static table of the last observed year.

use pension_risk::mortality::{
    calibrate, projected_cohort, quantile_bands, static_cohort, synthetic_table,
    CalibrationOptions, SyntheticSpec,
};

fn main() -> pension_risk::Result<()> {
    let table = synthetic_table(&SyntheticSpec::default(), 0)?.table;
    let cal = calibrate(&table, &CalibrationOptions::default())?;
    let (lc, paths) = projected_cohort(&cal, 22, 45, 2000, 7)?;
    let fixed = static_cohort(&cal.fit, 22, 45)?;
    let bands = quantile_bands(&paths, 0.05, 0.95);
    println!("year  kappa p05   kappa p95   age   q static    q projected");
    for t in (0..45).step_by(5) {
        println!(
            "{:4}  {:10.3}  {:10.3}  {:4}  {:.6}    {:.6}",
            cal.last_year() + t as i32,
            bands[t].0,
            bands[t].1,
            22 + t,
            fixed.q()[t],
            lc.q()[t]
        );
    }
    Ok(())
}
