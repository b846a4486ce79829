//! Lee-Carter calibration with jump detection on a table.
//!
//! Usage: `cargo run --example lee_carter_fit [HMD_Mx_1x1.txt]`. Without an
//! argument a synthetic table with a pandemic spike is used.

use pension_risk::mortality::{
    calibrate, load_mortality_table, synthetic_table, CalibrationOptions, SyntheticSpec,
};

fn main() -> pension_risk::Result<()> {
    let table = match std::env::args().nth(1) {
        Some(path) => {
            let text =
                std::fs::read_to_string(&path).map_err(|e| pension_risk::Error::io(&path, e))?;
            let t = load_mortality_table(&text, 100)?;
            let ages = t.ages();
            t.restrict((ages[0], ages[ages.len() - 1]), (1933, 2022))?
        }
        None => synthetic_table(&SyntheticSpec::default(), 0)?.table,
    };
    let cal = calibrate(&table, &CalibrationOptions::default())?;
    let fit = &cal.fit;
    println!(
        "ages {}-{}, years {}-{}",
        fit.ages[0],
        fit.ages[fit.ages.len() - 1],
        fit.years[0],
        cal.last_year()
    );
    println!("sum b = {:.12}", fit.b.iter().sum::<f64>());
    println!("outlier years {:?}", cal.outlier_years);
    let d = &cal.dynamics;
    println!(
        "kappa0 {:.4}  drift {:.5}  sigma {:.5}  theta {:.4}  delta {:.4}",
        d.kappa0, d.drift_h, d.sigma, d.theta_jump, d.delta
    );
    for (family, bic) in &d.candidate_bics {
        println!("  {family:<10} BIC {bic:.3}");
    }
    println!("selected {}", d.interarrival.map_or("none", |f| f.name()));
    Ok(())
}
