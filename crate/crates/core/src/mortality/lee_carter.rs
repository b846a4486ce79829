use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::table::MortalityTable;
use crate::error::{Error, Result};

/// `ln m[x][t] = a[x] + b[x] * kappa[t] + residual[x][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeeCarterFit {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub kappa: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    /// Set when the centred log surface had no signal (rank zero).
    pub degenerate: bool,
}

impl LeeCarterFit {
    pub fn age_index(&self, age: u32) -> Option<usize> {
        let i = age.checked_sub(*self.ages.first()?)? as usize;
        (i < self.ages.len()).then_some(i)
    }

    pub fn log_rate(&self, age_idx: usize, kappa: f64) -> f64 {
        self.a[age_idx] + self.b[age_idx] * kappa
    }

    fn residuals_for(&self, log_m: &[Vec<f64>]) -> Vec<Vec<f64>> {
        log_m
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, l)| l - self.a[i] - self.b[i] * self.kappa[j])
                    .collect()
            })
            .collect()
    }
}

fn finite_logs(table: &MortalityTable) -> Result<Vec<Vec<f64>>> {
    let log_m = table.log_rates();
    if log_m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite log death rate".into()));
    }
    Ok(log_m)
}

/// First-phase fit from the leading singular triplet of the centred log rates,
/// normalised so that `sum(b) = 1` and `sum(kappa) = 0`.
pub fn fit_lee_carter(table: &MortalityTable) -> Result<LeeCarterFit> {
    let (n_age, n_year) = table.shape();
    if n_year < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: n_year,
        });
    }
    let log_m = finite_logs(table)?;
    let a: Vec<f64> = log_m
        .iter()
        .map(|row| row.iter().sum::<f64>() / n_year as f64)
        .collect();
    let centred = DMatrix::from_fn(n_age, n_year, |i, j| log_m[i][j] - a[i]);

    let scale = centred.amax();
    let mut fit = LeeCarterFit {
        ages: table.ages().to_vec(),
        years: table.years().to_vec(),
        a,
        b: vec![1.0 / n_age as f64; n_age],
        kappa: vec![0.0; n_year],
        residuals: Vec::new(),
        degenerate: false,
    };

    let svd = centred.svd(true, true);
    let (lead, s1) = svd.singular_values.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (k, s)| if s > best.1 { (k, s) } else { best },
    );
    if !(s1 > 1e-12 * scale.max(1e-300)) || scale == 0.0 {
        fit.degenerate = true;
        fit.residuals = fit.residuals_for(&log_m);
        return Ok(fit);
    }
    let u = svd
        .u
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return U".into()))?
        .column(lead)
        .clone_owned();
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not return V^T".into()))?
        .row(lead)
        .clone_owned();
    let u_sum: f64 = u.iter().sum();
    if u_sum.abs() < 1e-12 {
        return Err(Error::Numerical(
            "leading age loading sums to zero; sum(b) = 1 cannot be imposed".into(),
        ));
    }
    fit.b = u.iter().map(|ui| ui / u_sum).collect();
    fit.kappa = v_t.iter().map(|vj| s1 * vj * u_sum).collect();
    // kappa is orthogonal to the constant vector up to rounding; remove the
    // residue and fold it into a so the two constraints hold together.
    let mean_k = fit.kappa.iter().sum::<f64>() / n_year as f64;
    for k in &mut fit.kappa {
        *k -= mean_k;
    }
    for (ai, bi) in fit.a.iter_mut().zip(&fit.b) {
        *ai += bi * mean_k;
    }
    fit.residuals = fit.residuals_for(&log_m);
    Ok(fit)
}

/// Second phase: per-year least squares on log rates with `a` and `b` held
/// fixed, `kappa_t = sum_x b_x (ln m - a_x) / sum_x b_x^2`. The zero-sum
/// constraint on kappa is not re-imposed.
pub fn reestimate_kappa(fit: &LeeCarterFit, table: &MortalityTable) -> Result<LeeCarterFit> {
    if table.ages() != fit.ages.as_slice() || table.years() != fit.years.as_slice() {
        return Err(Error::Input(
            "table grid differs from the grid of the fit".into(),
        ));
    }
    let log_m = finite_logs(table)?;
    let bb: f64 = fit.b.iter().map(|b| b * b).sum();
    if !(bb > 0.0) {
        return Err(Error::Numerical("all age sensitivities are zero".into()));
    }
    let mut out = fit.clone();
    for (j, year) in fit.years.iter().enumerate() {
        let num: f64 = fit
            .b
            .iter()
            .enumerate()
            .map(|(i, b)| b * (log_m[i][j] - fit.a[i]))
            .sum();
        let k = num / bb;
        if !k.is_finite() {
            return Err(Error::Numerical(format!(
                "kappa for year {year} is not finite"
            )));
        }
        out.kappa[j] = k;
    }
    out.residuals = out.residuals_for(&log_m);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from_logs(ages: Vec<u32>, years: Vec<i32>, logs: Vec<Vec<f64>>) -> MortalityTable {
        let m = logs
            .into_iter()
            .map(|r| r.into_iter().map(f64::exp).collect())
            .collect();
        MortalityTable::new(ages, years, m).unwrap()
    }

    #[test]
    fn single_age_closed_form() {
        let t = table_from_logs(vec![50], vec![2000, 2001, 2002], vec![vec![1.0, 2.0, 3.0]]);
        let fit = fit_lee_carter(&t).unwrap();
        assert!((fit.a[0] - 2.0).abs() < 1e-12);
        assert!((fit.b[0] - 1.0).abs() < 1e-12);
        for (k, e) in fit.kappa.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((k - e).abs() < 1e-12, "{k} vs {e}");
        }
    }

    #[test]
    fn constant_surface_is_degenerate() {
        let c = -4.0;
        let t = table_from_logs(vec![30, 31], vec![2000, 2001, 2002], vec![vec![c; 3]; 2]);
        let fit = fit_lee_carter(&t).unwrap();
        assert!(fit.degenerate);
        assert!(fit.a.iter().all(|a| (a - c).abs() < 1e-12));
        assert!(fit.kappa.iter().all(|k| *k == 0.0));
        assert!(fit.b.iter().all(|b| (b - 0.5).abs() < 1e-15));
    }

    #[test]
    fn second_phase_single_age() {
        let logs = vec![vec![-5.0, -5.3, -5.1, -5.6]];
        let t = table_from_logs(vec![60], (2000..2004).collect(), logs.clone());
        let fit = fit_lee_carter(&t).unwrap();
        let fit2 = reestimate_kappa(&fit, &t).unwrap();
        for (j, k) in fit2.kappa.iter().enumerate() {
            let expected = logs[0][j].exp().ln() - fit.a[0];
            assert!((k - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn second_phase_tracks_uniform_shift() {
        let mut logs = vec![vec![-5.0, -5.3, -5.1, -5.6]];
        let t = table_from_logs(vec![60], (2000..2004).collect(), logs.clone());
        let fit = fit_lee_carter(&t).unwrap();
        let base = reestimate_kappa(&fit, &t).unwrap();
        logs[0][2] += 0.1;
        let t2 = table_from_logs(vec![60], (2000..2004).collect(), logs);
        let shifted = reestimate_kappa(&fit, &t2).unwrap();
        assert!((shifted.kappa[2] - base.kappa[2] - 0.1).abs() < 1e-12);
        assert!((shifted.kappa[1] - base.kappa[1]).abs() < 1e-12);
    }
}
