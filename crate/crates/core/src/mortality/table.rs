use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Central death rates `m[x][t]` on a contiguous age-by-year grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MortalityTable {
    ages: Vec<u32>,
    years: Vec<i32>,
    /// Row-major, one row per age.
    m: Vec<Vec<f64>>,
}

fn contiguous_u32(v: &[u32]) -> bool {
    v.windows(2).all(|w| w[1] == w[0] + 1)
}

fn contiguous_i32(v: &[i32]) -> bool {
    v.windows(2).all(|w| w[1] == w[0] + 1)
}

impl MortalityTable {
    pub fn new(ages: Vec<u32>, years: Vec<i32>, m: Vec<Vec<f64>>) -> Result<Self> {
        if ages.is_empty() || years.is_empty() {
            return Err(Error::Input("empty mortality table".into()));
        }
        if !contiguous_u32(&ages) || !contiguous_i32(&years) {
            return Err(Error::Input(
                "ages and years must be strictly increasing and contiguous".into(),
            ));
        }
        if m.len() != ages.len() || m.iter().any(|row| row.len() != years.len()) {
            return Err(Error::Input(format!(
                "rate matrix is not {} x {}",
                ages.len(),
                years.len()
            )));
        }
        for (i, row) in m.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Domain(format!(
                        "m({}, {}) = {v} is not a positive finite rate",
                        ages[i], years[j]
                    )));
                }
            }
        }
        Ok(Self { ages, years, m })
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn rates(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ages.len(), self.years.len())
    }

    pub fn rate(&self, age: u32, year: i32) -> Option<f64> {
        let i = age.checked_sub(self.ages[0])? as usize;
        let j = usize::try_from(year - self.years[0]).ok()?;
        self.m.get(i)?.get(j).copied()
    }

    pub fn log_rates(&self) -> Vec<Vec<f64>> {
        self.m
            .iter()
            .map(|row| row.iter().map(|v| v.ln()).collect())
            .collect()
    }

    /// Sub-table restricted to the inclusive ranges given.
    pub fn restrict(&self, ages: (u32, u32), years: (i32, i32)) -> Result<Self> {
        let ai: Vec<usize> = (0..self.ages.len())
            .filter(|&i| self.ages[i] >= ages.0 && self.ages[i] <= ages.1)
            .collect();
        let yj: Vec<usize> = (0..self.years.len())
            .filter(|&j| self.years[j] >= years.0 && self.years[j] <= years.1)
            .collect();
        if ai.is_empty() || yj.is_empty() {
            return Err(Error::Range(format!(
                "no data for ages {ages:?} and years {years:?}"
            )));
        }
        Self::new(
            ai.iter().map(|&i| self.ages[i]).collect(),
            yj.iter().map(|&j| self.years[j]).collect(),
            ai.iter()
                .map(|&i| yj.iter().map(|&j| self.m[i][j]).collect())
                .collect(),
        )
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_age(field: &str) -> Option<u32> {
    field.trim_end_matches('+').parse().ok()
}

/// Reads an HMD-style period life table text.
///
/// Lines before the `Year Age ...` header are ignored. The rate column is the
/// one named `mx`, `m` or `Total`, falling back to the third column. A `.`
/// marks a missing cell; missing cells inside the grid are a coverage error.
/// Ages above `age_cap` are dropped and `110+` reads as 110.
pub fn load_mortality_table(raw_text: &str, age_cap: u32) -> Result<MortalityTable> {
    let mut lines = raw_text.lines().enumerate();
    let mut rate_col = None;
    for (_, line) in lines.by_ref() {
        let fields = split_fields(line);
        let lower: Vec<String> = fields.iter().map(|f| f.to_ascii_lowercase()).collect();
        if lower.first().map(String::as_str) == Some("year")
            && lower.get(1).map(String::as_str) == Some("age")
        {
            let named = lower
                .iter()
                .position(|f| f == "mx" || f == "m" || f == "total");
            rate_col = Some(named.unwrap_or(2));
            break;
        }
    }
    let rate_col = rate_col.ok_or(Error::Parse {
        line: 1,
        msg: "no header row with columns Year, Age".into(),
    })?;

    let mut cells: BTreeMap<(u32, i32), Option<f64>> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields = split_fields(line);
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: lineno, msg };
        if fields.len() <= rate_col {
            return Err(err(format!("expected at least {} columns", rate_col + 1)));
        }
        let year: i32 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad year {:?}", fields[0])))?;
        let age = parse_age(fields[1]).ok_or_else(|| err(format!("bad age {:?}", fields[1])))?;
        if age > age_cap {
            continue;
        }
        let raw = fields[rate_col];
        let value = if raw == "." {
            None
        } else {
            let v: f64 = raw.parse().map_err(|_| err(format!("bad rate {raw:?}")))?;
            if !(v > 0.0) {
                return Err(Error::Domain(format!(
                    "line {lineno}: rate {v} at age {age}, year {year} must be > 0"
                )));
            }
            Some(v)
        };
        cells.insert((age, year), value);
    }
    if cells.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no data rows".into(),
        });
    }

    let min_age = cells.keys().map(|k| k.0).min().unwrap_or(0);
    let max_age = cells.keys().map(|k| k.0).max().unwrap_or(0);
    let min_year = cells.keys().map(|k| k.1).min().unwrap_or(0);
    let max_year = cells.keys().map(|k| k.1).max().unwrap_or(0);
    let ages: Vec<u32> = (min_age..=max_age).collect();
    let years: Vec<i32> = (min_year..=max_year).collect();

    let mut missing = Vec::new();
    let mut m = vec![vec![0.0; years.len()]; ages.len()];
    for (i, &a) in ages.iter().enumerate() {
        for (j, &y) in years.iter().enumerate() {
            match cells.get(&(a, y)) {
                Some(Some(v)) => m[i][j] = *v,
                _ => missing.push((a, y)),
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    MortalityTable::new(ages, years, m)
}
