//! Quarterly level data and their log-difference transforms.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub quarter: u8,
}

impl Quarter {
    pub fn new(year: i32, quarter: u8) -> Self {
        assert!((1..=4).contains(&quarter), "quarter must be 1..=4");
        Quarter { year, quarter }
    }

    pub fn next(self) -> Self {
        if self.quarter == 4 {
            Quarter::new(self.year + 1, 1)
        } else {
            Quarter::new(self.year, self.quarter + 1)
        }
    }

    pub fn index(self) -> i64 {
        self.year as i64 * 4 + (self.quarter as i64 - 1)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-Q{}", self.year, self.quarter)
    }
}

impl FromStr for Quarter {
    type Err = String;

    /// Accepts `YYYY-Qn` and `YYYY-MM-DD` (month mapped to its quarter).
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let bad = || format!("unrecognised quarter `{s}` (expected YYYY-Qn or YYYY-MM-DD)");
        let (year, rest) = s.split_once('-').ok_or_else(bad)?;
        let year: i32 = year.parse().map_err(|_| bad())?;
        if let Some(q) = rest.strip_prefix('Q').or_else(|| rest.strip_prefix('q')) {
            let q: u8 = q.parse().map_err(|_| bad())?;
            if !(1..=4).contains(&q) {
                return Err(bad());
            }
            return Ok(Quarter::new(year, q));
        }
        let mut parts = rest.split('-');
        let month: u8 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let day: u8 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() || !(1..=12).contains(&month) || !(1..=31).contains(&day) {
            return Err(bad());
        }
        Ok(Quarter::new(year, (month - 1) / 3 + 1))
    }
}

/// Aligned endogenous and exogenous level series.
///
/// `y[i] = log(levels[i+1] / levels[i])` and likewise for `x`, so
/// log-difference `i` is dated `dates[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dates: Vec<Quarter>,
    pub endo_names: Vec<String>,
    pub exo_name: String,
    pub levels: Vec<DVector<f64>>,
    pub exo_levels: Vec<f64>,
    pub y: Vec<DVector<f64>>,
    pub x: Vec<f64>,
}

impl Dataset {
    /// Validates the levels and derives log-differences. Row numbers in
    /// errors are 1-based data rows (the header is row 0).
    pub fn from_levels(
        dates: Vec<Quarter>,
        endo_names: Vec<String>,
        exo_name: String,
        levels: Vec<DVector<f64>>,
        exo_levels: Vec<f64>,
    ) -> Result<Self> {
        let len = dates.len();
        if levels.len() != len || exo_levels.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{len} dates, {} endogenous rows, {} exogenous rows",
                levels.len(),
                exo_levels.len()
            )));
        }
        let n = endo_names.len();
        for (row, lv) in levels.iter().enumerate() {
            if lv.len() != n {
                return Err(Error::DimensionMismatch(format!("row {} has {} endogenous values", row + 1, lv.len())));
            }
            for (name, &value) in endo_names.iter().zip(lv.iter()) {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonPositiveLevel { row: row + 1, column: name.clone(), value });
                }
            }
            let xv = exo_levels[row];
            if !(xv > 0.0) || !xv.is_finite() {
                return Err(Error::NonPositiveLevel { row: row + 1, column: exo_name.clone(), value: xv });
            }
        }
        for i in 1..len {
            if dates[i].index() != dates[i - 1].index() + 1 {
                return Err(Error::DateGap {
                    row: i,
                    prev: dates[i - 1].to_string(),
                    next_row: i + 1,
                    next: dates[i].to_string(),
                });
            }
        }
        let y = levels
            .windows(2)
            .map(|w| DVector::from_fn(n, |i, _| (w[1][i] / w[0][i]).ln()))
            .collect();
        let x = exo_levels.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        Ok(Dataset { dates, endo_names, exo_name, levels, exo_levels, y, x })
    }

    pub fn n(&self) -> usize {
        self.endo_names.len()
    }

    /// Number of log-difference observations.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Date of log-difference `i`.
    pub fn obs_date(&self, i: usize) -> Quarter {
        self.dates[i + 1]
    }

    /// Log-difference index dated `q`, if present.
    pub fn obs_index(&self, q: Quarter) -> Option<usize> {
        self.dates.iter().skip(1).position(|d| *d == q)
    }

    /// The level observed at the same date as log-difference `i`.
    pub fn level_at_obs(&self, i: usize) -> &DVector<f64> {
        &self.levels[i + 1]
    }

    /// Keeps the first `n_obs` log-differences (and `n_obs + 1` levels).
    pub fn truncated(&self, n_obs: usize) -> Dataset {
        let n_obs = n_obs.min(self.len());
        Dataset {
            dates: self.dates[..n_obs + 1].to_vec(),
            endo_names: self.endo_names.clone(),
            exo_name: self.exo_name.clone(),
            levels: self.levels[..n_obs + 1].to_vec(),
            exo_levels: self.exo_levels[..n_obs + 1].to_vec(),
            y: self.y[..n_obs].to_vec(),
            x: self.x[..n_obs].to_vec(),
        }
    }

    /// Rebuilds levels from log-differences, starting at the given levels.
    pub fn from_log_differences(
        start: Quarter,
        endo_names: Vec<String>,
        exo_name: String,
        start_levels: DVector<f64>,
        start_exo: f64,
        y: &[DVector<f64>],
        x: &[f64],
    ) -> Result<Self> {
        let mut dates = vec![start];
        let mut levels = vec![start_levels];
        let mut exo_levels = vec![start_exo];
        for (yt, xt) in y.iter().zip(x) {
            dates.push(dates.last().unwrap().next());
            let prev = levels.last().unwrap();
            levels.push(prev.component_mul(&yt.map(f64::exp)));
            exo_levels.push(exo_levels.last().unwrap() * xt.exp());
        }
        Dataset::from_levels(dates, endo_names, exo_name, levels, exo_levels)
    }
}
