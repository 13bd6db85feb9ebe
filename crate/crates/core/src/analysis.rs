//! Impulse responses, long-run growth, forecasting and forecast-error tables
//! computed from retained draws.
//!
//! Draws are addressed by observation index. A chain estimated with
//! training length `t0` has path step `s` at observation `t0 + s`; every
//! function here takes that `start` offset explicitly.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs::ChainRecord;
use crate::model::{a_from_alpha, implied_d0, invert_unit_lower, CoefAt, DEFAULT_SINGULAR_COND};
use crate::numkit::{condition_number, quantile, sample_mvn, sorted_copy, standard_normal_vector, RngStream};

/// Quarterly log rate to annual percent.
pub const ANNUALIZATION: f64 = 400.0;

/// Default IRF bands.
pub const IRF_QUANTILES: [f64; 3] = [0.16, 0.5, 0.84];

/// Default long-run growth band (60%).
pub const GROWTH_QUANTILES: [f64; 3] = [0.2, 0.5, 0.8];

fn step_for(records: &[ChainRecord], start: usize, origin: usize) -> Result<usize> {
    let len = records.first().ok_or(Error::EmptyChain)?.coef.path.len();
    if origin < start || origin - start >= len {
        return Err(Error::Config(format!(
            "origin {origin} outside the estimated range {start}..{}",
            start + len
        )));
    }
    Ok(origin - start)
}

/// Cumulative responses of the endogenous log-levels to a permanent
/// relative change `shock` in the exogenous level, coefficients frozen.
///
/// With `s = log(1 + shock)`, `δy_1 = s D_0` and
/// `δy_h = Σ_j B_j δy_{h−j} + s D_{h−1}` (the `D` term vanishes past lag
/// `k`). Element `h − 1` of the result is `Σ_{j≤h} δy_j`.
pub fn cumulative_response(coef: &CoefAt, shock: f64, horizon: usize) -> Vec<DVector<f64>> {
    let n = coef.n();
    let k = coef.k();
    let s = (1.0 + shock).ln();
    let mut deltas: Vec<DVector<f64>> = Vec::with_capacity(horizon);
    let mut cumulative = Vec::with_capacity(horizon);
    let mut total = DVector::zeros(n);
    for h in 1..=horizon {
        let mut dy = DVector::zeros(n);
        for j in 1..=k.min(h - 1) {
            dy.gemv(1.0, &coef.b[j - 1], &deltas[h - 1 - j], 1.0);
        }
        if let Some(d) = coef.d.get(h - 1) {
            dy.axpy(s, d, 1.0);
        }
        total += &dy;
        deltas.push(dy);
        cumulative.push(total.clone());
    }
    cumulative
}

/// Cumulative IRF of one draw at path step `step`.
pub fn impulse_response(record: &ChainRecord, step: usize, shock: f64, horizon: usize) -> Vec<DVector<f64>> {
    cumulative_response(&record.coef.path[step], shock, horizon)
}

/// VAR companion matrix of the `B` blocks.
pub fn companion(coef: &CoefAt) -> DMatrix<f64> {
    let n = coef.n();
    let k = coef.k();
    let mut m = DMatrix::zeros(n * k, n * k);
    for (j, b) in coef.b.iter().enumerate() {
        m.view_mut((0, j * n), (n, n)).copy_from(b);
    }
    for i in n..n * k {
        m[(i, i - n)] = 1.0;
    }
    m
}

pub fn spectral_radius(coef: &CoefAt) -> f64 {
    companion(coef).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_stable(coef: &CoefAt) -> bool {
    spectral_radius(coef) < 1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrfGrid {
    /// Observation indices of the origins.
    pub origins: Vec<usize>,
    pub shock: f64,
    pub horizon: usize,
    pub quantiles: Vec<f64>,
    /// `[origin][draw][horizon − 1]`.
    pub responses: Vec<Vec<Vec<DVector<f64>>>>,
    /// `[origin][horizon − 1]`, each `n × quantiles.len()`.
    pub bands: Vec<Vec<DMatrix<f64>>>,
}

pub fn irf_grid(
    records: &[ChainRecord],
    start: usize,
    origins: &[usize],
    shock: f64,
    horizon: usize,
    quantiles: &[f64],
) -> Result<IrfGrid> {
    if records.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = records[0].layout().n;
    let mut responses = Vec::with_capacity(origins.len());
    let mut bands = Vec::with_capacity(origins.len());
    for &origin in origins {
        let step = step_for(records, start, origin)?;
        let per_draw: Vec<Vec<DVector<f64>>> =
            records.iter().map(|r| impulse_response(r, step, shock, horizon)).collect();
        let band = (0..horizon)
            .map(|h| {
                DMatrix::from_fn(n, quantiles.len(), |i, q| {
                    let sorted = sorted_copy(per_draw.iter().map(|d| d[h][i]));
                    quantile(&sorted, quantiles[q])
                })
            })
            .collect();
        responses.push(per_draw);
        bands.push(band);
    }
    Ok(IrfGrid { origins: origins.to_vec(), shock, horizon, quantiles: quantiles.to_vec(), responses, bands })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthBands {
    pub origin: usize,
    pub quantiles: Vec<f64>,
    /// `n × quantiles.len()`, annualized percent.
    pub values: DMatrix<f64>,
    pub used: usize,
    /// Draws with a near-singular `I − Σ B_j`, left out of the quantiles.
    pub excluded: usize,
}

/// `ANNUALIZATION × (I − Σ B_j)⁻¹ c` for one coefficient set, or `None` when
/// `I − Σ B_j` is near singular.
pub fn steady_state_growth(coef: &CoefAt) -> Option<DVector<f64>> {
    let lr = coef.long_run_matrix();
    if !(condition_number(&lr) < DEFAULT_SINGULAR_COND) {
        return None;
    }
    lr.lu().solve(&coef.c).map(|g| g * ANNUALIZATION)
}

pub fn long_run_growth(records: &[ChainRecord], start: usize, origin: usize, quantiles: &[f64]) -> Result<GrowthBands> {
    let step = step_for(records, start, origin)?;
    let values: Vec<DVector<f64>> =
        records.iter().filter_map(|r| steady_state_growth(&r.coef.path[step])).collect();
    if values.is_empty() {
        return Err(Error::AllDrawsSingular { count: records.len() });
    }
    let n = values[0].len();
    let bands = DMatrix::from_fn(n, quantiles.len(), |i, q| {
        quantile(&sorted_copy(values.iter().map(|v| v[i])), quantiles[q])
    });
    Ok(GrowthBands {
        origin,
        quantiles: quantiles.to_vec(),
        values: bands,
        used: values.len(),
        excluded: records.len() - values.len(),
    })
}

/// Treatment of parameter drift over the forecast horizon.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ForecastMode {
    /// Parameters stay at their origin values.
    #[default]
    Frozen,
    /// Parameters continue their random walks with sampled innovations.
    Walk,
}

impl fmt::Display for ForecastMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForecastMode::Frozen => "frozen",
            ForecastMode::Walk => "walk",
        })
    }
}

impl FromStr for ForecastMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frozen" => Ok(ForecastMode::Frozen),
            "walk" => Ok(ForecastMode::Walk),
            other => Err(Error::Config(format!("unknown forecast mode `{other}` (expected frozen or walk)"))),
        }
    }
}

/// Level forecasts from one origin.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSet {
    /// Index of the last observed log-difference.
    pub origin: usize,
    pub horizon: usize,
    /// `[draw][h − 1]` simulated levels.
    pub draws: Vec<Vec<DVector<f64>>>,
    /// Posterior median level, `[h − 1]`.
    pub point: Vec<DVector<f64>>,
    /// Realized level, when the data reach `origin + h`.
    pub realized: Vec<Option<DVector<f64>>>,
}

impl ForecastSet {
    /// Assembles a set from simulated level paths, taking the elementwise
    /// median as the point forecast.
    pub fn from_draws(origin: usize, draws: Vec<Vec<DVector<f64>>>, realized: Vec<Option<DVector<f64>>>) -> Self {
        let horizon = realized.len();
        let n = draws.first().and_then(|d| d.first()).map(|v| v.len()).unwrap_or(0);
        let point = (0..horizon)
            .map(|h| DVector::from_fn(n, |i, _| quantile(&sorted_copy(draws.iter().map(|d| d[h][i])), 0.5)))
            .collect();
        ForecastSet { origin, horizon, draws, point, realized }
    }
}

/// Levels `start ⊙ exp(Σ_{i≤j} y_i)` for each step of a log-difference path.
pub fn accumulate_levels(start: &DVector<f64>, log_diffs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut cum = start.map(f64::ln);
    log_diffs
        .iter()
        .map(|d| {
            cum += d;
            cum.map(f64::exp)
        })
        .collect()
}

/// Observed levels at `origin + 1..=origin + horizon`, where available.
pub fn realized_levels(data: &crate::data::Dataset, origin: usize, horizon: usize) -> Vec<Option<DVector<f64>>> {
    (1..=horizon)
        .map(|h| (origin + h < data.len()).then(|| data.level_at_obs(origin + h).clone()))
        .collect()
}

/// Past observations and the conditioning exogenous path for iterating the
/// measurement equation forward from `origin`.
pub(crate) struct ForecastContext<'a> {
    pub y: &'a [DVector<f64>],
    pub x: &'a [f64],
    pub origin: usize,
    pub exo: &'a [f64],
    pub k: usize,
}

impl<'a> ForecastContext<'a> {
    pub fn new(data: &'a crate::data::Dataset, origin: usize, horizon: usize, exo: &'a [f64], k: usize) -> Result<Self> {
        if exo.len() < horizon {
            return Err(Error::ExoPathTooShort { need: horizon, have: exo.len() });
        }
        if origin >= data.len() || origin + 1 < k {
            return Err(Error::Config(format!(
                "forecast origin {origin} needs {k} lags inside {} observations",
                data.len()
            )));
        }
        Ok(ForecastContext { y: &data.y, x: &data.x, origin, exo, k })
    }

    fn x_at(&self, t: usize) -> f64 {
        if t > self.origin {
            self.exo[t - self.origin - 1]
        } else {
            self.x[t]
        }
    }

    /// Iterates forward `horizon` steps; `next` supplies the coefficients and
    /// the shock for each step and returns the simulated log-differences.
    pub fn run<F>(&self, horizon: usize, mut next: F) -> Result<Vec<DVector<f64>>>
    where
        F: FnMut(usize) -> Result<(CoefAt, DVector<f64>)>,
    {
        let mut path: Vec<DVector<f64>> = Vec::with_capacity(horizon);
        for j in 1..=horizon {
            let t = self.origin + j;
            let y_lags: Vec<DVector<f64>> = (1..=self.k)
                .map(|l| if t - l > self.origin { path[t - l - self.origin - 1].clone() } else { self.y[t - l].clone() })
                .collect();
            let x_window: Vec<f64> = (0..=self.k).map(|i| self.x_at(t - i)).collect();
            let (coef, shock) = next(j)?;
            path.push(coef.fitted(&y_lags, &x_window) + shock);
        }
        Ok(path)
    }
}

/// Simulates level forecasts, one path per retained draw, conditional on the
/// exogenous log-differences `exo` for `origin + 1..=origin + horizon`.
///
/// Draws use the parameters at `origin`, or at the end of the estimated
/// window when the origin lies beyond it.
#[allow(clippy::too_many_arguments)]
pub fn forecast(
    records: &[ChainRecord],
    start: usize,
    data: &crate::data::Dataset,
    origin: usize,
    horizon: usize,
    exo: &[f64],
    mode: ForecastMode,
    rng: &mut RngStream,
) -> Result<ForecastSet> {
    let first = records.first().ok_or(Error::EmptyChain)?;
    let layout = first.layout();
    let ctx = ForecastContext::new(data, origin, horizon, exo, layout.k)?;
    let len = first.coef.path.len();
    if origin < start {
        return Err(Error::Config(format!("forecast origin {origin} precedes the estimation window at {start}")));
    }
    let step = (origin - start).min(len - 1);
    let start_level = data.level_at_obs(origin).clone();
    let mut draws = Vec::with_capacity(records.len());
    for rec in records {
        let mut coef = rec.coef.path[step].clone();
        let mut alpha = rec.cov.alpha[step].clone();
        let mut log_vol = rec.cov.log_vol[step].clone();
        let mut state = coef.to_state(&layout);
        let state_cov = crate::numkit::SymMatrix::symmetrized(rec.hyper.coef_state_cov());
        let path = ctx.run(horizon, |_| {
            if mode == ForecastMode::Walk {
                state = sample_mvn(&state, &state_cov, rng)?;
                coef = CoefAt::from_state(&layout, &state, rec.theta.as_ref());
                for (i, g) in rec.hyper.g.iter().enumerate() {
                    let eq = i + 1;
                    let off = layout.alpha_offset(eq);
                    let cur = alpha.rows(off, eq).into_owned();
                    alpha.rows_mut(off, eq).copy_from(&sample_mvn(&cur, g, rng)?);
                }
                log_vol = sample_mvn(&log_vol, &rec.hyper.w, rng)?;
            }
            let a_inv = invert_unit_lower(&a_from_alpha(&alpha, layout.n));
            let e = standard_normal_vector(layout.n, rng);
            let shock = a_inv * e.component_mul(&log_vol.map(f64::exp));
            Ok((coef.clone(), shock))
        })?;
        draws.push(accumulate_levels(&start_level, &path));
    }
    Ok(ForecastSet::from_draws(origin, draws, realized_levels(data, origin, horizon)))
}

/// Recomputes `D_0` for every step of a constrained record from its `θ`.
pub fn constraint_residual(record: &ChainRecord) -> Option<f64> {
    let theta = record.theta.as_ref()?;
    Some(
        record
            .coef
            .path
            .iter()
            .map(|c| (implied_d0(theta, &c.b, &c.d[1..]) - &c.d[0]).amax())
            .fold(0.0, f64::max),
    )
}

/// Mean and sample standard deviation of absolute level errors, per
/// variable and step.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub variables: Vec<String>,
    pub horizon: usize,
    /// `n × horizon`.
    pub mean: DMatrix<f64>,
    /// `n × horizon`; `NaN` when a step has a single realized value.
    pub std: DMatrix<f64>,
    /// Realized origins per step.
    pub counts: Vec<usize>,
}

/// Mean and sample (`n − 1`) standard deviation, summed in sorted order so
/// the result does not depend on the order of the inputs.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let sorted = sorted_copy(values.iter().copied());
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let dev = sorted_copy(sorted.iter().map(|v| (v - mean) * (v - mean)));
    let std = if sorted.len() > 1 { (dev.iter().sum::<f64>() / (n - 1.0)).sqrt() } else { f64::NAN };
    (mean, std)
}

/// Absolute errors `|point − realized|` of the point forecasts, summarized
/// over origins.
pub fn error_table(sets: &[ForecastSet], variables: &[String], horizon: usize) -> Result<ErrorTable> {
    let n = variables.len();
    let mut mean = DMatrix::zeros(n, horizon);
    let mut std = DMatrix::zeros(n, horizon);
    let mut counts = vec![0; horizon];
    for h in 0..horizon {
        let pairs: Vec<(&DVector<f64>, &DVector<f64>)> = sets
            .iter()
            .filter_map(|s| match (s.point.get(h), s.realized.get(h)) {
                (Some(p), Some(Some(r))) => Some((p, r)),
                _ => None,
            })
            .collect();
        if pairs.is_empty() {
            return Err(Error::NoRealizedValues);
        }
        counts[h] = pairs.len();
        for i in 0..n {
            let errors: Vec<f64> = pairs.iter().map(|(p, r)| (p[i] - r[i]).abs()).collect();
            let (m, s) = mean_std(&errors);
            mean[(i, h)] = m;
            std[(i, h)] = s;
        }
    }
    Ok(ErrorTable { variables: variables.to_vec(), horizon, mean, std, counts })
}
