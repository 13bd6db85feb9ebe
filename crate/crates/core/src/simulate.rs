//! Synthetic data from the TVP-VAR-X with stochastic volatility.
//!
//! Coefficients follow a supplied path, stay constant, or drift as random
//! walks; the covariance factors and log volatilities drift as random walks;
//! the exogenous log price is a Gaussian random walk unless supplied.
//! Pre-sample lags are zero.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Quarter};
use crate::error::{Error, Result};
use crate::model::{implied_d0, obs_cov_from, CoefAt, CovState};
use crate::numkit::RngStream;

/// Bound on `|y|` beyond which the simulation is declared explosive.
pub const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Clone, Debug, PartialEq)]
pub enum CoefPathSpec {
    Constant(CoefAt),
    /// Random walk from `start`; every element of `c`, `B` and `D` receives
    /// an independent `N(0, innovation_sd²)` increment per period.
    RandomWalk { start: CoefAt, innovation_sd: f64 },
    /// Explicit path, one entry per period.
    Paths(Vec<CoefAt>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExoSpec {
    /// Log price increments `x_t ~ N(drift, sd²)`.
    RandomWalk { drift: f64, sd: f64 },
    Supplied(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgpSpec {
    pub periods: usize,
    pub coef: CoefPathSpec,
    /// When set, every period's `D_0` is overwritten with the value implied
    /// by `θ`, the `B` blocks and `D_1..D_k`.
    pub theta: Option<DVector<f64>>,
    pub alpha_start: DVector<f64>,
    pub alpha_sd: f64,
    pub log_vol_start: DVector<f64>,
    pub log_vol_sd: f64,
    /// Scales the shocks `u_t`; zero gives a deterministic `y` path.
    pub shock_scale: f64,
    pub exo: ExoSpec,
    pub start: Quarter,
    pub start_levels: DVector<f64>,
    pub start_exo_level: f64,
    pub endo_names: Vec<String>,
    pub exo_name: String,
}

#[derive(Clone, Debug)]
pub struct Simulated {
    pub dataset: Dataset,
    /// True coefficients per log-difference observation.
    pub coefs: Vec<CoefAt>,
    pub cov: CovState,
}

fn add_noise_coef(c: &mut CoefAt, sd: f64, rng: &mut RngStream) {
    c.c.iter_mut().for_each(|v| *v += sd * rng.standard_normal());
    for b in &mut c.b {
        b.iter_mut().for_each(|v| *v += sd * rng.standard_normal());
    }
    for d in &mut c.d {
        d.iter_mut().for_each(|v| *v += sd * rng.standard_normal());
    }
}

pub fn simulate_dgp(spec: &DgpSpec, rng: &mut RngStream) -> Result<Simulated> {
    let periods = spec.periods;
    let n = spec.start_levels.len();
    let coefs_raw: Vec<CoefAt> = match &spec.coef {
        CoefPathSpec::Constant(c) => vec![c.clone(); periods],
        CoefPathSpec::Paths(p) => {
            if p.len() != periods {
                return Err(Error::DimensionMismatch(format!("{} coefficient periods for {periods} periods", p.len())));
            }
            p.clone()
        }
        CoefPathSpec::RandomWalk { start, innovation_sd } => {
            let mut cur = start.clone();
            let mut out = Vec::with_capacity(periods);
            for _ in 0..periods {
                add_noise_coef(&mut cur, *innovation_sd, rng);
                out.push(cur.clone());
            }
            out
        }
    };
    let k = coefs_raw.first().map(|c| c.k()).unwrap_or(1);
    if coefs_raw.iter().any(|c| c.n() != n || c.k() != k || c.d.len() != k + 1) {
        return Err(Error::DimensionMismatch("coefficient dimensions are inconsistent".into()));
    }
    let coefs: Vec<CoefAt> = coefs_raw
        .into_iter()
        .map(|mut c| {
            if let Some(theta) = &spec.theta {
                c.d[0] = implied_d0(theta, &c.b, &c.d[1..]);
            }
            c
        })
        .collect();

    let x: Vec<f64> = match &spec.exo {
        ExoSpec::RandomWalk { drift, sd } => (0..periods).map(|_| drift + sd * rng.standard_normal()).collect(),
        ExoSpec::Supplied(v) => {
            if v.len() < periods {
                return Err(Error::ExoPathTooShort { need: periods, have: v.len() });
            }
            v[..periods].to_vec()
        }
    };

    let mut alpha = Vec::with_capacity(periods);
    let mut log_vol = Vec::with_capacity(periods);
    let mut a_cur = spec.alpha_start.clone();
    let mut h_cur = spec.log_vol_start.clone();
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(periods);
    for t in 0..periods {
        a_cur.iter_mut().for_each(|v| *v += spec.alpha_sd * rng.standard_normal());
        h_cur.iter_mut().for_each(|v| *v += spec.log_vol_sd * rng.standard_normal());
        let y_lags: Vec<DVector<f64>> =
            (1..=k).map(|j| if t >= j { y[t - j].clone() } else { DVector::zeros(n) }).collect();
        let x_window: Vec<f64> = (0..=k).map(|i| if t >= i { x[t - i] } else { 0.0 }).collect();
        let mean = coefs[t].fitted(&y_lags, &x_window);
        let e = DVector::from_fn(n, |_, _| rng.standard_normal());
        let u = if spec.shock_scale == 0.0 {
            DVector::zeros(n)
        } else {
            let a = crate::model::a_from_alpha(&a_cur, n);
            let a_inv = crate::model::invert_unit_lower(&a);
            a_inv * DVector::from_fn(n, |i, _| h_cur[i].exp() * e[i]) * spec.shock_scale
        };
        let yt = mean + u;
        if let Some(v) = yt.iter().find(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD) {
            return Err(Error::ExplosiveSimulation { t, value: *v });
        }
        y.push(yt);
        alpha.push(a_cur.clone());
        log_vol.push(h_cur.clone());
    }

    let dataset = Dataset::from_log_differences(
        spec.start,
        spec.endo_names.clone(),
        spec.exo_name.clone(),
        spec.start_levels.clone(),
        spec.start_exo_level,
        &y,
        &x,
    )
    .map_err(|e| match e {
        Error::NonPositiveLevel { row, value, .. } => Error::ExplosiveSimulation { t: row, value },
        other => other,
    })?;
    Ok(Simulated { dataset, coefs, cov: CovState { alpha, log_vol } })
}

impl Simulated {
    /// True observation covariance `H_t` at each period.
    pub fn obs_covs(&self) -> Vec<DMatrix<f64>> {
        self.cov.alpha.iter().zip(&self.cov.log_vol).map(|(a, h)| obs_cov_from(a, h)).collect()
    }
}

/// A bivariate, one-lag design with constant long-run multiplier
/// `θ = [0.05, 0.02]` and smoothly drifting short-run dynamics, used by the
/// examples and tests.
pub fn drifting_theta_spec(periods: usize, drift: f64) -> DgpSpec {
    let theta = DVector::from_vec(vec![0.05, 0.02]);
    let path = (0..periods)
        .map(|t| {
            let phase = t as f64 / periods.max(1) as f64 * std::f64::consts::TAU;
            let b = DMatrix::from_row_slice(
                2,
                2,
                &[0.35 + drift * phase.sin(), 0.05, 0.02 - 0.5 * drift * phase.cos(), 0.25 + drift * phase.cos()],
            );
            let d1 = DVector::from_vec(vec![0.02 + 0.5 * drift * phase.sin(), -0.005]);
            CoefAt { c: DVector::from_vec(vec![0.001, 0.004]), b: vec![b], d: vec![DVector::zeros(2), d1] }
        })
        .collect();
    DgpSpec {
        periods,
        coef: CoefPathSpec::Paths(path),
        theta: Some(theta),
        alpha_start: DVector::from_vec(vec![-0.2]),
        alpha_sd: 0.0,
        log_vol_start: DVector::from_vec(vec![(0.02f64).ln(), (0.008f64).ln()]),
        log_vol_sd: 0.0,
        shock_scale: 1.0,
        exo: ExoSpec::RandomWalk { drift: 0.0, sd: 0.12 },
        start: Quarter::new(1980, 1),
        start_levels: DVector::from_vec(vec![100.0, 100.0]),
        start_exo_level: 50.0,
        endo_names: vec!["er".into(), "gdp".into()],
        exo_name: "oil".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::long_run_multiplier;

    #[test]
    fn deterministic_without_shocks() {
        let mut spec = drifting_theta_spec(50, 0.1);
        spec.shock_scale = 0.0;
        spec.exo = ExoSpec::Supplied((0..50).map(|i| (i as f64).sin() * 0.1).collect());
        let a = simulate_dgp(&spec, &mut RngStream::new(1)).unwrap();
        let b = simulate_dgp(&spec, &mut RngStream::new(2)).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn seeded_runs_reproduce() {
        let spec = drifting_theta_spec(80, 0.1);
        let a = simulate_dgp(&spec, &mut RngStream::new(3)).unwrap();
        let b = simulate_dgp(&spec, &mut RngStream::new(3)).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn constraint_consistent_truth() {
        let spec = drifting_theta_spec(60, 0.1);
        let sim = simulate_dgp(&spec, &mut RngStream::new(4)).unwrap();
        for c in &sim.coefs {
            let th = long_run_multiplier(&c.b, &c.d).unwrap();
            assert!((th - spec.theta.as_ref().unwrap()).amax() < 1e-12);
        }
    }

    #[test]
    fn explosive_spec_is_reported() {
        let mut spec = drifting_theta_spec(400, 0.0);
        spec.theta = None;
        let mut c = CoefAt::zeros(2, 1);
        c.b[0] = DMatrix::identity(2, 2) * 1.8;
        c.c = DVector::from_vec(vec![1.0, 1.0]);
        spec.coef = CoefPathSpec::Constant(c);
        let err = simulate_dgp(&spec, &mut RngStream::new(5)).unwrap_err();
        assert!(matches!(err, Error::ExplosiveSimulation { .. }));
    }
}
