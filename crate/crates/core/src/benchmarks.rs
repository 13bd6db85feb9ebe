//! Comparison methods and the rolling-origin evaluation.
//!
//! Three methods share one protocol: the constrained TVP-VAR-X, the same
//! sampler with the constraint switched off, and a constant-coefficient VARX
//! fitted by OLS. Every method sees the same origins, the same realized
//! exogenous paths and the same random streams.

use nalgebra::DMatrix;

use crate::analysis::{accumulate_levels, error_table, forecast, realized_levels, ErrorTable, ForecastContext, ForecastMode, ForecastSet};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gibbs::{merge_chains, run_chains, ChainRecord, SamplerOptions};
use crate::model::{CoefAt, ModelConfig};
use crate::numkit::RngStream;
use crate::ols::fit_varx;
use crate::priors::{calibrate, PriorOverrides};

/// Stream offset for forecast randomness, kept clear of chain streams.
pub const FORECAST_STREAM_BASE: u64 = 1 << 32;

/// Constant-coefficient VARX estimated by OLS.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantVarx {
    pub coef: CoefAt,
    pub resid_cov: DMatrix<f64>,
    /// Observations the fit used.
    pub n_obs: usize,
}

/// OLS over every observation with `k` lags available.
pub fn fit_constant_varx(data: &Dataset, k: usize) -> Result<ConstantVarx> {
    if data.len() <= k {
        return Err(Error::InsufficientTrainingData { got: data.len(), need: k + 1 });
    }
    let fit = fit_varx(&data.y, &data.x, k, k..data.len())?;
    Ok(ConstantVarx { coef: fit.coefficients(), resid_cov: fit.resid_cov.clone(), n_obs: data.len() - k })
}

/// Deterministic level forecast: the measurement equation iterated with
/// zero shocks.
pub fn forecast_constant_varx(
    model: &ConstantVarx,
    data: &Dataset,
    origin: usize,
    horizon: usize,
    exo: &[f64],
) -> Result<ForecastSet> {
    let n = model.coef.n();
    let ctx = ForecastContext::new(data, origin, horizon, exo, model.coef.k())?;
    let path = ctx.run(horizon, |_| Ok((model.coef.clone(), nalgebra::DVector::zeros(n))))?;
    let levels = accumulate_levels(data.level_at_obs(origin), &path);
    Ok(ForecastSet::from_draws(origin, vec![levels], realized_levels(data, origin, horizon)))
}

/// A fitted model ready to forecast.
#[derive(Clone, Debug)]
pub enum Fitted {
    Varx(ConstantVarx),
    Tvp { records: Vec<ChainRecord>, start: usize, mode: ForecastMode },
}

impl Fitted {
    pub fn forecast(
        &self,
        data: &Dataset,
        origin: usize,
        horizon: usize,
        exo: &[f64],
        rng: &mut RngStream,
    ) -> Result<ForecastSet> {
        match self {
            Fitted::Varx(m) => forecast_constant_varx(m, data, origin, horizon, exo),
            Fitted::Tvp { records, start, mode } => forecast(records, *start, data, origin, horizon, exo, *mode, rng),
        }
    }
}

/// An estimation method under comparison.
pub trait Method {
    fn name(&self) -> &str;
    /// Fits on `train`, which ends at the forecast origin.
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Fitted>;
}

#[derive(Clone, Debug)]
pub struct VarxMethod {
    pub name: String,
    pub k: usize,
}

impl Method for VarxMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&self, train: &Dataset, _seed: u64) -> Result<Fitted> {
        fit_constant_varx(train, self.k).map(Fitted::Varx)
    }
}

/// The TVP-VAR-X sampler, constrained or not according to `model`.
#[derive(Clone, Debug)]
pub struct TvpMethod {
    pub name: String,
    pub model: ModelConfig,
    pub overrides: PriorOverrides,
    pub options: SamplerOptions,
    pub chains: usize,
    pub workers: usize,
    pub mode: ForecastMode,
}

impl Method for TvpMethod {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Fitted> {
        let cfg = ModelConfig { seed, ..self.model.clone() };
        let prior = calibrate(&train.y, &train.x, &cfg, &self.overrides)?;
        let outputs = run_chains(&train.y, &train.x, &cfg, &prior, &self.options, self.chains, self.workers)?;
        Ok(Fitted::Tvp { records: merge_chains(outputs), start: cfg.t0, mode: self.mode })
    }
}

/// Rolling-origin evaluation window. Origins are log-difference indices;
/// each origin forecasts `1..=horizon` steps, truncated where the data end.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPlan {
    pub first_origin: usize,
    pub last_origin: usize,
    pub horizon: usize,
    /// Re-estimate at every origin instead of reusing the fit at the first.
    pub refit: bool,
    pub seed: u64,
}

impl EvalPlan {
    pub fn origins(&self, data: &Dataset) -> Vec<usize> {
        let last = self.last_origin.min(data.len().saturating_sub(2));
        if self.first_origin > last {
            return Vec::new();
        }
        (self.first_origin..=last).collect()
    }
}

/// Mean/std absolute-error tables, one per method, on a shared layout.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkTable {
    pub variables: Vec<String>,
    pub horizon: usize,
    pub methods: Vec<String>,
    pub tables: Vec<ErrorTable>,
}

impl BenchmarkTable {
    pub fn table(&self, method: &str) -> Option<&ErrorTable> {
        self.methods.iter().position(|m| m == method).map(|i| &self.tables[i])
    }
}

/// Forecast sets of one method at every origin of the plan.
pub fn rolling_forecasts(method: &dyn Method, data: &Dataset, plan: &EvalPlan) -> Result<Vec<ForecastSet>> {
    let origins = plan.origins(data);
    let mut reused: Option<Fitted> = None;
    let mut sets = Vec::with_capacity(origins.len());
    for &origin in &origins {
        let fitted = if plan.refit {
            method.fit(&data.truncated(origin + 1), plan.seed.wrapping_add(origin as u64))?
        } else {
            match reused.take() {
                Some(f) => f,
                None => method.fit(&data.truncated(plan.first_origin + 1), plan.seed)?,
            }
        };
        let h = plan.horizon.min(data.len() - 1 - origin);
        let exo = &data.x[origin + 1..origin + 1 + h];
        let mut rng = RngStream::with_stream(plan.seed, FORECAST_STREAM_BASE + origin as u64);
        sets.push(fitted.forecast(data, origin, h, exo, &mut rng)?);
        if !plan.refit {
            reused = Some(fitted);
        }
    }
    Ok(sets)
}

/// Runs every method over the plan and tabulates their errors.
pub fn evaluate(methods: &[&dyn Method], data: &Dataset, plan: &EvalPlan) -> Result<BenchmarkTable> {
    let mut tables = Vec::with_capacity(methods.len());
    for m in methods {
        let sets = rolling_forecasts(*m, data, plan)?;
        tables.push(error_table(&sets, &data.endo_names, plan.horizon)?);
    }
    Ok(BenchmarkTable {
        variables: data.endo_names.clone(),
        horizon: plan.horizon,
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        tables,
    })
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    /// Constraint flag is ignored; both variants are run.
    pub model: ModelConfig,
    pub overrides: PriorOverrides,
    pub options: SamplerOptions,
    pub chains: usize,
    pub workers: usize,
    pub mode: ForecastMode,
    pub plan: EvalPlan,
}

pub const CONSTRAINED: &str = "constrained";
pub const UNCONSTRAINED: &str = "tvp";
pub const CONSTANT_VAR: &str = "var";

/// Constrained TVP-VAR-X, unconstrained TVP-VAR-X and constant VARX on one
/// plan, in that column order.
pub fn run_benchmark_suite(data: &Dataset, cfg: &SuiteConfig) -> Result<BenchmarkTable> {
    let tvp = |name: &str, constrained: bool| TvpMethod {
        name: name.into(),
        model: ModelConfig { constraint_enabled: constrained, ..cfg.model.clone() },
        overrides: cfg.overrides.clone(),
        options: cfg.options.clone(),
        chains: cfg.chains,
        workers: cfg.workers,
        mode: cfg.mode,
    };
    let constrained = tvp(CONSTRAINED, true);
    let unconstrained = tvp(UNCONSTRAINED, false);
    let var = VarxMethod { name: CONSTANT_VAR.into(), k: cfg.model.k };
    evaluate(&[&constrained, &unconstrained, &var], data, &cfg.plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{drifting_theta_spec, simulate_dgp, CoefPathSpec, ExoSpec};
    use nalgebra::DVector;

    fn noiseless(periods: usize) -> (Dataset, CoefAt) {
        let mut spec = drifting_theta_spec(periods, 0.0);
        spec.shock_scale = 0.0;
        spec.exo = ExoSpec::Supplied((0..periods).map(|i| (i as f64 * 0.7).sin() * 0.1 + (i as f64 * 1.3).cos() * 0.04).collect());
        let sim = simulate_dgp(&spec, &mut RngStream::new(1)).unwrap();
        (sim.dataset, sim.coefs[0].clone())
    }

    fn coef_gap(a: &CoefAt, b: &CoefAt) -> f64 {
        let mut gap = (&a.c - &b.c).amax();
        for (x, y) in a.b.iter().zip(&b.b) {
            gap = gap.max((x - y).amax());
        }
        for (x, y) in a.d.iter().zip(&b.d) {
            gap = gap.max((x - y).amax());
        }
        gap
    }

    #[test]
    fn noiseless_data_recovered_exactly() {
        let (data, truth) = noiseless(60);
        let m = fit_constant_varx(&data, 1).unwrap();
        assert!(coef_gap(&m.coef, &truth) < 1e-10);
        assert_eq!(m.n_obs, 59);
    }

    #[test]
    fn zero_exogenous_series_is_collinear() {
        let mut spec = drifting_theta_spec(60, 0.0);
        spec.exo = ExoSpec::Supplied(vec![0.0; 60]);
        let sim = simulate_dgp(&spec, &mut RngStream::new(2)).unwrap();
        assert!(matches!(fit_constant_varx(&sim.dataset, 1), Err(Error::CollinearRegressors(_))));
    }

    #[test]
    fn white_noise_lags_insignificant() {
        let mut spec = drifting_theta_spec(4000, 0.0);
        spec.theta = None;
        spec.coef = CoefPathSpec::Constant(CoefAt::zeros(2, 1));
        spec.alpha_start = DVector::zeros(1);
        let sim = simulate_dgp(&spec, &mut RngStream::new(3)).unwrap();
        let fit = fit_varx(&sim.dataset.y, &sim.dataset.x, 1, 1..sim.dataset.len()).unwrap();
        let coef = fit.coefficients();
        for r in 0..2 {
            for c in 0..2 {
                let se = (fit.resid_cov[(r, r)] * fit.xtx_inv[(1 + c, 1 + c)]).sqrt();
                assert!(coef.b[0][(r, c)].abs() < 3.0 * se, "B[{r},{c}] = {}", coef.b[0][(r, c)]);
            }
        }
    }

    #[test]
    fn zero_model_forecasts_last_level() {
        let (data, _) = noiseless(30);
        let m = ConstantVarx { coef: CoefAt::zeros(2, 1), resid_cov: DMatrix::identity(2, 2), n_obs: 0 };
        let set = forecast_constant_varx(&m, &data, 20, 3, &[0.1, 0.2, 0.3]).unwrap();
        for p in &set.point {
            assert!((p - data.level_at_obs(20)).amax() < 1e-12);
        }
    }

    #[test]
    fn one_step_matches_fitted_equation() {
        let (data, _) = noiseless(40);
        let m = fit_constant_varx(&data.truncated(30), 1).unwrap();
        let origin = 30;
        let set = forecast_constant_varx(&m, &data, origin, 1, &data.x[31..32]).unwrap();
        let dy = m.coef.fitted(&[data.y[origin].clone()], &[data.x[31], data.x[30]]);
        let expected = data.level_at_obs(origin).component_mul(&dy.map(f64::exp));
        assert!((&set.point[0] - expected).amax() < 1e-12);
        // Noiseless data: the forecast is the realized level.
        assert!((&set.point[0] - set.realized[0].as_ref().unwrap()).amax() < 1e-9);
    }

    #[test]
    fn identical_methods_give_identical_columns() {
        let sim = simulate_dgp(&drifting_theta_spec(80, 0.1), &mut RngStream::new(5)).unwrap();
        let a = VarxMethod { name: "a".into(), k: 1 };
        let b = VarxMethod { name: "b".into(), k: 1 };
        let c = VarxMethod { name: "c".into(), k: 1 };
        let plan = EvalPlan { first_origin: 60, last_origin: 78, horizon: 5, refit: true, seed: 1 };
        let t = evaluate(&[&a, &b, &c], &sim.dataset, &plan).unwrap();
        assert_eq!(t.tables[0], t.tables[1]);
        assert_eq!(t.tables[1], t.tables[2]);
        assert_eq!(t.tables[0].counts, vec![19, 18, 17, 16, 15]);
        assert_eq!(t.methods, vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_window_has_no_realized_values() {
        let sim = simulate_dgp(&drifting_theta_spec(40, 0.1), &mut RngStream::new(6)).unwrap();
        let a = VarxMethod { name: "a".into(), k: 1 };
        let plan = EvalPlan { first_origin: 35, last_origin: 30, horizon: 5, refit: false, seed: 1 };
        assert!(matches!(evaluate(&[&a], &sim.dataset, &plan), Err(Error::NoRealizedValues)));
    }

    #[test]
    fn reuse_policy_fits_once_on_first_window() {
        use std::cell::Cell;
        struct Counting<'a>(VarxMethod, &'a Cell<usize>);
        impl Method for Counting<'_> {
            fn name(&self) -> &str {
                self.0.name()
            }
            fn fit(&self, train: &Dataset, seed: u64) -> Result<Fitted> {
                self.1.set(self.1.get() + 1);
                assert_eq!(train.len(), 51);
                self.0.fit(train, seed)
            }
        }
        let sim = simulate_dgp(&drifting_theta_spec(70, 0.1), &mut RngStream::new(7)).unwrap();
        let calls = Cell::new(0);
        let m = Counting(VarxMethod { name: "v".into(), k: 1 }, &calls);
        let plan = EvalPlan { first_origin: 50, last_origin: 60, horizon: 2, refit: false, seed: 1 };
        rolling_forecasts(&m, &sim.dataset, &plan).unwrap();
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn fitted_tvp_forecasts_through_analysis() {
        let sim = simulate_dgp(&drifting_theta_spec(60, 0.0), &mut RngStream::new(8)).unwrap();
        let data = &sim.dataset;
        let mut c = CoefAt::zeros(2, 1);
        c.c = DVector::from_vec(vec![0.01, 0.0]);
        let records = vec![crate::gibbs::ChainRecord {
            chain: 0,
            iteration: 1,
            coef: crate::model::CoefState { layout: crate::model::Layout::new(2, 1, false), path: vec![c; 20] },
            cov: crate::model::CovState {
                alpha: vec![DVector::zeros(1); 20],
                log_vol: vec![DVector::from_element(2, f64::NEG_INFINITY); 20],
            },
            hyper: crate::model::Hyperparams {
                q: crate::numkit::SymMatrix::zeros(6),
                q_tilde: crate::numkit::SymMatrix::zeros(4),
                g: vec![crate::numkit::SymMatrix::zeros(1)],
                w: crate::numkit::SymMatrix::zeros(2),
            },
            theta: None,
            indicators: crate::gibbs::IndicatorPath { s: vec![] },
        }];
        let fitted = Fitted::Tvp { records, start: 30, mode: ForecastMode::Frozen };
        let set = fitted.forecast(data, 55, 2, &data.x[56..58], &mut RngStream::new(1)).unwrap();
        let growth = (&set.point[1] - data.level_at_obs(55)).component_div(data.level_at_obs(55));
        assert!((growth[0] - (0.02f64.exp() - 1.0)).abs() < 1e-12);
        assert!(growth[1].abs() < 1e-12);
    }
}
