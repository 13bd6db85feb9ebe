//! Gibbs sampler for the TVP-VAR-X, with or without the constant long-run
//! multiplier constraint.
//!
//! One sweep, conditional on the current `θ`:
//!
//! 1. log volatilities given the mixture indicators;
//! 2. coefficient paths (`c`, `B`, and the free `D` lags) given `A`, `Σ`, `θ`;
//! 3. covariance factors `α` given the new coefficients and `Σ`;
//! 4. innovation covariances `Q`, `Q̃`, `G`, `W` given all paths;
//! 5. mixture indicators given everything else;
//!
//! and then `θ` given the rest (constrained mode only). In unconstrained mode
//! `D_0` is part of the coefficient state and step 6 is skipped.

mod blocks;
mod mixture;

use std::collections::VecDeque;

use nalgebra::DVector;

pub use blocks::{
    draw_coefficients, draw_coefficients_given, draw_covariance_factors, draw_elasticity, draw_elasticity_given,
    draw_hyperparams, draw_mixture_indicators, draw_volatilities, elasticity_posterior, elasticity_terms,
    elasticity_terms_given, increment_scatter, iw_posterior, obs_covs, transformed_residuals, ElasticityDraw,
    ElasticityTerm, IndicatorPath, Observations, DEFAULT_VOL_OFFSET,
};
pub use mixture::{MixtureComponent, MixtureTable};

use crate::error::{Error, Result};
use crate::model::{implied_d0, CoefAt, CoefState, CovState, Hyperparams, Layout, ModelConfig, DEFAULT_SINGULAR_COND};
use crate::numkit::{condition_number, RngStream};
use crate::priors::PriorSpec;

/// One retained draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRecord {
    pub chain: usize,
    pub iteration: usize,
    pub coef: CoefState,
    pub cov: CovState,
    pub hyper: Hyperparams,
    /// `None` in unconstrained mode.
    pub theta: Option<DVector<f64>>,
    pub indicators: IndicatorPath,
}

impl ChainRecord {
    pub fn layout(&self) -> Layout {
        self.coef.layout
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerOptions {
    pub vol_offset: f64,
    pub singular_cond: f64,
    pub max_redraws: usize,
    pub divergence_window: usize,
    pub divergence_fraction: f64,
    pub table: MixtureTable,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            vol_offset: DEFAULT_VOL_OFFSET,
            singular_cond: DEFAULT_SINGULAR_COND,
            max_redraws: 10,
            divergence_window: 500,
            divergence_fraction: 0.10,
            table: MixtureTable::ksc(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub iterations: usize,
    /// Sweeps in which at least one coefficient draw was rejected as
    /// near-singular.
    pub singular_sweeps: usize,
    /// Total rejected coefficient draws.
    pub redraws: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub records: Vec<ChainRecord>,
    pub diagnostics: ChainDiagnostics,
}

/// Mutable sampler state. Paths are indexed by step `s`, i.e. observation
/// `obs.start + s`.
pub struct Sampler<'a> {
    obs: Observations<'a>,
    layout: Layout,
    prior: &'a PriorSpec,
    options: SamplerOptions,
    coef_states: Vec<DVector<f64>>,
    coefs: Vec<CoefAt>,
    alpha: Vec<DVector<f64>>,
    log_vol: Vec<DVector<f64>>,
    hyper: Hyperparams,
    theta: Option<DVector<f64>>,
    indicators: Option<IndicatorPath>,
    window: VecDeque<bool>,
    diagnostics: ChainDiagnostics,
}

impl<'a> Sampler<'a> {
    /// Starts every path at its prior mean and every innovation covariance at
    /// its prior scale divided by the prior degrees of freedom.
    pub fn new(obs: Observations<'a>, prior: &'a PriorSpec, options: SamplerOptions) -> Result<Self> {
        let layout = prior.layout;
        if obs.k != layout.k || obs.y[0].len() != layout.n {
            return Err(Error::DimensionMismatch("observations do not match the prior layout".into()));
        }
        let steps = obs.steps();
        let theta = layout.constrained.then(|| prior.theta_mean.clone());
        let coef_states = vec![prior.coef_mean.clone(); steps];
        let coefs = coef_states.iter().map(|s| CoefAt::from_state(&layout, s, theta.as_ref())).collect();
        let init = |p: &crate::priors::IwPrior| p.scale.scaled(1.0 / p.dof);
        let hyper = Hyperparams {
            q: init(&prior.q),
            q_tilde: init(&prior.q_tilde),
            g: prior.g.iter().map(init).collect(),
            w: init(&prior.w),
        };
        Ok(Sampler {
            obs,
            layout,
            prior,
            options,
            coef_states,
            coefs,
            alpha: vec![prior.alpha_mean.clone(); steps],
            log_vol: vec![prior.log_vol_mean.clone(); steps],
            hyper,
            theta,
            indicators: None,
            window: VecDeque::new(),
            diagnostics: ChainDiagnostics::default(),
        })
    }

    pub fn theta(&self) -> Option<&DVector<f64>> {
        self.theta.as_ref()
    }

    pub fn diagnostics(&self) -> &ChainDiagnostics {
        &self.diagnostics
    }

    fn cov_state(&self) -> CovState {
        CovState { alpha: self.alpha.clone(), log_vol: self.log_vol.clone() }
    }

    fn is_near_singular(&self, states: &[DVector<f64>]) -> bool {
        let n = self.layout.n;
        states.iter().any(|s| {
            let mut lr = nalgebra::DMatrix::<f64>::identity(n, n);
            for lag in 1..=self.layout.k {
                for r in 0..n {
                    for c in 0..n {
                        lr[(r, c)] -= s[self.layout.idx_b(lag, r, c)];
                    }
                }
            }
            !(condition_number(&lr) < self.options.singular_cond)
        })
    }

    /// Runs one full sweep.
    pub fn sweep(&mut self, rng: &mut RngStream) -> Result<()> {
        let table = &self.options.table;
        let offset = self.options.vol_offset;
        let iteration = self.diagnostics.iterations;

        let resid = self.obs.residuals(&self.coefs);
        let ystar = transformed_residuals(&resid, &self.alpha, offset);
        if self.indicators.is_none() {
            self.indicators = Some(draw_mixture_indicators(&ystar, &self.log_vol, table, rng)?);
        }
        let indicators = self.indicators.as_ref().expect("initialised above");
        self.log_vol = draw_volatilities(&ystar, indicators, &self.hyper.w, self.prior, table, rng)?;

        let h = obs_covs(&self.alpha, &self.log_vol);
        let mut attempts = 0;
        let states = loop {
            let draw =
                draw_coefficients_given(&self.obs, &self.layout, &h, &self.hyper, self.theta.as_ref(), self.prior, rng)?;
            if !self.is_near_singular(&draw) {
                break draw;
            }
            attempts += 1;
            self.diagnostics.redraws += 1;
            if attempts >= self.options.max_redraws {
                return Err(Error::ChainDiverged {
                    iteration,
                    reason: format!("{attempts} consecutive near-singular coefficient draws"),
                });
            }
        };
        self.track_singularity(attempts > 0, iteration)?;
        self.coefs = states.iter().map(|s| CoefAt::from_state(&self.layout, s, self.theta.as_ref())).collect();
        self.coef_states = states;

        let resid = self.obs.residuals(&self.coefs);
        self.alpha = draw_covariance_factors(&resid, &self.log_vol, &self.hyper, self.prior, rng)?;
        self.hyper = draw_hyperparams(&self.coef_states, &self.alpha, &self.log_vol, self.prior, rng)?;

        let ystar = transformed_residuals(&resid, &self.alpha, offset);
        self.indicators = Some(draw_mixture_indicators(&ystar, &self.log_vol, &self.options.table, rng)?);

        if self.layout.constrained {
            let h = obs_covs(&self.alpha, &self.log_vol);
            let draw = draw_elasticity_given(&self.obs, &self.coefs, &h, self.prior, rng)?;
            for c in &mut self.coefs {
                c.d[0] = implied_d0(&draw.theta, &c.b, &c.d[1..]);
            }
            self.theta = Some(draw.theta);
        }
        self.diagnostics.iterations += 1;
        Ok(())
    }

    fn track_singularity(&mut self, hit: bool, iteration: usize) -> Result<()> {
        if hit {
            self.diagnostics.singular_sweeps += 1;
        }
        self.window.push_back(hit);
        if self.window.len() > self.options.divergence_window {
            self.window.pop_front();
        }
        let hits = self.window.iter().filter(|h| **h).count();
        if self.window.len() == self.options.divergence_window
            && hits as f64 > self.options.divergence_fraction * self.options.divergence_window as f64
        {
            return Err(Error::ChainDiverged {
                iteration,
                reason: format!("{hits} of the last {} sweeps hit a near-singular I - sum(B)", self.window.len()),
            });
        }
        Ok(())
    }

    pub fn record(&self, chain: usize) -> ChainRecord {
        ChainRecord {
            chain,
            iteration: self.diagnostics.iterations,
            coef: CoefState { layout: self.layout, path: self.coefs.clone() },
            cov: self.cov_state(),
            hyper: self.hyper.clone(),
            theta: self.theta.clone(),
            indicators: self.indicators.clone().unwrap_or(IndicatorPath { s: Vec::new() }),
        }
    }
}

/// Progress callback: `(iterations done, total iterations)`.
pub type Progress<'a> = &'a mut dyn FnMut(usize, usize);

/// Runs one chain on `y[..]`, `x[..]` with likelihood over `t0..T`.
pub fn run_chain(
    y: &[DVector<f64>],
    x: &[f64],
    cfg: &ModelConfig,
    prior: &PriorSpec,
    options: &SamplerOptions,
    chain: usize,
    rng: &mut RngStream,
    mut progress: Option<Progress<'_>>,
) -> Result<ChainOutput> {
    cfg.validate()?;
    if y.len() <= cfg.t0 + cfg.k {
        return Err(Error::InsufficientTrainingData { got: y.len(), need: cfg.t0 + cfg.k + 1 });
    }
    if prior.layout != cfg.layout() {
        return Err(Error::Config("prior was calibrated for a different layout".into()));
    }
    let obs = Observations::new(y, x, cfg.k, cfg.t0)?;
    let mut sampler = Sampler::new(obs, prior, options.clone())?;
    let total = cfg.mcmc.total_iterations();
    let mut records = Vec::with_capacity(cfg.mcmc.draws);
    for it in 1..=total {
        sampler.sweep(rng)?;
        if it > cfg.mcmc.burn_in && (it - cfg.mcmc.burn_in).is_multiple_of(cfg.mcmc.thin) {
            records.push(sampler.record(chain));
        }
        if let Some(cb) = progress.as_mut() {
            cb(it, total);
        }
    }
    Ok(ChainOutput { records, diagnostics: sampler.diagnostics.clone() })
}

/// Runs `chains` independent chains, chain `c` on stream `c` of `cfg.seed`,
/// spread over `workers` threads. Results are returned in chain order.
pub fn run_chains(
    y: &[DVector<f64>],
    x: &[f64],
    cfg: &ModelConfig,
    prior: &PriorSpec,
    options: &SamplerOptions,
    chains: usize,
    workers: usize,
) -> Result<Vec<ChainOutput>> {
    let workers = workers.clamp(1, chains.max(1));
    let mut results: Vec<Option<Result<ChainOutput>>> = (0..chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..chains)
                        .step_by(workers)
                        .map(|c| {
                            let mut rng = RngStream::with_stream(cfg.seed, c as u64);
                            (c, run_chain(y, x, cfg, prior, options, c, &mut rng, None))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (c, r) in h.join().expect("chain worker panicked") {
                results[c] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every chain assigned")).collect()
}

/// Flattens chain outputs into one record list, chain by chain.
pub fn merge_chains(outputs: Vec<ChainOutput>) -> Vec<ChainRecord> {
    outputs.into_iter().flat_map(|o| o.records).collect()
}
