//! The individual conditional draws of the sampler.
//!
//! Every block except the mixture indicators and the hyperparameters reduces
//! to a random-walk state-space model handled by [`crate::statespace`].

use nalgebra::{DMatrix, DVector};

use super::mixture::MixtureTable;
use crate::error::{Error, Result};
use crate::model::{obs_cov_from, transform_observation, CoefAt, CovState, Hyperparams, Layout};
use crate::numkit::{sample_categorical_log, sample_inverse_wishart, sample_mvn, spd_inverse, RngStream, SymMatrix};
use crate::priors::{IwPrior, PriorSpec};
use crate::statespace::{kalman_filter, simulation_smoother, LinearGaussianSystem};

/// Offset inside `log(v² + offset)` keeping the squared-log transform finite.
pub const DEFAULT_VOL_OFFSET: f64 = 1e-3;

/// Observed series with the estimation window `start..y.len()`.
///
/// Step `s` of every path corresponds to observation `start + s`.
#[derive(Clone, Copy, Debug)]
pub struct Observations<'a> {
    pub y: &'a [DVector<f64>],
    pub x: &'a [f64],
    pub k: usize,
    pub start: usize,
}

impl<'a> Observations<'a> {
    pub fn new(y: &'a [DVector<f64>], x: &'a [f64], k: usize, start: usize) -> Result<Self> {
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch(format!("{} endogenous vs {} exogenous observations", y.len(), x.len())));
        }
        if start < k || start >= y.len() {
            return Err(Error::InsufficientTrainingData { got: y.len(), need: start.max(k) + 1 });
        }
        Ok(Observations { y, x, k, start })
    }

    pub fn steps(&self) -> usize {
        self.y.len() - self.start
    }

    pub fn time(&self, step: usize) -> usize {
        self.start + step
    }

    pub fn y_lags(&self, t: usize) -> Vec<DVector<f64>> {
        (1..=self.k).map(|j| self.y[t - j].clone()).collect()
    }

    pub fn x_lags(&self, t: usize) -> Vec<f64> {
        (1..=self.k).map(|i| self.x[t - i]).collect()
    }

    /// `[x_t, x_{t-1}, …, x_{t-k}]`.
    pub fn x_window(&self, t: usize) -> Vec<f64> {
        (0..=self.k).map(|i| self.x[t - i]).collect()
    }

    /// `u_t = y_t − fitted` for every step.
    pub fn residuals(&self, coefs: &[CoefAt]) -> Vec<DVector<f64>> {
        coefs
            .iter()
            .enumerate()
            .map(|(s, c)| {
                let t = self.time(s);
                let mut u = &self.y[t] - &c.c;
                for (j, b) in c.b.iter().enumerate() {
                    u.gemv(-1.0, b, &self.y[t - j - 1], 1.0);
                }
                for (i, d) in c.d.iter().enumerate() {
                    u.axpy(-self.x[t - i], d, 1.0);
                }
                u
            })
            .collect()
    }
}

/// Per-(time, equation) mixture component indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndicatorPath {
    pub s: Vec<Vec<u8>>,
}

/// Draws the coefficient state path; returns raw state vectors in the
/// layout's ordering (use [`CoefAt::from_state`] to unpack).
///
/// `theta` must be given exactly when the layout is constrained.
pub fn draw_coefficients(
    obs: &Observations<'_>,
    layout: &Layout,
    cov: &CovState,
    hyper: &Hyperparams,
    theta: Option<&DVector<f64>>,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let h = obs_covs(&cov.alpha, &cov.log_vol);
    draw_coefficients_given(obs, layout, &h, hyper, theta, prior, rng)
}

/// [`draw_coefficients`] with the observation covariances `H_t` already
/// assembled.
pub fn draw_coefficients_given(
    obs: &Observations<'_>,
    layout: &Layout,
    obs_cov: &[DMatrix<f64>],
    hyper: &Hyperparams,
    theta: Option<&DVector<f64>>,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let steps = obs.steps();
    if obs_cov.len() != steps {
        return Err(Error::DimensionMismatch(format!("{} covariances for {steps} steps", obs_cov.len())));
    }
    let mut observations = Vec::with_capacity(steps);
    let mut design = Vec::with_capacity(steps);
    let mut y_lags = Vec::with_capacity(obs.k);
    for s in 0..steps {
        let t = obs.time(s);
        y_lags.clear();
        y_lags.extend((1..=obs.k).map(|j| obs.y[t - j].clone()));
        let (lhs, z) = transform_observation(layout, &obs.y[t], &y_lags, obs.x[t], &obs.x_lags(t), theta)?;
        observations.push(lhs);
        design.push(z);
    }
    let sys = LinearGaussianSystem {
        observations,
        design,
        obs_cov: obs_cov.to_vec(),
        state_cov: hyper.coef_state_cov(),
        init_mean: prior.coef_mean.clone(),
        init_cov: prior.coef_cov.as_matrix().clone(),
    };
    let filt = kalman_filter(&sys)?;
    simulation_smoother(&filt, &sys.state_cov, rng)
}

/// Draws the free elements of `A_t`, equation by equation.
///
/// For equation `i ≥ 2`: `u_{i,t} = −Σ_{j<i} α_{ij,t} u_{j,t} + σ_{i,t} e_{i,t}`
/// with innovation covariance `G_i`.
pub fn draw_covariance_factors(
    residuals: &[DVector<f64>],
    log_vol: &[DVector<f64>],
    hyper: &Hyperparams,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let steps = residuals.len();
    let n = prior.layout.n;
    let dim = prior.layout.alpha_dim();
    let mut alpha = vec![DVector::zeros(dim); steps];
    for i in 1..n {
        let off = prior.layout.alpha_offset(i);
        let sys = LinearGaussianSystem {
            observations: residuals.iter().map(|u| DVector::from_element(1, u[i])).collect(),
            design: residuals.iter().map(|u| DMatrix::from_fn(1, i, |_, j| -u[j])).collect(),
            obs_cov: log_vol.iter().map(|h| DMatrix::from_element(1, 1, (2.0 * h[i]).exp())).collect(),
            state_cov: hyper.g[i - 1].as_matrix().clone(),
            init_mean: prior.alpha_mean.rows(off, i).into_owned(),
            init_cov: prior.alpha_cov.view((off, off), (i, i)).into_owned(),
        };
        let filt = kalman_filter(&sys)?;
        let path = simulation_smoother(&filt, &sys.state_cov, rng)?;
        for (a, p) in alpha.iter_mut().zip(path) {
            a.rows_mut(off, i).copy_from(&p);
        }
    }
    Ok(alpha)
}

/// `y*_{i,t} = log((A_t u_t)_i² + offset)`.
pub fn transformed_residuals(residuals: &[DVector<f64>], alpha: &[DVector<f64>], offset: f64) -> Vec<DVector<f64>> {
    residuals
        .iter()
        .zip(alpha)
        .map(|(u, a)| {
            let n = u.len();
            let am = crate::model::a_from_alpha(a, n);
            (am * u).map(|v| (v * v + offset).ln())
        })
        .collect()
}

/// Independently per `(t, i)`, draws the mixture component with probability
/// proportional to `q_c N(y*_{i,t} | 2h_{i,t} + m_c, v_c²)`, normalized in
/// log space.
pub fn draw_mixture_indicators(
    ystar: &[DVector<f64>],
    log_vol: &[DVector<f64>],
    table: &MixtureTable,
    rng: &mut RngStream,
) -> Result<IndicatorPath> {
    let mut s = Vec::with_capacity(ystar.len());
    let mut lw = vec![0.0; table.len()];
    for (ys, h) in ystar.iter().zip(log_vol) {
        let mut row = Vec::with_capacity(ys.len());
        for i in 0..ys.len() {
            if table.len() == 1 {
                row.push(0);
                continue;
            }
            let resid = ys[i] - 2.0 * h[i];
            for (c, w) in lw.iter_mut().enumerate() {
                *w = table.log_weight(c, resid);
            }
            row.push(sample_categorical_log(&lw, rng)? as u8);
        }
        s.push(row);
    }
    Ok(IndicatorPath { s })
}

/// Draws the log-volatility path given the mixture indicators:
/// `y*_t − m_{s_t} = 2 h_t + ε_t`, `ε_t ~ N(0, diag(v²_{s_t}))`, with
/// random-walk innovation covariance `W`.
pub fn draw_volatilities(
    ystar: &[DVector<f64>],
    indicators: &IndicatorPath,
    w: &SymMatrix,
    prior: &PriorSpec,
    table: &MixtureTable,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let n = prior.layout.n;
    let steps = ystar.len();
    let mut observations = Vec::with_capacity(steps);
    let mut obs_cov = Vec::with_capacity(steps);
    for (ys, s) in ystar.iter().zip(&indicators.s) {
        observations.push(DVector::from_fn(n, |i, _| ys[i] - table.get(s[i] as usize).mean));
        obs_cov.push(DMatrix::from_fn(n, n, |i, j| if i == j { table.get(s[i] as usize).var } else { 0.0 }));
    }
    let sys = LinearGaussianSystem {
        observations,
        design: vec![DMatrix::identity(n, n) * 2.0; steps],
        obs_cov,
        state_cov: w.as_matrix().clone(),
        init_mean: prior.log_vol_mean.clone(),
        init_cov: prior.log_vol_cov.as_matrix().clone(),
    };
    let filt = kalman_filter(&sys)?;
    simulation_smoother(&filt, &sys.state_cov, rng)
}

/// Sum of outer products of first differences along a path.
pub fn increment_scatter<I>(path: I, dim: usize) -> (DMatrix<f64>, usize)
where
    I: IntoIterator<Item = DVector<f64>>,
{
    let mut scatter = DMatrix::zeros(dim, dim);
    let mut count = 0;
    let mut prev: Option<DVector<f64>> = None;
    for cur in path {
        if let Some(p) = prev {
            let d = &cur - p;
            scatter += &d * d.transpose();
            count += 1;
        }
        prev = Some(cur);
    }
    (scatter, count)
}

/// [`increment_scatter`] of rows `off..off + dim` of every element.
fn scatter_rows(path: &[DVector<f64>], off: usize, dim: usize) -> (DMatrix<f64>, usize) {
    let mut scatter = DMatrix::zeros(dim, dim);
    let mut delta = vec![0.0; dim];
    for w in path.windows(2) {
        for (i, d) in delta.iter_mut().enumerate() {
            *d = w[1][off + i] - w[0][off + i];
        }
        for c in 0..dim {
            for r in 0..dim {
                scatter[(r, c)] += delta[r] * delta[c];
            }
        }
    }
    (scatter, path.len().saturating_sub(1))
}

/// Inverse-Wishart conditional: `IW(prior scale + Σ ΔΔᵀ, prior dof + #increments)`.
pub fn iw_posterior(prior: &IwPrior, scatter: &DMatrix<f64>, count: usize) -> IwPrior {
    IwPrior {
        scale: SymMatrix::symmetrized(prior.scale.as_matrix() + scatter),
        dof: prior.dof + count as f64,
    }
}

/// Draws all innovation covariances from their inverse-Wishart conditionals.
pub fn draw_hyperparams(
    coef_states: &[DVector<f64>],
    alpha: &[DVector<f64>],
    log_vol: &[DVector<f64>],
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<Hyperparams> {
    let layout = &prior.layout;
    let cb = layout.cb_dim();
    let dd = layout.d_dim();
    let draw = |p: &IwPrior, (scatter, count): (DMatrix<f64>, usize), rng: &mut RngStream| {
        let post = iw_posterior(p, &scatter, count);
        sample_inverse_wishart(&post.scale, post.dof, rng)
    };
    let q = draw(&prior.q, scatter_rows(coef_states, 0, cb), rng)?;
    let q_tilde = draw(&prior.q_tilde, scatter_rows(coef_states, cb, dd), rng)?;
    let mut g = Vec::with_capacity(prior.g.len());
    for (idx, gp) in prior.g.iter().enumerate() {
        let i = idx + 1;
        g.push(draw(gp, scatter_rows(alpha, layout.alpha_offset(i), i), rng)?);
    }
    let w = draw(&prior.w, scatter_rows(log_vol, 0, layout.n), rng)?;
    Ok(Hyperparams { q, q_tilde, g, w })
}

/// One likelihood term `Ỹ_t = C_t θ + u_t`, `u_t ~ N(0, H_t)`.
#[derive(Clone, Debug)]
pub struct ElasticityTerm {
    pub design: DMatrix<f64>,
    pub obs_cov: DMatrix<f64>,
    pub target: DVector<f64>,
}

/// Conditional posterior of `θ`:
/// `U⁻¹ = U₀⁻¹ + Σ Cᵀ H⁻¹ C`, `μ = U (U₀⁻¹ μ₀ + Σ Cᵀ H⁻¹ Ỹ)`.
pub fn elasticity_posterior<'a, I>(
    terms: I,
    prior_mean: &DVector<f64>,
    prior_cov: &SymMatrix,
) -> Result<(DVector<f64>, SymMatrix)>
where
    I: IntoIterator<Item = &'a ElasticityTerm>,
{
    let prior_prec = spd_inverse(prior_cov)?;
    let mut prec = prior_prec.as_matrix().clone();
    let mut lin = prior_prec.as_matrix() * prior_mean;
    for term in terms {
        let h_inv = spd_inverse(&SymMatrix::symmetrized(term.obs_cov.clone()))?;
        let ct_hinv = term.design.transpose() * h_inv.as_matrix();
        prec += &ct_hinv * &term.design;
        lin += &ct_hinv * &term.target;
    }
    let cov = spd_inverse(&SymMatrix::symmetrized(prec))?;
    let mean = cov.as_matrix() * lin;
    Ok((mean, cov))
}

/// Builds the `θ` likelihood terms from the current coefficient and
/// covariance paths: `C_t = x_t [I − Σ B_{j,t}]`,
/// `Ỹ_t = y_t − c_t − Σ B_{j,t} y_{t−j} − Σ_{i≥1} D_{i,t}(x_{t−i} − x_t)`.
pub fn elasticity_terms(obs: &Observations<'_>, coefs: &[CoefAt], cov: &CovState) -> Vec<ElasticityTerm> {
    let h = obs_covs(&cov.alpha, &cov.log_vol);
    elasticity_terms_given(obs, coefs, &h)
}

pub fn elasticity_terms_given(obs: &Observations<'_>, coefs: &[CoefAt], obs_cov: &[DMatrix<f64>]) -> Vec<ElasticityTerm> {
    coefs
        .iter()
        .zip(obs_cov)
        .enumerate()
        .map(|(s, (c, h))| {
            let t = obs.time(s);
            let xt = obs.x[t];
            let mut target = &obs.y[t] - &c.c;
            for (j, b) in c.b.iter().enumerate() {
                target.gemv(-1.0, b, &obs.y[t - j - 1], 1.0);
            }
            for i in 1..=obs.k {
                target.axpy(-(obs.x[t - i] - xt), &c.d[i], 1.0);
            }
            ElasticityTerm { design: c.long_run_matrix() * xt, obs_cov: h.clone(), target }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ElasticityDraw {
    pub theta: DVector<f64>,
    pub post_mean: DVector<f64>,
    pub post_cov: SymMatrix,
}

pub fn draw_elasticity(
    obs: &Observations<'_>,
    coefs: &[CoefAt],
    cov: &CovState,
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<ElasticityDraw> {
    let h = obs_covs(&cov.alpha, &cov.log_vol);
    draw_elasticity_given(obs, coefs, &h, prior, rng)
}

/// [`draw_elasticity`] with the observation covariances `H_t` already
/// assembled.
pub fn draw_elasticity_given(
    obs: &Observations<'_>,
    coefs: &[CoefAt],
    obs_cov: &[DMatrix<f64>],
    prior: &PriorSpec,
    rng: &mut RngStream,
) -> Result<ElasticityDraw> {
    let terms = elasticity_terms_given(obs, coefs, obs_cov);
    let (post_mean, post_cov) = elasticity_posterior(&terms, &prior.theta_mean, &prior.theta_cov)?;
    let theta = sample_mvn(&post_mean, &post_cov, rng)?;
    Ok(ElasticityDraw { theta, post_mean, post_cov })
}

/// `H_t` for every step.
pub fn obs_covs(alpha: &[DVector<f64>], log_vol: &[DVector<f64>]) -> Vec<DMatrix<f64>> {
    alpha.iter().zip(log_vol).map(|(a, h)| obs_cov_from(a, h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::MixtureComponent;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn iw(dim: usize, scale: f64, dof: f64) -> IwPrior {
        IwPrior { scale: SymMatrix::identity(dim).scaled(scale), dof }
    }

    /// Hand-built prior with isotropic initial-state covariances.
    fn prior(layout: Layout, coef_var: f64, alpha_var: f64) -> PriorSpec {
        let n = layout.n;
        PriorSpec {
            layout,
            t0: 10,
            coef_mean: DVector::zeros(layout.coef_dim()),
            coef_cov: SymMatrix::identity(layout.coef_dim()).scaled(coef_var),
            alpha_mean: DVector::from_element(layout.alpha_dim(), 0.3),
            alpha_cov: SymMatrix::identity(layout.alpha_dim()).scaled(alpha_var),
            log_vol_mean: DVector::zeros(n),
            log_vol_cov: SymMatrix::identity(n),
            q: iw(layout.cb_dim(), 0.01, 10.0),
            q_tilde: iw(layout.d_dim(), 0.01, 10.0),
            g: (1..n).map(|i| iw(i, 0.01, 10.0)).collect(),
            w: iw(n, 0.01, 10.0),
            theta_mean: DVector::zeros(n),
            theta_cov: SymMatrix::identity(n),
        }
    }

    fn zero_hyper(layout: &Layout) -> Hyperparams {
        Hyperparams {
            q: SymMatrix::zeros(layout.cb_dim()),
            q_tilde: SymMatrix::zeros(layout.d_dim()),
            g: (1..layout.n).map(SymMatrix::zeros).collect(),
            w: SymMatrix::zeros(layout.n),
        }
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var)
    }

    #[test]
    fn elasticity_posterior_hand_fixture() {
        let term = ElasticityTerm {
            design: DMatrix::from_element(1, 1, 2.0),
            obs_cov: DMatrix::from_element(1, 1, 1.0),
            target: DVector::from_element(1, 4.0),
        };
        let (mean, cov) = elasticity_posterior([&term], &DVector::zeros(1), &SymMatrix::identity(1)).unwrap();
        assert!((cov.as_matrix()[(0, 0)] - 0.2).abs() < 1e-12);
        assert!((mean[0] - 1.6).abs() < 1e-12);
    }

    #[test]
    fn elasticity_without_terms_is_the_prior() {
        let m0 = DVector::from_vec(vec![0.05, 0.02]);
        let u0 = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.02, 0.02, 0.3])).unwrap();
        let (mean, cov) = elasticity_posterior(std::iter::empty(), &m0, &u0).unwrap();
        assert!((&mean - &m0).amax() < 1e-12);
        assert!((cov.as_matrix() - u0.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn elasticity_with_huge_noise_is_near_prior() {
        let terms: Vec<_> = (0..50)
            .map(|t| ElasticityTerm {
                design: DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.8]) * (t as f64 * 0.1).sin(),
                obs_cov: DMatrix::identity(2, 2) * 1e12,
                target: DVector::from_vec(vec![3.0, -2.0]),
            })
            .collect();
        let m0 = DVector::from_vec(vec![0.05, 0.02]);
        let (mean, cov) = elasticity_posterior(&terms, &m0, &SymMatrix::identity(2)).unwrap();
        assert!((&mean - &m0).amax() < 1e-8);
        assert!((cov.as_matrix() - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn single_component_table_gives_index_zero() {
        let ystar = vec![DVector::from_vec(vec![-3.0, 4.0]); 20];
        let h = vec![DVector::zeros(2); 20];
        let mut rng = RngStream::new(3);
        let s = draw_mixture_indicators(&ystar, &h, &MixtureTable::single(-1.27, 4.93), &mut rng).unwrap();
        assert!(s.s.iter().flatten().all(|&c| c == 0));
    }

    #[test]
    fn matching_component_dominates() {
        let comps: Vec<_> = (0..7).map(|c| MixtureComponent { prob: 1.0 / 7.0, mean: 10.0 * c as f64, var: 1.0 }).collect();
        let comps = {
            let mut c = comps;
            let rest: f64 = c[..6].iter().map(|x| x.prob).sum();
            c[6].prob = 1.0 - rest;
            c
        };
        let table = MixtureTable::new(comps).unwrap();
        // Neighbours are 10 apart: weight ratio exp(-50).
        let h = 0.4;
        let ystar = vec![DVector::from_element(1, 2.0 * h + 30.0); 2000];
        let hs = vec![DVector::from_element(1, h); 2000];
        let mut rng = RngStream::new(8);
        let s = draw_mixture_indicators(&ystar, &hs, &table, &mut rng).unwrap();
        assert!(s.s.iter().all(|r| r[0] == 3));
    }

    #[test]
    fn extreme_transformed_values_still_draw() {
        let table = MixtureTable::ksc();
        let ystar = vec![DVector::from_vec(vec![700.0, -700.0])];
        let h = vec![DVector::zeros(2)];
        let mut rng = RngStream::new(1);
        let s = draw_mixture_indicators(&ystar, &h, &table, &mut rng).unwrap();
        assert!(s.s[0].iter().all(|&c| (c as usize) < table.len()));
    }

    proptest! {
        #[test]
        fn indicator_draws_ignore_a_common_log_weight_shift(shift in -500.0f64..500.0, seed in 0u64..1000) {
            let table = MixtureTable::ksc();
            let ystar = vec![DVector::from_vec(vec![-2.0, 0.5, 1.3]); 5];
            let h = vec![DVector::from_vec(vec![0.1, -0.3, 0.0]); 5];
            let shifted: Vec<_> = ystar.iter().map(|v| v.add_scalar(2.0 * shift)).collect();
            let hs: Vec<_> = h.iter().map(|v| v.add_scalar(shift)).collect();
            let a = draw_mixture_indicators(&ystar, &h, &table, &mut RngStream::new(seed)).unwrap();
            let b = draw_mixture_indicators(&shifted, &hs, &table, &mut RngStream::new(seed)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_volatility_innovations_give_constant_path() {
        let layout = Layout::new(2, 1, true);
        let p = prior(layout, 1.0, 1.0);
        let table = MixtureTable::ksc();
        let ystar: Vec<_> = (0..40).map(|t| DVector::from_vec(vec![(t as f64).sin() - 1.0, (t as f64 * 0.3).cos()])).collect();
        let mut rng = RngStream::new(2);
        let s = draw_mixture_indicators(&ystar, &vec![DVector::zeros(2); 40], &table, &mut rng).unwrap();
        let h = draw_volatilities(&ystar, &s, &SymMatrix::zeros(2), &p, &table, &mut rng).unwrap();
        for v in &h {
            assert!((v - &h[0]).amax() < 1e-9);
        }
    }

    #[test]
    fn noiseless_component_inverts_exactly() {
        let layout = Layout::new(1, 1, true);
        let p = prior(layout, 1.0, 1.0);
        let table = MixtureTable::single(-1.27, 0.0);
        let ystar: Vec<_> = (0..30).map(|t| DVector::from_element(1, (t as f64 * 0.4).sin() * 3.0)).collect();
        let mut rng = RngStream::new(4);
        let s = draw_mixture_indicators(&ystar, &vec![DVector::zeros(1); 30], &table, &mut rng).unwrap();
        let h = draw_volatilities(&ystar, &s, &SymMatrix::identity(1).scaled(0.1), &p, &table, &mut rng).unwrap();
        for (v, y) in h.iter().zip(&ystar) {
            assert!((v[0] - (y[0] + 1.27) / 2.0).abs() < 1e-9, "{} vs {}", v[0], (y[0] + 1.27) / 2.0);
        }
    }

    #[test]
    fn constant_volatility_is_recovered() {
        let layout = Layout::new(1, 1, true);
        let p = prior(layout, 1.0, 1.0);
        let table = MixtureTable::ksc();
        let sigma = 0.5;
        let mut rng = RngStream::new(21);
        let resid: Vec<_> = (0..300).map(|_| DVector::from_element(1, sigma * rng.standard_normal())).collect();
        let ystar = transformed_residuals(&resid, &vec![DVector::zeros(0); 300], 0.0);
        let w = SymMatrix::identity(1).scaled(1e-4);
        let mut h = vec![DVector::zeros(1); 300];
        let mut draws = Vec::new();
        for it in 0..400 {
            let s = draw_mixture_indicators(&ystar, &h, &table, &mut rng).unwrap();
            h = draw_volatilities(&ystar, &s, &w, &p, &table, &mut rng).unwrap();
            if it >= 100 {
                draws.extend(h.iter().map(|v| v[0].exp()));
            }
        }
        let sorted = crate::numkit::sorted_copy(draws);
        let median = crate::numkit::quantile(&sorted, 0.5);
        assert!((median / sigma - 1.0).abs() < 0.15, "median {median}");
    }

    #[test]
    fn increments_and_posterior_scale() {
        let path = vec![DVector::from_element(1, 1.0), DVector::from_element(1, 3.0)];
        let (scatter, count) = increment_scatter(path.clone(), 1);
        assert_eq!(count, path.len() - 1);
        let post = iw_posterior(&iw(1, 0.5, 4.0), &scatter, count);
        assert!((post.scale.as_matrix()[(0, 0)] - (0.5 + 4.0)).abs() < 1e-15);
        assert_eq!(post.dof, 5.0);
        assert_eq!(scatter_rows(&path, 0, 1), (scatter, 1));
    }

    #[test]
    fn zero_increments_match_analytic_iw_mean() {
        let layout = Layout::new(1, 1, true);
        let p = prior(layout, 1.0, 1.0);
        let steps = 12;
        let coef = vec![DVector::from_element(layout.coef_dim(), 0.2); steps];
        let alpha = vec![DVector::zeros(0); steps];
        let log_vol = vec![DVector::from_element(1, -1.0); steps];
        let mut rng = RngStream::new(5);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| draw_hyperparams(&coef, &alpha, &log_vol, &p, &mut rng).unwrap().w.as_matrix()[(0, 0)])
            .collect();
        // IW(S, ν) in one dimension: mean S/(ν−2), variance 2S²/((ν−2)²(ν−4)).
        let nu = p.w.dof + (steps - 1) as f64;
        let s = p.w.scale.as_matrix()[(0, 0)];
        let exact = s / (nu - 2.0);
        let sd = (2.0 * s * s / ((nu - 2.0).powi(2) * (nu - 4.0))).sqrt();
        let (m, _) = mean_var(&draws);
        assert!((m - exact).abs() < 4.0 * sd / (draws.len() as f64).sqrt(), "{m} vs {exact}");
    }

    #[test]
    fn single_equation_has_no_covariance_factors() {
        let layout = Layout::new(1, 2, true);
        let p = prior(layout, 1.0, 1.0);
        let resid = vec![DVector::from_element(1, 0.3); 9];
        let log_vol = vec![DVector::zeros(1); 9];
        let mut rng = RngStream::new(6);
        let before = rng.position();
        let alpha = draw_covariance_factors(&resid, &log_vol, &zero_hyper(&layout), &p, &mut rng).unwrap();
        assert_eq!(rng.position(), before);
        assert!(alpha.iter().all(|a| a.is_empty()));
    }

    #[test]
    fn covariance_factor_matches_weighted_least_squares() {
        let layout = Layout::new(2, 1, true);
        let p = prior(layout, 1.0, 1e8);
        let mut rng = RngStream::new(9);
        let steps = 80;
        let log_vol: Vec<_> = (0..steps).map(|t| DVector::from_vec(vec![0.0, -7.0 + 0.5 * (t as f64 * 0.2).sin()])).collect();
        let resid: Vec<_> = log_vol
            .iter()
            .map(|h| {
                let u1 = rng.standard_normal();
                DVector::from_vec(vec![u1, 0.7 * u1 + h[1].exp() * rng.standard_normal()])
            })
            .collect();
        // u2 = −α u1 + σ e, weights σ⁻².
        let (mut num, mut den) = (0.0, 0.0);
        for (u, h) in resid.iter().zip(&log_vol) {
            let w = (-2.0 * h[1]).exp();
            num += w * -u[0] * u[1];
            den += w * u[0] * u[0];
        }
        let wls = num / den;
        let alpha = draw_covariance_factors(&resid, &log_vol, &zero_hyper(&layout), &p, &mut rng).unwrap();
        for a in &alpha {
            assert!((a[0] - alpha[0][0]).abs() < 1e-9);
        }
        // Posterior sd is den^{-1/2}, about 1e-4 here.
        assert!((alpha[0][0] - wls).abs() < 5.0 / den.sqrt(), "{} vs {wls}", alpha[0][0]);
    }

    #[test]
    fn zero_regressor_leaves_alpha_at_its_prior() {
        let layout = Layout::new(2, 1, true);
        let p = prior(layout, 1.0, 0.25);
        let resid = vec![DVector::from_vec(vec![0.0, 1.3]); 6];
        let log_vol = vec![DVector::zeros(2); 6];
        let mut rng = RngStream::new(10);
        let first: Vec<f64> = (0..10_000)
            .map(|_| draw_covariance_factors(&resid, &log_vol, &zero_hyper(&layout), &p, &mut rng).unwrap()[0][0])
            .collect();
        let (m, v) = mean_var(&first);
        let se = (0.25f64 / first.len() as f64).sqrt();
        assert!((m - 0.3).abs() < 4.0 * se, "mean {m}");
        assert!((v / 0.25 - 1.0).abs() < 0.06, "var {v}");
    }

    /// One-lag univariate unconstrained series: state `[c, b, d0, d1]`.
    fn univariate(len: usize, rng: &mut RngStream) -> (Vec<DVector<f64>>, Vec<f64>) {
        let x: Vec<f64> = (0..len).map(|t| (t as f64 * 0.37).sin() * 0.5 + 0.1 * rng.standard_normal()).collect();
        let mut y = vec![DVector::from_element(1, 0.1)];
        for t in 1..len {
            let v = 0.2 + 0.5 * y[t - 1][0] + 0.3 * x[t] - 0.1 * x[t - 1] + 0.05 * rng.standard_normal();
            y.push(DVector::from_element(1, v));
        }
        (y, x)
    }

    #[test]
    fn coefficient_draw_reaches_gls_limit() {
        let layout = Layout::new(1, 1, false);
        let p = prior(layout, 100.0, 1.0);
        let mut rng = RngStream::new(12);
        let (y, x) = univariate(60, &mut rng);
        let obs = Observations::new(&y, &x, 1, 1).unwrap();
        let h = vec![DMatrix::from_element(1, 1, 1e-6); obs.steps()];
        let states = draw_coefficients_given(&obs, &layout, &h, &zero_hyper(&layout), None, &p, &mut rng).unwrap();
        let rows = obs.steps();
        let design = DMatrix::from_fn(rows, 4, |s, j| {
            let t = obs.time(s);
            [1.0, y[t - 1][0], x[t], x[t - 1]][j]
        });
        let target = DVector::from_fn(rows, |s, _| y[obs.time(s)][0]);
        // Stacked GLS with the N(0, 100 I) prior folded in.
        let prec = design.transpose() * &design / 1e-6 + DMatrix::identity(4, 4) / 100.0;
        let cov = prec.try_inverse().unwrap();
        let gls = &cov * (design.transpose() * target / 1e-6);
        for s in &states {
            assert!((s - &states[0]).amax() < 1e-9, "{}", (s - &states[0]).amax());
        }
        for j in 0..4 {
            assert!((states[0][j] - gls[j]).abs() < 5.0 * cov[(j, j)].sqrt(), "{} vs {gls}", states[0]);
        }
        assert!((&states[0] - &gls).amax() < 1e-2);
    }

    #[test]
    fn single_uninformative_point_returns_the_prior() {
        let layout = Layout::new(1, 1, false);
        let mut p = prior(layout, 1.0, 1.0);
        p.coef_mean = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        let mut rng = RngStream::new(13);
        let (y, x) = univariate(5, &mut rng);
        let obs = Observations::new(&y, &x, 1, 4).unwrap();
        let h = vec![DMatrix::from_element(1, 1, 1e12)];
        let draws: Vec<DVector<f64>> = (0..10_000)
            .map(|_| draw_coefficients_given(&obs, &layout, &h, &zero_hyper(&layout), None, &p, &mut rng).unwrap().remove(0))
            .collect();
        for j in 0..4 {
            let (m, v) = mean_var(&draws.iter().map(|d| d[j]).collect::<Vec<_>>());
            assert!((m - p.coef_mean[j]).abs() < 4.0 / 100.0, "coordinate {j}: mean {m}");
            assert!((v - 1.0).abs() < 0.06, "coordinate {j}: var {v}");
        }
    }
}
