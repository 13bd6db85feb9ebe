//! Prior calibration by OLS on the training sample.
//!
//! The unrestricted constant VARX is fitted to the first `t0` observations.
//! Its point estimates become the prior means of the initial states, its
//! sampling covariances (inflated by `inflation`, default 4) their prior
//! covariances, and `κ² · t0 ·` the same covariances the inverse-Wishart
//! scales of the innovation covariances (with `t0` degrees of freedom).

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{long_run_multiplier, Layout, ModelConfig};
use crate::numkit::{cholesky_dense, SymMatrix};
use crate::ols::{fit_varx, VarxOls};

/// Floor applied to variances estimated from (near-)noiseless training data.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorOverrides {
    /// Diagonal of `U0`; one entry per endogenous variable, or a single
    /// entry broadcast to all. Defaults to 0.1.
    pub u0_diag: Vec<f64>,
    pub kappa_q: f64,
    pub kappa_q_tilde: f64,
    pub kappa_g: f64,
    pub kappa_w: f64,
    pub inflation: f64,
}

impl Default for PriorOverrides {
    fn default() -> Self {
        PriorOverrides {
            u0_diag: vec![0.1],
            kappa_q: 0.01,
            kappa_q_tilde: 0.01,
            kappa_g: 0.1,
            kappa_w: 0.01,
            inflation: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IwPrior {
    pub scale: SymMatrix,
    pub dof: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    pub layout: Layout,
    pub t0: usize,
    pub coef_mean: DVector<f64>,
    pub coef_cov: SymMatrix,
    pub alpha_mean: DVector<f64>,
    pub alpha_cov: SymMatrix,
    pub log_vol_mean: DVector<f64>,
    pub log_vol_cov: SymMatrix,
    pub q: IwPrior,
    pub q_tilde: IwPrior,
    /// One per equation `i ≥ 2`.
    pub g: Vec<IwPrior>,
    pub w: IwPrior,
    pub theta_mean: DVector<f64>,
    pub theta_cov: SymMatrix,
}

/// Adds the smallest diagonal jitter that makes `m` factorizable.
fn ensure_pd(m: DMatrix<f64>) -> SymMatrix {
    let mut m = SymMatrix::symmetrized(m).into_inner();
    if cholesky_dense(&m).is_ok() {
        return SymMatrix::symmetrized(m);
    }
    let d = m.nrows();
    let scale = (0..d).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let mut jitter = VARIANCE_FLOOR * scale;
    loop {
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if cholesky_dense(&m).is_ok() {
            return SymMatrix::symmetrized(m);
        }
        jitter *= 10.0;
    }
}

fn sub_block(m: &DMatrix<f64>, start: usize, len: usize) -> DMatrix<f64> {
    m.view((start, start), (len, len)).into_owned()
}

fn iw_prior(cov: &DMatrix<f64>, kappa: f64, t0: usize) -> IwPrior {
    let dim = cov.nrows();
    let dof = (t0 as f64).max(dim as f64 + 1.0);
    IwPrior { scale: ensure_pd(cov * (kappa * kappa * t0 as f64)), dof }
}

/// Calibrates the prior on `y[..t0]`, `x[..t0]`.
pub fn calibrate(y: &[DVector<f64>], x: &[f64], cfg: &ModelConfig, overrides: &PriorOverrides) -> Result<PriorSpec> {
    let need = ModelConfig::min_training(cfg.n, cfg.k);
    if cfg.t0 < need {
        return Err(Error::InsufficientTrainingData { got: cfg.t0, need });
    }
    if y.len() < cfg.t0 || x.len() < cfg.t0 {
        return Err(Error::InsufficientTrainingData { got: y.len().min(x.len()), need: cfg.t0 });
    }
    if y.iter().take(cfg.t0).any(|v| v.len() != cfg.n) {
        return Err(Error::DimensionMismatch(format!("observations must have length n={}", cfg.n)));
    }
    let layout = cfg.layout();
    let fit = fit_varx(y, x, cfg.k, cfg.k..cfg.t0)?;
    calibrate_from_ols(&fit, layout, cfg.t0, overrides)
}

pub fn calibrate_from_ols(fit: &VarxOls, layout: Layout, t0: usize, overrides: &PriorOverrides) -> Result<PriorSpec> {
    let n = layout.n;
    let coefs = fit.coefficients();
    let coef_mean = coefs.to_state(&layout);
    let v_state = fit.state_cov(&layout);
    let coef_cov = ensure_pd(&v_state * overrides.inflation);

    let cb = layout.cb_dim();
    let q = iw_prior(&sub_block(&v_state, 0, cb), overrides.kappa_q, t0);
    let q_tilde = iw_prior(&sub_block(&v_state, cb, layout.d_dim()), overrides.kappa_q_tilde, t0);

    // Triangular factorization of the residual covariance: Σ̂ = C Cᵀ,
    // A = diag(C) C⁻¹ is unit lower triangular with A Σ̂ Aᵀ = diag(C)².
    let mut resid_cov = fit.resid_cov.clone();
    for i in 0..n {
        resid_cov[(i, i)] = resid_cov[(i, i)].max(VARIANCE_FLOOR);
    }
    let chol = cholesky_dense(&ensure_pd(resid_cov).into_inner())?;
    let sd = DVector::from_fn(n, |i, _| chol[(i, i)]);
    let unit_l = DMatrix::from_fn(n, n, |i, j| chol[(i, j)] / sd[j]);
    let a = crate::model::invert_unit_lower(&unit_l);

    let mut alpha_mean = DVector::zeros(layout.alpha_dim());
    let mut alpha_cov = DMatrix::zeros(layout.alpha_dim(), layout.alpha_dim());
    let mut g = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let off = layout.alpha_offset(i);
        for j in 0..i {
            alpha_mean[off + j] = a[(i, j)];
        }
        // Regression of u_i on -u_{<i}: covariance σ_i² (U_<ᵀ U_<)⁻¹.
        let u_prev = DMatrix::from_fn(fit.residuals.len(), i, |r, j| fit.residuals[r][j]);
        let gram = ensure_pd(u_prev.transpose() * &u_prev);
        let gram_inv = crate::numkit::spd_inverse(&gram)?;
        let cov_i = gram_inv.as_matrix() * (sd[i] * sd[i]);
        alpha_cov.view_mut((off, off), (i, i)).copy_from(&(&cov_i * overrides.inflation));
        g.push(iw_prior(&cov_i, overrides.kappa_g, t0));
    }
    let alpha_cov = if layout.alpha_dim() > 0 { ensure_pd(alpha_cov) } else { SymMatrix::zeros(0) };

    let log_vol_mean = sd.map(f64::ln);
    let log_vol_cov = SymMatrix::identity(n);
    let w = iw_prior(&DMatrix::identity(n, n), overrides.kappa_w, t0);

    let theta_mean = long_run_multiplier(&coefs.b, &coefs.d)?;
    let u0 = match overrides.u0_diag.len() {
        1 => vec![overrides.u0_diag[0]; n],
        len if len == n => overrides.u0_diag.clone(),
        len => {
            return Err(Error::Config(format!("u0 has {len} entries, expected 1 or {n}")));
        }
    };
    if u0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Config("u0 entries must be positive".into()));
    }
    let theta_cov = SymMatrix::from_diagonal(&u0);

    Ok(PriorSpec {
        layout,
        t0,
        coef_mean,
        coef_cov,
        alpha_mean,
        alpha_cov,
        log_vol_mean,
        log_vol_cov,
        q,
        q_tilde,
        g,
        w,
        theta_mean,
        theta_cov,
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", parts.join(", "))
}

fn fmt_mat(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|r| fmt_vec(&m.row(r).iter().cloned().collect::<Vec<_>>()))
        .collect();
    format!("[{}]", rows.join(", "))
}

impl PriorSpec {
    /// Human-readable `key = value` audit document.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.layout.n);
        let _ = writeln!(s, "k = {}", self.layout.k);
        let _ = writeln!(s, "constrained = {}", self.layout.constrained);
        let _ = writeln!(s, "t0 = {}", self.t0);
        let _ = writeln!(s, "coef_mean = {}", fmt_vec(self.coef_mean.as_slice()));
        let _ = writeln!(s, "coef_cov = {}", fmt_mat(&self.coef_cov));
        let _ = writeln!(s, "alpha_mean = {}", fmt_vec(self.alpha_mean.as_slice()));
        let _ = writeln!(s, "alpha_cov = {}", fmt_mat(&self.alpha_cov));
        let _ = writeln!(s, "log_vol_mean = {}", fmt_vec(self.log_vol_mean.as_slice()));
        let _ = writeln!(s, "log_vol_cov = {}", fmt_mat(&self.log_vol_cov));
        let _ = writeln!(s, "q_scale = {}", fmt_mat(&self.q.scale));
        let _ = writeln!(s, "q_dof = {}", self.q.dof);
        let _ = writeln!(s, "q_tilde_scale = {}", fmt_mat(&self.q_tilde.scale));
        let _ = writeln!(s, "q_tilde_dof = {}", self.q_tilde.dof);
        for (i, g) in self.g.iter().enumerate() {
            let _ = writeln!(s, "g{}_scale = {}", i + 2, fmt_mat(&g.scale));
            let _ = writeln!(s, "g{}_dof = {}", i + 2, g.dof);
        }
        let _ = writeln!(s, "w_scale = {}", fmt_mat(&self.w.scale));
        let _ = writeln!(s, "w_dof = {}", self.w.dof);
        let _ = writeln!(s, "theta_mean = {}", fmt_vec(self.theta_mean.as_slice()));
        let _ = writeln!(s, "theta_cov = {}", fmt_mat(&self.theta_cov));
        s
    }
}
