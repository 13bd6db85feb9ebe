//! Model types for the TVP-VAR-X with one exogenous regressor,
//!
//! ```text
//! y_t = c_t + Σ_{j=1..k} B_{j,t} y_{t-j} + Σ_{i=0..k} D_{i,t} x_{t-i} + u_t,
//! ```
//!
//! and the algebra tying the coefficients to a constant long-run multiplier
//! `θ = [I − Σ_j B_{j,t}]⁻¹ Σ_i D_{i,t}`.
//!
//! # State ordering
//!
//! The coefficient state vector at each `t` is laid out as
//!
//! 1. the intercept `c` (`n` values);
//! 2. the VAR blocks, lag-major, then row-major within a block:
//!    `B_1[0,0], B_1[0,1], …, B_1[n-1,n-1], B_2[0,0], …`;
//! 3. the exogenous coefficients by lag. With the constraint enabled `D_0` is
//!    implied and the state holds `D_1..D_k`; without it the state holds
//!    `D_0..D_k`.
//!
//! The free elements `α` of the unit lower-triangular `A_t` are stacked by
//! rows: `a_21, a_31, a_32, a_41, …`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{condition_number, SymMatrix};

/// Condition-number ceiling for `I − Σ B_j` before a draw is deemed singular.
pub const DEFAULT_SINGULAR_COND: f64 = 1e12;

/// Dimensions and mode, enough to index into state vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub k: usize,
    pub constrained: bool,
}

impl Layout {
    pub fn new(n: usize, k: usize, constrained: bool) -> Self {
        Layout { n, k, constrained }
    }

    /// Length of the `(c, B)` block.
    pub fn cb_dim(&self) -> usize {
        self.n + self.k * self.n * self.n
    }

    /// First exogenous lag carried in the state.
    pub fn first_exo_lag(&self) -> usize {
        if self.constrained {
            1
        } else {
            0
        }
    }

    /// Number of exogenous lags carried in the state.
    pub fn exo_lags_in_state(&self) -> usize {
        self.k + 1 - self.first_exo_lag()
    }

    /// Length of the exogenous-coefficient block.
    pub fn d_dim(&self) -> usize {
        self.exo_lags_in_state() * self.n
    }

    pub fn coef_dim(&self) -> usize {
        self.cb_dim() + self.d_dim()
    }

    pub fn alpha_dim(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn idx_c(&self, row: usize) -> usize {
        row
    }

    /// `lag` is 1-based.
    pub fn idx_b(&self, lag: usize, row: usize, col: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.k);
        self.n + (lag - 1) * self.n * self.n + row * self.n + col
    }

    /// Panics if `lag` is not carried in the state.
    pub fn idx_d(&self, lag: usize, row: usize) -> usize {
        assert!(lag >= self.first_exo_lag() && lag <= self.k, "exogenous lag {lag} not in state");
        self.cb_dim() + (lag - self.first_exo_lag()) * self.n + row
    }

    /// Offset of equation `i`'s block inside the stacked `α` vector.
    pub fn alpha_offset(&self, equation: usize) -> usize {
        equation * (equation.saturating_sub(1)) / 2
    }

    /// Number of regressors per equation in the unrestricted constant VARX
    /// (intercept, `k` lags of `y`, `x` at lags `0..=k`).
    pub fn ols_regressors(&self) -> usize {
        1 + self.n * self.k + self.k + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
}

impl McmcConfig {
    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.draws * self.thin
    }
}

impl Default for McmcConfig {
    /// 30000 sweeps: half discarded, every 10th of the rest kept.
    fn default() -> Self {
        McmcConfig { burn_in: 15_000, draws: 1_500, thin: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n: usize,
    pub k: usize,
    pub t0: usize,
    pub constraint_enabled: bool,
    pub mcmc: McmcConfig,
    pub seed: u64,
}

impl ModelConfig {
    pub fn layout(&self) -> Layout {
        Layout::new(self.n, self.k, self.constraint_enabled)
    }

    /// Smallest admissible training length for the OLS prior calibration.
    pub fn min_training(n: usize, k: usize) -> usize {
        k + 2 + n * (n * k + k + 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.k < 1 {
            return Err(Error::Config(format!("need n >= 1 and k >= 1, got n={} k={}", self.n, self.k)));
        }
        let need = Self::min_training(self.n, self.k);
        if self.t0 < need {
            return Err(Error::InsufficientTrainingData { got: self.t0, need });
        }
        if self.mcmc.draws < 1 || self.mcmc.thin < 1 {
            return Err(Error::Config("need at least one retained draw and thin >= 1".into()));
        }
        Ok(())
    }
}

/// Coefficients at a single time step. `d` always holds `D_0..D_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefAt {
    pub c: DVector<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub d: Vec<DVector<f64>>,
}

impl CoefAt {
    pub fn zeros(n: usize, k: usize) -> Self {
        CoefAt {
            c: DVector::zeros(n),
            b: vec![DMatrix::zeros(n, n); k],
            d: vec![DVector::zeros(n); k + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn sum_b(&self) -> DMatrix<f64> {
        sum_blocks(&self.b, self.n())
    }

    /// `I − Σ_j B_j`.
    pub fn long_run_matrix(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - self.sum_b()
    }

    /// Unpacks a state vector. In constrained layouts `D_0` is filled from
    /// `theta` through [`implied_d0`].
    pub fn from_state(layout: &Layout, state: &DVector<f64>, theta: Option<&DVector<f64>>) -> Self {
        let (n, k) = (layout.n, layout.k);
        let c = DVector::from_fn(n, |i, _| state[layout.idx_c(i)]);
        let b = (1..=k)
            .map(|lag| DMatrix::from_fn(n, n, |r, col| state[layout.idx_b(lag, r, col)]))
            .collect::<Vec<_>>();
        let mut d = vec![DVector::zeros(n); k + 1];
        for (lag, dl) in d.iter_mut().enumerate().skip(layout.first_exo_lag()) {
            *dl = DVector::from_fn(n, |r, _| state[layout.idx_d(lag, r)]);
        }
        if layout.constrained {
            let theta = theta.expect("constrained layout needs theta");
            d[0] = implied_d0(theta, &b, &d[1..]);
        }
        CoefAt { c, b, d }
    }

    pub fn to_state(&self, layout: &Layout) -> DVector<f64> {
        let mut s = DVector::zeros(layout.coef_dim());
        for r in 0..layout.n {
            s[layout.idx_c(r)] = self.c[r];
            for lag in 1..=layout.k {
                for col in 0..layout.n {
                    s[layout.idx_b(lag, r, col)] = self.b[lag - 1][(r, col)];
                }
            }
            for lag in layout.first_exo_lag()..=layout.k {
                s[layout.idx_d(lag, r)] = self.d[lag][r];
            }
        }
        s
    }

    /// `c + Σ B_j y_{t−j} + Σ D_i x_{t−i}`; `y_lags[j-1] = y_{t−j}`,
    /// `x_window[i] = x_{t−i}`.
    pub fn fitted(&self, y_lags: &[DVector<f64>], x_window: &[f64]) -> DVector<f64> {
        let mut f = self.c.clone();
        for (b, y) in self.b.iter().zip(y_lags) {
            f += b * y;
        }
        for (d, &x) in self.d.iter().zip(x_window) {
            f += d * x;
        }
        f
    }
}

fn sum_blocks(b: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    b.iter().fold(DMatrix::zeros(n, n), |acc, m| acc + m)
}

/// Coefficient paths over the estimation window.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefState {
    pub layout: Layout,
    pub path: Vec<CoefAt>,
}

impl CoefState {
    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }
}

/// Covariance-factor and log-volatility paths.
#[derive(Clone, Debug, PartialEq)]
pub struct CovState {
    pub alpha: Vec<DVector<f64>>,
    pub log_vol: Vec<DVector<f64>>,
}

impl CovState {
    pub fn len(&self) -> usize {
        self.log_vol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_vol.is_empty()
    }

    pub fn a_matrix(&self, t: usize) -> DMatrix<f64> {
        a_from_alpha(&self.alpha[t], self.log_vol[t].len())
    }

    /// `H_t = A_t⁻¹ Σ_t Σ_tᵀ A_t⁻ᵀ`.
    pub fn obs_cov(&self, t: usize) -> DMatrix<f64> {
        obs_cov_from(&self.alpha[t], &self.log_vol[t])
    }
}

/// Unit lower-triangular `A` from row-stacked free elements.
pub fn a_from_alpha(alpha: &DVector<f64>, n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::identity(n, n);
    let mut idx = 0;
    for i in 1..n {
        for j in 0..i {
            a[(i, j)] = alpha[idx];
            idx += 1;
        }
    }
    a
}

pub fn obs_cov_from(alpha: &DVector<f64>, log_vol: &DVector<f64>) -> DMatrix<f64> {
    let n = log_vol.len();
    let a = a_from_alpha(alpha, n);
    let a_inv = invert_unit_lower(&a);
    let mut scaled = a_inv.clone();
    for j in 0..n {
        let s = log_vol[j].exp();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    let mut h = &scaled * scaled.transpose();
    crate::numkit::symmetrize_in_place(&mut h);
    h
}

pub fn invert_unit_lower(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        for i in (c + 1)..n {
            let mut s = 0.0;
            for p in c..i {
                s -= a[(i, p)] * inv[(p, c)];
            }
            inv[(i, c)] = s;
        }
    }
    inv
}

/// Innovation covariances of the random-walk laws.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// `(c, B)` innovations.
    pub q: SymMatrix,
    /// Exogenous-coefficient innovations (`D_1..D_k`, or `D_0..D_k` unconstrained).
    pub q_tilde: SymMatrix,
    /// One block per equation `i ≥ 2`, of size `i − 1`.
    pub g: Vec<SymMatrix>,
    pub w: SymMatrix,
}

impl Hyperparams {
    /// `blockdiag(Q, Q̃)`, the innovation covariance of the coefficient state.
    pub fn coef_state_cov(&self) -> DMatrix<f64> {
        let a = self.q.dim();
        let b = self.q_tilde.dim();
        let mut m = DMatrix::zeros(a + b, a + b);
        m.view_mut((0, 0), (a, a)).copy_from(self.q.as_matrix());
        m.view_mut((a, a), (b, b)).copy_from(self.q_tilde.as_matrix());
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElasticityState {
    pub theta: DVector<f64>,
    pub prior_mean: DVector<f64>,
    pub prior_cov: SymMatrix,
    pub post_mean: DVector<f64>,
    pub post_cov: SymMatrix,
}

/// `D_0 = [I − Σ_j B_j] θ − Σ_{i≥1} D_i`.
pub fn implied_d0(theta: &DVector<f64>, b: &[DMatrix<f64>], d_tail: &[DVector<f64>]) -> DVector<f64> {
    let n = theta.len();
    let lr = DMatrix::identity(n, n) - sum_blocks(b, n);
    let mut d0 = lr * theta;
    for d in d_tail {
        d0 -= d;
    }
    d0
}

/// `[I − Σ_j B_j]⁻¹ Σ_{i=0..k} D_i`, refusing when the condition number of
/// `I − Σ B` exceeds `max_cond`.
pub fn long_run_multiplier_with(b: &[DMatrix<f64>], d_all: &[DVector<f64>], max_cond: f64) -> Result<DVector<f64>> {
    let n = d_all.first().map(|d| d.len()).unwrap_or(0);
    let lr = DMatrix::identity(n, n) - sum_blocks(b, n);
    let cond = condition_number(&lr);
    if !(cond < max_cond) {
        return Err(Error::NearSingularLongRun { cond });
    }
    let sum_d = d_all.iter().fold(DVector::zeros(n), |acc, d| acc + d);
    lr.lu().solve(&sum_d).ok_or(Error::NearSingularLongRun { cond })
}

pub fn long_run_multiplier(b: &[DMatrix<f64>], d_all: &[DVector<f64>]) -> Result<DVector<f64>> {
    long_run_multiplier_with(b, d_all, DEFAULT_SINGULAR_COND)
}

/// Builds the measurement equation for the coefficient state at one `t`.
///
/// `y_lags[j-1] = y_{t−j}` and `x_lags[i-1] = x_{t−i}`. With `theta` given
/// (constrained layout) the left-hand side is `y_t − θ x_t` and the
/// regressors are `(y_{t−j} − θ x_t)` for `B_j` and `(x_{t−i} − x_t)` for
/// `D_i`. Without it the left-hand side is `y_t` and the raw regressors are
/// used, including `x_t` for `D_0`.
///
/// Returns `(lhs, Z)` with `Z` of shape `n × layout.coef_dim()`.
pub fn transform_observation(
    layout: &Layout,
    y_t: &DVector<f64>,
    y_lags: &[DVector<f64>],
    x_t: f64,
    x_lags: &[f64],
    theta: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, k) = (layout.n, layout.k);
    if y_t.len() != n || y_lags.len() != k || x_lags.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "expected n={n} and k={k} lags, got y len {}, {} y lags, {} x lags",
            y_t.len(),
            y_lags.len(),
            x_lags.len()
        )));
    }
    if layout.constrained != theta.is_some() {
        return Err(Error::DimensionMismatch("theta must be given exactly when the layout is constrained".into()));
    }
    let mut z = DMatrix::zeros(n, layout.coef_dim());
    let lhs = match theta {
        Some(th) => y_t - th * x_t,
        None => y_t.clone(),
    };
    for r in 0..n {
        z[(r, layout.idx_c(r))] = 1.0;
        for lag in 1..=k {
            let y = &y_lags[lag - 1];
            for col in 0..n {
                let reg = match theta {
                    Some(th) => y[col] - th[col] * x_t,
                    None => y[col],
                };
                z[(r, layout.idx_b(lag, r, col))] = reg;
            }
        }
        if theta.is_some() {
            for lag in 1..=k {
                z[(r, layout.idx_d(lag, r))] = x_lags[lag - 1] - x_t;
            }
        } else {
            z[(r, layout.idx_d(0, r))] = x_t;
            for lag in 1..=k {
                z[(r, layout.idx_d(lag, r))] = x_lags[lag - 1];
            }
        }
    }
    Ok((lhs, z))
}
