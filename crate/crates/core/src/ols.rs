//! Equation-by-equation least squares for the constant-coefficient VARX.
//!
//! All equations share the regressor row
//! `[1, y_{t-1}ᵀ, …, y_{t-k}ᵀ, x_t, x_{t-1}, …, x_{t-k}]`, so the joint
//! coefficient covariance is `Σ̂ ⊗ (XᵀX)⁻¹`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{CoefAt, Layout};
use crate::numkit::{cholesky_dense, cholesky_solve_in_place, symmetrize_in_place};

#[derive(Clone, Debug)]
pub struct VarxOls {
    pub n: usize,
    pub k: usize,
    /// `p × n`, one column per equation.
    pub coef: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    /// Residual covariance with denominator `N − p`.
    pub resid_cov: DMatrix<f64>,
    pub residuals: Vec<DVector<f64>>,
    /// The design matrix rows, one per observation.
    pub design: DMatrix<f64>,
}

/// The regressor row for observation `t` (requires `t ≥ k`).
pub fn regressor_row(y: &[DVector<f64>], x: &[f64], k: usize, t: usize) -> DVector<f64> {
    let n = y[t].len();
    let mut row = DVector::zeros(1 + n * k + k + 1);
    row[0] = 1.0;
    for j in 1..=k {
        for m in 0..n {
            row[1 + (j - 1) * n + m] = y[t - j][m];
        }
    }
    for i in 0..=k {
        row[1 + n * k + i] = x[t - i];
    }
    row
}

/// Fits the VARX on dependent observations `t ∈ range` (each `t ≥ k`).
pub fn fit_varx(y: &[DVector<f64>], x: &[f64], k: usize, range: Range<usize>) -> Result<VarxOls> {
    if range.start < k || range.end > y.len() || range.end > x.len() {
        return Err(Error::DimensionMismatch(format!(
            "OLS range {range:?} needs k={k} lags inside {} observations",
            y.len()
        )));
    }
    let n = y.first().map(|v| v.len()).unwrap_or(0);
    let p = 1 + n * k + k + 1;
    let n_obs = range.len();
    if n_obs <= p {
        return Err(Error::InsufficientTrainingData { got: n_obs, need: p + 1 });
    }
    let mut design = DMatrix::zeros(n_obs, p);
    let mut dep = DMatrix::zeros(n_obs, n);
    for (row, t) in range.clone().enumerate() {
        design.row_mut(row).copy_from(&regressor_row(y, x, k, t).transpose());
        dep.row_mut(row).copy_from(&y[t].transpose());
    }
    let mut xtx = design.transpose() * &design;
    symmetrize_in_place(&mut xtx);
    let l = cholesky_dense(&xtx).map_err(|e| Error::CollinearRegressors(format!("XᵀX not invertible: {e}")))?;
    let mut xtx_inv = DMatrix::identity(p, p);
    cholesky_solve_in_place(&l, &mut xtx_inv);
    symmetrize_in_place(&mut xtx_inv);
    let mut coef = design.transpose() * &dep;
    cholesky_solve_in_place(&l, &mut coef);

    let fitted = &design * &coef;
    let resid = dep - fitted;
    let mut resid_cov = resid.transpose() * &resid / (n_obs - p) as f64;
    symmetrize_in_place(&mut resid_cov);
    let residuals = (0..n_obs).map(|r| resid.row(r).transpose()).collect();
    Ok(VarxOls { n, k, coef, xtx_inv, resid_cov, residuals, design })
}

impl VarxOls {
    pub fn coefficients(&self) -> CoefAt {
        let (n, k) = (self.n, self.k);
        let c = DVector::from_fn(n, |i, _| self.coef[(0, i)]);
        let b = (1..=k)
            .map(|j| DMatrix::from_fn(n, n, |r, m| self.coef[(1 + (j - 1) * n + m, r)]))
            .collect();
        let d = (0..=k).map(|lag| DVector::from_fn(n, |r, _| self.coef[(1 + n * k + lag, r)])).collect();
        CoefAt { c, b, d }
    }

    /// `(equation, regressor)` behind each element of the coefficient state.
    pub fn state_positions(&self, layout: &Layout) -> Vec<(usize, usize)> {
        let (n, k) = (self.n, self.k);
        let mut pos = vec![(0, 0); layout.coef_dim()];
        for r in 0..n {
            pos[layout.idx_c(r)] = (r, 0);
            for lag in 1..=k {
                for m in 0..n {
                    pos[layout.idx_b(lag, r, m)] = (r, 1 + (lag - 1) * n + m);
                }
            }
            for lag in layout.first_exo_lag()..=k {
                pos[layout.idx_d(lag, r)] = (r, 1 + n * k + lag);
            }
        }
        pos
    }

    /// Sampling covariance of the estimates, arranged in state order.
    pub fn state_cov(&self, layout: &Layout) -> DMatrix<f64> {
        let pos = self.state_positions(layout);
        let d = pos.len();
        DMatrix::from_fn(d, d, |a, b| {
            let (ea, ra) = pos[a];
            let (eb, rb) = pos[b];
            self.resid_cov[(ea, eb)] * self.xtx_inv[(ra, rb)]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let t_len = 80;
        let mut y = vec![DVector::zeros(2)];
        let x: Vec<f64> = (0..t_len).map(|i| ((i * 7 % 13) as f64 - 6.0) * 0.01).collect();
        for t in 1..t_len {
            let prev: &DVector<f64> = &y[t - 1];
            let noise = DVector::from_vec(vec![((t * 31 % 17) as f64 - 8.0) * 1e-3, ((t * 11 % 7) as f64 - 3.0) * 1e-3]);
            y.push(DVector::from_vec(vec![0.01 + 0.3 * prev[0] + 0.05 * x[t], 0.005 + 0.2 * prev[1] - 0.02 * x[t - 1]]) + noise);
        }
        let fit = fit_varx(&y, &x, 1, 1..t_len).unwrap();
        for eq in 0..2 {
            let e = DVector::from_fn(t_len - 1, |r, _| fit.residuals[r][eq]);
            let proj = fit.design.transpose() * e;
            assert!(proj.amax() < 1e-8);
        }
    }

    #[test]
    fn zero_exogenous_is_collinear() {
        let y: Vec<DVector<f64>> = (0..30).map(|i| DVector::from_element(1, ((i * 7 % 5) as f64) * 0.01)).collect();
        let x = vec![0.0; 30];
        assert!(matches!(fit_varx(&y, &x, 1, 1..30), Err(Error::CollinearRegressors(_))));
    }
}
