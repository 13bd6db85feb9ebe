//! Kalman filter and Carter–Kohn simulation smoother for linear-Gaussian
//! models whose state follows a random walk:
//!
//! ```text
//! y_t = Z_t s_t + v_t,        v_t ~ N(0, H_t)
//! s_t = s_{t-1} + w_t,        w_t ~ N(0, Q)
//! s_0 ~ N(m_0, P_0)
//! ```
//!
//! Observations are indexed `t = 1..T`; the prior is placed on `s_0` so the
//! first predicted covariance is `P_0 + Q`. The covariance update uses the
//! Joseph form and every covariance is symmetrized after it is formed.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkit::{psd_pseudo_inverse, symmetrize_in_place, RngStream, PD_TOLERANCE};

#[derive(Clone, Debug)]
pub struct LinearGaussianSystem {
    pub observations: Vec<DVector<f64>>,
    pub design: Vec<DMatrix<f64>>,
    pub obs_cov: Vec<DMatrix<f64>>,
    pub state_cov: DMatrix<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

impl LinearGaussianSystem {
    pub fn state_dim(&self) -> usize {
        self.init_mean.len()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.state_dim();
        let t = self.len();
        let bad = |msg: String| Err(Error::DimensionMismatch(msg));
        if self.design.len() != t || self.obs_cov.len() != t {
            return bad(format!(
                "{} observations, {} design matrices, {} observation covariances",
                t,
                self.design.len(),
                self.obs_cov.len()
            ));
        }
        if self.init_cov.shape() != (s, s) || self.state_cov.shape() != (s, s) {
            return bad(format!("state covariances must be {s}x{s}"));
        }
        for (i, ((y, z), h)) in self.observations.iter().zip(&self.design).zip(&self.obs_cov).enumerate() {
            let d = y.len();
            if z.shape() != (d, s) || h.shape() != (d, d) {
                return bad(format!("step {i}: design {:?}, obs cov {:?}, obs len {d}", z.shape(), h.shape()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FilterOutput {
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: Vec<f64>,
}

impl FilterOutput {
    pub fn total_log_likelihood(&self) -> f64 {
        self.log_likelihood.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.filtered_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered_means.is_empty()
    }
}

pub fn kalman_filter(sys: &LinearGaussianSystem) -> Result<FilterOutput> {
    sys.validate()?;
    let n_steps = sys.len();
    let s = sys.state_dim();
    let mut out = FilterOutput {
        filtered_means: Vec::with_capacity(n_steps),
        filtered_covs: Vec::with_capacity(n_steps),
        predicted_means: Vec::with_capacity(n_steps),
        predicted_covs: Vec::with_capacity(n_steps),
        log_likelihood: Vec::with_capacity(n_steps),
    };
    let mut scratch = Scratch::default();

    for t in 0..n_steps {
        let y = sys.observations[t].as_slice();
        let z = sys.design[t].as_slice();
        let h = sys.obs_cov[t].as_slice();
        let d = y.len();
        scratch.resize(s, d);
        let Scratch { pz, f, lf, f_inv, gain, tz, hk, innov } = &mut scratch;
        let (prev_mean, prev_cov) = match t {
            0 => (&sys.init_mean, &sys.init_cov),
            _ => (&out.filtered_means[t - 1], &out.filtered_covs[t - 1]),
        };

        let mut pred_cov = prev_cov + &sys.state_cov;
        symmetrize_in_place(&mut pred_cov);
        let pred_mean = prev_mean.clone();
        let r = pred_cov.as_slice();

        // R Zᵀ (s×d); column q is Σ_p R[:, p] Z[q, p].
        pz.fill(0.0);
        for q in 0..d {
            let col = &mut pz[q * s..(q + 1) * s];
            for p in 0..s {
                axpy(col, z[q + p * d], &r[p * s..(p + 1) * s]);
            }
        }
        // F = Z R Zᵀ + H.
        for c in 0..d {
            for q in 0..=c {
                let mut acc = 0.0;
                for p in 0..s {
                    acc += z[q + p * d] * pz[p + c * s];
                }
                let v = acc + 0.5 * (h[q + c * d] + h[c + q * d]);
                f[q + c * d] = v;
                f[c + q * d] = v;
            }
        }
        if !cholesky_slice(f, lf, d) {
            return Err(Error::SingularInnovationCovariance { step: t });
        }
        f_inv.fill(0.0);
        for i in 0..d {
            f_inv[i + i * d] = 1.0;
        }
        cholesky_solve_slice(lf, d, f_inv, d);

        // K = R Zᵀ F⁻¹.
        gain.fill(0.0);
        for q in 0..d {
            let col = &mut gain[q * s..(q + 1) * s];
            for c in 0..d {
                axpy(col, f_inv[c + q * d], &pz[c * s..(c + 1) * s]);
            }
        }
        for q in 0..d {
            innov[q] = y[q] - (0..s).map(|p| z[q + p * d] * pred_mean[p]).sum::<f64>();
        }
        let mut new_mean = pred_mean.clone();
        for q in 0..d {
            axpy(new_mean.as_mut_slice(), innov[q], &gain[q * s..(q + 1) * s]);
        }

        // Joseph form (I − KZ) R (I − KZ)ᵀ + K H Kᵀ, evaluated as
        // T = R − K (R Zᵀ)ᵀ, then T − (T Zᵀ) Kᵀ + K H Kᵀ.
        let mut new_cov = pred_cov.clone();
        let nc = new_cov.as_mut_slice();
        for c in 0..s {
            let col = &mut nc[c * s..(c + 1) * s];
            for q in 0..d {
                axpy(col, -pz[c + q * s], &gain[q * s..(q + 1) * s]);
            }
        }
        tz.fill(0.0);
        for q in 0..d {
            let col = &mut tz[q * s..(q + 1) * s];
            for p in 0..s {
                axpy(col, z[q + p * d], &nc[p * s..(p + 1) * s]);
            }
        }
        // (H Kᵀ)[q, c] = Σ_r H[q, r] K[c, r].
        for c in 0..s {
            for q in 0..d {
                hk[q + c * d] = (0..d).map(|r| h[q + r * d] * gain[c + r * s]).sum();
            }
        }
        for c in 0..s {
            let col = &mut nc[c * s..(c + 1) * s];
            for q in 0..d {
                axpy(col, hk[q + c * d], &gain[q * s..(q + 1) * s]);
                axpy(col, -gain[c + q * s], &tz[q * s..(q + 1) * s]);
            }
        }
        symmetrize_in_place(&mut new_cov);

        let mut quad = 0.0;
        let mut log_det = 0.0;
        for i in 0..d {
            let mut acc = innov[i];
            for p in 0..i {
                acc -= lf[i + p * d] * innov[p];
            }
            let lii = lf[i + i * d];
            innov[i] = acc / lii;
            quad += innov[i] * innov[i];
            log_det += 2.0 * lii.ln();
        }
        let ll = -0.5 * (d as f64 * (2.0 * PI).ln() + log_det + quad);

        out.predicted_means.push(pred_mean);
        out.predicted_covs.push(pred_cov);
        out.filtered_means.push(new_mean);
        out.filtered_covs.push(new_cov);
        out.log_likelihood.push(ll);
    }
    Ok(out)
}

#[derive(Default)]
struct Scratch {
    pz: Vec<f64>,
    f: Vec<f64>,
    lf: Vec<f64>,
    f_inv: Vec<f64>,
    gain: Vec<f64>,
    tz: Vec<f64>,
    hk: Vec<f64>,
    innov: Vec<f64>,
}

impl Scratch {
    fn resize(&mut self, s: usize, d: usize) {
        for v in [&mut self.pz, &mut self.gain, &mut self.tz, &mut self.hk] {
            v.resize(s * d, 0.0);
        }
        for v in [&mut self.f, &mut self.lf, &mut self.f_inv] {
            v.resize(d * d, 0.0);
        }
        self.innov.resize(d, 0.0);
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Column-major Cholesky of the `n × n` matrix `m` into `l`. With `clamp`
/// set, pivots below `1e-12 × scale` zero their column and the call always
/// succeeds; otherwise such a pivot returns `false`.
fn factor_slice(m: &[f64], l: &mut [f64], n: usize, scale: f64, clamp: bool) -> bool {
    let tol = PD_TOLERANCE * scale;
    l.fill(0.0);
    for j in 0..n {
        let (done, rest) = l.split_at_mut(j * n);
        let col = &mut rest[j..n];
        col.copy_from_slice(&m[j + j * n..(j + 1) * n]);
        for p in 0..j {
            let ljp = done[j + p * n];
            if ljp != 0.0 {
                axpy(col, -ljp, &done[j + p * n..(p + 1) * n]);
            }
        }
        let d = col[0];
        if !(d > tol) {
            if clamp {
                col.fill(0.0);
                continue;
            }
            return false;
        }
        let ljj = d.sqrt();
        col.iter_mut().for_each(|v| *v /= ljj);
    }
    true
}

fn cholesky_slice(m: &[f64], l: &mut [f64], n: usize) -> bool {
    factor_slice(m, l, n, max_diag_slice(m, n), false)
}

/// Solves `L Lᵀ X = B` in place for the `n × cols` column-major `b`.
fn cholesky_solve_slice(l: &[f64], n: usize, b: &mut [f64], cols: usize) {
    for c in 0..cols {
        let col = &mut b[c * n..(c + 1) * n];
        forward_solve_slice(l, n, col);
        for i in (0..n).rev() {
            let lcol = &l[i * n..(i + 1) * n];
            let v = (col[i] - dot(&lcol[i + 1..], &col[i + 1..])) / lcol[i];
            col[i] = v;
        }
    }
}

fn forward_solve_slice(l: &[f64], n: usize, col: &mut [f64]) {
    for j in 0..n {
        let lcol = &l[j * n..(j + 1) * n];
        col[j] /= lcol[j];
        let v = col[j];
        axpy(&mut col[j + 1..], -v, &lcol[j + 1..]);
    }
}

/// Draws a full state path `s_1..s_T` from its joint posterior.
///
/// The last state is drawn from `N(m_T, P_T)`; earlier states from
/// `s_t | s_{t+1} ~ N(m_t + J_t (s_{t+1} - m_t), P_t - J_t P_t)` with
/// `J_t = P_t (P_t + Q)⁻¹`. When `P_t + Q` is singular (zero innovation
/// variance with a degenerate filtered covariance) the pseudo-inverse is used.
pub fn simulation_smoother(
    filter: &FilterOutput,
    state_cov: &DMatrix<f64>,
    rng: &mut RngStream,
) -> Result<Vec<DVector<f64>>> {
    let n_steps = filter.len();
    if n_steps == 0 {
        return Ok(Vec::new());
    }
    let s = filter.filtered_means[0].len();
    if state_cov.shape() != (s, s) {
        return Err(Error::DimensionMismatch(format!(
            "state covariance is {:?}, expected {s}x{s}",
            state_cov.shape()
        )));
    }
    let q = state_cov.as_slice();
    let mut path = vec![DVector::zeros(s); n_steps];
    let mut r = vec![0.0; s * s];
    let mut lr = vec![0.0; s * s];
    let mut w = vec![0.0; s * s];
    let mut cond_cov = vec![0.0; s * s];
    let mut l = vec![0.0; s * s];
    let mut noise = vec![0.0; s];
    let mut dev = vec![0.0; s];

    let last = n_steps - 1;
    let p = filter.filtered_covs[last].as_slice();
    factor_slice(p, &mut l, s, max_diag_slice(p, s), true);
    draw_into(path[last].as_mut_slice(), filter.filtered_means[last].as_slice(), &l, &mut noise, rng);

    for t in (0..last).rev() {
        let p = filter.filtered_covs[t].as_slice();
        let m = filter.filtered_means[t].as_slice();
        for c in 0..s {
            for i in 0..s {
                r[i + c * s] = 0.5 * (p[i + c * s] + p[c + i * s] + q[i + c * s] + q[c + i * s]);
            }
        }
        let (head, tail) = path.split_at_mut(t + 1);
        for ((dv, nx), mv) in dev.iter_mut().zip(tail[0].iter()).zip(m) {
            *dv = nx - mv;
        }
        let mut centre = m.to_vec();
        if cholesky_slice(&r, &mut lr, s) {
            // With R = L Lᵀ and W = L⁻¹ P: J (s' − m) = Wᵀ L⁻¹ (s' − m) and
            // J P = Wᵀ W.
            w.copy_from_slice(p);
            for c in 0..s {
                forward_solve_slice(&lr, s, &mut w[c * s..(c + 1) * s]);
            }
            forward_solve_slice(&lr, s, &mut dev);
            for (i, ci) in centre.iter_mut().enumerate() {
                *ci += dot(&w[i * s..(i + 1) * s], &dev);
            }
            for c in 0..s {
                for i in 0..=c {
                    let v = 0.5 * (p[i + c * s] + p[c + i * s]) - dot(&w[i * s..(i + 1) * s], &w[c * s..(c + 1) * s]);
                    cond_cov[i + c * s] = v;
                    cond_cov[c + i * s] = v;
                }
            }
        } else {
            let pinv = psd_pseudo_inverse(&DMatrix::from_column_slice(s, s, &r));
            // Jᵀ = R⁺ P, stored column by column.
            let gain_t = pinv * &filter.filtered_covs[t];
            let g = gain_t.as_slice();
            for (i, ci) in centre.iter_mut().enumerate() {
                *ci += dot(&g[i * s..(i + 1) * s], &dev);
            }
            for c in 0..s {
                for i in 0..=c {
                    let a = dot(&g[i * s..(i + 1) * s], &p[c * s..(c + 1) * s]);
                    let b = dot(&g[c * s..(c + 1) * s], &p[i * s..(i + 1) * s]);
                    let v = 0.5 * (p[i + c * s] + p[c + i * s] - a - b);
                    cond_cov[i + c * s] = v;
                    cond_cov[c + i * s] = v;
                }
            }
        }
        factor_slice(&cond_cov, &mut l, s, max_diag_slice(p, s), true);
        draw_into(head[t].as_mut_slice(), &centre, &l, &mut noise, rng);
    }
    Ok(path)
}

fn max_diag_slice(m: &[f64], n: usize) -> f64 {
    (0..n).map(|i| m[i + i * n]).fold(0.0, f64::max)
}

fn draw_into(out: &mut [f64], mean: &[f64], l: &[f64], noise: &mut [f64], rng: &mut RngStream) {
    let s = mean.len();
    noise.iter_mut().for_each(|x| *x = rng.standard_normal());
    out.copy_from_slice(mean);
    for j in 0..s {
        axpy(&mut out[j..], noise[j], &l[j + j * s..(j + 1) * s]);
    }
}
