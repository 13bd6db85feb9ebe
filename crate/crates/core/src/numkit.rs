//! Dense linear algebra helpers and random-sampling primitives.
//!
//! Everything here is deterministic given an explicit [`RngStream`]. The
//! factorizations are hand-rolled so the positive-definiteness tolerance is
//! under our control (`1e-12 × max diagonal`), and so that semi-definite
//! inputs can be factorized with zero-pivot clamping.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Relative pivot tolerance used by every Cholesky factorization.
pub const PD_TOLERANCE: f64 = 1e-12;

/// Relative symmetry tolerance accepted by [`SymMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// A dense symmetric matrix.
///
/// Construction symmetrizes the input as `(M + Mᵀ) / 2`, so downstream code
/// can rely on exact symmetry.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Checks squareness and symmetry (to `1e-12` relative) and stores the
    /// symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::DimensionMismatch(format!(
                        "matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without checking.
    pub fn symmetrized(m: DMatrix<f64>) -> Self {
        let mut m = m;
        symmetrize_in_place(&mut m);
        SymMatrix(m)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }
}

impl Deref for SymMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Seeded random stream backed by ChaCha8.
///
/// ChaCha is counter based: `(seed, stream)` pairs address disjoint,
/// independent sequences, so chains can be given their own stream without
/// any shared state.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    /// A fresh stream sharing this seed.
    pub fn split(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Position in the underlying keystream, in 32-bit words.
    pub fn position(&self) -> u128 {
        self.inner.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn chi_squared(&mut self, dof: f64) -> f64 {
        ChiSquared::new(dof)
            .expect("chi-squared degrees of freedom must be positive")
            .sample(&mut self.inner)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn max_diag(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m[(i, i)]).fold(0.0, f64::max)
}

/// Strict Cholesky factorization `m = L Lᵀ`.
///
/// Fails with [`Error::NotPositiveDefinite`] as soon as a pivot drops to
/// `1e-12 × max diagonal` or below.
pub fn cholesky(m: &SymMatrix) -> Result<DMatrix<f64>> {
    cholesky_dense(m.as_matrix())
}

pub(crate) fn cholesky_dense(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let tol = PD_TOLERANCE * max_diag(m);
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if !(d > tol) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Cholesky factorization for positive semi-definite input.
///
/// Pivots at or below `1e-12 × max diagonal` are clamped to zero together
/// with the rest of their column. Pivots that are clearly negative
/// (below `-1e-8 × max diagonal`) still signal an indefinite matrix.
pub fn cholesky_psd(m: &SymMatrix) -> Result<DMatrix<f64>> {
    let scale = max_diag(m.as_matrix());
    psd_factor(m.as_matrix(), scale, Some(1e-8 * scale))
}

fn psd_factor(m: &DMatrix<f64>, scale: f64, reject_below: Option<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let tol = PD_TOLERANCE * scale;
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        if let Some(bound) = reject_below {
            if d < -bound {
                return Err(Error::NotPositiveDefinite { index: j, pivot: d });
            }
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` in place given a lower Cholesky factor.
pub(crate) fn cholesky_solve_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for p in 0..i {
                s -= l[(i, p)] * b[(p, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for p in (i + 1)..n {
                s -= l[(p, i)] * b[(p, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Inverse of a symmetric positive-definite matrix via its Cholesky factor.
pub fn spd_inverse(m: &SymMatrix) -> Result<SymMatrix> {
    let l = cholesky(m)?;
    let mut inv = DMatrix::identity(m.dim(), m.dim());
    cholesky_solve_in_place(&l, &mut inv);
    Ok(SymMatrix::symmetrized(inv))
}

/// Moore–Penrose inverse of a symmetric PSD matrix through its eigen
/// decomposition; eigenvalues below `1e-12 × largest` are treated as zero.
pub(crate) fn psd_pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let tol = PD_TOLERANCE * top;
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > tol {
            let v = eig.eigenvectors.column(idx);
            out += (v * v.transpose()) / lambda;
        }
    }
    out
}

/// Two-norm condition number; closed form up to `2 × 2`, singular values
/// beyond.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    match m.shape() {
        (1, 1) => {
            if m[(0, 0)] == 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        }
        (2, 2) => {
            // σ₁² σ₂² = det², σ₁² + σ₂² = ‖M‖_F².
            let fro = m.norm_squared();
            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).abs();
            if det == 0.0 || !fro.is_finite() {
                return f64::INFINITY;
            }
            let disc = ((fro - 2.0 * det) * (fro + 2.0 * det)).max(0.0).sqrt();
            0.5 * (fro + disc) / det
        }
        _ => {
            let sv = m.singular_values();
            let max = sv.iter().cloned().fold(0.0, f64::max);
            let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        }
    }
}

pub fn standard_normal_vector(n: usize, rng: &mut RngStream) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.standard_normal())
}

/// Draws `mean + L z` with `L` the semi-definite Cholesky factor of `cov`.
pub fn sample_mvn(mean: &DVector<f64>, cov: &SymMatrix, rng: &mut RngStream) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mean has length {}, covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let l = cholesky_psd(cov)?;
    let z = standard_normal_vector(mean.len(), rng);
    Ok(mean + l * z)
}

/// Draws from inverse-Wishart(`scale`, `dof`) with density proportional to
/// `|X|^{-(dof+p+1)/2} exp(-tr(scale X⁻¹)/2)`, so `E[X] = scale / (dof - p - 1)`.
///
/// Uses the Bartlett factorization of a Wishart(`scale⁻¹`, `dof`) draw and
/// inverts it analytically: with `scale = C Cᵀ` and Bartlett factor `A`, the
/// draw is `M Mᵀ` where `M = C A⁻ᵀ`.
pub fn sample_inverse_wishart(scale: &SymMatrix, dof: f64, rng: &mut RngStream) -> Result<SymMatrix> {
    let p = scale.dim();
    if !(dof > p as f64 - 1.0) {
        return Err(Error::InvalidDof { dof, dim: p });
    }
    let c = cholesky(scale)?;
    let mut a = DMatrix::zeros(p, p);
    for i in 0..p {
        a[(i, i)] = rng.chi_squared(dof - i as f64).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.standard_normal();
        }
    }
    // A⁻ᵀ is upper triangular; solve column by column.
    let a_inv = invert_lower(&a);
    let m = c * a_inv.transpose();
    Ok(SymMatrix::symmetrized(&m * m.transpose()))
}

fn invert_lower(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for c in 0..n {
        inv[(c, c)] = 1.0 / l[(c, c)];
        for i in (c + 1)..n {
            let mut s = 0.0;
            for p in c..i {
                s -= l[(i, p)] * inv[(p, c)];
            }
            inv[(i, c)] = s / l[(i, i)];
        }
    }
    inv
}

/// Draws index `i` with probability `weights[i] / Σ weights`.
pub fn sample_categorical(weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

/// Categorical draw from unnormalized log-weights, normalized in log space.
pub fn sample_categorical_log(log_weights: &[f64], rng: &mut RngStream) -> Result<usize> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::AllZeroWeights);
    }
    let mut buf = [0.0; 16];
    if log_weights.len() <= buf.len() {
        for (b, lw) in buf.iter_mut().zip(log_weights) {
            *b = (lw - max).exp();
        }
        sample_categorical(&buf[..log_weights.len()], rng)
    } else {
        let w: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
        sample_categorical(&w, rng)
    }
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn sorted_copy(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v
}
