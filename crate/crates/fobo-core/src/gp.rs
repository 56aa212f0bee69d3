//! Scalar Gaussian-process regression with a squared-exponential kernel.
//!
//! One instance models the objective, and one instance per input dimension
//! models a partial derivative; the surrogates are independent, so this module
//! knows nothing about derivatives. Fitting maximizes the log marginal
//! likelihood over `(log sigma^2, log l, log lambda^2)` with multistart
//! quasi-Newton ascent; the constant mean is profiled in closed form as the
//! target mean. Inputs are rescaled to the unit box and targets are
//! standardized internally, so the stored hyperparameters live in that
//! normalized space while [`FittedGp::posterior`] reports original units.

use std::cell::RefCell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use thiserror::Error;

use crate::optim::{self, BoxObjective, Sense};

/// Search bounds for `log sigma^2` during fitting (unit-normalized space).
pub const LOG_SIGNAL_VARIANCE_BOUNDS: [f64; 2] = [-6.0, 6.0];
/// Search bounds for `log l`, relative to the unit box.
pub const LOG_LENGTHSCALE_BOUNDS: [f64; 2] = [-4.0, 4.0];
/// Search bounds for `log lambda^2`.
pub const LOG_NOISE_VARIANCE_BOUNDS: [f64; 2] = [-12.0, 2.0];
/// Default number of MLE restarts; the likelihood surface is multimodal.
pub const DEFAULT_FIT_RESTARTS: usize = 5;

const JITTER_INITIAL_FACTOR: f64 = 1e-10;
const JITTER_MAX_FACTOR: f64 = 1e-4;
const LN_2PI: f64 = 1.837877066409345483560659472811;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input and target counts differ: {inputs} inputs, {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(&'static str),
    #[error("invalid domain: {0}")]
    InvalidDomain(&'static str),
    #[error("need at least {needed} distinct training inputs, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("non-finite value in training data")]
    NonFiniteData,
    #[error("Cholesky factorization failed with jitter up to {attempted_jitter:.3e}")]
    CholeskyFailure { attempted_jitter: f64 },
    #[error("no restart produced a finite log marginal likelihood")]
    FitFailed,
}

/// Axis-aligned search box. All optimization and all GP input scaling happen
/// relative to this box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    /// Requires `lower[i] < upper[i]` for every coordinate and at least one
    /// dimension.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, GpError> {
        if lower.is_empty() {
            return Err(GpError::InvalidDomain("domain must have dimension >= 1"));
        }
        if lower.len() != upper.len() {
            return Err(GpError::InvalidDomain("bound vectors differ in length"));
        }
        let ordered = lower
            .iter()
            .zip(&upper)
            .all(|(lo, hi)| lo.is_finite() && hi.is_finite() && lo < hi);
        if !ordered {
            return Err(GpError::InvalidDomain(
                "bounds must be finite with lower < upper componentwise",
            ));
        }
        Ok(Self { lower, upper })
    }

    /// The unit box `[0, 1]^dim`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Componentwise projection onto the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    /// Maps a point into unit-box coordinates.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect()
    }

    /// Inverse of [`Domain::to_unit`].
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Uniform sample from the box; one `f64` draw per coordinate in order.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
            .collect()
    }

    fn span(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// Kernel and likelihood parameters: `sigma^2` (signal variance), `l`
/// (lengthscale), `lambda^2` (observation noise variance), `mu_0` (constant
/// prior mean).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyperparams {
    signal_variance: f64,
    lengthscale: f64,
    noise_variance: f64,
    constant_mean: f64,
}

impl GpHyperparams {
    pub fn new(
        signal_variance: f64,
        lengthscale: f64,
        noise_variance: f64,
        constant_mean: f64,
    ) -> Result<Self, GpError> {
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(GpError::InvalidHyperparameters(
                "signal variance must be finite and positive",
            ));
        }
        if !(lengthscale.is_finite() && lengthscale > 0.0) {
            return Err(GpError::InvalidHyperparameters(
                "lengthscale must be finite and positive",
            ));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(GpError::InvalidHyperparameters(
                "noise variance must be finite and non-negative",
            ));
        }
        if !constant_mean.is_finite() {
            return Err(GpError::InvalidHyperparameters(
                "constant mean must be finite",
            ));
        }
        Ok(Self {
            signal_variance,
            lengthscale,
            noise_variance,
            constant_mean,
        })
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn constant_mean(&self) -> f64 {
        self.constant_mean
    }

    fn from_log(log_params: &[f64], constant_mean: f64) -> Self {
        Self {
            signal_variance: log_params[0].exp(),
            lengthscale: log_params[1].exp(),
            noise_variance: log_params[2].exp(),
            constant_mean,
        }
    }
}

/// Squared-exponential kernel `sigma^2 * exp(-||x - y||^2 / (2 l^2))`.
///
/// Symmetric in its arguments; the value lies in `(0, sigma^2]` and underflows
/// toward zero (never negative) for far-apart points.
pub fn kernel(x: &[f64], y: &[f64], h: &GpHyperparams) -> Result<f64, GpError> {
    if x.len() != y.len() {
        return Err(GpError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(se_kernel(sq_dist(x, y), h.signal_variance, h.lengthscale))
}

#[inline]
fn se_kernel(sq_dist: f64, signal_variance: f64, lengthscale: f64) -> f64 {
    signal_variance * (-sq_dist / (2.0 * lengthscale * lengthscale)).exp()
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

fn sq_dist_matrix(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sq_dist(&points[i], &points[j]);
            m[(i, j)] = d;
            m[(j, i)] = d;
        }
    }
    m
}

/// `K + lambda^2 I` from a precomputed squared-distance matrix.
fn gram(
    d2: &DMatrix<f64>,
    signal_variance: f64,
    lengthscale: f64,
    noise_variance: f64,
) -> DMatrix<f64> {
    let n = d2.nrows();
    let mut k = DMatrix::from_fn(n, n, |i, j| {
        se_kernel(d2[(i, j)], signal_variance, lengthscale)
    });
    for i in 0..n {
        k[(i, i)] += noise_variance;
    }
    k
}

/// Cholesky with escalating diagonal jitter: direct attempt first, then
/// `1e-10 * sigma^2` growing tenfold up to `1e-4 * sigma^2`.
fn factorize(
    ky: &DMatrix<f64>,
    signal_variance: f64,
) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if let Some(chol) = Cholesky::new(ky.clone()) {
        return Ok((chol, 0.0));
    }
    let cap = JITTER_MAX_FACTOR * signal_variance;
    let mut jitter = JITTER_INITIAL_FACTOR * signal_variance;
    while jitter <= cap * (1.0 + 1e-12) {
        let mut m = ky.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
        jitter *= 10.0;
    }
    Err(GpError::CholeskyFailure {
        attempted_jitter: cap,
    })
}

fn lml_from_factor(chol: &Cholesky<f64, Dyn>, centered: &DVector<f64>) -> f64 {
    let n = centered.len();
    let alpha = chol.solve(centered);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * centered.dot(&alpha) - log_det_half - 0.5 * n as f64 * LN_2PI
}

// ---------------------------------------------------------------------------
// Flat-buffer kernels for the likelihood search.
//
// Fitting evaluates the log marginal likelihood thousands of times per GP, and
// every evaluation refactorizes an `n x n` matrix. The routines below work on
// caller-owned row-major buffers so the search allocates nothing per
// evaluation, and `assemble` reuses the same arithmetic so the likelihood a
// fitted GP reports is bit-identical to what the search saw for those
// hyperparameters.
// ---------------------------------------------------------------------------

/// Writes `K + lambda^2 I` (full, row-major) from flat squared distances.
fn gram_rows(d2s: &[f64], n: usize, s2: f64, l: f64, lam2: f64, out: &mut [f64]) {
    let neg_inv_2l2 = -0.5 / (l * l);
    for i in 0..n {
        for j in 0..i {
            let v = s2 * (d2s[i * n + j] * neg_inv_2l2).exp();
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
        out[i * n + i] = s2 + lam2;
    }
}

/// Lower Cholesky factor of `a + extra_diag * I` written into `fac` (its upper
/// triangle is left untouched). Returns `false` at the first non-positive or
/// non-finite pivot.
fn cholesky_rows(a: &[f64], n: usize, extra_diag: f64, fac: &mut [f64]) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            if i == j {
                sum += extra_diag;
            }
            {
                let row_i = &fac[i * n..i * n + j];
                let row_j = &fac[j * n..j * n + j];
                for (x, y) in row_i.iter().zip(row_j) {
                    sum -= x * y;
                }
            }
            if i == j {
                if !(sum > 0.0 && sum.is_finite()) {
                    return false;
                }
                fac[i * n + i] = sum.sqrt();
            } else {
                fac[i * n + j] = sum / fac[j * n + j];
            }
        }
    }
    true
}

/// [`factorize`] over reusable flat buffers: same jitter ladder, but no matrix
/// clones and an early exit at the first failed pivot. Returns the jitter that
/// succeeded, or `None` when the ladder is exhausted.
fn cholesky_ladder(ky: &[f64], signal_variance: f64, n: usize, fac: &mut [f64]) -> Option<f64> {
    if cholesky_rows(ky, n, 0.0, fac) {
        return Some(0.0);
    }
    let cap = JITTER_MAX_FACTOR * signal_variance;
    let mut jitter = JITTER_INITIAL_FACTOR * signal_variance;
    while jitter <= cap * (1.0 + 1e-12) {
        if cholesky_rows(ky, n, jitter, fac) {
            return Some(jitter);
        }
        jitter *= 10.0;
    }
    None
}

/// Solves `L x = b` in place for the row-major lower factor.
fn solve_lower(fac: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut sum = x[i];
        let row = &fac[i * n..i * n + i];
        for (j, lij) in row.iter().enumerate() {
            sum -= lij * x[j];
        }
        x[i] = sum / fac[i * n + i];
    }
}

/// Solves `L^T x = b` in place, reading the lower factor column-wise.
fn solve_lower_transposed(fac: &[f64], n: usize, x: &mut [f64]) {
    for i in (0..n).rev() {
        let mut sum = x[i];
        for j in (i + 1)..n {
            sum -= fac[j * n + i] * x[j];
        }
        x[i] = sum / fac[i * n + i];
    }
}

/// `out = L^{-1}` (lower triangle) for the row-major lower factor.
fn invert_lower(fac: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        let inv_pivot = 1.0 / fac[i * n + i];
        out[i * n + i] = inv_pivot;
        for j in 0..i {
            let mut sum = 0.0;
            for m in j..i {
                sum -= fac[i * n + m] * out[m * n + j];
            }
            out[i * n + j] = sum * inv_pivot;
        }
    }
}

/// Lower triangle of `K_y^{-1} = X^T X` from the lower-triangular `X = L^{-1}`,
/// accumulated row by row so every access is contiguous.
fn kinv_lower(linv: &[f64], n: usize, out: &mut [f64]) {
    out.fill(0.0);
    for m in 0..n {
        let row = &linv[m * n..m * n + m + 1];
        for (i, &xi) in row.iter().enumerate() {
            let dst = &mut out[i * n..i * n + i + 1];
            for (d, xj) in dst.iter_mut().zip(&row[..=i]) {
                *d += xi * xj;
            }
        }
    }
}

/// Log marginal likelihood from a solved system: `weights = K_y^{-1} centered`
/// and `fac` the lower factor whose diagonal carries `log det`.
fn lml_value(centered: &[f64], weights: &[f64], fac: &[f64], n: usize) -> f64 {
    let quad: f64 = centered.iter().zip(weights).map(|(c, w)| c * w).sum();
    let log_det_half: f64 = (0..n).map(|i| fac[i * n + i].ln()).sum();
    -0.5 * quad - log_det_half - 0.5 * n as f64 * LN_2PI
}

/// Log marginal likelihood of `targets` under `N(mu_0 * 1, K + lambda^2 I)`.
///
/// This is the Gaussian log-density with the mean subtracted from the targets;
/// the kernel matrix is stabilized by the same jitter ladder used everywhere
/// else, so a failure reports the largest jitter attempted.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    h: &GpHyperparams,
) -> Result<f64, GpError> {
    validate_data(inputs, targets, 1)?;
    let d2 = sq_dist_matrix(inputs);
    let ky = gram(&d2, h.signal_variance, h.lengthscale, h.noise_variance);
    let (chol, _) = factorize(&ky, h.signal_variance)?;
    let centered =
        DVector::from_iterator(targets.len(), targets.iter().map(|t| t - h.constant_mean));
    Ok(lml_from_factor(&chol, &centered))
}

fn validate_data(inputs: &[Vec<f64>], targets: &[f64], min_points: usize) -> Result<(), GpError> {
    if inputs.len() != targets.len() {
        return Err(GpError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    if inputs.len() < min_points {
        return Err(GpError::InsufficientData {
            needed: min_points,
            got: inputs.len(),
        });
    }
    let dim = inputs[0].len();
    for x in inputs {
        if x.len() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFiniteData);
        }
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(GpError::NonFiniteData);
    }
    Ok(())
}

/// Negative log marginal likelihood over `(log sigma^2, log l, log lambda^2)`
/// with the squared-distance matrix precomputed once per fit and all dense
/// temporaries owned by a reusable workspace.
struct LmlObjective<'a> {
    d2: &'a DMatrix<f64>,
    centered: &'a DVector<f64>,
    work: RefCell<LmlWorkspace>,
}

struct LmlWorkspace {
    /// `K + lambda^2 I` (no stabilizing jitter), row-major full storage.
    ky: Vec<f64>,
    /// Lower Cholesky factor of the jittered gram matrix.
    fac: Vec<f64>,
    /// `L^{-1}`, gradient path only.
    linv: Vec<f64>,
    /// Lower triangle of `K_y^{-1}`, gradient path only.
    kinv: Vec<f64>,
    /// `K_y^{-1} (targets - mu_0)`.
    alpha: Vec<f64>,
}

impl<'a> LmlObjective<'a> {
    fn new(d2: &'a DMatrix<f64>, centered: &'a DVector<f64>) -> Self {
        let n = centered.len();
        Self {
            d2,
            centered,
            work: RefCell::new(LmlWorkspace {
                ky: vec![0.0; n * n],
                fac: vec![0.0; n * n],
                linv: vec![0.0; n * n],
                kinv: vec![0.0; n * n],
                alpha: vec![0.0; n],
            }),
        }
    }

    fn eval(&self, log_params: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
        let n = self.centered.len();
        let s2 = log_params[0].exp();
        let l = log_params[1].exp();
        let lam2 = log_params[2].exp();
        let w = &mut *self.work.borrow_mut();
        // d2 is symmetric, so its storage order does not matter here.
        let d2s = self.d2.as_slice();
        gram_rows(d2s, n, s2, l, lam2, &mut w.ky);
        if cholesky_ladder(&w.ky, s2, n, &mut w.fac).is_none() {
            return (f64::INFINITY, None);
        }
        w.alpha.copy_from_slice(self.centered.as_slice());
        solve_lower(&w.fac, n, &mut w.alpha);
        solve_lower_transposed(&w.fac, n, &mut w.alpha);
        let lml = lml_value(self.centered.as_slice(), &w.alpha, &w.fac, n);
        if !want_grad {
            return (-lml, None);
        }

        // d LML / d theta = 1/2 [alpha' (dK) alpha - tr(K^-1 dK)] per log-parameter:
        //   d K / d log sigma^2 = sigma^2 E            (E = SE kernel without noise)
        //   d K / d log l       = sigma^2 E .* D^2/l^2
        //   d K / d log lambda^2 = lambda^2 I
        // Off-diagonal terms count twice by symmetry, and the d2 diagonal is
        // zero, so the lengthscale derivative has no diagonal part.
        invert_lower(&w.fac, n, &mut w.linv);
        kinv_lower(&w.linv, n, &mut w.kinv);
        let inv_l2 = 1.0 / (l * l);
        let mut quad_s2 = 0.0;
        let mut tr_s2 = 0.0;
        let mut quad_l = 0.0;
        let mut tr_l = 0.0;
        let mut alpha_sq = 0.0;
        let mut tr_kinv = 0.0;
        for i in 0..n {
            let ai = w.alpha[i];
            let row = i * n;
            for j in 0..i {
                let se = w.ky[row + j];
                let dl = se * d2s[row + j] * inv_l2;
                let aa = 2.0 * ai * w.alpha[j];
                let kk = 2.0 * w.kinv[row + j];
                quad_s2 += aa * se;
                tr_s2 += kk * se;
                quad_l += aa * dl;
                tr_l += kk * dl;
            }
            let se = w.ky[row + i] - lam2;
            quad_s2 += ai * ai * se;
            tr_s2 += w.kinv[row + i] * se;
            alpha_sq += ai * ai;
            tr_kinv += w.kinv[row + i];
        }
        let g_s2 = 0.5 * (quad_s2 - tr_s2);
        let g_l = 0.5 * (quad_l - tr_l);
        let g_lam2 = 0.5 * lam2 * (alpha_sq - tr_kinv);
        (-lml, Some(vec![-g_s2, -g_l, -g_lam2]))
    }
}

impl BoxObjective for LmlObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, false).0
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.eval(x, true).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        self.eval(x, true)
    }
}

/// One restart of the likelihood search, for post-fit inspection.
#[derive(Debug, Clone)]
pub struct FitRestart {
    pub initial_log_params: [f64; 3],
    pub initial_lml: f64,
    pub final_log_params: Option<[f64; 3]>,
    pub final_lml: Option<f64>,
    pub converged: bool,
}

/// Diagnostics from [`fit_with_report`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub restarts: Vec<FitRestart>,
}

/// A trained GP: hyperparameters, cached Cholesky factor of `K + lambda^2 I`,
/// and the weight vector `K_y^-1 (targets - mu_0)`.
///
/// Immutable after construction; posterior evaluation on a shared reference is
/// thread-safe. Internally inputs live in unit-box coordinates and targets are
/// standardized; [`FittedGp::posterior`] converts back to original units.
#[derive(Debug, Clone)]
pub struct FittedGp {
    hyperparams: GpHyperparams,
    domain: Domain,
    /// Training inputs in unit-box coordinates, row-major `n x d`. Flat
    /// storage keeps the per-query posterior loops contiguous; they are the
    /// innermost cost of every acquisition optimization.
    train_flat: Vec<f64>,
    n: usize,
    /// Lower Cholesky factor of the stabilized gram matrix, row-major.
    lower_rows: Vec<f64>,
    /// The factor's transpose, also row-major, so backward substitution
    /// walks memory forward instead of striding columns.
    upper_rows: Vec<f64>,
    weights: Vec<f64>,
    jitter: f64,
    log_marginal: f64,
    target_mean: f64,
    target_scale: f64,
}

/// Maximum-likelihood fit with `restarts` uniform initial guesses in the
/// log-parameter box. See [`fit_with_report`] for the variant that also
/// returns per-restart diagnostics.
///
/// The returned GP attains a log marginal likelihood at least as high as every
/// restart's initial guess. Deterministic given the RNG state.
pub fn fit(
    inputs: &[Vec<f64>],
    targets: &[f64],
    domain: &Domain,
    restarts: usize,
    rng: &mut impl Rng,
) -> Result<FittedGp, GpError> {
    fit_with_report(inputs, targets, domain, restarts, rng).map(|(gp, _)| gp)
}

/// As [`fit`], returning per-restart initial and final likelihoods.
pub fn fit_with_report(
    inputs: &[Vec<f64>],
    targets: &[f64],
    domain: &Domain,
    restarts: usize,
    rng: &mut impl Rng,
) -> Result<(FittedGp, FitReport), GpError> {
    validate_data(inputs, targets, 2)?;
    if inputs[0].len() != domain.dim() {
        return Err(GpError::DimensionMismatch {
            expected: domain.dim(),
            got: inputs[0].len(),
        });
    }
    if inputs.iter().all(|x| x == &inputs[0]) {
        return Err(GpError::InsufficientData { needed: 2, got: 1 });
    }

    let unit_inputs: Vec<Vec<f64>> = inputs.iter().map(|x| domain.to_unit(x)).collect();
    let n = targets.len();
    let target_mean = targets.iter().sum::<f64>() / n as f64;
    let variance = targets
        .iter()
        .map(|t| {
            let d = t - target_mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    let sd = variance.sqrt();
    let target_scale = if sd < 1e-12 { 1.0 } else { sd };
    let std_targets: Vec<f64> = targets
        .iter()
        .map(|t| (t - target_mean) / target_scale)
        .collect();
    // Profiled constant mean: the mean of the (standardized) targets, which is
    // zero up to rounding.
    let mu0 = std_targets.iter().sum::<f64>() / n as f64;
    let centered = DVector::from_iterator(n, std_targets.iter().map(|t| t - mu0));

    let d2 = sq_dist_matrix(&unit_inputs);
    let objective = LmlObjective::new(&d2, &centered);
    let log_bounds = Domain::new(
        vec![
            LOG_SIGNAL_VARIANCE_BOUNDS[0],
            LOG_LENGTHSCALE_BOUNDS[0],
            LOG_NOISE_VARIANCE_BOUNDS[0],
        ],
        vec![
            LOG_SIGNAL_VARIANCE_BOUNDS[1],
            LOG_LENGTHSCALE_BOUNDS[1],
            LOG_NOISE_VARIANCE_BOUNDS[1],
        ],
    )
    .expect("log bounds are a valid box");

    let mut report = FitReport {
        restarts: Vec::new(),
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let consider = |log_params: &[f64], lml: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if lml.is_finite() && best.as_ref().is_none_or(|(_, b)| lml > *b) {
            *best = Some((log_params.to_vec(), lml));
        }
    };
    for _ in 0..restarts.max(1) {
        let start = log_bounds.sample(rng);
        let initial_lml = -objective.value(&start);
        consider(&start, initial_lml, &mut best);
        let mut restart = FitRestart {
            initial_log_params: [start[0], start[1], start[2]],
            initial_lml,
            final_log_params: None,
            final_lml: None,
            converged: false,
        };
        if let Ok(res) = optim::local_optimize(&objective, &start, &log_bounds, Sense::Minimize) {
            let lml = -res.value;
            consider(&res.point, lml, &mut best);
            restart.final_log_params = Some([res.point[0], res.point[1], res.point[2]]);
            restart.final_lml = Some(lml);
            restart.converged = res.converged;
        }
        report.restarts.push(restart);
    }
    let (log_params, _) = best.ok_or(GpError::FitFailed)?;
    let h = GpHyperparams::from_log(&log_params, mu0);
    let gp = FittedGp::assemble(
        h,
        domain.clone(),
        unit_inputs,
        &std_targets,
        target_mean,
        target_scale,
    )?;
    Ok((gp, report))
}

impl FittedGp {
    /// Builds a GP directly from explicit hyperparameters, with no input
    /// rescaling beyond `domain` and no target standardization: `lengthscale`
    /// is interpreted in unit-box coordinates and `constant_mean`,
    /// `signal_variance`, `noise_variance` in target units.
    pub fn with_hyperparams(
        inputs: &[Vec<f64>],
        targets: &[f64],
        domain: &Domain,
        h: GpHyperparams,
    ) -> Result<Self, GpError> {
        validate_data(inputs, targets, 1)?;
        if inputs[0].len() != domain.dim() {
            return Err(GpError::DimensionMismatch {
                expected: domain.dim(),
                got: inputs[0].len(),
            });
        }
        let unit_inputs: Vec<Vec<f64>> = inputs.iter().map(|x| domain.to_unit(x)).collect();
        Self::assemble(h, domain.clone(), unit_inputs, targets, 0.0, 1.0)
    }

    fn assemble(
        h: GpHyperparams,
        domain: Domain,
        unit_inputs: Vec<Vec<f64>>,
        std_targets: &[f64],
        target_mean: f64,
        target_scale: f64,
    ) -> Result<Self, GpError> {
        // Same flat-buffer arithmetic as the likelihood search, so the stored
        // log marginal matches what the search reported for these
        // hyperparameters exactly.
        let n = unit_inputs.len();
        let d2 = sq_dist_matrix(&unit_inputs);
        let mut ky = vec![0.0; n * n];
        gram_rows(
            d2.as_slice(),
            n,
            h.signal_variance,
            h.lengthscale,
            h.noise_variance,
            &mut ky,
        );
        let mut lower_rows = vec![0.0; n * n];
        let Some(jitter) = cholesky_ladder(&ky, h.signal_variance, n, &mut lower_rows) else {
            return Err(GpError::CholeskyFailure {
                attempted_jitter: JITTER_MAX_FACTOR * h.signal_variance,
            });
        };
        let centered: Vec<f64> = std_targets.iter().map(|t| t - h.constant_mean).collect();
        let mut weights = centered.clone();
        solve_lower(&lower_rows, n, &mut weights);
        solve_lower_transposed(&lower_rows, n, &mut weights);
        let log_marginal = lml_value(&centered, &weights, &lower_rows, n);
        let dim = domain.dim();
        let mut train_flat = Vec::with_capacity(n * dim);
        for row in &unit_inputs {
            train_flat.extend_from_slice(row);
        }
        // lower_rows' upper triangle is still the zeros it was allocated with.
        let mut upper_rows = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                upper_rows[j * n + i] = lower_rows[i * n + j];
            }
        }
        Ok(Self {
            hyperparams: h,
            domain,
            train_flat,
            n,
            lower_rows,
            upper_rows,
            weights,
            jitter,
            log_marginal,
            target_mean,
            target_scale,
        })
    }

    /// Posterior mean and (noiseless) variance at `x`, in original units.
    ///
    /// The variance is clamped at zero after round-off and never exceeds the
    /// prior signal variance; add [`FittedGp::noise_variance`] to get the
    /// predictive variance of a noisy observation.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        let (mean, var, _) = self.posterior_core(x, false)?;
        Ok((
            self.target_mean + self.target_scale * mean,
            self.target_scale * self.target_scale * var,
        ))
    }

    /// Posterior mean and variance in the internal standardized target space.
    pub fn standardized_posterior(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        let (mean, var, _) = self.posterior_core(x, false)?;
        Ok((mean, var))
    }

    /// Posterior mean/variance plus their gradients with respect to `x`, in
    /// original units.
    pub fn posterior_with_gradient(
        &self,
        x: &[f64],
    ) -> Result<(f64, f64, Vec<f64>, Vec<f64>), GpError> {
        let (mean, var, grads) = self.posterior_core(x, true)?;
        let (mut dmean, mut dvar) = grads.expect("gradients requested");
        let s = self.target_scale;
        for i in 0..dmean.len() {
            let chain = 1.0 / self.domain.span(i);
            dmean[i] *= s * chain;
            dvar[i] *= s * s * chain;
        }
        Ok((self.target_mean + s * mean, s * s * var, dmean, dvar))
    }

    /// As [`FittedGp::posterior_with_gradient`] but in standardized target
    /// space (gradients still taken with respect to the original `x`).
    pub fn standardized_posterior_with_gradient(
        &self,
        x: &[f64],
    ) -> Result<(f64, f64, Vec<f64>, Vec<f64>), GpError> {
        let (mean, var, grads) = self.posterior_core(x, true)?;
        let (mut dmean, mut dvar) = grads.expect("gradients requested");
        for i in 0..dmean.len() {
            let chain = 1.0 / self.domain.span(i);
            dmean[i] *= chain;
            dvar[i] *= chain;
        }
        Ok((mean, var, dmean, dvar))
    }

    #[allow(clippy::type_complexity)]
    fn posterior_core(
        &self,
        x: &[f64],
        want_grad: bool,
    ) -> Result<(f64, f64, Option<(Vec<f64>, Vec<f64>)>), GpError> {
        let dim = self.domain.dim();
        if x.len() != dim {
            return Err(GpError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        let u = self.domain.to_unit(x);
        let n = self.n;
        let s2 = self.hyperparams.signal_variance;
        let l = self.hyperparams.lengthscale;
        let neg_inv_2l2 = -0.5 / (l * l);

        // Cross-covariances and the mean in one pass: mu_0 + k . weights.
        let mut k = vec![0.0; n];
        let mut mean = self.hyperparams.constant_mean;
        for (j, kj_out) in k.iter_mut().enumerate() {
            let row = &self.train_flat[j * dim..(j + 1) * dim];
            let mut d2 = 0.0;
            for i in 0..dim {
                let t = row[i] - u[i];
                d2 += t * t;
            }
            let kj = s2 * (d2 * neg_inv_2l2).exp();
            *kj_out = kj;
            mean += kj * self.weights[j];
        }

        // Forward substitution v = L^-1 k gives the variance as
        // k(x,x) - |v|^2. Hand-rolled over the row-major factor: these
        // solves run millions of times per optimization run.
        let mut v = k.clone();
        for i in 0..n {
            let row = &self.lower_rows[i * n..i * n + i + 1];
            let mut acc = v[i];
            for j in 0..i {
                acc -= row[j] * v[j];
            }
            v[i] = acc / row[i];
        }
        let mut var = s2;
        for value in &v {
            var -= value * value;
        }
        let var = var.max(0.0);
        if !want_grad {
            return Ok((mean, var, None));
        }

        // d k_j / d u_i = k_j (X_ji - u_i) / l^2; the variance gradient needs
        // z = K_y^-1 k, i.e. one more (backward) substitution through L^T.
        let mut z = v;
        for i in (0..n).rev() {
            let row = &self.upper_rows[i * n..(i + 1) * n];
            let mut acc = z[i];
            for j in (i + 1)..n {
                acc -= row[j] * z[j];
            }
            z[i] = acc / row[i];
        }
        let inv_l2 = 1.0 / (l * l);
        let mut dmean = vec![0.0; dim];
        let mut dvar = vec![0.0; dim];
        for j in 0..n {
            let row = &self.train_flat[j * dim..(j + 1) * dim];
            let wk = self.weights[j] * k[j];
            let zk2 = 2.0 * z[j] * k[j];
            for i in 0..dim {
                let diff = (row[i] - u[i]) * inv_l2;
                dmean[i] += wk * diff;
                dvar[i] -= zk2 * diff;
            }
        }
        Ok((mean, var, Some((dmean, dvar))))
    }

    /// Fitted hyperparameters in the internal space: lengthscale relative to
    /// the unit box, variances relative to standardized targets.
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyperparams
    }

    /// Log marginal likelihood of the (standardized) training targets under
    /// the fitted hyperparameters.
    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// Observation noise variance in original target units.
    pub fn noise_variance(&self) -> f64 {
        self.target_scale * self.target_scale * self.hyperparams.noise_variance
    }

    /// Observation noise variance in standardized target units.
    pub fn standardized_noise_variance(&self) -> f64 {
        self.hyperparams.noise_variance
    }

    /// Maps a raw target value into the internal standardized space.
    pub fn standardize_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_scale
    }

    /// Diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn train_len(&self) -> usize {
        self.n
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}
