//! Acquisition functions over an ensemble of surrogates.
//!
//! The ensemble holds one GP for the objective and one per partial
//! derivative. Gradient-aware acquisition either minimizes the summed
//! expected magnitude of the derivative posteriors (folded-normal moments) or
//! maximizes the joint probability that every derivative is near zero while
//! the objective improves on the incumbent. Classic expected improvement over
//! the objective surrogate alone is also here, as are the `BoxObjective`
//! adapters that feed these functions to the optimizer.

use libm::erfc;
use thiserror::Error;

use crate::gp::{Domain, FittedGp, GpError};
use crate::optim::BoxObjective;

/// Normal quantities flush to their limits beyond this many standard
/// deviations; keeps `exp` and `erfc` away from NaN territory.
const Z_CLAMP: f64 = 40.0;
const MIN_STD: f64 = 1e-12;
const INV_SQRT_2PI: f64 = 0.39894228040143267793994605993438;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("ensemble needs 0 or {dim} derivative surrogates, got {got}")]
    SurrogateCount { dim: usize, got: usize },
    #[error("surrogate {index} is defined on a different domain")]
    DomainMismatch { index: usize },
    #[error("operation requires derivative surrogates but none are present")]
    MissingGradientSurrogates,
    #[error(transparent)]
    Gp(#[from] GpError),
}

/// Standard normal density, clamped consistently with [`normal_cdf`].
pub fn normal_pdf(z: f64) -> f64 {
    let z = z.clamp(-Z_CLAMP, Z_CLAMP);
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF via the complementary error function, exact to double
/// precision in the tails that matter and clamped to [0, 1] beyond 40 sigma.
pub fn normal_cdf(z: f64) -> f64 {
    let z = z.clamp(-Z_CLAMP, Z_CLAMP);
    0.5 * erfc(-z / SQRT_2)
}

/// Mean and standard deviation of `|X|` for `X ~ N(mu, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedStats {
    pub mean: f64,
    pub std: f64,
}

/// Partial derivatives of the folded moments with respect to the underlying
/// normal's mean and standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct FoldedGrad {
    pub dmean_dmu: f64,
    pub dmean_dsigma: f64,
    pub dstd_dmu: f64,
    pub dstd_dsigma: f64,
}

/// Folded-normal moments:
/// `E|X| = 2 sigma phi(mu/sigma) + mu (2 Phi(mu/sigma) - 1)` and
/// `Std|X| = sqrt(mu^2 + sigma^2 - E|X|^2)`.
///
/// Requires `sigma > 0`; as `sigma -> 0` the result tends to `(|mu|, sigma)`
/// smoothly thanks to the clamped normal functions.
pub fn folded_normal_stats(mu: f64, sigma: f64) -> FoldedStats {
    let r = mu / sigma;
    let mean = 2.0 * sigma * normal_pdf(r) + mu * (2.0 * normal_cdf(r) - 1.0);
    let var = mu * mu + sigma * sigma - mean * mean;
    FoldedStats {
        mean,
        std: var.max(0.0).sqrt(),
    }
}

/// [`folded_normal_stats`] plus its derivatives. The standard deviation's
/// derivatives divide by `Std|X|`, which is floored at `1e-12`.
pub fn folded_normal_stats_with_grad(mu: f64, sigma: f64) -> (FoldedStats, FoldedGrad) {
    let stats = folded_normal_stats(mu, sigma);
    let r = mu / sigma;
    let dmean_dmu = 2.0 * normal_cdf(r) - 1.0;
    let dmean_dsigma = 2.0 * normal_pdf(r);
    let s = stats.std.max(MIN_STD);
    let grad = FoldedGrad {
        dmean_dmu,
        dmean_dsigma,
        dstd_dmu: (mu - stats.mean * dmean_dmu) / s,
        dstd_dsigma: (sigma - stats.mean * dmean_dsigma) / s,
    };
    (stats, grad)
}

/// Expected improvement of `N(mean, std^2)` over `incumbent` for
/// maximization: `(mean - inc) Phi(z) + std phi(z)` with
/// `z = (mean - inc) / std`. Degenerates to `max(mean - inc, 0)` as the
/// standard deviation vanishes.
pub fn expected_improvement(mean: f64, std: f64, incumbent: f64) -> f64 {
    let diff = mean - incumbent;
    if std <= MIN_STD {
        return diff.max(0.0);
    }
    let z = diff / std;
    diff * normal_cdf(z) + std * normal_pdf(z)
}

/// Expected improvement with `(d EI / d mean, d EI / d std) = (Phi(z), phi(z))`.
pub fn expected_improvement_with_grad(mean: f64, std: f64, incumbent: f64) -> (f64, f64, f64) {
    let diff = mean - incumbent;
    if std <= MIN_STD {
        return (diff.max(0.0), if diff > 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let z = diff / std;
    (
        diff * normal_cdf(z) + std * normal_pdf(z),
        normal_cdf(z),
        normal_pdf(z),
    )
}

/// Best observation so far: its location and noisy objective value.
#[derive(Debug, Clone)]
pub struct Incumbent {
    pub point: Vec<f64>,
    pub value: f64,
}

/// The objective surrogate plus, optionally, one surrogate per partial
/// derivative, all sharing one domain. An empty derivative list is the
/// zeroth-order configuration; gradient-aware acquisition then errors.
#[derive(Debug, Clone)]
pub struct SurrogateEnsemble {
    fgp: FittedGp,
    pgp: Vec<FittedGp>,
}

impl SurrogateEnsemble {
    pub fn new(fgp: FittedGp, pgp: Vec<FittedGp>) -> Result<Self, AcquisitionError> {
        let dim = fgp.domain().dim();
        if !pgp.is_empty() && pgp.len() != dim {
            return Err(AcquisitionError::SurrogateCount {
                dim,
                got: pgp.len(),
            });
        }
        for (index, gp) in pgp.iter().enumerate() {
            if gp.domain() != fgp.domain() {
                return Err(AcquisitionError::DomainMismatch { index });
            }
        }
        Ok(Self { fgp, pgp })
    }

    pub fn fgp(&self) -> &FittedGp {
        &self.fgp
    }

    pub fn pgp(&self) -> &[FittedGp] {
        &self.pgp
    }

    pub fn domain(&self) -> &Domain {
        self.fgp.domain()
    }

    pub fn dim(&self) -> usize {
        self.fgp.domain().dim()
    }

    pub fn has_gradient_surrogates(&self) -> bool {
        !self.pgp.is_empty()
    }

    fn require_gradient_surrogates(&self) -> Result<(), AcquisitionError> {
        if self.pgp.is_empty() {
            return Err(AcquisitionError::MissingGradientSurrogates);
        }
        Ok(())
    }

    /// Summed folded-normal mean plus standard deviation of every derivative
    /// posterior at `x`, in original units; small values mean the model
    /// confidently places a stationary point here. Minimized by the search.
    ///
    /// Each derivative's predictive spread includes its observation noise:
    /// `sqrt(posterior variance + noise variance)`.
    pub fn gei(&self, x: &[f64]) -> Result<f64, AcquisitionError> {
        self.require_gradient_surrogates()?;
        let mut total = 0.0;
        for gp in &self.pgp {
            let (mean, var) = gp.posterior(x)?;
            let std = (var + gp.noise_variance()).sqrt().max(MIN_STD);
            let stats = folded_normal_stats(mean, std);
            total += stats.mean + stats.std;
        }
        Ok(total)
    }

    /// [`SurrogateEnsemble::gei`] with its gradient with respect to `x`.
    pub fn gei_with_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), AcquisitionError> {
        self.require_gradient_surrogates()?;
        let mut total = 0.0;
        let mut grad = vec![0.0; x.len()];
        for gp in &self.pgp {
            let (mean, var, dmean, dvar) = gp.posterior_with_gradient(x)?;
            let std = (var + gp.noise_variance()).sqrt().max(MIN_STD);
            let (stats, g) = folded_normal_stats_with_grad(mean, std);
            total += stats.mean + stats.std;
            let dmu = g.dmean_dmu + g.dstd_dmu;
            let dsig = g.dmean_dsigma + g.dstd_dsigma;
            for j in 0..x.len() {
                let dstd_j = dvar[j] / (2.0 * std);
                grad[j] += dmu * dmean[j] + dsig * dstd_j;
            }
        }
        Ok((total, grad))
    }

    /// Probability that every derivative lies in `[-eps_grad, eps_grad]`
    /// times the probability that the objective beats the incumbent by more
    /// than `eps_pi`, all in the surrogates' standardized units (so the two
    /// tolerances are scale-free). Maximized by the search.
    ///
    /// `incumbent` is the best observed objective value in original units.
    pub fn gpi(
        &self,
        x: &[f64],
        incumbent: f64,
        eps_grad: f64,
        eps_pi: f64,
    ) -> Result<f64, AcquisitionError> {
        self.require_gradient_surrogates()?;
        let mut product = self.improvement_probability(x, incumbent, eps_pi)?.0;
        for gp in &self.pgp {
            let (mean, var) = gp.standardized_posterior(x)?;
            let std = (var + gp.standardized_noise_variance()).sqrt().max(MIN_STD);
            product *= normal_cdf((eps_grad - mean) / std) - normal_cdf((-eps_grad - mean) / std);
        }
        Ok(product)
    }

    /// [`SurrogateEnsemble::gpi`] with its gradient with respect to `x`.
    pub fn gpi_with_grad(
        &self,
        x: &[f64],
        incumbent: f64,
        eps_grad: f64,
        eps_pi: f64,
    ) -> Result<(f64, Vec<f64>), AcquisitionError> {
        self.require_gradient_surrogates()?;
        let dim = x.len();
        // One factor per surrogate, objective first, each with its gradient.
        let mut factors = Vec::with_capacity(self.pgp.len() + 1);
        let (p0, dp0) = self.improvement_probability(x, incumbent, eps_pi)?;
        factors.push((p0, dp0));
        for gp in &self.pgp {
            let (mean, var, dmean, dvar) = gp.standardized_posterior_with_gradient(x)?;
            let std = (var + gp.standardized_noise_variance()).sqrt().max(MIN_STD);
            let a = (eps_grad - mean) / std;
            let b = (-eps_grad - mean) / std;
            let p = normal_cdf(a) - normal_cdf(b);
            let (pa, pb) = (normal_pdf(a), normal_pdf(b));
            let mut dp = vec![0.0; dim];
            for j in 0..dim {
                let dstd_j = dvar[j] / (2.0 * std);
                let da = -(dmean[j] + a * dstd_j) / std;
                let db = -(dmean[j] + b * dstd_j) / std;
                dp[j] = pa * da - pb * db;
            }
            factors.push((p, dp));
        }

        // Product rule with prefix/suffix partial products so zero factors
        // cannot poison the whole gradient with divisions.
        let m = factors.len();
        let mut prefix = vec![1.0; m + 1];
        for k in 0..m {
            prefix[k + 1] = prefix[k] * factors[k].0;
        }
        let mut suffix = vec![1.0; m + 1];
        for k in (0..m).rev() {
            suffix[k] = suffix[k + 1] * factors[k].0;
        }
        let mut grad = vec![0.0; dim];
        for (k, (_, dp)) in factors.iter().enumerate() {
            let others = prefix[k] * suffix[k + 1];
            for j in 0..dim {
                grad[j] += others * dp[j];
            }
        }
        Ok((prefix[m], grad))
    }

    fn improvement_probability(
        &self,
        x: &[f64],
        incumbent: f64,
        eps_pi: f64,
    ) -> Result<(f64, Vec<f64>), AcquisitionError> {
        let (mean, var, dmean, dvar) = self.fgp.standardized_posterior_with_gradient(x)?;
        let std = (var + self.fgp.standardized_noise_variance())
            .sqrt()
            .max(MIN_STD);
        let z = (mean - self.fgp.standardize_target(incumbent) - eps_pi) / std;
        let p = normal_cdf(z);
        let pdf = normal_pdf(z);
        let grad = (0..x.len())
            .map(|j| {
                let dstd_j = dvar[j] / (2.0 * std);
                pdf * (dmean[j] - z * dstd_j) / std
            })
            .collect();
        Ok((p, grad))
    }

    /// Optimistic objective score `mean + alpha * sqrt(posterior variance)`
    /// at `x`, in original units; ranks candidate suggestions.
    pub fn significance(&self, x: &[f64], alpha: f64) -> Result<f64, AcquisitionError> {
        let (mean, var) = self.fgp.posterior(x)?;
        Ok(mean + alpha * var.sqrt())
    }
}

/// Minimization adapter for [`SurrogateEnsemble::gei`].
pub struct GeiObjective<'a> {
    pub ensemble: &'a SurrogateEnsemble,
}

impl BoxObjective for GeiObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.ensemble.gei(x).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.ensemble.gei_with_grad(x).ok().map(|(_, g)| g)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        match self.ensemble.gei_with_grad(x) {
            Ok((v, g)) => (v, Some(g)),
            Err(_) => (f64::INFINITY, None),
        }
    }
}

/// Maximization adapter for [`SurrogateEnsemble::gpi`].
pub struct GpiObjective<'a> {
    pub ensemble: &'a SurrogateEnsemble,
    pub incumbent: f64,
    pub eps_grad: f64,
    pub eps_pi: f64,
}

impl BoxObjective for GpiObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.ensemble
            .gpi(x, self.incumbent, self.eps_grad, self.eps_pi)
            .unwrap_or(f64::NEG_INFINITY)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.ensemble
            .gpi_with_grad(x, self.incumbent, self.eps_grad, self.eps_pi)
            .ok()
            .map(|(_, g)| g)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        match self
            .ensemble
            .gpi_with_grad(x, self.incumbent, self.eps_grad, self.eps_pi)
        {
            Ok((v, g)) => (v, Some(g)),
            Err(_) => (f64::NEG_INFINITY, None),
        }
    }
}

/// Maximization adapter for expected improvement over a single GP; the
/// predictive spread includes observation noise.
pub struct EiObjective<'a> {
    pub gp: &'a FittedGp,
    pub incumbent: f64,
}

impl BoxObjective for EiObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.gp.posterior(x) {
            Ok((mean, var)) => expected_improvement(
                mean,
                (var + self.gp.noise_variance()).sqrt(),
                self.incumbent,
            ),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let Ok((mean, var, dmean, dvar)) = self.gp.posterior_with_gradient(x) else {
            return (f64::NEG_INFINITY, None);
        };
        let std = (var + self.gp.noise_variance()).sqrt().max(MIN_STD);
        let (ei, dei_dmean, dei_dstd) = expected_improvement_with_grad(mean, std, self.incumbent);
        let grad = (0..x.len())
            .map(|j| dei_dmean * dmean[j] + dei_dstd * dvar[j] / (2.0 * std))
            .collect();
        (ei, Some(grad))
    }
}

/// Minimization adapter for the expected magnitude `E|X|` of one derivative
/// surrogate's prediction; locates coordinates where that partial derivative
/// plausibly vanishes.
pub struct DerivMagnitudeObjective<'a> {
    pub gp: &'a FittedGp,
}

impl BoxObjective for DerivMagnitudeObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.gp.posterior(x) {
            Ok((mean, var)) => {
                let std = (var + self.gp.noise_variance()).sqrt().max(MIN_STD);
                folded_normal_stats(mean, std).mean
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.value_and_gradient(x).1
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        let Ok((mean, var, dmean, dvar)) = self.gp.posterior_with_gradient(x) else {
            return (f64::INFINITY, None);
        };
        let std = (var + self.gp.noise_variance()).sqrt().max(MIN_STD);
        let (stats, g) = folded_normal_stats_with_grad(mean, std);
        let grad = (0..x.len())
            .map(|j| g.dmean_dmu * dmean[j] + g.dmean_dsigma * dvar[j] / (2.0 * std))
            .collect();
        (stats.mean, Some(grad))
    }
}

/// Maximization adapter for the posterior mean of one GP.
pub struct PosteriorMeanObjective<'a> {
    pub gp: &'a FittedGp,
}

impl BoxObjective for PosteriorMeanObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self.gp.posterior(x) {
            Ok((mean, _)) => mean,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gp
            .posterior_with_gradient(x)
            .ok()
            .map(|(_, _, g, _)| g)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        match self.gp.posterior_with_gradient(x) {
            Ok((mean, _, g, _)) => (mean, Some(g)),
            Err(_) => (f64::NEG_INFINITY, None),
        }
    }
}
