//! Python bindings for the first-order Bayesian optimization toolkit.
//!
//! The module mirrors the core crate's main operations: folded-normal
//! statistics, GP fitting and posterior prediction, benchmark evaluation with
//! exact gradients, and complete optimization runs with regret traces.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use fobo_core::bench::{BenchmarkId, BenchmarkSpec};
use fobo_core::driver::{self, AlgorithmId, AlphaSchedule, RunSettings};
use fobo_core::gp::{self, Domain, FittedGp};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Mean and standard deviation of `|Z|` for `Z ~ N(mu, sigma^2)`.
#[pyfunction]
fn folded_normal_stats(mu: f64, sigma: f64) -> (f64, f64) {
    let stats = fobo_core::acquisition::folded_normal_stats(mu, sigma);
    (stats.mean, stats.std)
}

/// Expected improvement of `N(mean, std^2)` over `incumbent` (maximization).
#[pyfunction]
fn expected_improvement(mean: f64, std: f64, incumbent: f64) -> f64 {
    fobo_core::acquisition::expected_improvement(mean, std, incumbent)
}

/// A trained Gaussian-process surrogate.
#[pyclass(name = "Gp", frozen)]
struct PyGp {
    inner: FittedGp,
}

#[pymethods]
impl PyGp {
    /// Posterior mean and (noiseless) variance at `x`.
    fn posterior(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        self.inner.posterior(&x).map_err(value_error)
    }

    /// Log marginal likelihood of the training data at the fitted
    /// hyperparameters (standardized target space).
    fn log_marginal(&self) -> f64 {
        self.inner.log_marginal()
    }

    /// Fitted hyperparameters in the model's normalized coordinates:
    /// `(signal_variance, lengthscale, noise_variance, constant_mean)`.
    fn hyperparams(&self) -> (f64, f64, f64, f64) {
        let h = self.inner.hyperparams();
        (
            h.signal_variance(),
            h.lengthscale(),
            h.noise_variance(),
            h.constant_mean(),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "Gp(n={}, log_marginal={:.4})",
            self.inner.train_len(),
            self.inner.log_marginal()
        )
    }
}

/// Maximum-likelihood GP fit on `inputs`/`targets` over the box
/// `[lower, upper]`, with `restarts` random initializations drawn from a
/// deterministic stream seeded by `seed`.
#[pyfunction]
#[pyo3(signature = (inputs, targets, lower, upper, restarts = 5, seed = 0))]
fn fit_gp(
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    restarts: usize,
    seed: u64,
) -> PyResult<PyGp> {
    let domain = Domain::new(lower, upper).map_err(value_error)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let inner = gp::fit(&inputs, &targets, &domain, restarts, &mut rng).map_err(value_error)?;
    Ok(PyGp { inner })
}

/// An analytic benchmark objective with exact gradients.
#[pyclass(name = "Benchmark", frozen)]
struct PyBenchmark {
    spec: BenchmarkSpec,
}

#[pymethods]
impl PyBenchmark {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        let id: BenchmarkId = name.parse().map_err(value_error)?;
        Ok(Self {
            spec: BenchmarkSpec::new(id),
        })
    }

    /// All benchmark names accepted by the constructor.
    #[staticmethod]
    fn names() -> Vec<&'static str> {
        BenchmarkId::all().iter().map(|id| id.name()).collect()
    }

    fn name(&self) -> &str {
        self.spec.name()
    }

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// The search box as `(lower, upper)` coordinate lists.
    fn domain(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.spec.domain().lower().to_vec(),
            self.spec.domain().upper().to_vec(),
        )
    }

    /// Global maximum of the (internally maximized) objective.
    fn optimum(&self) -> f64 {
        self.spec.optimum()
    }

    /// True value and gradient at `x`.
    fn evaluate(&self, x: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        self.spec.evaluate(&x).map_err(value_error)
    }

    /// One noisy observation at `x`: returns
    /// `(value_noisy, gradient_noisy, value_true)` with independent Gaussian
    /// noise of variance `noise_variance` on the value and on each partial
    /// derivative, drawn deterministically from `seed`.
    #[pyo3(signature = (x, noise_variance, seed = 0))]
    fn observe(
        &self,
        x: Vec<f64>,
        noise_variance: f64,
        seed: u64,
    ) -> PyResult<(f64, Vec<f64>, f64)> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let eval = self
            .spec
            .observe(&x, noise_variance, &mut rng)
            .map_err(value_error)?;
        Ok((eval.value_noisy, eval.gradient_noisy, eval.value_true))
    }

    fn __repr__(&self) -> String {
        format!("Benchmark('{}', dim={})", self.spec.name(), self.spec.dim())
    }
}

/// Outcome of one optimization run: the per-iteration regret trace and the
/// incumbent (best noisy observation).
#[pyclass(name = "RunResult", frozen)]
struct PyRunResult {
    #[pyo3(get)]
    algorithm: String,
    #[pyo3(get)]
    benchmark: String,
    #[pyo3(get)]
    seed: u64,
    #[pyo3(get)]
    iterations: Vec<usize>,
    #[pyo3(get)]
    best_true_values: Vec<f64>,
    #[pyo3(get)]
    immediate_regrets: Vec<f64>,
    #[pyo3(get)]
    log10_regrets: Vec<f64>,
    #[pyo3(get)]
    incumbent_point: Vec<f64>,
    #[pyo3(get)]
    incumbent_value: f64,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(algorithm='{}', benchmark='{}', final_log10_regret={:.4})",
            self.algorithm,
            self.benchmark,
            self.log10_regrets.last().copied().unwrap_or(f64::NAN)
        )
    }
}

/// All algorithm names accepted by [`run`].
#[pyfunction]
fn algorithms() -> Vec<&'static str> {
    AlgorithmId::all().iter().map(|a| a.name()).collect()
}

/// One full optimization run of `algorithm` on `benchmark`.
///
/// The trace has `budget + 1` entries; entry 0 summarizes the initial design.
/// Identical arguments always produce identical results.
#[pyfunction]
#[pyo3(signature = (
    benchmark,
    algorithm,
    budget = 50,
    initial_points = 5,
    restarts = 10,
    noise_variance = 0.25,
    alpha = 1.0,
    alpha_schedule = "constant",
    master_seed = 0,
    run_id = 0,
))]
#[allow(clippy::too_many_arguments)]
fn run(
    benchmark: &str,
    algorithm: &str,
    budget: usize,
    initial_points: usize,
    restarts: usize,
    noise_variance: f64,
    alpha: f64,
    alpha_schedule: &str,
    master_seed: u64,
    run_id: u64,
) -> PyResult<PyRunResult> {
    let id: BenchmarkId = benchmark.parse().map_err(value_error)?;
    let spec = BenchmarkSpec::new(id);
    let algorithm: AlgorithmId = algorithm.parse().map_err(value_error)?;
    let alpha_schedule: AlphaSchedule = alpha_schedule.parse().map_err(value_error)?;
    let settings = RunSettings {
        budget,
        initial_points,
        restarts,
        noise_variance,
        alpha,
        alpha_schedule,
        ..RunSettings::default()
    };
    let output = driver::run(&spec, algorithm, &settings, master_seed, run_id)
        .map_err(|failure| value_error(&*failure))?;
    let incumbent = output
        .incumbent
        .as_ref()
        .ok_or_else(|| value_error("run produced no incumbent"))?;
    let entries = &output.trace.entries;
    Ok(PyRunResult {
        algorithm: output.algorithm.name().to_string(),
        benchmark: spec.name().to_string(),
        seed: output.seed,
        iterations: entries.iter().map(|e| e.iteration).collect(),
        best_true_values: entries.iter().map(|e| e.best_true_value).collect(),
        immediate_regrets: entries.iter().map(|e| e.immediate_regret).collect(),
        log10_regrets: entries.iter().map(|e| e.log10_regret).collect(),
        incumbent_point: incumbent.point.clone(),
        incumbent_value: incumbent.value,
    })
}

/// First-order Bayesian optimization toolkit.
#[pymodule]
fn fobo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(folded_normal_stats, m)?)?;
    m.add_function(wrap_pyfunction!(expected_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gp, m)?)?;
    m.add_function(wrap_pyfunction!(algorithms, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_class::<PyGp>()?;
    m.add_class::<PyBenchmark>()?;
    m.add_class::<PyRunResult>()?;
    Ok(())
}
