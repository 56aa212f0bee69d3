//! Analytic benchmark problems with exact gradients.
//!
//! Every problem is expressed as a maximization over an axis-aligned box, so
//! functions that are conventionally minimized (Branin, Levy, Ackley,
//! Dixon-Price, Hartmann) are negated here, gradient included. Evaluation is
//! exact; [`BenchmarkSpec::observe`] layers iid Gaussian noise on the value
//! and on every gradient component, always drawing all `d + 1` variates so
//! that different consumers of a shared seed see identical noise streams.
//! True values ride along in each observation for regret accounting only and
//! must never reach a surrogate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::gp::Domain;

/// Regret is floored here before taking log10, keeping plots finite when a
/// run lands exactly on the optimum.
pub const REGRET_FLOOR: f64 = 1e-12;

/// `log10(max(regret, 1e-12))`.
pub fn log10_regret(regret: f64) -> f64 {
    regret.max(REGRET_FLOOR).log10()
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point lies outside the benchmark domain")]
    OutOfDomain,
    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),
}

/// The available benchmark problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    Branin,
    Levy4,
    Ackley5,
    DixonPrice5,
    Hartmann6,
    Cosine8,
    Reg6d,
}

impl BenchmarkId {
    pub fn all() -> [BenchmarkId; 7] {
        [
            BenchmarkId::Branin,
            BenchmarkId::Levy4,
            BenchmarkId::Ackley5,
            BenchmarkId::DixonPrice5,
            BenchmarkId::Hartmann6,
            BenchmarkId::Cosine8,
            BenchmarkId::Reg6d,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkId::Branin => "branin",
            BenchmarkId::Levy4 => "levy4",
            BenchmarkId::Ackley5 => "ackley5",
            BenchmarkId::DixonPrice5 => "dixonprice5",
            BenchmarkId::Hartmann6 => "hartmann6",
            BenchmarkId::Cosine8 => "cosine8",
            BenchmarkId::Reg6d => "reg6d",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BenchmarkId::all()
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| BenchError::UnknownBenchmark(s.to_string()))
    }
}

/// One noisy query of the objective: what the optimizer is allowed to see
/// (`value_noisy`, `gradient_noisy`) plus the true value, which exists only
/// so regret can be computed and is never fed to a surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: Vec<f64>,
    pub value_noisy: f64,
    pub gradient_noisy: Vec<f64>,
    pub value_true: f64,
}

/// One row of a run's regret history.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretEntry {
    pub iteration: usize,
    /// Largest true objective value among all points queried so far.
    pub best_true_value: f64,
    pub immediate_regret: f64,
    pub log10_regret: f64,
    /// Left unset when byte-identical reruns matter more than timing.
    pub wall_time_ms: Option<u64>,
}

/// Regret-per-iteration record of one optimization run; entry 0 describes the
/// initial design.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretTrace {
    pub entries: Vec<RegretEntry>,
}

/// A benchmark problem: its domain and known global maximum value.
#[derive(Debug, Clone)]
pub struct BenchmarkSpec {
    id: BenchmarkId,
    domain: Domain,
    optimum: f64,
}

impl BenchmarkSpec {
    pub fn new(id: BenchmarkId) -> Self {
        let (lower, upper, optimum) = match id {
            BenchmarkId::Branin => (vec![-5.0, 0.0], vec![10.0, 15.0], -0.39788735772973816),
            BenchmarkId::Levy4 => (vec![-10.0; 4], vec![10.0; 4], 0.0),
            BenchmarkId::Ackley5 => (vec![-32.768; 5], vec![32.768; 5], 0.0),
            BenchmarkId::DixonPrice5 => (vec![-10.0; 5], vec![10.0; 5], 0.0),
            BenchmarkId::Hartmann6 => (vec![0.0; 6], vec![1.0; 6], 3.32237),
            BenchmarkId::Cosine8 => (vec![-1.0; 8], vec![1.0; 8], 0.8),
            BenchmarkId::Reg6d => (vec![0.0; 6], vec![100.0; 6], 0.0),
        };
        let domain = Domain::new(lower, upper).expect("benchmark boxes are valid");
        Self {
            id,
            domain,
            optimum,
        }
    }

    pub fn id(&self) -> BenchmarkId {
        self.id
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Global maximum value over the domain.
    pub fn optimum(&self) -> f64 {
        self.optimum
    }

    /// Distance of `best_true_value` from the global maximum.
    pub fn immediate_regret(&self, best_true_value: f64) -> f64 {
        (self.optimum - best_true_value).abs()
    }

    /// Exact value and gradient at an in-domain point.
    pub fn evaluate(&self, x: &[f64]) -> Result<(f64, Vec<f64>), BenchError> {
        if x.len() != self.dim() {
            return Err(BenchError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.domain.contains(x) {
            return Err(BenchError::OutOfDomain);
        }
        Ok(match self.id {
            BenchmarkId::Branin => branin(x),
            BenchmarkId::Levy4 => levy(x),
            BenchmarkId::Ackley5 => ackley(x),
            BenchmarkId::DixonPrice5 => dixon_price(x),
            BenchmarkId::Hartmann6 => hartmann6(x),
            BenchmarkId::Cosine8 => cosine_mixture(x),
            BenchmarkId::Reg6d => reg6d(x),
        })
    }

    /// Noisy query: iid `N(0, noise_variance)` added to the value and to
    /// every gradient component. Exactly `dim + 1` normal variates are drawn
    /// in a fixed order (value first) regardless of which parts a consumer
    /// uses, so algorithms sharing a seed consume identical noise streams.
    pub fn observe(
        &self,
        x: &[f64],
        noise_variance: f64,
        rng: &mut impl Rng,
    ) -> Result<Evaluation, BenchError> {
        let (value_true, gradient) = self.evaluate(x)?;
        let noise_std = noise_variance.sqrt();
        let z: f64 = rng.sample(StandardNormal);
        let value_noisy = value_true + noise_std * z;
        let gradient_noisy = gradient
            .into_iter()
            .map(|g| {
                let z: f64 = rng.sample(StandardNormal);
                g + noise_std * z
            })
            .collect();
        Ok(Evaluation {
            point: x.to_vec(),
            value_noisy,
            gradient_noisy,
            value_true,
        })
    }
}

fn branin(x: &[f64]) -> (f64, Vec<f64>) {
    let (x1, x2) = (x[0], x[1]);
    let a = 1.0;
    let b = 5.1 / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    let c = 5.0 / std::f64::consts::PI;
    let r = 6.0;
    let s = 10.0;
    let t = 1.0 / (8.0 * std::f64::consts::PI);
    let inner = x2 - b * x1 * x1 + c * x1 - r;
    let value = a * inner * inner + s * (1.0 - t) * x1.cos() + s;
    let d1 = 2.0 * a * inner * (-2.0 * b * x1 + c) - s * (1.0 - t) * x1.sin();
    let d2 = 2.0 * a * inner;
    (-value, vec![-d1, -d2])
}

fn levy(x: &[f64]) -> (f64, Vec<f64>) {
    let d = x.len();
    let w: Vec<f64> = x.iter().map(|xi| 1.0 + (xi - 1.0) / 4.0).collect();
    let pi = std::f64::consts::PI;
    let mut value = (pi * w[0]).sin().powi(2);
    let mut grad = vec![0.0; d];
    grad[0] += 2.0 * pi * (pi * w[0]).sin() * (pi * w[0]).cos();
    for i in 0..d - 1 {
        let s = (pi * w[i] + 1.0).sin();
        let c = (pi * w[i] + 1.0).cos();
        let dev = w[i] - 1.0;
        value += dev * dev * (1.0 + 10.0 * s * s);
        grad[i] += 2.0 * dev * (1.0 + 10.0 * s * s) + dev * dev * 20.0 * pi * s * c;
    }
    let s = (2.0 * pi * w[d - 1]).sin();
    let c = (2.0 * pi * w[d - 1]).cos();
    let dev = w[d - 1] - 1.0;
    value += dev * dev * (1.0 + s * s);
    grad[d - 1] += 2.0 * dev * (1.0 + s * s) + dev * dev * 4.0 * pi * s * c;
    // Chain rule through w = 1 + (x - 1)/4, then negate for maximization.
    (-value, grad.into_iter().map(|g| -g / 4.0).collect())
}

fn ackley(x: &[f64]) -> (f64, Vec<f64>) {
    let d = x.len() as f64;
    let a = 20.0;
    let b = 0.2;
    let c = 2.0 * std::f64::consts::PI;
    let sum_sq: f64 = x.iter().map(|v| v * v).sum();
    let root = (sum_sq / d).sqrt();
    let mean_cos: f64 = x.iter().map(|v| (c * v).cos()).sum::<f64>() / d;
    let e1 = (-b * root).exp();
    let e2 = mean_cos.exp();
    let value = -a * e1 - e2 + a + std::f64::consts::E;
    let gradient = x
        .iter()
        .map(|&xi| {
            // The radial term's gradient has a removable singularity at the
            // origin; the symmetric limit there is zero.
            let radial = if root > 0.0 {
                a * b * e1 * xi / (d * root)
            } else {
                0.0
            };
            let oscillatory = e2 * c * (c * xi).sin() / d;
            -(radial + oscillatory)
        })
        .collect();
    (-value, gradient)
}

fn dixon_price(x: &[f64]) -> (f64, Vec<f64>) {
    let d = x.len();
    let mut value = (x[0] - 1.0) * (x[0] - 1.0);
    let mut grad = vec![0.0; d];
    grad[0] = 2.0 * (x[0] - 1.0);
    for i in 1..d {
        let k = (i + 1) as f64;
        let inner = 2.0 * x[i] * x[i] - x[i - 1];
        value += k * inner * inner;
        grad[i] += 8.0 * k * x[i] * inner;
        grad[i - 1] += -2.0 * k * inner;
    }
    (-value, grad.into_iter().map(|g| -g).collect())
}

const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_C: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

fn hartmann6(x: &[f64]) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let mut grad = vec![0.0; 6];
    for i in 0..4 {
        let expo: f64 = (0..6)
            .map(|j| {
                let d = x[j] - HARTMANN_P[i][j];
                HARTMANN_A[i][j] * d * d
            })
            .sum();
        let term = HARTMANN_C[i] * (-expo).exp();
        value += term;
        for j in 0..6 {
            grad[j] += term * -2.0 * HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]);
        }
    }
    (value, grad)
}

fn cosine_mixture(x: &[f64]) -> (f64, Vec<f64>) {
    let pi5 = 5.0 * std::f64::consts::PI;
    let value = x.iter().map(|&v| 0.1 * (pi5 * v).cos() - v * v).sum();
    let gradient = x
        .iter()
        .map(|&v| -0.1 * pi5 * (pi5 * v).sin() - 2.0 * v)
        .collect();
    (value, gradient)
}

/// Closed-form minimizer of the inner ridge problem for each coordinate:
/// `argmin_z (z - 10 i)^2 + lambda_i z^2 = 10 i / (1 + lambda_i)`.
pub fn reg6d_inner_solution(lambda: &[f64]) -> Vec<f64> {
    lambda
        .iter()
        .enumerate()
        .map(|(idx, l)| 10.0 * (idx + 1) as f64 / (1.0 + l))
        .collect()
}

/// The inner ridge objective whose minimizer [`reg6d_inner_solution`] gives
/// in closed form; exposed so the closed form can be checked against an
/// independent numerical solve.
pub fn reg6d_inner_loss(z: &[f64], lambda: &[f64]) -> f64 {
    z.iter()
        .zip(lambda)
        .enumerate()
        .map(|(idx, (zi, li))| {
            let fit = zi - 10.0 * (idx + 1) as f64;
            fit * fit + li * zi * zi
        })
        .sum()
}

/// Regularization-tuning surface: the decision variables are the per-feature
/// ridge penalties, the reward is the negated validation error of the inner
/// solution against targets `i - 0.5`.
fn reg6d(lambda: &[f64]) -> (f64, Vec<f64>) {
    let inner = reg6d_inner_solution(lambda);
    let mut value = 0.0;
    let mut grad = vec![0.0; 6];
    for (idx, (zi, li)) in inner.iter().zip(lambda).enumerate() {
        let i = (idx + 1) as f64;
        let resid = zi - (i - 0.5);
        value -= resid * resid;
        // d z_i / d lambda_i = -10 i / (1 + lambda_i)^2.
        let dz = -10.0 * i / ((1.0 + li) * (1.0 + li));
        grad[idx] = -2.0 * resid * dz;
    }
    (value, grad)
}
