//! First-order Bayesian optimization over independent Gaussian-process
//! surrogates.
//!
//! The toolkit models an expensive black-box objective together with each of
//! its partial derivatives as `d + 1` independent GPs and selects query points
//! through two-level acquisition strategies: a lower level that locates
//! near-stationary candidates (by minimizing a folded-normal gradient score or
//! maximizing a stationarity-times-improvement probability) and an upper level
//! that ranks candidates by a significance score. Zeroth-order expected
//! improvement and two simpler first-order baselines are included for
//! comparison, along with analytic benchmark functions with exact gradients
//! and a CLI harness that writes regret traces, summaries, and an SVG plot.
//!
//! Module map:
//!
//! - [`gp`]: scalar GP regression (squared-exponential kernel, MLE fitting,
//!   posterior prediction).
//! - [`acquisition`]: folded-normal statistics and all acquisition values.
//! - [`optim`]: box-bounded projected quasi-Newton with multistart.
//! - [`driver`]: the sequential optimization loop and candidate selection.
//! - [`bench`]: benchmark objectives, observation noise, regret accounting.
//! - [`cli`]: experiment configuration, CSV/SVG artifacts, argument parsing.

pub mod acquisition;
pub mod bench;
pub mod cli;
pub mod driver;
pub mod gp;
pub mod optim;

pub use acquisition::{Incumbent, SurrogateEnsemble};
pub use bench::{BenchmarkId, BenchmarkSpec, Evaluation, RegretTrace};
pub use driver::{AlgorithmId, AlphaSchedule, RunOutput, RunSettings};
pub use gp::{Domain, FittedGp, GpHyperparams};
pub use optim::{OptResult, Sense};
