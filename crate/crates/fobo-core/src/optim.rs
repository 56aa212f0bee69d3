//! Box-constrained smooth optimization: projected BFGS with Armijo
//! backtracking, plus a multistart wrapper.
//!
//! Everything downstream (likelihood fitting, acquisition maximization, the
//! gradient-magnitude subproblems) funnels through [`local_optimize`] or
//! [`multistart_optimize`]. The search runs in unit-box coordinates so one set
//! of step-size and convergence constants works for every benchmark domain.
//! Objectives may supply an analytic gradient through [`BoxObjective`];
//! otherwise central finite differences (clamped at the box boundary) fill in.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::gp::Domain;

const MAX_ITERS: usize = 200;
const GRAD_TOL: f64 = 1e-6;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 45;
const FD_STEP: f64 = 1e-6;
const CURVATURE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("objective is not finite at the start point")]
    StartValueNotFinite,
    #[error("multistart requires at least one start point")]
    NoStarts,
}

/// Direction of optimization. Results always report the objective in its own
/// units; `Maximize` only flips the internal search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Outcome of one local search: the final (in-box) point, the objective value
/// there, and whether the projected-gradient test was met.
#[derive(Debug, Clone)]
pub struct OptResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

/// An objective over a box. `gradient` returns `None` when no analytic form
/// is available, in which case the optimizer falls back to finite differences.
pub trait BoxObjective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Option<Vec<f64>>) {
        (self.value(x), self.gradient(x))
    }
}

/// Plain closures are gradient-free objectives.
impl<F: Fn(&[f64]) -> f64> BoxObjective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

struct UnitProblem<'a, O: ?Sized> {
    objective: &'a O,
    domain: &'a Domain,
    sign: f64,
}

impl<O: BoxObjective + ?Sized> UnitProblem<'_, O> {
    fn value(&self, u: &[f64]) -> f64 {
        self.sign * self.objective.value(&self.domain.from_unit(u))
    }

    /// Value and gradient in unit coordinates; finite differences stay inside
    /// the unit box by shrinking one side of the stencil at a boundary.
    fn value_and_gradient(&self, u: &[f64]) -> (f64, DVector<f64>) {
        let raw = self.domain.from_unit(u);
        let (value, grad) = self.objective.value_and_gradient(&raw);
        if let Some(g) = grad {
            let unit_grad = DVector::from_iterator(
                u.len(),
                g.iter().enumerate().map(|(i, gi)| {
                    self.sign * gi * (self.domain.upper()[i] - self.domain.lower()[i])
                }),
            );
            return (self.sign * value, unit_grad);
        }
        let mut fd = DVector::zeros(u.len());
        for i in 0..u.len() {
            let mut up = u.to_vec();
            let mut um = u.to_vec();
            up[i] = (u[i] + FD_STEP).min(1.0);
            um[i] = (u[i] - FD_STEP).max(0.0);
            fd[i] = (self.value(&up) - self.value(&um)) / (up[i] - um[i]);
        }
        (self.sign * value, fd)
    }
}

fn clamp_unit(u: &mut DVector<f64>) {
    for v in u.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Gradient with outward-pointing components zeroed at active bounds; its
/// infinity norm is the stationarity measure for the box problem.
fn projected_gradient(u: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        u.len(),
        u.iter().zip(g.iter()).map(|(ui, gi)| {
            let stepped = (ui - gi).clamp(0.0, 1.0);
            ui - stepped
        }),
    )
}

/// Projected BFGS from `start` (clamped into `domain` if needed).
///
/// Iterates until the projected gradient's infinity norm drops below `1e-6`
/// in unit coordinates or 200 iterations pass; line-search stalls end the
/// search early with `converged = false`. Errors if the objective is not
/// finite at the start.
pub fn local_optimize<O: BoxObjective + ?Sized>(
    objective: &O,
    start: &[f64],
    domain: &Domain,
    sense: Sense,
) -> Result<OptResult, OptimError> {
    if start.len() != domain.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: domain.dim(),
            got: start.len(),
        });
    }
    let problem = UnitProblem {
        objective,
        domain,
        sign: match sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        },
    };
    let dim = domain.dim();
    let mut u = DVector::from_vec(domain.to_unit(&domain.clamp(start)));
    clamp_unit(&mut u);
    let (mut fval, mut grad) = problem.value_and_gradient(u.as_slice());
    if !fval.is_finite() {
        return Err(OptimError::StartValueNotFinite);
    }

    let mut hinv: DMatrix<f64> = DMatrix::identity(dim, dim);
    let mut scale_pending = true;
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        let pg = projected_gradient(&u, &grad);
        if pg.amax() < GRAD_TOL {
            converged = true;
            break;
        }

        let mut direction = -(&hinv * &grad);
        if !direction.iter().all(|d| d.is_finite())
            || direction.dot(&grad) >= -1e-12 * direction.norm() * grad.norm()
        {
            direction = -pg.clone();
            hinv = DMatrix::identity(dim, dim);
            scale_pending = true;
        }

        let mut accepted: Option<(DVector<f64>, f64)> = None;
        let mut used_fallback = false;
        // Smallest decrease distinguishable from round-off at fval's scale;
        // once the Armijo target drops below it, acceptance would be noise.
        let resolution = f64::EPSILON * (1.0 + fval.abs());
        loop {
            let mut t = 1.0;
            for _ in 0..MAX_BACKTRACKS {
                let mut candidate = &u + t * &direction;
                clamp_unit(&mut candidate);
                let step = &candidate - &u;
                let slope = grad.dot(&step);
                if step.amax() < 1e-14 {
                    break;
                }
                if slope < 0.0 {
                    if ARMIJO_C1 * -slope < resolution {
                        break;
                    }
                    let f_new = problem.value(candidate.as_slice());
                    if f_new.is_finite() && f_new <= fval + ARMIJO_C1 * slope {
                        accepted = Some((candidate, f_new));
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() || used_fallback {
                break;
            }
            // Quasi-Newton direction failed to yield progress; retry once
            // along the projected steepest descent with a reset metric.
            direction = -pg.clone();
            hinv = DMatrix::identity(dim, dim);
            scale_pending = true;
            used_fallback = true;
        }
        let Some((u_new, _)) = accepted else {
            break;
        };

        let (f_new, grad_new) = problem.value_and_gradient(u_new.as_slice());
        let s = &u_new - &u;
        let y = &grad_new - &grad;
        let sy = s.dot(&y);
        if sy > CURVATURE_FLOOR * s.norm() * y.norm() {
            if scale_pending {
                let yy = y.dot(&y);
                if yy > 0.0 {
                    hinv *= sy / yy;
                }
                scale_pending = false;
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // BFGS inverse update in expanded form:
            // H += (sy + y'Hy) rho^2 s s' - rho (H y s' + s y' H).
            hinv += (sy + yhy) * rho * rho * &s * s.transpose()
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        u = u_new;
        fval = f_new;
        grad = grad_new;
    }

    let point = domain.from_unit(u.as_slice());
    let value = match sense {
        Sense::Minimize => fval,
        Sense::Maximize => -fval,
    };
    Ok(OptResult {
        point,
        value,
        converged,
    })
}

/// Runs [`local_optimize`] from `starts` uniform samples and returns every
/// outcome, in start order.
///
/// All start points are drawn before any search runs, so the RNG stream does
/// not depend on how individual searches behave. A search that errors
/// contributes its start point with `converged = false` rather than being
/// dropped; the result list always has exactly `starts` entries.
pub fn multistart_optimize<O: BoxObjective + ?Sized>(
    objective: &O,
    domain: &Domain,
    starts: usize,
    sense: Sense,
    rng: &mut impl Rng,
) -> Result<Vec<OptResult>, OptimError> {
    if starts == 0 {
        return Err(OptimError::NoStarts);
    }
    let start_points: Vec<Vec<f64>> = (0..starts).map(|_| domain.sample(rng)).collect();
    Ok(start_points
        .into_iter()
        .map(
            |start| match local_optimize(objective, &start, domain, sense) {
                Ok(result) => result,
                Err(_) => OptResult {
                    value: objective.value(&start),
                    point: start,
                    converged: false,
                },
            },
        )
        .collect())
}

/// The best entry under `sense`; non-finite values lose to finite ones and
/// ties keep the earliest entry. `None` only for an empty slice.
pub fn best(results: &[OptResult], sense: Sense) -> Option<&OptResult> {
    let mut best: Option<&OptResult> = None;
    for r in results {
        let better = match best {
            None => true,
            Some(b) => {
                if !r.value.is_finite() {
                    false
                } else if !b.value.is_finite() {
                    true
                } else {
                    match sense {
                        Sense::Minimize => r.value < b.value,
                        Sense::Maximize => r.value > b.value,
                    }
                }
            }
        };
        if better {
            best = Some(r);
        }
    }
    best
}
