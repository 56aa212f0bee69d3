//! The sequential optimization loop and its proposal strategies.
//!
//! Each iteration refits the surrogate ensemble from scratch, proposes one
//! query point according to the configured algorithm, observes the objective
//! (noisy value and noisy gradient), and appends to the dataset. The
//! gradient-aware strategies build a candidate set from k restarts of the
//! lower-level acquisition plus the expected-improvement maximizer of the
//! objective surrogate, then pick by significance: either the plain argmax
//! (MS) or argmax after appending a softmax-weighted convex combination of
//! the candidates (MSC). Baselines: expected improvement alone, and the
//! per-dimension gradient-magnitude scheme with convex-combination or
//! max-mean aggregation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::acquisition::{
    AcquisitionError, DerivMagnitudeObjective, EiObjective, GeiObjective, GpiObjective, Incumbent,
    SurrogateEnsemble,
};
use crate::bench::{self, BenchError, BenchmarkSpec, Evaluation, RegretEntry, RegretTrace};
use crate::gp::{self, GpError};
use crate::optim::{self, BoxObjective, OptResult, OptimError, Sense};

/// Candidates closer than this (Euclidean, unit-box coordinates) to an
/// already-queried point get their restart redrawn once.
const DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid settings: {0}")]
    InvalidSettings(&'static str),
    #[error("candidate list is empty")]
    NoCandidates,
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Acquisition(#[from] AcquisitionError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

/// The implemented query strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmId {
    GeiMs,
    GeiMsc,
    GpiMs,
    GpiMsc,
    ZoboEi,
    FoboCc,
    FoboMm,
}

impl AlgorithmId {
    pub fn all() -> [AlgorithmId; 7] {
        [
            AlgorithmId::GeiMs,
            AlgorithmId::GeiMsc,
            AlgorithmId::GpiMs,
            AlgorithmId::GpiMsc,
            AlgorithmId::ZoboEi,
            AlgorithmId::FoboCc,
            AlgorithmId::FoboMm,
        ]
    }

    /// Canonical display name.
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmId::GeiMs => "gEI-MS",
            AlgorithmId::GeiMsc => "gEI-MSC",
            AlgorithmId::GpiMs => "gPI-MS",
            AlgorithmId::GpiMsc => "gPI-MSC",
            AlgorithmId::ZoboEi => "ZOBO-EI",
            AlgorithmId::FoboCc => "FOBO-CC",
            AlgorithmId::FoboMm => "FOBO-MM",
        }
    }

    /// Lowercase form used in file names and config values.
    pub fn slug(&self) -> &'static str {
        match self {
            AlgorithmId::GeiMs => "gei-ms",
            AlgorithmId::GeiMsc => "gei-msc",
            AlgorithmId::GpiMs => "gpi-ms",
            AlgorithmId::GpiMsc => "gpi-msc",
            AlgorithmId::ZoboEi => "zobo-ei",
            AlgorithmId::FoboCc => "fobo-cc",
            AlgorithmId::FoboMm => "fobo-mm",
        }
    }

    /// Whether runs of this algorithm fit the derivative surrogates.
    pub fn uses_gradients(&self) -> bool {
        !matches!(self, AlgorithmId::ZoboEi)
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = DriverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        AlgorithmId::all()
            .into_iter()
            .find(|id| id.slug() == lower)
            .ok_or(DriverError::InvalidSettings("unknown algorithm"))
    }
}

/// How the exploration weight in the significance score evolves over
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSchedule {
    Constant,
    /// `alpha / sqrt(n + 1)` where n counts completed post-initialization
    /// iterations.
    Decay,
}

impl AlphaSchedule {
    pub fn effective(&self, alpha: f64, completed_iterations: usize) -> f64 {
        match self {
            AlphaSchedule::Constant => alpha,
            AlphaSchedule::Decay => alpha / ((completed_iterations + 1) as f64).sqrt(),
        }
    }
}

impl fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaSchedule::Constant => "constant",
            AlphaSchedule::Decay => "decay",
        })
    }
}

impl FromStr for AlphaSchedule {
    type Err = DriverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(AlphaSchedule::Constant),
            "decay" => Ok(AlphaSchedule::Decay),
            _ => Err(DriverError::InvalidSettings(
                "alpha schedule must be 'constant' or 'decay'",
            )),
        }
    }
}

/// Per-run knobs; defaults follow the standard experiment protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    /// Queries after the initial design.
    pub budget: usize,
    /// Uniform random points fitted before the loop starts.
    pub initial_points: usize,
    /// Multistart count k for every acquisition optimization.
    pub restarts: usize,
    pub noise_variance: f64,
    /// Exploration weight in the significance score.
    pub alpha: f64,
    pub alpha_schedule: AlphaSchedule,
    /// Half-width of the near-zero-gradient band (standardized units).
    pub eps_grad: f64,
    /// Required improvement margin over the incumbent (standardized units).
    pub eps_pi: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            budget: 200,
            initial_points: 5,
            restarts: 10,
            noise_variance: 0.25,
            alpha: 1.0,
            alpha_schedule: AlphaSchedule::Constant,
            eps_grad: 0.05,
            eps_pi: 0.01,
        }
    }
}

/// Where a candidate came from: one of the k acquisition restarts, the EI
/// maximizer of the objective surrogate, or the convex combination appended
/// by MSC. The declaration order is the tie-break order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CandidateSource {
    Restart(usize),
    FgpEi,
    ConvexCombination,
}

/// A proposed query point with provenance and its significance under the
/// current objective surrogate.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub point: Vec<f64>,
    pub source: CandidateSource,
    pub significance: f64,
}

/// Upper-level selection rule over the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Ms,
    Msc,
}

/// Aggregation rule of the per-dimension baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoboVariant {
    Cc,
    Mm,
}

/// Everything a proposal strategy may look at: the data so far, the fitted
/// surrogates, and the incumbent.
#[derive(Debug, Clone)]
pub struct RunState {
    pub dataset: Vec<Evaluation>,
    pub ensemble: SurrogateEnsemble,
    pub incumbent: Incumbent,
    /// Completed post-initialization iterations.
    pub iteration: usize,
}

/// The candidate whose significance is highest; ties go to the earliest
/// source in construction order.
pub fn select_ms(candidates: &[Candidate]) -> Result<Vec<f64>, DriverError> {
    if candidates.is_empty() {
        return Err(DriverError::NoCandidates);
    }
    let mut best = 0;
    for i in 1..candidates.len() {
        let challenger = candidates[i].significance;
        let reigning = candidates[best].significance;
        if challenger > reigning || (!reigning.is_finite() && challenger.is_finite()) {
            best = i;
        }
    }
    Ok(candidates[best].point.clone())
}

/// Softmax-weighted (max-subtracted, overflow-safe) convex combination of
/// `points` scored by `scores`.
pub fn convex_combination(points: &[Vec<f64>], scores: &[f64]) -> Vec<f64> {
    assert_eq!(points.len(), scores.len());
    assert!(!points.is_empty());
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let dim = points[0].len();
    let mut combined = vec![0.0; dim];
    for (point, w) in points.iter().zip(&weights) {
        for j in 0..dim {
            combined[j] += w / total * point[j];
        }
    }
    combined
}

/// The softmax-weighted combination of the candidate points, weighted by
/// their significances.
pub fn msc_convex_point(candidates: &[Candidate]) -> Result<Vec<f64>, DriverError> {
    if candidates.is_empty() {
        return Err(DriverError::NoCandidates);
    }
    let points: Vec<Vec<f64>> = candidates.iter().map(|c| c.point.clone()).collect();
    let scores: Vec<f64> = candidates.iter().map(|c| c.significance).collect();
    Ok(convex_combination(&points, &scores))
}

/// MS over the candidate set augmented with the convex-combination point,
/// whose significance is computed fresh under the ensemble's objective
/// surrogate. The appended candidate stays in `candidates` for inspection.
pub fn select_msc(
    candidates: &mut Vec<Candidate>,
    ensemble: &SurrogateEnsemble,
    alpha: f64,
) -> Result<Vec<f64>, DriverError> {
    let point = msc_convex_point(candidates)?;
    let significance = ensemble.significance(&point, alpha)?;
    candidates.push(Candidate {
        point,
        source: CandidateSource::ConvexCombination,
        significance,
    });
    select_ms(candidates)
}

fn unit_distance_below(domain: &crate::gp::Domain, a: &[f64], b_unit: &[f64], tol: f64) -> bool {
    let a_unit = domain.to_unit(a);
    let d2: f64 = a_unit
        .iter()
        .zip(b_unit)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    d2.sqrt() < tol
}

/// Redraws the start of any multistart result that landed within
/// [`DUPLICATE_TOL`] (unit metric) of an already-queried point and
/// re-optimizes once; a second collision is accepted as-is so the loop can
/// never deadlock.
fn resample_duplicates<O: BoxObjective + ?Sized>(
    results: &mut [OptResult],
    objective: &O,
    sense: Sense,
    state: &RunState,
    rng: &mut impl Rng,
) {
    let domain = state.ensemble.domain();
    let queried: Vec<Vec<f64>> = state
        .dataset
        .iter()
        .map(|e| domain.to_unit(&e.point))
        .collect();
    for result in results.iter_mut() {
        let near = queried
            .iter()
            .any(|q| unit_distance_below(domain, &result.point, q, DUPLICATE_TOL));
        if near {
            let start = domain.sample(rng);
            *result = match optim::local_optimize(objective, &start, domain, sense) {
                Ok(fresh) => fresh,
                Err(_) => OptResult {
                    value: objective.value(&start),
                    point: start,
                    converged: false,
                },
            };
        }
    }
}

fn optimized_candidates<O: BoxObjective + ?Sized>(
    objective: &O,
    sense: Sense,
    state: &RunState,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<OptResult>, DriverError> {
    let mut results =
        optim::multistart_optimize(objective, state.ensemble.domain(), k, sense, rng)?;
    resample_duplicates(&mut results, objective, sense, state, rng);
    Ok(results)
}

/// The shared candidate-construction and selection machinery behind the
/// gradient-aware strategies: k restarts of `objective`, plus the EI
/// maximizer of the objective surrogate, scored by significance and selected
/// per `selection`.
fn propose_from_acquisition<O: BoxObjective + ?Sized>(
    objective: &O,
    sense: Sense,
    state: &RunState,
    k: usize,
    alpha: f64,
    selection: Selection,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<Candidate>), DriverError> {
    let ensemble = &state.ensemble;
    let results = optimized_candidates(objective, sense, state, k, rng)?;
    let mut candidates = Vec::with_capacity(k + 2);
    for (index, result) in results.into_iter().enumerate() {
        let significance = ensemble.significance(&result.point, alpha)?;
        candidates.push(Candidate {
            point: result.point,
            source: CandidateSource::Restart(index),
            significance,
        });
    }

    let ei = EiObjective {
        gp: ensemble.fgp(),
        incumbent: state.incumbent.value,
    };
    let ei_results = optimized_candidates(&ei, Sense::Maximize, state, k, rng)?;
    let ei_best = optim::best(&ei_results, Sense::Maximize)
        .ok_or(DriverError::NoCandidates)?
        .point
        .clone();
    let significance = ensemble.significance(&ei_best, alpha)?;
    candidates.push(Candidate {
        point: ei_best,
        source: CandidateSource::FgpEi,
        significance,
    });

    let chosen = match selection {
        Selection::Ms => select_ms(&candidates)?,
        Selection::Msc => select_msc(&mut candidates, ensemble, alpha)?,
    };
    Ok((chosen, candidates))
}

/// Candidates are the k minimizers of the summed expected gradient magnitude
/// plus the EI maximizer; selection per `selection`.
pub fn propose_gei(
    state: &RunState,
    k: usize,
    alpha: f64,
    selection: Selection,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<Candidate>), DriverError> {
    let objective = GeiObjective {
        ensemble: &state.ensemble,
    };
    propose_from_acquisition(&objective, Sense::Minimize, state, k, alpha, selection, rng)
}

/// As [`propose_gei`] with the probability-product acquisition maximized
/// instead.
pub fn propose_gpi(
    state: &RunState,
    k: usize,
    alpha: f64,
    eps_grad: f64,
    eps_pi: f64,
    selection: Selection,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<Candidate>), DriverError> {
    let objective = GpiObjective {
        ensemble: &state.ensemble,
        incumbent: state.incumbent.value,
        eps_grad,
        eps_pi,
    };
    propose_from_acquisition(&objective, Sense::Maximize, state, k, alpha, selection, rng)
}

/// Plain expected-improvement proposal over the objective surrogate: the best
/// of k multistarts.
pub fn propose_zobo_ei(
    state: &RunState,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, DriverError> {
    let objective = EiObjective {
        gp: state.ensemble.fgp(),
        incumbent: state.incumbent.value,
    };
    let results = optimized_candidates(&objective, Sense::Maximize, state, k, rng)?;
    Ok(optim::best(&results, Sense::Maximize)
        .ok_or(DriverError::NoCandidates)?
        .point
        .clone())
}

/// Per-dimension baseline: one point minimizing the expected magnitude of
/// each derivative posterior (no spread term), plus the EI maximizer, then
/// either a softmax-of-means convex combination (CC) or the max-mean point
/// (MM). The EI point comes first in the aggregation order.
pub fn propose_fobo_baseline(
    state: &RunState,
    variant: FoboVariant,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, DriverError> {
    let ensemble = &state.ensemble;
    if !ensemble.has_gradient_surrogates() {
        return Err(AcquisitionError::MissingGradientSurrogates.into());
    }

    let ei = EiObjective {
        gp: ensemble.fgp(),
        incumbent: state.incumbent.value,
    };
    let ei_results = optimized_candidates(&ei, Sense::Maximize, state, k, rng)?;
    let mut points = vec![optim::best(&ei_results, Sense::Maximize)
        .ok_or(DriverError::NoCandidates)?
        .point
        .clone()];
    for gp in ensemble.pgp() {
        let objective = DerivMagnitudeObjective { gp };
        let results = optimized_candidates(&objective, Sense::Minimize, state, k, rng)?;
        points.push(
            optim::best(&results, Sense::Minimize)
                .ok_or(DriverError::NoCandidates)?
                .point
                .clone(),
        );
    }

    let mut means = Vec::with_capacity(points.len());
    for p in &points {
        means.push(ensemble.fgp().posterior(p)?.0);
    }
    Ok(match variant {
        FoboVariant::Cc => convex_combination(&points, &means),
        FoboVariant::Mm => {
            let mut best = 0;
            for i in 1..means.len() {
                if means[i] > means[best] {
                    best = i;
                }
            }
            points[best].clone()
        }
    })
}

/// One finished (or aborted) run: its regret trace and the final incumbent,
/// the argmax of the noisy observations.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub algorithm: AlgorithmId,
    pub run_id: u64,
    /// The RNG seed this run used: `master_seed + run_id` (wrapping).
    pub seed: u64,
    pub trace: RegretTrace,
    pub incumbent: Option<Incumbent>,
}

/// A failed run still carries everything recorded before the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub error: DriverError,
    pub partial: RunOutput,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} run {} failed after {} trace entries: {}",
            self.partial.algorithm,
            self.partial.run_id,
            self.partial.trace.entries.len(),
            self.error
        )
    }
}

fn fit_ensemble(
    dataset: &[Evaluation],
    spec: &BenchmarkSpec,
    with_gradients: bool,
    rng: &mut impl Rng,
) -> Result<SurrogateEnsemble, DriverError> {
    let inputs: Vec<Vec<f64>> = dataset.iter().map(|e| e.point.clone()).collect();
    let values: Vec<f64> = dataset.iter().map(|e| e.value_noisy).collect();
    let domain = spec.domain();
    let fgp = gp::fit(&inputs, &values, domain, gp::DEFAULT_FIT_RESTARTS, rng)?;
    let mut pgp = Vec::new();
    if with_gradients {
        for i in 0..spec.dim() {
            let targets: Vec<f64> = dataset.iter().map(|e| e.gradient_noisy[i]).collect();
            pgp.push(gp::fit(
                &inputs,
                &targets,
                domain,
                gp::DEFAULT_FIT_RESTARTS,
                rng,
            )?);
        }
    }
    Ok(SurrogateEnsemble::new(fgp, pgp)?)
}

fn update_incumbent(incumbent: &mut Option<Incumbent>, eval: &Evaluation) {
    let better = match incumbent {
        None => true,
        Some(inc) => eval.value_noisy > inc.value,
    };
    if better {
        *incumbent = Some(Incumbent {
            point: eval.point.clone(),
            value: eval.value_noisy,
        });
    }
}

fn push_entry(trace: &mut RegretTrace, iteration: usize, best_true: f64, spec: &BenchmarkSpec) {
    let regret = spec.immediate_regret(best_true);
    trace.entries.push(RegretEntry {
        iteration,
        best_true_value: best_true,
        immediate_regret: regret,
        log10_regret: bench::log10_regret(regret),
        wall_time_ms: None,
    });
}

/// Executes one full run: initial design, then `budget` iterations of
/// refit / propose / observe / augment. The trace always has `budget + 1`
/// entries on success (entry 0 is the initial design); on failure everything
/// recorded so far is returned inside the error.
///
/// Deterministic: the run's RNG is seeded with `master_seed + run_id` and all
/// stochastic steps draw from it in a fixed order.
pub fn run(
    spec: &BenchmarkSpec,
    algorithm: AlgorithmId,
    settings: &RunSettings,
    master_seed: u64,
    run_id: u64,
) -> Result<RunOutput, Box<RunFailure>> {
    let seed = master_seed.wrapping_add(run_id);
    let mut trace = RegretTrace::default();
    let mut incumbent: Option<Incumbent> = None;
    let outcome = run_loop(spec, algorithm, settings, seed, &mut trace, &mut incumbent);
    let output = RunOutput {
        algorithm,
        run_id,
        seed,
        trace,
        incumbent,
    };
    match outcome {
        Ok(()) => Ok(output),
        Err(error) => Err(Box::new(RunFailure {
            error,
            partial: output,
        })),
    }
}

fn run_loop(
    spec: &BenchmarkSpec,
    algorithm: AlgorithmId,
    settings: &RunSettings,
    seed: u64,
    trace: &mut RegretTrace,
    incumbent: &mut Option<Incumbent>,
) -> Result<(), DriverError> {
    if settings.initial_points < 2 {
        return Err(DriverError::InvalidSettings(
            "initial_points must be at least 2",
        ));
    }
    if settings.restarts < 1 {
        return Err(DriverError::InvalidSettings("restarts must be at least 1"));
    }
    if !(settings.noise_variance.is_finite() && settings.noise_variance >= 0.0) {
        return Err(DriverError::InvalidSettings(
            "noise_variance must be finite and non-negative",
        ));
    }
    if !settings.alpha.is_finite() || !settings.eps_grad.is_finite() || !settings.eps_pi.is_finite()
    {
        return Err(DriverError::InvalidSettings(
            "alpha, eps_grad, and eps_pi must be finite",
        ));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let domain = spec.domain();

    // Initial design: all locations drawn first, then observed in order.
    let initial: Vec<Vec<f64>> = (0..settings.initial_points)
        .map(|_| domain.sample(&mut rng))
        .collect();
    let mut dataset: Vec<Evaluation> =
        Vec::with_capacity(settings.initial_points + settings.budget);
    let mut best_true = f64::NEG_INFINITY;
    for x in initial {
        let eval = spec.observe(&x, settings.noise_variance, &mut rng)?;
        update_incumbent(incumbent, &eval);
        best_true = best_true.max(eval.value_true);
        dataset.push(eval);
    }
    push_entry(trace, 0, best_true, spec);

    for n in 0..settings.budget {
        let ensemble = fit_ensemble(&dataset, spec, algorithm.uses_gradients(), &mut rng)?;
        let state = RunState {
            dataset: dataset.clone(),
            ensemble,
            incumbent: incumbent.clone().expect("initial design is non-empty"),
            iteration: n,
        };
        let alpha = settings.alpha_schedule.effective(settings.alpha, n);
        let k = settings.restarts;
        let next = match algorithm {
            AlgorithmId::GeiMs => propose_gei(&state, k, alpha, Selection::Ms, &mut rng)?.0,
            AlgorithmId::GeiMsc => propose_gei(&state, k, alpha, Selection::Msc, &mut rng)?.0,
            AlgorithmId::GpiMs => {
                propose_gpi(
                    &state,
                    k,
                    alpha,
                    settings.eps_grad,
                    settings.eps_pi,
                    Selection::Ms,
                    &mut rng,
                )?
                .0
            }
            AlgorithmId::GpiMsc => {
                propose_gpi(
                    &state,
                    k,
                    alpha,
                    settings.eps_grad,
                    settings.eps_pi,
                    Selection::Msc,
                    &mut rng,
                )?
                .0
            }
            AlgorithmId::ZoboEi => propose_zobo_ei(&state, k, &mut rng)?,
            AlgorithmId::FoboCc => propose_fobo_baseline(&state, FoboVariant::Cc, k, &mut rng)?,
            AlgorithmId::FoboMm => propose_fobo_baseline(&state, FoboVariant::Mm, k, &mut rng)?,
        };
        // Convex combinations can drift out of the box by one rounding step.
        let next = domain.clamp(&next);
        let eval = spec.observe(&next, settings.noise_variance, &mut rng)?;
        update_incumbent(incumbent, &eval);
        best_true = best_true.max(eval.value_true);
        dataset.push(eval);
        push_entry(trace, n + 1, best_true, spec);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::BenchmarkId;
    use crate::gp::Domain;

    fn candidate(point: Vec<f64>, source: CandidateSource, significance: f64) -> Candidate {
        Candidate {
            point,
            source,
            significance,
        }
    }

    #[test]
    fn algorithm_ids_round_trip_and_reject_unknown() {
        for id in AlgorithmId::all() {
            assert_eq!(id.slug().parse::<AlgorithmId>().unwrap(), id);
            // Display names parse too, since slugs are their lowercase forms.
            assert_eq!(id.name().parse::<AlgorithmId>().unwrap(), id);
        }
        assert!("gXY".parse::<AlgorithmId>().is_err());
        assert!(!AlgorithmId::ZoboEi.uses_gradients());
        assert!(AlgorithmId::GeiMs.uses_gradients());
    }

    #[test]
    fn alpha_schedule_values() {
        assert_eq!(AlphaSchedule::Constant.effective(2.0, 7), 2.0);
        assert_eq!(AlphaSchedule::Decay.effective(2.0, 0), 2.0);
        assert!((AlphaSchedule::Decay.effective(2.0, 3) - 1.0).abs() < 1e-15);
        assert!("decay".parse::<AlphaSchedule>().unwrap() == AlphaSchedule::Decay);
        assert!("linear".parse::<AlphaSchedule>().is_err());
    }

    #[test]
    fn ms_picks_maximum_and_breaks_ties_by_order() {
        let cands = vec![
            candidate(vec![0.0], CandidateSource::Restart(0), 0.1),
            candidate(vec![1.0], CandidateSource::Restart(1), 0.9),
            candidate(vec![2.0], CandidateSource::Restart(2), 0.5),
        ];
        assert_eq!(select_ms(&cands).unwrap(), vec![1.0]);

        let tied = vec![
            candidate(vec![0.0], CandidateSource::Restart(0), 0.5),
            candidate(vec![1.0], CandidateSource::Restart(1), 0.5),
        ];
        assert_eq!(select_ms(&tied).unwrap(), vec![0.0]);

        assert!(matches!(select_ms(&[]), Err(DriverError::NoCandidates)));
    }

    #[test]
    fn convex_point_is_centroid_for_equal_significances() {
        let cands = vec![
            candidate(vec![0.0, 0.0], CandidateSource::Restart(0), 1.0),
            candidate(vec![1.0, 0.0], CandidateSource::Restart(1), 1.0),
            candidate(vec![0.0, 1.0], CandidateSource::Restart(2), 1.0),
        ];
        let p = msc_convex_point(&cands).unwrap();
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn convex_point_matches_manual_softmax_arithmetic() {
        // Scores {0, 1, 2} at points {0, 1, 2}.
        let cands = vec![
            candidate(vec![0.0], CandidateSource::Restart(0), 0.0),
            candidate(vec![1.0], CandidateSource::Restart(1), 1.0),
            candidate(vec![2.0], CandidateSource::Restart(2), 2.0),
        ];
        let p = msc_convex_point(&cands).unwrap();
        let e = std::f64::consts::E;
        let oracle = (e + 2.0 * e * e) / (1.0 + e + e * e);
        assert!((p[0] - oracle).abs() < 1e-12, "{} vs {oracle}", p[0]);
        assert!((oracle - 1.575).abs() < 1e-3);
    }

    #[test]
    fn convex_point_saturates_and_survives_huge_gaps() {
        let cands = vec![
            candidate(vec![0.1], CandidateSource::Restart(0), 0.0),
            candidate(vec![0.9], CandidateSource::Restart(1), 60.0),
        ];
        let p = msc_convex_point(&cands).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-6, "{}", p[0]);

        let huge = vec![
            candidate(vec![0.2], CandidateSource::Restart(0), -500.0),
            candidate(vec![0.7], CandidateSource::Restart(1), 500.0),
        ];
        let p = msc_convex_point(&huge).unwrap();
        assert!(p[0].is_finite());
        assert!((p[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn cc_aggregation_matches_softmax_oracle() {
        let points = vec![vec![0.0], vec![1.0]];
        let means = vec![0.0, 1.0];
        let p = convex_combination(&points, &means);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (1.0 + e)).abs() < 1e-12, "{}", p[0]);
        assert!((p[0] - 0.7310585786300049).abs() < 1e-12);
    }

    fn quadratic_state() -> RunState {
        // Noiseless observations of -(x - 0.3)^2 and its derivative on [0,1].
        let spec_domain = Domain::unit(1);
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 / 9.0]).collect();
        let dataset: Vec<Evaluation> = inputs
            .iter()
            .map(|x| {
                let v = -(x[0] - 0.3) * (x[0] - 0.3);
                Evaluation {
                    point: x.clone(),
                    value_noisy: v,
                    gradient_noisy: vec![-2.0 * (x[0] - 0.3)],
                    value_true: v,
                }
            })
            .collect();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let values: Vec<f64> = dataset.iter().map(|e| e.value_noisy).collect();
        let grads: Vec<f64> = dataset.iter().map(|e| e.gradient_noisy[0]).collect();
        let fgp = gp::fit(&inputs, &values, &spec_domain, 5, &mut rng).unwrap();
        let pgp = gp::fit(&inputs, &grads, &spec_domain, 5, &mut rng).unwrap();
        let ensemble = SurrogateEnsemble::new(fgp, vec![pgp]).unwrap();
        let incumbent = dataset
            .iter()
            .max_by(|a, b| a.value_noisy.total_cmp(&b.value_noisy))
            .map(|e| Incumbent {
                point: e.point.clone(),
                value: e.value_noisy,
            })
            .unwrap();
        RunState {
            dataset,
            ensemble,
            incumbent,
            iteration: 0,
        }
    }

    #[test]
    fn gei_proposal_finds_the_quadratic_optimum() {
        let state = quadratic_state();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let (chosen, candidates) = propose_gei(&state, 10, 1.0, Selection::Ms, &mut rng).unwrap();
        assert_eq!(candidates.len(), 11, "k restarts plus the EI maximizer");
        assert!(
            (chosen[0] - 0.3).abs() < 0.05,
            "proposed {} for optimum 0.3",
            chosen[0]
        );
        assert!(matches!(candidates[10].source, CandidateSource::FgpEi));
    }

    #[test]
    fn gpi_proposal_finds_the_quadratic_optimum() {
        let state = quadratic_state();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let (chosen, candidates) =
            propose_gpi(&state, 10, 1.0, 0.05, 0.01, Selection::Msc, &mut rng).unwrap();
        assert_eq!(
            candidates.len(),
            12,
            "k restarts, EI maximizer, convex point"
        );
        assert!(matches!(
            candidates.last().unwrap().source,
            CandidateSource::ConvexCombination
        ));
        assert!(
            (chosen[0] - 0.3).abs() < 0.05,
            "proposed {} for optimum 0.3",
            chosen[0]
        );
    }

    #[test]
    fn msc_agrees_with_ms_when_convex_point_is_weaker() {
        let state = quadratic_state();
        let mut rng_a = ChaCha12Rng::seed_from_u64(3);
        let mut rng_b = ChaCha12Rng::seed_from_u64(3);
        let (ms_choice, _) = propose_gei(&state, 6, 1.0, Selection::Ms, &mut rng_a).unwrap();
        let (msc_choice, candidates) =
            propose_gei(&state, 6, 1.0, Selection::Msc, &mut rng_b).unwrap();
        let convex = candidates.last().unwrap();
        let best_non_convex = candidates[..candidates.len() - 1]
            .iter()
            .map(|c| c.significance)
            .fold(f64::NEG_INFINITY, f64::max);
        if convex.significance <= best_non_convex {
            assert_eq!(ms_choice, msc_choice);
        } else {
            assert_eq!(msc_choice, convex.point);
        }
    }

    #[test]
    fn zobo_proposal_matches_dense_grid_on_fixture() {
        let state = quadratic_state();
        let zobo_state = RunState {
            ensemble: SurrogateEnsemble::new(state.ensemble.fgp().clone(), vec![]).unwrap(),
            dataset: state.dataset.clone(),
            incumbent: state.incumbent.clone(),
            iteration: 0,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let chosen = propose_zobo_ei(&zobo_state, 10, &mut rng).unwrap();
        let ei = EiObjective {
            gp: zobo_state.ensemble.fgp(),
            incumbent: zobo_state.incumbent.value,
        };
        let mut grid_best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=100_000 {
            let x = i as f64 / 100_000.0;
            let v = ei.value(&[x]);
            if v > grid_best.0 {
                grid_best = (v, x);
            }
        }
        assert!(
            (chosen[0] - grid_best.1).abs() < 1e-3,
            "proposal {} vs grid argmax {}",
            chosen[0],
            grid_best.1
        );
    }

    #[test]
    fn fobo_baselines_return_in_domain_points() {
        let state = quadratic_state();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let cc = propose_fobo_baseline(&state, FoboVariant::Cc, 6, &mut rng).unwrap();
        assert!(state.ensemble.domain().contains(&cc), "{cc:?}");
        let mm = propose_fobo_baseline(&state, FoboVariant::Mm, 6, &mut rng).unwrap();
        assert!(state.ensemble.domain().contains(&mm), "{mm:?}");
        // Both aggregate candidates that cluster near the optimum here.
        assert!((cc[0] - 0.3).abs() < 0.2, "{}", cc[0]);
        assert!((mm[0] - 0.3).abs() < 0.2, "{}", mm[0]);
    }

    #[test]
    fn run_produces_monotone_trace_of_expected_length() {
        let spec = BenchmarkSpec::new(BenchmarkId::Branin);
        let settings = RunSettings {
            budget: 2,
            restarts: 4,
            ..RunSettings::default()
        };
        let out = run(&spec, AlgorithmId::GeiMs, &settings, 0, 0).unwrap();
        assert_eq!(out.trace.entries.len(), 3);
        for pair in out.trace.entries.windows(2) {
            assert!(pair[1].immediate_regret <= pair[0].immediate_regret);
            assert!(pair[1].best_true_value >= pair[0].best_true_value);
        }
        for (i, e) in out.trace.entries.iter().enumerate() {
            assert_eq!(e.iteration, i);
            assert!(e.wall_time_ms.is_none());
        }
        assert!(out.incumbent.is_some());
    }

    #[test]
    fn run_is_deterministic_for_a_fixed_seed() {
        let spec = BenchmarkSpec::new(BenchmarkId::Branin);
        let settings = RunSettings {
            budget: 2,
            restarts: 3,
            ..RunSettings::default()
        };
        let a = run(&spec, AlgorithmId::GpiMs, &settings, 7, 1).unwrap();
        let b = run(&spec, AlgorithmId::GpiMs, &settings, 7, 1).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.seed, 8);
    }

    #[test]
    fn zero_budget_run_records_only_the_initial_design() {
        let spec = BenchmarkSpec::new(BenchmarkId::Branin);
        let settings = RunSettings {
            budget: 0,
            ..RunSettings::default()
        };
        let out = run(&spec, AlgorithmId::ZoboEi, &settings, 0, 0).unwrap();
        assert_eq!(out.trace.entries.len(), 1);
        assert_eq!(out.trace.entries[0].iteration, 0);
    }

    #[test]
    fn zobo_run_never_builds_derivative_surrogates() {
        let spec = BenchmarkSpec::new(BenchmarkId::Branin);
        let settings = RunSettings {
            budget: 1,
            restarts: 3,
            ..RunSettings::default()
        };
        // The structural guarantee: a ZOBO ensemble is constructed without
        // derivative surrogates, so none can ever be consulted.
        let out = run(&spec, AlgorithmId::ZoboEi, &settings, 3, 0).unwrap();
        assert_eq!(out.trace.entries.len(), 2);
    }

    #[test]
    fn invalid_settings_fail_with_empty_partial_trace() {
        let spec = BenchmarkSpec::new(BenchmarkId::Branin);
        let settings = RunSettings {
            initial_points: 1,
            ..RunSettings::default()
        };
        let failure = run(&spec, AlgorithmId::GeiMs, &settings, 0, 0).unwrap_err();
        assert!(matches!(failure.error, DriverError::InvalidSettings(_)));
        assert!(failure.partial.trace.entries.is_empty());
    }
}
