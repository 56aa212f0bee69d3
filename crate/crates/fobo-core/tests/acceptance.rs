//! End-to-end acceptance checks.
//!
//! Each test verifies one release gate with its tolerance pinned beside it and
//! prints a single `acceptance <gate>: PASS` line (visible with
//! `--nocapture`) including elapsed wall time. Oracles are computed
//! independently inside the tests — Monte Carlo for folded-normal moments, a
//! dense multivariate-normal density for the GP likelihood, finite differences
//! for gradients, linear scans for selection rules — so none of them share
//! code with the implementation under test.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use fobo_core::acquisition::folded_normal_stats;
use fobo_core::bench::{self, BenchmarkId, BenchmarkSpec};
use fobo_core::driver::{self, Candidate, CandidateSource};
use fobo_core::gp::{self, Domain, FittedGp, GpHyperparams};
use fobo_core::{AlgorithmId, RunSettings, SurrogateEnsemble};

/// Absolute tolerance for folded-normal mean and std against Monte Carlo.
const FOLDED_MC_TOL: f64 = 3e-3;
const FOLDED_MC_SAMPLES: usize = 10_000_000;

/// A GP with (near-)zero noise must reproduce noiseless targets this closely.
const GP_INTERPOLATION_TOL: f64 = 1e-5;
/// A maximum-likelihood fit models noiseless data with at most this much
/// noise variance and reproduces the targets this closely.
const GP_FIT_INTERPOLATION_TOL: f64 = 1e-3;
/// Library log marginal likelihood vs. the dense Gaussian-density oracle.
const GP_LML_TOL: f64 = 1e-8;

/// Relative error bound for analytic benchmark gradients vs. central
/// finite differences.
const GRADIENT_REL_TOL: f64 = 1e-5;
const GRADIENT_FD_STEP: f64 = 1e-5;

/// Mean final log10 immediate regret each gradient-based method must reach
/// on Branin.
const BRANIN_LOG10_REGRET_TARGET: f64 = -1.0;
const ANCHOR_BUDGET: usize = 100;
const ANCHOR_RUNS: u64 = 10;
const ANCHOR_MASTER_SEED: u64 = 0;

/// The known optimizer of the regularization surface must score this close
/// to zero, and the closed-form inner solve must match gradient descent
/// this closely.
const REG6D_OPTIMUM_TOL: f64 = 1e-4;
const REG6D_INNER_TOL: f64 = 1e-6;

/// Centroid reconstruction tolerance for the equal-significance convex point.
const CENTROID_TOL: f64 = 1e-10;

fn report(gate: &str, started: Instant) {
    println!(
        "acceptance {gate}: PASS ({:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

#[test]
fn folded_normal_moments_match_monte_carlo() {
    let started = Instant::now();
    let mus = [-4.0, -2.0, -1.0, -0.5, -0.2, 0.0, 0.2, 0.5, 1.0, 2.0, 4.0];
    let sigmas = [0.1, 0.5, 2.0];
    let mut rng = ChaCha12Rng::seed_from_u64(91);
    for mu in mus {
        for sigma in sigmas {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..FOLDED_MC_SAMPLES {
                let z: f64 = rng.sample(StandardNormal);
                let y = (mu + sigma * z).abs();
                sum += y;
                sum_sq += y * y;
            }
            let n = FOLDED_MC_SAMPLES as f64;
            let mc_mean = sum / n;
            let mc_std = (sum_sq / n - mc_mean * mc_mean).max(0.0).sqrt();
            let stats = folded_normal_stats(mu, sigma);
            assert!(
                (stats.mean - mc_mean).abs() < FOLDED_MC_TOL,
                "mean at mu={mu}, sigma={sigma}: analytic {} vs MC {mc_mean}",
                stats.mean
            );
            assert!(
                (stats.std - mc_std).abs() < FOLDED_MC_TOL,
                "std at mu={mu}, sigma={sigma}: analytic {} vs MC {mc_std}",
                stats.std
            );
        }
    }
    report("folded-normal oracle", started);
}

/// Dense Gaussian log-density with its own kernel evaluation: the oracle for
/// the library's log marginal likelihood.
fn dense_lml_oracle(inputs: &[Vec<f64>], targets: &[f64], h: &GpHyperparams) -> f64 {
    let n = targets.len();
    let mut ky = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = inputs[i]
                .iter()
                .zip(&inputs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            ky[(i, j)] =
                h.signal_variance() * (-d2 / (2.0 * h.lengthscale() * h.lengthscale())).exp();
            if i == j {
                ky[(i, j)] += h.noise_variance();
            }
        }
    }
    let centered = DVector::from_iterator(n, targets.iter().map(|t| t - h.constant_mean()));
    let lu = ky.clone().full_piv_lu();
    let alpha = lu.solve(&centered).expect("oracle system is solvable");
    let ln_det = lu.determinant().ln();
    -0.5 * centered.dot(&alpha) - 0.5 * ln_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn gp_regression_is_numerically_correct() {
    let started = Instant::now();

    // With essentially no modeled noise, the posterior interpolates.
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 / 7.0]).collect();
    let targets: Vec<f64> = inputs.iter().map(|x| (4.0 * x[0]).sin()).collect();
    let domain = Domain::unit(1);
    let exact = FittedGp::with_hyperparams(
        &inputs,
        &targets,
        &domain,
        GpHyperparams::new(1.0, 0.3, 1e-10, 0.0).expect("valid hyperparameters"),
    )
    .expect("noiseless model fits");
    for (x, t) in inputs.iter().zip(&targets) {
        let (mean, _) = exact.posterior(x).expect("posterior in domain");
        assert!(
            (mean - t).abs() < GP_INTERPOLATION_TOL,
            "posterior mean {mean} vs target {t} at {x:?}"
        );
    }

    // A maximum-likelihood fit on the same noiseless data drives its noise
    // estimate down and still reproduces the targets tightly.
    let fitted = gp::fit(
        &inputs,
        &targets,
        &domain,
        gp::DEFAULT_FIT_RESTARTS,
        &mut rng,
    )
    .expect("noiseless fit succeeds");
    for (x, t) in inputs.iter().zip(&targets) {
        let (mean, _) = fitted.posterior(x).expect("posterior in domain");
        assert!(
            (mean - t).abs() < GP_FIT_INTERPOLATION_TOL,
            "fitted posterior mean {mean} vs target {t} at {x:?}"
        );
    }

    // Log marginal likelihood against the dense-density oracle on random
    // problems whose kernels are comfortably positive definite.
    for case in 0..100 {
        let inputs: Vec<Vec<f64>> = (0..5)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let targets: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let h = GpHyperparams::new(
            0.5 + 1.5 * rng.random::<f64>(),
            0.5 + rng.random::<f64>(),
            0.05 + 0.45 * rng.random::<f64>(),
            rng.random::<f64>() - 0.5,
        )
        .expect("valid hyperparameters");
        let lib = gp::log_marginal_likelihood(&inputs, &targets, &h).expect("lml computes");
        let oracle = dense_lml_oracle(&inputs, &targets, &h);
        assert!(
            (lib - oracle).abs() < GP_LML_TOL,
            "case {case}: library {lib} vs oracle {oracle}"
        );
    }

    // Fitting never returns a likelihood below the best initial guess.
    for _ in 0..20 {
        let inputs: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let targets: Vec<f64> = inputs
            .iter()
            .map(|x| (5.0 * x[0]).sin() + x[1] * x[1] + 0.1 * rng.random::<f64>())
            .collect();
        let (gp, rep) = gp::fit_with_report(&inputs, &targets, &Domain::unit(2), 5, &mut rng)
            .expect("fit succeeds");
        let best_initial = rep
            .restarts
            .iter()
            .map(|r| r.initial_lml)
            .filter(|l| l.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            gp.log_marginal() >= best_initial,
            "fitted lml {} below best initial guess {best_initial}",
            gp.log_marginal()
        );
    }

    report("gp correctness", started);
}

#[test]
fn benchmark_gradients_match_finite_differences() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    for id in BenchmarkId::all() {
        let spec = BenchmarkSpec::new(id);
        let lower = spec.domain().lower();
        let upper = spec.domain().upper();
        for _ in 0..100 {
            // Interior points only, so the centered stencil stays in range.
            let x: Vec<f64> = lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| lo + (0.05 + 0.9 * rng.random::<f64>()) * (hi - lo))
                .collect();
            let (_, analytic) = spec.evaluate(&x).expect("in-domain evaluation");
            let mut diff_sq = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += GRADIENT_FD_STEP;
                xm[i] -= GRADIENT_FD_STEP;
                let fp = spec.evaluate(&xp).expect("fd stencil in domain").0;
                let fm = spec.evaluate(&xm).expect("fd stencil in domain").0;
                let fd = (fp - fm) / (2.0 * GRADIENT_FD_STEP);
                diff_sq += (analytic[i] - fd) * (analytic[i] - fd);
                norm_sq += analytic[i] * analytic[i];
            }
            let rel = diff_sq.sqrt() / norm_sq.sqrt().max(1e-3);
            assert!(
                rel < GRADIENT_REL_TOL,
                "{}: relative gradient error {rel} at {x:?}",
                spec.name()
            );
        }
    }
    report("benchmark gradient fidelity", started);
}

fn anchor_settings() -> RunSettings {
    RunSettings {
        budget: ANCHOR_BUDGET,
        ..RunSettings::default()
    }
}

/// Final-iteration regret entries over the shared-seed run set.
fn final_entries(spec: &BenchmarkSpec, algorithm: AlgorithmId) -> Vec<(f64, f64)> {
    let settings = anchor_settings();
    (0..ANCHOR_RUNS)
        .map(|run_id| {
            let out = driver::run(spec, algorithm, &settings, ANCHOR_MASTER_SEED, run_id)
                .unwrap_or_else(|f| panic!("{algorithm} run {run_id} failed: {f}"));
            let last = out.trace.entries.last().expect("non-empty trace");
            assert_eq!(
                last.iteration, ANCHOR_BUDGET,
                "trace runs to the full budget"
            );
            (last.immediate_regret, last.log10_regret)
        })
        .collect()
}

#[test]
fn branin_regret_reaches_target() {
    let started = Instant::now();
    let spec = BenchmarkSpec::new(BenchmarkId::Branin);
    for algorithm in [AlgorithmId::GeiMs, AlgorithmId::GpiMs] {
        let finals = final_entries(&spec, algorithm);
        let mean_log10 = finals.iter().map(|(_, l)| l).sum::<f64>() / finals.len() as f64;
        assert!(
            mean_log10 <= BRANIN_LOG10_REGRET_TARGET,
            "{algorithm}: mean final log10 regret {mean_log10} above target \
             {BRANIN_LOG10_REGRET_TARGET}"
        );
        println!("  branin {algorithm}: mean final log10 regret {mean_log10:.3}");
    }
    report("branin regret anchor", started);
}

#[test]
fn ackley5_gradient_methods_beat_value_only_baseline() {
    let started = Instant::now();
    let spec = BenchmarkSpec::new(BenchmarkId::Ackley5);
    let mean_regret = |algorithm: AlgorithmId| {
        let finals = final_entries(&spec, algorithm);
        finals.iter().map(|(r, _)| r).sum::<f64>() / finals.len() as f64
    };
    let zobo = mean_regret(AlgorithmId::ZoboEi);
    for algorithm in [AlgorithmId::GpiMs, AlgorithmId::GeiMs] {
        let ours = mean_regret(algorithm);
        println!("  ackley5 {algorithm}: mean final regret {ours:.3} vs ZOBO-EI {zobo:.3}");
        assert!(
            ours < zobo,
            "{algorithm}: mean final regret {ours} not below ZOBO-EI's {zobo}"
        );
    }
    report("ackley5 ordering anchor", started);
}

#[test]
fn reg6d_optimum_and_inner_solve_are_exact() {
    let started = Instant::now();
    let spec = BenchmarkSpec::new(BenchmarkId::Reg6d);

    // The known optimizer: each coordinate makes the inner solution hit its
    // validation target exactly, so the surface attains zero.
    let lambda_star: Vec<f64> = (1..=6)
        .map(|i| 10.0 * i as f64 / (i as f64 - 0.5) - 1.0)
        .collect();
    for (i, l) in lambda_star.iter().enumerate() {
        assert!(
            (0.0..=100.0).contains(l),
            "optimal penalty {l} for coordinate {i} is outside the domain"
        );
    }
    let (value, _) = spec.evaluate(&lambda_star).expect("optimum in domain");
    assert!(
        value.abs() <= REG6D_OPTIMUM_TOL,
        "surface value {value} at the known optimum is not zero"
    );

    // Closed-form inner solution vs. plain gradient descent on the inner
    // ridge objective, with the descent's gradient written independently.
    let mut rng = ChaCha12Rng::seed_from_u64(41);
    for _ in 0..50 {
        let lambda: Vec<f64> = (0..6).map(|_| 100.0 * rng.random::<f64>()).collect();
        let closed = bench::reg6d_inner_solution(&lambda);
        let max_l = lambda.iter().cloned().fold(0.0, f64::max);
        let step = 1.0 / (2.0 * (1.0 + max_l));
        let mut z = vec![0.0; 6];
        for _ in 0..200_000 {
            let grad: Vec<f64> = z
                .iter()
                .zip(&lambda)
                .enumerate()
                .map(|(idx, (zi, li))| 2.0 * (zi - 10.0 * (idx + 1) as f64) + 2.0 * li * zi)
                .collect();
            if grad.iter().all(|g| g.abs() < 1e-10) {
                break;
            }
            for (zi, gi) in z.iter_mut().zip(&grad) {
                *zi -= step * gi;
            }
        }
        let loss_closed = bench::reg6d_inner_loss(&closed, &lambda);
        let loss_gd = bench::reg6d_inner_loss(&z, &lambda);
        assert!(
            loss_closed <= loss_gd + 1e-12,
            "closed-form inner loss {loss_closed} above descent's {loss_gd}"
        );
        for (a, b) in closed.iter().zip(&z) {
            assert!(
                (a - b).abs() < REG6D_INNER_TOL,
                "inner solution mismatch: closed form {a} vs descent {b}"
            );
        }
    }

    report("reg6d anchor", started);
}

#[test]
fn selection_rules_follow_their_definitions() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(67);

    // MS against a linear scan, including exact ties (first wins).
    for case in 0..100 {
        let k = 1 + (rng.random::<f64>() * 7.0) as usize;
        let mut candidates: Vec<Candidate> = (0..k)
            .map(|i| Candidate {
                point: (0..3).map(|_| rng.random::<f64>()).collect(),
                source: CandidateSource::Restart(i),
                significance: (rng.random::<f64>() * 10.0 - 5.0) * 0.25,
            })
            .collect();
        if k > 1 && case % 3 == 0 {
            candidates[k - 1].significance = candidates[0].significance;
        }
        let chosen = driver::select_ms(&candidates).expect("non-empty candidate set");
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate() {
            if c.significance > candidates[best].significance {
                best = i;
            }
        }
        assert_eq!(chosen, candidates[best].point, "case {case}");
    }

    // Equal significances: the appended convex point is the centroid.
    let gp = FittedGp::with_hyperparams(
        &[vec![0.2], vec![0.8]],
        &[0.0, 1.0],
        &Domain::unit(1),
        GpHyperparams::new(1.0, 0.4, 0.1, 0.5).expect("valid hyperparameters"),
    )
    .expect("tiny surrogate fits");
    let ensemble = SurrogateEnsemble::new(gp, Vec::new()).expect("objective-only ensemble");
    let mut candidates: Vec<Candidate> = (0..4)
        .map(|i| Candidate {
            point: vec![0.1 + 0.2 * i as f64],
            source: CandidateSource::Restart(i),
            significance: 0.7,
        })
        .collect();
    let centroid = 0.1 + 0.2 * (0.0 + 1.0 + 2.0 + 3.0) / 4.0;
    driver::select_msc(&mut candidates, &ensemble, 1.0).expect("msc selects");
    let appended = candidates.last().expect("convex point appended");
    assert_eq!(appended.source, CandidateSource::ConvexCombination);
    assert!(
        (appended.point[0] - centroid).abs() < CENTROID_TOL,
        "convex point {} vs centroid {centroid}",
        appended.point[0]
    );

    // Softmax stays finite and sensible across a 1e3 significance gap.
    let points = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.25]];
    let scores = vec![-500.0, 500.0, -250.0];
    let combined = driver::convex_combination(&points, &scores);
    assert!(combined.iter().all(|v| v.is_finite()));
    for (c, p) in combined.iter().zip(&points[1]) {
        assert!(
            (c - p).abs() < CENTROID_TOL,
            "softmax with a 1e3 gap should collapse onto the top point"
        );
    }

    report("selection rules", started);
}

#[test]
fn cli_reruns_are_byte_identical() {
    let started = Instant::now();
    let dir = tempfile::tempdir().expect("temp dir");
    let config_path = dir.path().join("exp.cfg");
    std::fs::write(
        &config_path,
        "benchmark = branin\nalgorithms = gei-ms,zobo-ei\nbudget = 10\n\
         initial_points = 5\nruns = 2\nmaster_seed = 3\n",
    )
    .expect("write config");

    let run_once = |out: &std::path::Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_fobo"))
            .args([
                "run",
                "--config",
                config_path.to_str().expect("utf-8 path"),
                "--jobs",
                "2",
                "--out",
                out.to_str().expect("utf-8 path"),
            ])
            .status()
            .expect("binary runs");
        assert!(status.success(), "run exited with {status}");
    };
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_once(&out_a);
    run_once(&out_b);

    let mut names: Vec<String> = std::fs::read_dir(&out_a)
        .expect("read first output dir")
        .map(|e| {
            e.expect("dir entry")
                .file_name()
                .into_string()
                .expect("utf-8 name")
        })
        .collect();
    names.sort();
    assert_eq!(
        names,
        vec![
            "branin_gei-ms.csv".to_string(),
            "branin_zobo-ei.csv".to_string(),
            "failures.csv".to_string(),
            "summary.csv".to_string(),
        ]
    );
    for name in &names {
        let a = std::fs::read(out_a.join(name)).expect("first run artifact");
        let b = std::fs::read(out_b.join(name)).expect("second run artifact");
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    report("run determinism", started);
}
