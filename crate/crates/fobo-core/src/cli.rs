//! Experiment harness behind the command-line binary: config parsing, batch
//! execution across algorithms and repeats, CSV artifacts, and an SVG plot of
//! mean regret curves.
//!
//! Artifacts are byte-identical across reruns of the same configuration: rows
//! are emitted in a fixed order (algorithm as configured, then run id, then
//! iteration), floats are printed with a fixed scientific format, and no wall
//! clock readings enter any file (timing goes to stderr only).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bench::{BenchmarkId, BenchmarkSpec};
use crate::driver::{self, AlgorithmId, AlphaSchedule, RunOutput, RunSettings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("run error: {0}")]
    Run(String),
    #[error("plot error: {0}")]
    Plot(String),
}

/// A full experiment: one benchmark, a list of algorithms, repeated runs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkId,
    pub algorithms: Vec<AlgorithmId>,
    pub runs: u64,
    pub master_seed: u64,
    pub settings: RunSettings,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses the flat `key = value` format. `#` starts a comment; blank
    /// lines are ignored; `benchmark` is required; every other key has a
    /// default. Unknown keys and unparseable values are errors that name
    /// the offending token.
    pub fn parse(content: &str) -> Result<Self, CliError> {
        let mut benchmark: Option<BenchmarkId> = None;
        let mut algorithms: Option<Vec<AlgorithmId>> = None;
        let mut runs: u64 = 1;
        let mut master_seed: u64 = 0;
        let mut settings = RunSettings::default();
        let mut output_dir = PathBuf::from(".");

        for (lineno, raw) in content.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "benchmark" => benchmark = Some(parse_benchmark(value)?),
                "algorithms" => algorithms = Some(parse_algorithms(value)?),
                "budget" => settings.budget = parse_number(key, value)?,
                "initial_points" => settings.initial_points = parse_number(key, value)?,
                "runs" => runs = parse_number(key, value)?,
                "restarts_k" => settings.restarts = parse_number(key, value)?,
                "noise_variance" => settings.noise_variance = parse_number(key, value)?,
                "alpha" => settings.alpha = parse_number(key, value)?,
                "alpha_schedule" => {
                    settings.alpha_schedule = AlphaSchedule::from_str(value).map_err(|_| {
                        CliError::Config(format!("unknown alpha_schedule '{value}'"))
                    })?
                }
                "eps_grad" => settings.eps_grad = parse_number(key, value)?,
                "eps_pi" => settings.eps_pi = parse_number(key, value)?,
                "master_seed" => master_seed = parse_number(key, value)?,
                "output_dir" => output_dir = PathBuf::from(value),
                other => {
                    return Err(CliError::Config(format!("unknown config key '{other}'")));
                }
            }
        }

        Ok(ExperimentConfig {
            benchmark: benchmark
                .ok_or_else(|| CliError::Config("missing required key 'benchmark'".into()))?,
            algorithms: algorithms.unwrap_or_else(|| AlgorithmId::all().to_vec()),
            runs,
            master_seed,
            settings,
            output_dir,
        })
    }
}

pub fn parse_benchmark(value: &str) -> Result<BenchmarkId, CliError> {
    BenchmarkId::from_str(value).map_err(|e| CliError::Config(e.to_string()))
}

/// Comma-separated algorithm list; both slug and display casing parse.
pub fn parse_algorithms(value: &str) -> Result<Vec<AlgorithmId>, CliError> {
    let mut out = Vec::new();
    for token in value.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let id = AlgorithmId::from_str(token)
            .map_err(|_| CliError::Config(format!("unknown algorithm '{token}'")))?;
        out.push(id);
    }
    if out.is_empty() {
        return Err(CliError::Config("empty algorithm list".into()));
    }
    Ok(out)
}

fn parse_number<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value for {key}: '{value}'")))
}

/// One line of the per-algorithm trace files.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub run_id: u64,
    pub algorithm: AlgorithmId,
    pub benchmark: BenchmarkId,
    pub iteration: usize,
    pub best_true_value: f64,
    pub immediate_regret: f64,
    pub log10_regret: f64,
    pub wall_time_ms: Option<u64>,
    pub seed: u64,
}

pub const TRACE_HEADER: &str =
    "run_id,algorithm,benchmark,iteration,best_true_value,immediate_regret,log10_regret,wall_time_ms,seed";
pub const SUMMARY_HEADER: &str = "algorithm,iteration,mean_log10_regret,stderr_log10_regret";
pub const FAILURES_HEADER: &str = "algorithm,run_id,seed,completed_iterations,error";

fn format_csv_row(row: &CsvRow) -> String {
    let wall = row.wall_time_ms.map(|w| w.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{:.16e},{:.16e},{:.16e},{},{}",
        row.run_id,
        row.algorithm,
        row.benchmark,
        row.iteration,
        row.best_true_value,
        row.immediate_regret,
        row.log10_regret,
        wall,
        row.seed,
    )
}

fn csv_quote(field: &str) -> String {
    format!("\"{}\"", field.replace('"', "\"\""))
}

/// Sample mean and standard error (ddof = 1); the standard error of a single
/// observation is reported as zero.
fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// What [`run_experiment`] wrote, for reporting.
#[derive(Debug)]
pub struct ExperimentReport {
    pub files: Vec<PathBuf>,
    pub total_rows: usize,
    pub failures: usize,
}

struct TaskOutcome {
    algo_index: usize,
    output: RunOutput,
    error: Option<String>,
}

/// Runs `algorithms x runs` independent optimization runs on `jobs` worker
/// threads and writes one trace CSV per algorithm plus `summary.csv` and
/// `failures.csv` into the configured output directory.
///
/// Run `run_id` of every algorithm uses seed `master_seed + run_id`, so
/// algorithms compared in one experiment share initial designs and noise
/// streams. A failed run keeps its partial trace in the trace CSV, gets a
/// line in `failures.csv`, and is excluded from `summary.csv`.
pub fn run_experiment(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentReport, CliError> {
    fs::create_dir_all(&config.output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Run(e.to_string()))?;

    let tasks: Vec<(usize, AlgorithmId, u64)> = config
        .algorithms
        .iter()
        .enumerate()
        .flat_map(|(i, a)| (0..config.runs).map(move |r| (i, *a, r)))
        .collect();

    // Order-preserving parallel map keeps artifact content independent of
    // scheduling.
    let outcomes: Vec<TaskOutcome> = pool.install(|| {
        tasks
            .into_par_iter()
            .map(|(algo_index, algorithm, run_id)| {
                let spec = BenchmarkSpec::new(config.benchmark);
                let started = Instant::now();
                let result = driver::run(
                    &spec,
                    algorithm,
                    &config.settings,
                    config.master_seed,
                    run_id,
                );
                let secs = started.elapsed().as_secs_f64();
                let (output, error) = match result {
                    Ok(output) => (output, None),
                    Err(failure) => (failure.partial, Some(failure.error.to_string())),
                };
                eprintln!(
                    "[{}] {} run {}: {} trace entries in {:.2}s{}",
                    config.benchmark,
                    algorithm,
                    run_id,
                    output.trace.entries.len(),
                    secs,
                    if error.is_some() { " (FAILED)" } else { "" },
                );
                TaskOutcome {
                    algo_index,
                    output,
                    error,
                }
            })
            .collect()
    });

    let mut files = Vec::new();
    let mut total_rows = 0;

    // Per-algorithm trace files; outcomes arrive algorithm-major, run-minor.
    for (algo_index, algorithm) in config.algorithms.iter().enumerate() {
        let mut content = String::from(TRACE_HEADER);
        content.push('\n');
        for outcome in outcomes.iter().filter(|o| o.algo_index == algo_index) {
            for entry in &outcome.output.trace.entries {
                let row = CsvRow {
                    run_id: outcome.output.run_id,
                    algorithm: *algorithm,
                    benchmark: config.benchmark,
                    iteration: entry.iteration,
                    best_true_value: entry.best_true_value,
                    immediate_regret: entry.immediate_regret,
                    log10_regret: entry.log10_regret,
                    wall_time_ms: entry.wall_time_ms,
                    seed: outcome.output.seed,
                };
                content.push_str(&format_csv_row(&row));
                content.push('\n');
                total_rows += 1;
            }
        }
        let path = config.output_dir.join(format!(
            "{}_{}.csv",
            config.benchmark.name(),
            algorithm.slug()
        ));
        fs::write(&path, content)?;
        files.push(path);
    }

    // Mean curves over the runs that completed the full budget.
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for (algo_index, algorithm) in config.algorithms.iter().enumerate() {
        let complete: Vec<&RunOutput> = outcomes
            .iter()
            .filter(|o| o.algo_index == algo_index && o.error.is_none())
            .map(|o| &o.output)
            .collect();
        if complete.is_empty() {
            continue;
        }
        for iteration in 0..=config.settings.budget {
            let values: Vec<f64> = complete
                .iter()
                .map(|o| o.trace.entries[iteration].log10_regret)
                .collect();
            let (mean, stderr) = mean_and_stderr(&values);
            let _ = writeln!(
                summary,
                "{},{},{:.16e},{:.16e}",
                algorithm, iteration, mean, stderr
            );
        }
    }
    let summary_path = config.output_dir.join("summary.csv");
    fs::write(&summary_path, summary)?;
    files.push(summary_path);

    // Failure log; the header is written even when every run succeeded.
    let mut failures = String::from(FAILURES_HEADER);
    failures.push('\n');
    let mut failure_count = 0;
    for outcome in &outcomes {
        if let Some(error) = &outcome.error {
            failure_count += 1;
            let completed = outcome.output.trace.entries.len().saturating_sub(1);
            let _ = writeln!(
                failures,
                "{},{},{},{},{}",
                outcome.output.algorithm,
                outcome.output.run_id,
                outcome.output.seed,
                completed,
                csv_quote(error),
            );
        }
    }
    let failures_path = config.output_dir.join("failures.csv");
    fs::write(&failures_path, failures)?;
    files.push(failures_path);

    Ok(ExperimentReport {
        files,
        total_rows,
        failures: failure_count,
    })
}

struct PlotSeries {
    label: String,
    iterations: Vec<usize>,
    means: Vec<f64>,
    source: PathBuf,
}

fn parse_summary_file(path: &Path) -> Result<Vec<PlotSeries>, CliError> {
    let content =
        fs::read_to_string(path).map_err(|e| CliError::Plot(format!("{}: {e}", path.display())))?;
    let mut series: Vec<PlotSeries> = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == SUMMARY_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(CliError::Plot(format!(
                "{} line {}: expected 4 comma-separated fields",
                path.display(),
                lineno + 1
            )));
        }
        let bad = |what: &str| {
            CliError::Plot(format!(
                "{} line {}: invalid {what}",
                path.display(),
                lineno + 1
            ))
        };
        let iteration: usize = fields[1].parse().map_err(|_| bad("iteration"))?;
        let mean: f64 = fields[2].parse().map_err(|_| bad("mean"))?;
        let label = fields[0].to_string();
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => {
                s.iterations.push(iteration);
                s.means.push(mean);
            }
            None => series.push(PlotSeries {
                label,
                iterations: vec![iteration],
                means: vec![mean],
                source: path.to_path_buf(),
            }),
        }
    }
    Ok(series)
}

/// Reads one or more summary files and writes an SVG with one mean-regret
/// polyline per algorithm. All series must share one iteration grid; a
/// mismatch is an error naming the offending files.
pub fn plot_regret(out: &Path, summaries: &[PathBuf]) -> Result<(), CliError> {
    if summaries.is_empty() {
        return Err(CliError::Plot("no summary files given".into()));
    }
    let mut all: Vec<PlotSeries> = Vec::new();
    for path in summaries {
        for mut series in parse_summary_file(path)? {
            if all.iter().any(|s| s.label == series.label) && summaries.len() > 1 {
                let stem = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                series.label = format!("{} ({stem})", series.label);
            }
            all.push(series);
        }
    }
    if all.is_empty() {
        return Err(CliError::Plot("no data rows in the given summaries".into()));
    }
    let reference = all[0].iterations.clone();
    let mut mismatched: Vec<String> = Vec::new();
    for series in &all {
        if series.iterations != reference {
            let name = series.source.display().to_string();
            if !mismatched.contains(&name) {
                mismatched.push(name);
            }
        }
    }
    if !mismatched.is_empty() {
        return Err(CliError::Plot(format!(
            "iteration grids differ across inputs; offending files: {}",
            mismatched.join(", ")
        )));
    }
    fs::write(out, render_regret_svg(&all))?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn render_regret_svg(series: &[PlotSeries]) -> String {
    let (width, height) = (800.0, 500.0);
    let (ml, mr, mt, mb) = (70.0, 170.0, 40.0, 55.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let x_min = *series[0].iterations.first().unwrap() as f64;
    let x_max = *series[0].iterations.last().unwrap() as f64;
    let x_span = (x_max - x_min).max(1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &m in &s.means {
            y_min = y_min.min(m);
            y_max = y_max.max(m);
        }
    }
    if !(y_min.is_finite() && y_max.is_finite()) {
        y_min = -1.0;
        y_max = 1.0;
    }
    if y_max - y_min < 1e-9 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let sx = |x: f64| ml + (x - x_min) / x_span * pw;
    let sy = |y: f64| mt + (y_max - y) / (y_max - y_min) * ph;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    svg.push('\n');
    let _ = writeln!(
        svg,
        r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##
    );

    // Gridlines and tick labels.
    let ticks = 6;
    for i in 0..=ticks {
        let fx = x_min + x_span * i as f64 / ticks as f64;
        let px = sx(fx);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{mt}" x2="{px:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            mt + ph
        );
        let _ = writeln!(
            svg,
            r##"<text x="{px:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"##,
            mt + ph + 18.0,
            fx.round() as i64
        );
        let fy = y_min + (y_max - y_min) * i as f64 / ticks as f64;
        let py = sy(fy);
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            ml + pw
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{fy:.2}</text>"##,
            ml - 8.0,
            py + 4.0
        );
    }

    // Axes and labels.
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000000" stroke-width="1.5"/>"##,
        mt + ph,
        ml + pw,
        mt + ph
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{:.2}" stroke="#000000" stroke-width="1.5"/>"##,
        mt + ph
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">iteration</text>"#,
        ml + pw / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean log10 regret</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0
    );

    // One polyline and one legend row per series.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (&it, &m) in s.iterations.iter().zip(&s.means) {
            let _ = write!(points, "{:.2},{:.2} ", sx(it as f64), sy(m));
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            points.trim_end()
        );
        let ly = mt + 14.0 + 20.0 * i as f64;
        let lx = ml + pw + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench;

    #[test]
    fn config_parses_every_key_and_applies_defaults() {
        let content = "\
# experiment
benchmark = branin
algorithms = gei-ms, ZOBO-EI
budget = 50       # short
initial_points = 4
runs = 3
restarts_k = 7
noise_variance = 0.5
alpha = 2.0
alpha_schedule = decay
eps_grad = 0.1
eps_pi = 0.02
master_seed = 9
output_dir = results
";
        let cfg = ExperimentConfig::parse(content).unwrap();
        assert_eq!(cfg.benchmark, BenchmarkId::Branin);
        assert_eq!(
            cfg.algorithms,
            vec![AlgorithmId::GeiMs, AlgorithmId::ZoboEi]
        );
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.settings.budget, 50);
        assert_eq!(cfg.settings.initial_points, 4);
        assert_eq!(cfg.settings.restarts, 7);
        assert_eq!(cfg.settings.noise_variance, 0.5);
        assert_eq!(cfg.settings.alpha, 2.0);
        assert_eq!(cfg.settings.alpha_schedule, AlphaSchedule::Decay);
        assert_eq!(cfg.settings.eps_grad, 0.1);
        assert_eq!(cfg.settings.eps_pi, 0.02);
        assert_eq!(cfg.output_dir, PathBuf::from("results"));

        let minimal = ExperimentConfig::parse("benchmark = ackley5\n").unwrap();
        assert_eq!(minimal.algorithms.len(), 7, "defaults to every algorithm");
        assert_eq!(minimal.runs, 1);
        assert_eq!(minimal.settings, RunSettings::default());
    }

    #[test]
    fn config_errors_name_the_offending_token() {
        let err = ExperimentConfig::parse("benchmark = sphere\n").unwrap_err();
        assert!(err.to_string().contains("sphere"), "{err}");

        let err = ExperimentConfig::parse("benchmark = branin\nbudgets = 5\n").unwrap_err();
        assert!(err.to_string().contains("budgets"), "{err}");

        let err = ExperimentConfig::parse("benchmark = branin\nalgorithms = gei-ms,newton\n")
            .unwrap_err();
        assert!(err.to_string().contains("newton"), "{err}");

        let err = ExperimentConfig::parse("benchmark = branin\nbudget = many\n").unwrap_err();
        assert!(err.to_string().contains("many"), "{err}");

        let err = ExperimentConfig::parse("budget = 5\n").unwrap_err();
        assert!(err.to_string().contains("benchmark"), "{err}");
    }

    #[test]
    fn csv_rows_have_fixed_format_and_empty_wall_time() {
        let regret = 0.10211264227026184;
        let row = CsvRow {
            run_id: 0,
            algorithm: AlgorithmId::GeiMs,
            benchmark: BenchmarkId::Branin,
            iteration: 3,
            best_true_value: -0.5,
            immediate_regret: regret,
            log10_regret: bench::log10_regret(regret),
            wall_time_ms: None,
            seed: 42,
        };
        let expected = format!(
            "0,gEI-MS,branin,3,{:.16e},{:.16e},{:.16e},,42",
            -0.5,
            regret,
            regret.log10()
        );
        assert_eq!(format_csv_row(&row), expected);
        assert!(expected.contains("-5.0000000000000000e-1"));
    }

    #[test]
    fn mean_and_stderr_match_hand_computation() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0]);
        assert!((m - 2.0).abs() < 1e-15);
        // Sample std is 1, so the standard error is 1/sqrt(3).
        assert!((s - 0.5773502691896258).abs() < 1e-12, "{s}");
        let (m, s) = mean_and_stderr(&[4.0]);
        assert_eq!((m, s), (4.0, 0.0));
    }

    #[test]
    fn experiment_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            benchmark: BenchmarkId::Branin,
            algorithms: vec![AlgorithmId::ZoboEi],
            runs: 2,
            master_seed: 0,
            settings: RunSettings {
                budget: 1,
                initial_points: 3,
                restarts: 2,
                ..RunSettings::default()
            },
            output_dir: dir.path().to_path_buf(),
        };
        let report = run_experiment(&config, 1).unwrap();
        assert_eq!(report.failures, 0);
        assert_eq!(report.total_rows, 4, "2 runs x (budget + 1) entries");

        let trace_path = dir.path().join("branin_zobo-ei.csv");
        let trace = fs::read_to_string(&trace_path).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,ZOBO-EI,branin,0,"));
        assert!(lines[4].starts_with("1,ZOBO-EI,branin,1,"));
        // Wall-time column stays empty so artifacts are reproducible.
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[7], "");
        }

        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let summary_lines: Vec<&str> = summary.lines().collect();
        assert_eq!(summary_lines[0], SUMMARY_HEADER);
        assert_eq!(summary_lines.len(), 3, "one row per iteration");
        assert!(summary_lines[1].starts_with("ZOBO-EI,0,"));

        let failures = fs::read_to_string(dir.path().join("failures.csv")).unwrap();
        assert_eq!(failures.trim_end(), FAILURES_HEADER);

        // Byte-identical on rerun.
        run_experiment(&config, 1).unwrap();
        assert_eq!(fs::read_to_string(&trace_path).unwrap(), trace);
    }

    #[test]
    fn plot_renders_series_and_rejects_mismatched_grids() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("summary_a.csv");
        let b = dir.path().join("summary_b.csv");
        fs::write(
            &a,
            format!("{SUMMARY_HEADER}\ngEI-MS,0,1.0e0,0.0e0\ngEI-MS,1,5.0e-1,0.0e0\n"),
        )
        .unwrap();
        fs::write(
            &b,
            format!("{SUMMARY_HEADER}\nZOBO-EI,0,1.2e0,0.0e0\nZOBO-EI,1,8.0e-1,0.0e0\n"),
        )
        .unwrap();
        let out = dir.path().join("regret.svg");
        plot_regret(&out, &[a.clone(), b]).unwrap();
        let svg = fs::read_to_string(&out).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("gEI-MS") && svg.contains("ZOBO-EI"));
        assert!(svg.contains("iteration"));

        let c = dir.path().join("summary_c.csv");
        fs::write(
            &c,
            format!("{SUMMARY_HEADER}\ngPI-MS,0,1.0e0,0.0e0\ngPI-MS,2,5.0e-1,0.0e0\n"),
        )
        .unwrap();
        let err = plot_regret(&out, &[a, c.clone()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("summary_c.csv"), "{msg}");
        assert!(!msg.contains("summary_a.csv"), "{msg}");
    }

    #[test]
    fn failed_runs_keep_partial_traces_and_are_logged() {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            benchmark: BenchmarkId::Branin,
            algorithms: vec![AlgorithmId::GeiMs],
            runs: 1,
            master_seed: 0,
            settings: RunSettings {
                budget: 1,
                initial_points: 1, // invalid: too few to fit a surrogate
                restarts: 2,
                ..RunSettings::default()
            },
            output_dir: dir.path().to_path_buf(),
        };
        let report = run_experiment(&config, 1).unwrap();
        assert_eq!(report.failures, 1);
        let failures = fs::read_to_string(dir.path().join("failures.csv")).unwrap();
        let lines: Vec<&str> = failures.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("gEI-MS,0,0,0,"));
        assert!(lines[1].contains("initial_points"));
        // No successful runs, so the summary holds only its header.
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.trim_end(), SUMMARY_HEADER);
    }
}
