//! `cctg`: file-mediated pipeline
//! `probe -> run (coverage) -> weights -> generate -> evaluate`, plus the
//! repeated `experiment` comparing generation methods.
//!
//! Exit codes: 0 success, 1 domain failure (unsatisfiable model, infeasible
//! probe start, shortfall below `--min-cases`), 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cctg::coverage::{compute_weights, load_coverage_dir, Metric, ReportFormat, WeightVector};
use cctg::generator::{
    generate_with, GenerateError, GenerationConfig, Method, DEFAULT_MAX_RETRIES,
};
use cctg::harness::{
    self, collect_coverage, evaluate_mutation, experiment, run_experiment, run_suite, CoverageHook,
    ExperimentConfig, MutantSet, RunOptions,
};
use cctg::model::{label_cases, parse_model_with, RangeSelection, SutDescriptor, TestModel};
use cctg::schedule::{build_probe_suite_with, AdvanceOrder, ScheduleError};
use cctg::suitefile::{SuiteFile, SuiteHeader};

#[derive(Parser, Debug)]
#[command(
    name = "cctg",
    version,
    about = "Coverage-weighted test case generation"
)]
struct Cli {
    /// Model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Seed for every random choice; drawn from entropy and printed when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (directory for `experiment`); stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sample ranged parameters randomly with this seed instead of at regular intervals.
    #[arg(long, global = true)]
    range_seed: Option<u64>,
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the one-factor-change probing suite.
    Probe {
        #[arg(long)]
        test_depth: usize,
        #[arg(long, value_enum, default_value = "round-robin")]
        order: OrderArg,
    },
    /// Compute per-parameter impact weights from per-case coverage files.
    Weights {
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        coverage: CoverageArgs,
        #[arg(long, default_value = "scalar")]
        metric: Metric,
    },
    /// Generate a test suite.
    Generate {
        #[arg(long, default_value = "cctg")]
        method: Method,
        /// Weights file from `weights` (required for cctg).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        n_cases: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
        max_retries: u32,
        /// Fail (exit 1) when fewer cases than this can be generated.
        #[arg(long)]
        min_cases: Option<usize>,
    },
    /// Execute a suite; with --coverage-hook, collect per-case coverage instead.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        /// Shell command run after each case; placeholders {case_id} {covdir} {argv}.
        #[arg(long)]
        coverage_hook: Option<String>,
        #[command(flatten)]
        coverage: CoverageArgs,
    },
    /// Run a suite on the original SUT and every mutant and report detections.
    Evaluate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        mutants: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Repeat generate + evaluate for several methods.
    Experiment {
        #[arg(long)]
        mutants: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "cctg,random,unweighted")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 100)]
        n_cases: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
        max_retries: u32,
        #[command(flatten)]
        exec: ExecArgs,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum OrderArg {
    RoundRobin,
    Sequential,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long, env = "CCTG_COVDIR")]
    coverage_dir: Option<PathBuf>,
    #[arg(long, default_value = "lines")]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct ExecArgs {
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Also compare stderr in the differential oracle.
    #[arg(long)]
    oracle_stderr: bool,
}

impl ExecArgs {
    fn options(&self) -> RunOptions {
        let mut options = RunOptions {
            timeout: Duration::from_millis(self.timeout_ms),
            oracle_stderr: self.oracle_stderr,
            ..RunOptions::default()
        };
        if let Some(p) = self.parallelism {
            options.parallelism = p;
        }
        options
    }
}

/// Failure carrying its exit code.
enum Failure {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

fn domain(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Domain(e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let model_path = cli
        .model
        .as_deref()
        .ok_or_else(|| anyhow!("--model is required"))?;
    let selection = match cli.range_seed {
        Some(seed) => RangeSelection::Random { seed },
        None => RangeSelection::RegularIntervals,
    };
    let model = load_model(model_path, selection)?;

    match cli.command {
        Command::Probe { test_depth, order } => {
            let seed = seed_or_entropy(cli.seed);
            let order = match order {
                OrderArg::RoundRobin => AdvanceOrder::RoundRobin,
                OrderArg::Sequential => AdvanceOrder::Sequential,
            };
            let suite =
                build_probe_suite_with(&model, test_depth, seed, order).map_err(|e| match e {
                    ScheduleError::InfeasibleStart { .. } => domain(e),
                    ScheduleError::ZeroDepth => Failure::Usage(e.into()),
                })?;
            if suite.skipped_steps() > 0 {
                log::warn!(
                    "{} probe steps skipped by constraints",
                    suite.skipped_steps()
                );
            }
            emit(
                cli.out.as_deref(),
                &SuiteFile::from_probe(&model, &suite).render(&model),
            )?;
        }
        Command::Weights {
            suite,
            coverage,
            metric,
        } => {
            let suite = load_suite(&suite, &model)?;
            let dir = coverage_dir(&coverage)?;
            let records = load_coverage_dir(&dir, &suite.cases, coverage.format)?;
            let weights = compute_weights(&suite.cases, &records, &model, metric)?;
            if weights.degenerate {
                log::warn!("no parameter changed coverage; weights are uniform");
            }
            emit(cli.out.as_deref(), &(weights.to_json() + "\n"))?;
        }
        Command::Generate {
            method,
            weights,
            n_cases,
            max_retries,
            min_cases,
        } => {
            let weights = weights
                .as_deref()
                .map(|p| load_weights(p, &model))
                .transpose()?;
            if method == Method::Cctg && weights.is_none() {
                bail_usage("--weights is required for --method cctg")?;
            }
            let seed = seed_or_entropy(cli.seed);
            let config = GenerationConfig {
                n_cases,
                seed,
                max_retries,
                method,
            };
            let generated =
                generate_with(&model, weights.as_ref(), &config).map_err(|e| match e {
                    GenerateError::Unsatisfiable | GenerateError::Constraint(_) => domain(e),
                    other => Failure::Usage(other.into()),
                })?;
            if generated.shortfall() > 0 {
                eprintln!(
                    "warning: shortfall of {} cases ({} of {} generated)",
                    generated.shortfall(),
                    generated.cases.len(),
                    n_cases
                );
            }
            if let Some(min) = min_cases {
                if generated.cases.len() < min {
                    return Err(domain(anyhow!(
                        "only {} cases generated, fewer than --min-cases {min}",
                        generated.cases.len()
                    )));
                }
            }
            let file = SuiteFile {
                header: SuiteHeader::Generated {
                    parameters: model.names(),
                    method: method.to_string(),
                    seed,
                    requested: n_cases,
                    produced: generated.cases.len(),
                    weights: weights.map(|w| w.normalized),
                },
                cases: label_cases(generated.cases),
            };
            emit(cli.out.as_deref(), &file.render(&model))?;
        }
        Command::Run {
            suite,
            exec,
            coverage_hook,
            coverage,
        } => {
            let suite = load_suite(&suite, &model)?;
            let sut = sut(&model)?;
            let mut out = String::new();
            match coverage_hook {
                Some(template) => {
                    let dir = absolute(&coverage_dir(&coverage)?)?;
                    let records = collect_coverage(
                        &model,
                        &suite.cases,
                        sut,
                        Some(&CoverageHook::new(template)),
                        &dir,
                        coverage.format,
                        exec.options().timeout,
                    )?;
                    for c in &suite.cases {
                        let line =
                            serde_json::json!({"case_id": c.id, "scalar": records[&c.id].scalar});
                        out.push_str(&line.to_string());
                        out.push('\n');
                    }
                }
                None => {
                    for result in run_suite(&model, &suite.cases, sut, &exec.options())? {
                        out.push_str(&serde_json::to_string(&result)?);
                        out.push('\n');
                    }
                }
            }
            emit(cli.out.as_deref(), &out)?;
        }
        Command::Evaluate {
            suite,
            mutants,
            exec,
        } => {
            let suite = load_suite(&suite, &model)?;
            let mutants = load_mutants(&mutants)?;
            let report = evaluate_mutation(
                &model,
                &suite.cases,
                sut(&model)?,
                &mutants,
                &exec.options(),
            )?;
            let method = suite.header.method().unwrap_or("suite").to_string();
            let summary = format!(
                "method,repetition,detection_rate,faults_detected,faults_total\n{method},1,{},{},{}\n",
                report.detection_rate(),
                report.faults_detected,
                report.faults_total
            );
            emit(cli.out.as_deref(), &summary)?;
            if let Some(out) = &cli.out {
                let detail = experiment::faults_csv(std::iter::once((method.as_str(), 1, &report)));
                write(&out.with_extension("faults.csv"), &detail)?;
            }
        }
        Command::Experiment {
            mutants,
            weights,
            methods,
            repetitions,
            n_cases,
            max_retries,
            exec,
        } => {
            let out = cli
                .out
                .as_deref()
                .ok_or_else(|| anyhow!("--out DIR is required for experiment"))?;
            let mutants = load_mutants(&mutants)?;
            let weights = weights
                .as_deref()
                .map(|p| load_weights(p, &model))
                .transpose()?;
            if methods.contains(&Method::Cctg) && weights.is_none() {
                bail_usage("--weights is required when cctg is among --methods")?;
            }
            let seed = seed_or_entropy(cli.seed);
            let mut config = ExperimentConfig::new(methods, n_cases, repetitions, seed);
            config.max_retries = max_retries;
            config.run = exec.options();
            let report = run_experiment(&model, sut(&model)?, &mutants, weights.as_ref(), &config)
                .map_err(|e| match e {
                    harness::HarnessError::Generate(GenerateError::Unsatisfiable) => domain(e),
                    other => Failure::Usage(other.into()),
                })?;

            fs::create_dir_all(out.join("suites"))
                .with_context(|| format!("creating {}", out.display()))?;
            write(&out.join("summary.csv"), &report.summary_csv())?;
            write(&out.join("faults.csv"), &report.faults_csv())?;
            for s in &report.suites {
                let file = SuiteFile {
                    header: SuiteHeader::Generated {
                        parameters: model.names(),
                        method: s.method.to_string(),
                        seed: s.seed,
                        requested: n_cases,
                        produced: s.cases.len(),
                        weights: (s.method == Method::Cctg)
                            .then(|| weights.as_ref().map(|w| w.normalized.clone()))
                            .flatten(),
                    },
                    cases: label_cases(s.cases.iter().cloned()),
                };
                let name = format!("{}-rep{}.jsonl", s.method, s.repetition);
                write(&out.join("suites").join(name), &file.render(&model))?;
            }
            for method in &config.methods {
                if let Some(m) = report.median_rate(*method) {
                    eprintln!("{method}: median detection rate {m}");
                }
            }
        }
    }
    Ok(())
}

fn bail_usage(message: &str) -> Result<(), Failure> {
    Err(Failure::Usage(anyhow!("{message}")))
}

fn seed_or_entropy(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

/// Parses the model and anchors the SUT working directory at the model
/// file's directory.
fn load_model(path: &Path, selection: RangeSelection) -> Result<TestModel> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let mut model =
        parse_model_with(&text, selection).with_context(|| format!("in {}", path.display()))?;
    let base = absolute(path.parent().unwrap_or(Path::new(".")))?;
    if let Some(sut) = &mut model.sut {
        let dir = match &sut.workdir {
            Some(w) => base.join(w),
            None => base,
        };
        sut.workdir = Some(dir.to_string_lossy().into_owned());
    }
    Ok(model)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    let path = if path.as_os_str().is_empty() {
        Path::new(".")
    } else {
        path
    };
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

fn sut(model: &TestModel) -> Result<&SutDescriptor> {
    model
        .sut
        .as_ref()
        .ok_or_else(|| anyhow!("the model has no `sut` section"))
}

fn load_suite(path: &Path, model: &TestModel) -> Result<SuiteFile> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading suite {}", path.display()))?;
    let suite = SuiteFile::parse(&text).with_context(|| format!("in {}", path.display()))?;
    suite
        .check_against(model)
        .with_context(|| format!("in {}", path.display()))?;
    Ok(suite)
}

fn load_weights(path: &Path, model: &TestModel) -> Result<WeightVector> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading weights {}", path.display()))?;
    let weights =
        WeightVector::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    if !weights.matches(model) {
        bail!(
            "weights in {} do not match the model's parameters",
            path.display()
        );
    }
    Ok(weights)
}

fn load_mutants(path: &Path) -> Result<MutantSet> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading mutants {}", path.display()))?;
    MutantSet::from_json(&text).with_context(|| format!("in {}", path.display()))
}

fn coverage_dir(args: &CoverageArgs) -> Result<PathBuf> {
    args.coverage_dir
        .clone()
        .ok_or_else(|| anyhow!("--coverage-dir (or CCTG_COVDIR) is required"))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
