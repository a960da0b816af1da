//! Executing suites against the system under test.
//!
//! Test cases run as `command args_prefix.. argv..` where `argv` is the
//! case's rendering. Outputs are reduced to SHA-256 digests; the differential
//! oracle in [`mutation`] compares those digests and exit codes between the
//! original program and each mutant.

mod exec;
pub mod experiment;
pub mod mutation;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coverage::{parse_coverage, CoverageError, CoverageRecord, ReportFormat};
use crate::model::{LabeledCase, SutDescriptor, TestModel};

pub use exec::{resolve_program, RawRun, SPAWN_FAILURE_EXIT_CODE, TIMEOUT_EXIT_CODE};
pub use experiment::{run_experiment, EvalRow, ExperimentConfig, ExperimentReport};
pub use mutation::{
    evaluate_mutation, FaultOutcome, FaultStatus, Mutant, MutantSet, MutationReport,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("SUT command `{0}` not found")]
    CommandNotFound(String),
    #[error("the model has no `sut` section")]
    NoSut,
    #[error("a coverage hook is required to collect coverage")]
    MissingHook,
    #[error("coverage hook failed for case `{case_id}` (exit code {exit_code}): {stderr}")]
    HookFailed {
        case_id: String,
        exit_code: i32,
        stderr: String,
    },
    #[error("case `{case_id}`: cannot read coverage file {path}: {source}")]
    MissingCoverage {
        case_id: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case `{case_id}`: garbled coverage file: {source}")]
    GarbledCoverage {
        case_id: String,
        #[source]
        source: CoverageError,
    },
    #[error("original SUT could not run case `{case_id}`: {message}")]
    OriginalFailed { case_id: String, message: String },
    #[error("empty MutantSet: at least one mutant is required")]
    EmptyMutantSet,
    #[error("duplicate mutant id `{0}`")]
    DuplicateMutant(String),
    #[error("parallelism must be at least 1")]
    ZeroParallelism,
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Generate(#[from] crate::generator::GenerateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub timeout: Duration,
    pub parallelism: usize,
    /// Include stderr in the differential oracle.
    pub oracle_stderr: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            timeout: DEFAULT_TIMEOUT,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            oracle_stderr: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub case_id: String,
    pub exit_code: i32,
    pub stdout_digest: String,
    pub stderr_digest: String,
    /// Wall-clock milliseconds. Not serialized, so result files stay
    /// reproducible.
    #[serde(skip)]
    pub duration_ms: u64,
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn_error: Option<String>,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ExecutionResult {
    fn from_raw(case_id: &str, raw: &RawRun) -> Self {
        ExecutionResult {
            case_id: case_id.to_string(),
            exit_code: raw.exit_code,
            stdout_digest: digest(&raw.stdout),
            stderr_digest: digest(&raw.stderr),
            duration_ms: raw.duration.as_millis() as u64,
            timed_out: raw.timed_out,
            spawn_error: raw.spawn_error.clone(),
        }
    }
}

/// Fails early if the descriptor's program cannot be found.
pub fn check_sut(sut: &SutDescriptor) -> Result<(), HarnessError> {
    resolve_program(&sut.command, sut.workdir.as_deref())
        .map(|_| ())
        .ok_or_else(|| HarnessError::CommandNotFound(sut.command.clone()))
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool, HarnessError> {
    if parallelism == 0 {
        return Err(HarnessError::ZeroParallelism);
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .expect("thread pool"))
}

/// Runs every case once, returning results in suite order. Per-case spawn
/// failures are recorded in the result rather than aborting the run.
pub fn run_suite(
    model: &TestModel,
    cases: &[LabeledCase],
    sut: &SutDescriptor,
    options: &RunOptions,
) -> Result<Vec<ExecutionResult>, HarnessError> {
    check_sut(sut)?;
    let pool = pool(options.parallelism)?;
    Ok(pool.install(|| {
        cases
            .par_iter()
            .map(|c| {
                let raw = exec::run_sut(sut, &model.render_argv(&c.case), options.timeout);
                ExecutionResult::from_raw(&c.id, &raw)
            })
            .collect()
    }))
}

/// Shell command run after each case to dump (and reset) coverage. The
/// placeholders `{case_id}`, `{covdir}` and `{argv}` expand to shell-quoted
/// words; the command must leave `<covdir>/<case_id>.cov` behind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageHook {
    pub template: String,
}

impl CoverageHook {
    pub fn new(template: impl Into<String>) -> Self {
        CoverageHook {
            template: template.into(),
        }
    }

    pub fn expand(&self, case_id: &str, covdir: &Path, argv: &[String]) -> String {
        let quote = |s: &str| {
            shlex::try_quote(s)
                .map(|q| q.into_owned())
                .unwrap_or_default()
        };
        let argv = shlex::try_join(argv.iter().map(String::as_str)).unwrap_or_default();
        self.template
            .replace("{case_id}", &quote(case_id))
            .replace("{covdir}", &quote(&covdir.to_string_lossy()))
            .replace("{argv}", &argv)
    }
}

/// Runs each case and then the coverage hook, strictly one case at a time
/// since coverage counters are global state of the SUT, and parses the
/// `<case_id>.cov` files the hook leaves in `covdir`.
pub fn collect_coverage(
    model: &TestModel,
    cases: &[LabeledCase],
    sut: &SutDescriptor,
    hook: Option<&CoverageHook>,
    covdir: &Path,
    format: ReportFormat,
    timeout: Duration,
) -> Result<HashMap<String, CoverageRecord>, HarnessError> {
    let hook = hook.ok_or(HarnessError::MissingHook)?;
    check_sut(sut)?;
    std::fs::create_dir_all(covdir).map_err(|source| HarnessError::Io {
        path: covdir.display().to_string(),
        source,
    })?;

    let mut out = HashMap::new();
    for c in cases {
        let path = cov_path(covdir, &c.id);
        if path.exists() {
            std::fs::remove_file(&path).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        let argv = model.render_argv(&c.case);
        exec::run_sut(sut, &argv, timeout);
        let run = exec::run_shell(&hook.expand(&c.id, covdir, &argv), sut, timeout);
        if run.exit_code != 0 {
            return Err(HarnessError::HookFailed {
                case_id: c.id.clone(),
                exit_code: run.exit_code,
                stderr: String::from_utf8_lossy(&run.stderr).trim().to_string(),
            });
        }
        let text =
            std::fs::read_to_string(&path).map_err(|source| HarnessError::MissingCoverage {
                case_id: c.id.clone(),
                path: path.display().to_string(),
                source,
            })?;
        let record = parse_coverage(&c.id, &text, format).map_err(|source| {
            HarnessError::GarbledCoverage {
                case_id: c.id.clone(),
                source,
            }
        })?;
        out.insert(c.id.clone(), record);
    }
    Ok(out)
}

pub fn cov_path(covdir: &Path, case_id: &str) -> PathBuf {
    covdir.join(format!("{case_id}.cov"))
}
