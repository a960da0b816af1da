//! Differential mutation testing: a fault counts as detected when some test
//! case makes the mutant behave observably differently from the original.

use std::collections::HashSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_sut, exec, pool, ExecutionResult, HarnessError, RunOptions};
use crate::model::{LabeledCase, SutDescriptor, TestModel};

/// A pre-built faulty variant of the SUT. It inherits the original's
/// working directory and environment; `args_prefix`, when given, replaces
/// the original's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mutant {
    pub id: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args_prefix: Option<Vec<String>>,
}

impl Mutant {
    pub fn descriptor(&self, original: &SutDescriptor) -> SutDescriptor {
        SutDescriptor {
            command: self.command.clone(),
            args_prefix: self
                .args_prefix
                .clone()
                .unwrap_or_else(|| original.args_prefix.clone()),
            workdir: original.workdir.clone(),
            env: original.env.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutantSet {
    mutants: Vec<Mutant>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MutantFile {
    mutants: Vec<Mutant>,
}

impl MutantSet {
    pub fn new(mutants: Vec<Mutant>) -> Result<Self, HarnessError> {
        if mutants.is_empty() {
            return Err(HarnessError::EmptyMutantSet);
        }
        let mut seen = HashSet::new();
        for m in &mutants {
            if !seen.insert(m.id.as_str()) {
                return Err(HarnessError::DuplicateMutant(m.id.clone()));
            }
        }
        Ok(MutantSet { mutants })
    }

    /// Parses `{"mutants": [{"id": .., "command": .., "args_prefix": [..]}]}`.
    pub fn from_json(text: &str) -> Result<Self, MutantFileError> {
        let file: MutantFile = serde_json::from_str(text)?;
        Ok(MutantSet::new(file.mutants)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MutantFile {
            mutants: self.mutants.clone(),
        })
        .expect("mutants serialize")
    }

    pub fn mutants(&self) -> &[Mutant] {
        &self.mutants
    }

    pub fn len(&self) -> usize {
        self.mutants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mutants.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MutantFileError {
    #[error("malformed mutant file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum FaultStatus {
    Detected { cases: Vec<String> },
    Undetected,
    NotEvaluable { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultOutcome {
    pub fault_id: String,
    #[serde(flatten)]
    pub status: FaultStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationReport {
    pub faults: Vec<FaultOutcome>,
    pub faults_detected: usize,
    /// Evaluable faults only.
    pub faults_total: usize,
    pub suite_size: usize,
}

impl MutationReport {
    pub fn detection_rate(&self) -> f64 {
        if self.faults_total == 0 {
            0.0
        } else {
            self.faults_detected as f64 / self.faults_total as f64
        }
    }

    fn from_faults(faults: Vec<FaultOutcome>, suite_size: usize) -> Self {
        let faults_detected = faults
            .iter()
            .filter(|f| matches!(f.status, FaultStatus::Detected { .. }))
            .count();
        let faults_total = faults
            .iter()
            .filter(|f| !matches!(f.status, FaultStatus::NotEvaluable { .. }))
            .count();
        MutationReport {
            faults,
            faults_detected,
            faults_total,
            suite_size,
        }
    }
}

/// True when two runs of the same case are observably different.
pub fn outputs_differ(a: &ExecutionResult, b: &ExecutionResult, oracle_stderr: bool) -> bool {
    a.stdout_digest != b.stdout_digest
        || a.exit_code != b.exit_code
        || a.timed_out != b.timed_out
        || (oracle_stderr && a.stderr_digest != b.stderr_digest)
}

/// Compares one mutant's results against the original's, case by case.
pub fn classify(
    fault_id: &str,
    original: &[ExecutionResult],
    mutant: &[ExecutionResult],
    oracle_stderr: bool,
) -> FaultOutcome {
    if let Some(failed) = mutant.iter().find(|r| r.spawn_error.is_some()) {
        return FaultOutcome {
            fault_id: fault_id.to_string(),
            status: FaultStatus::NotEvaluable {
                reason: failed.spawn_error.clone().unwrap_or_default(),
            },
        };
    }
    let cases: Vec<String> = original
        .iter()
        .zip(mutant)
        .filter(|(o, m)| outputs_differ(o, m, oracle_stderr))
        .map(|(o, _)| o.case_id.clone())
        .collect();
    FaultOutcome {
        fault_id: fault_id.to_string(),
        status: if cases.is_empty() {
            FaultStatus::Undetected
        } else {
            FaultStatus::Detected { cases }
        },
    }
}

/// Runs the suite on the original and on every mutant and classifies each
/// fault. Mutants that cannot be started are reported as not evaluable and
/// left out of the total.
pub fn evaluate_mutation(
    model: &TestModel,
    cases: &[LabeledCase],
    original: &SutDescriptor,
    mutants: &MutantSet,
    options: &RunOptions,
) -> Result<MutationReport, HarnessError> {
    check_sut(original)?;
    let pool = pool(options.parallelism)?;
    let argvs: Vec<Vec<String>> = cases.iter().map(|c| model.render_argv(&c.case)).collect();
    let descriptors: Vec<SutDescriptor> = std::iter::once(original.clone())
        .chain(mutants.mutants().iter().map(|m| m.descriptor(original)))
        .collect();
    let runnable: Vec<bool> = descriptors.iter().map(|d| check_sut(d).is_ok()).collect();

    // One flat job list so the pool stays busy across mutant boundaries.
    let jobs: Vec<(usize, usize)> = (0..descriptors.len())
        .filter(|&d| runnable[d])
        .flat_map(|d| (0..cases.len()).map(move |c| (d, c)))
        .collect();
    let results: Vec<ExecutionResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, c)| {
                let raw = exec::run_sut(&descriptors[d], &argvs[c], options.timeout);
                ExecutionResult::from_raw(&cases[c].id, &raw)
            })
            .collect()
    });

    let mut per_descriptor = vec![Vec::new(); descriptors.len()];
    for (&(d, _), result) in jobs.iter().zip(results) {
        per_descriptor[d].push(result);
    }
    let original_results = &per_descriptor[0];
    if let Some(failed) = original_results.iter().find(|r| r.spawn_error.is_some()) {
        return Err(HarnessError::OriginalFailed {
            case_id: failed.case_id.clone(),
            message: failed.spawn_error.clone().unwrap_or_default(),
        });
    }

    let faults = mutants
        .mutants()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let outcome = if runnable[i + 1] {
                classify(
                    &m.id,
                    original_results,
                    &per_descriptor[i + 1],
                    options.oracle_stderr,
                )
            } else {
                FaultOutcome {
                    fault_id: m.id.clone(),
                    status: FaultStatus::NotEvaluable {
                        reason: format!("command `{}` not found", m.command),
                    },
                }
            };
            if let FaultStatus::NotEvaluable { reason } = &outcome.status {
                warn!("mutant `{}` is not evaluable: {reason}", m.id);
            }
            outcome
        })
        .collect();
    Ok(MutationReport::from_faults(faults, cases.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{label_cases, parse_model, TestCase};

    fn result(id: &str, out: &str, code: i32) -> ExecutionResult {
        ExecutionResult {
            case_id: id.into(),
            exit_code: code,
            stdout_digest: super::super::digest(out.as_bytes()),
            stderr_digest: super::super::digest(b""),
            duration_ms: 0,
            timed_out: false,
            spawn_error: None,
        }
    }

    #[test]
    fn oracle_compares_stdout_exit_and_timeout() {
        let a = result("c", "x", 0);
        assert!(!outputs_differ(&a, &a.clone(), false));
        assert!(outputs_differ(&a, &result("c", "y", 0), false));
        assert!(outputs_differ(&a, &result("c", "x", 1), false));
        let mut t = a.clone();
        t.timed_out = true;
        assert!(outputs_differ(&a, &t, false));
        let mut e = a.clone();
        e.stderr_digest = "other".into();
        assert!(!outputs_differ(&a, &e, false));
        assert!(outputs_differ(&a, &e, true));
    }

    #[test]
    fn identical_crashes_do_not_detect() {
        let o = vec![result("c0", "", 139)];
        let m = vec![result("c0", "", 139)];
        assert_eq!(classify("m", &o, &m, false).status, FaultStatus::Undetected);
    }

    #[test]
    fn mutant_set_validation() {
        assert!(matches!(
            MutantSet::new(vec![]),
            Err(HarnessError::EmptyMutantSet)
        ));
        let m = Mutant {
            id: "m1".into(),
            command: "sh".into(),
            args_prefix: None,
        };
        assert!(matches!(
            MutantSet::new(vec![m.clone(), m.clone()]),
            Err(HarnessError::DuplicateMutant(_))
        ));
        let set = MutantSet::new(vec![m]).unwrap();
        assert_eq!(MutantSet::from_json(&set.to_json()).unwrap(), set);
        assert!(MutantSet::from_json(r#"{"mutants": []}"#).is_err());
    }

    #[test]
    fn equivalent_and_missing_mutants() {
        let model = parse_model(
            r#"{"parameters": [{"name": "v", "kind": "unary", "flag": "-v"}], "sut": {"command": "echo"}}"#,
        )
        .unwrap();
        let sut = model.sut.clone().unwrap();
        let cases = label_cases([TestCase::new(vec![0]), TestCase::new(vec![1])]);
        let mutants = MutantSet::new(vec![
            Mutant {
                id: "same".into(),
                command: "echo".into(),
                args_prefix: None,
            },
            Mutant {
                id: "gone".into(),
                command: "./missing-mutant".into(),
                args_prefix: None,
            },
        ])
        .unwrap();
        let report =
            evaluate_mutation(&model, &cases, &sut, &mutants, &RunOptions::default()).unwrap();
        assert_eq!(report.faults_detected, 0);
        assert_eq!(report.faults_total, 1);
        assert!(matches!(
            report.faults[1].status,
            FaultStatus::NotEvaluable { .. }
        ));
    }
}
