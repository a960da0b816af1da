//! Repeated generate-and-evaluate runs comparing generation methods.

use serde::{Deserialize, Serialize};

use super::mutation::{evaluate_mutation, FaultStatus, MutantSet, MutationReport};
use super::{HarnessError, RunOptions};
use crate::coverage::WeightVector;
use crate::generator::{generate_with, GenerationConfig, Method, DEFAULT_MAX_RETRIES};
use crate::model::{label_cases, SutDescriptor, TestCase, TestModel};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub n_cases: usize,
    pub repetitions: usize,
    /// One generation seed per repetition, shared by all methods.
    pub seeds: Vec<u64>,
    pub max_retries: u32,
    pub run: RunOptions,
}

impl ExperimentConfig {
    /// Derives the per-repetition seeds from one base seed.
    pub fn new(methods: Vec<Method>, n_cases: usize, repetitions: usize, base_seed: u64) -> Self {
        ExperimentConfig {
            methods,
            n_cases,
            repetitions,
            seeds: (0..repetitions as u64)
                .map(|r| seed::derive(base_seed, r))
                .collect(),
            max_retries: DEFAULT_MAX_RETRIES,
            run: RunOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    /// 1-based.
    pub repetition: usize,
    pub seed: u64,
    pub requested: usize,
    pub report: MutationReport,
}

impl EvalRow {
    pub fn detection_rate(&self) -> f64 {
        self.report.detection_rate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSuite {
    pub method: Method,
    pub repetition: usize,
    pub seed: u64,
    pub cases: Vec<TestCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<EvalRow>,
    pub suites: Vec<GeneratedSuite>,
}

pub fn run_experiment(
    model: &TestModel,
    original: &SutDescriptor,
    mutants: &MutantSet,
    weights: Option<&WeightVector>,
    config: &ExperimentConfig,
) -> Result<ExperimentReport, HarnessError> {
    super::check_sut(original)?;
    let mut rows = Vec::new();
    let mut suites = Vec::new();
    for repetition in 1..=config.repetitions {
        let seed = config.seeds[repetition - 1];
        for &method in &config.methods {
            let generation = GenerationConfig {
                n_cases: config.n_cases,
                seed,
                max_retries: config.max_retries,
                method,
            };
            let generated = generate_with(model, weights, &generation)?;
            if generated.shortfall() > 0 {
                log::warn!(
                    "{method} repetition {repetition}: generated {} of {} cases",
                    generated.cases.len(),
                    config.n_cases
                );
            }
            let cases = label_cases(generated.cases.iter().cloned());
            let report = evaluate_mutation(model, &cases, original, mutants, &config.run)?;
            log::info!(
                "{method} repetition {repetition}: {}/{} faults detected",
                report.faults_detected,
                report.faults_total
            );
            rows.push(EvalRow {
                method,
                repetition,
                seed,
                requested: config.n_cases,
                report,
            });
            suites.push(GeneratedSuite {
                method,
                repetition,
                seed,
                cases: generated.cases,
            });
        }
    }
    Ok(ExperimentReport { rows, suites })
}

impl ExperimentReport {
    pub fn rates(&self, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(EvalRow::detection_rate)
            .collect()
    }

    pub fn median_rate(&self, method: Method) -> Option<f64> {
        median(&self.rates(method))
    }

    /// `method,repetition,detection_rate,faults_detected,faults_total`
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "repetition",
            "detection_rate",
            "faults_detected",
            "faults_total",
        ])
        .expect("in-memory write");
        for row in &self.rows {
            w.write_record([
                row.method.to_string(),
                row.repetition.to_string(),
                row.detection_rate().to_string(),
                row.report.faults_detected.to_string(),
                row.report.faults_total.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// One line per (row, fault): `method,repetition,fault_id,status,detecting_cases`,
    /// detecting case ids joined by `;`.
    pub fn faults_csv(&self) -> String {
        faults_csv(
            self.rows
                .iter()
                .map(|r| (r.method.as_str(), r.repetition, &r.report)),
        )
    }
}

pub fn faults_csv<'a>(rows: impl Iterator<Item = (&'a str, usize, &'a MutationReport)>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "repetition",
        "fault_id",
        "status",
        "detecting_cases",
    ])
    .expect("in-memory write");
    for (method, repetition, report) in rows {
        for fault in &report.faults {
            let (status, cases) = match &fault.status {
                FaultStatus::Detected { cases } => ("detected", cases.join(";")),
                FaultStatus::Undetected => ("undetected", String::new()),
                FaultStatus::NotEvaluable { reason } => ("not-evaluable", reason.clone()),
            };
            w.write_record([
                method,
                &repetition.to_string(),
                &fault.fault_id,
                status,
                &cases,
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Mutant;
    use crate::model::parse_model;

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[0.3, 0.1, 0.2]), Some(0.2));
        assert_eq!(median(&[0.4, 0.1, 0.2, 0.3]), Some(0.25));
    }

    #[test]
    fn single_random_repetition() {
        let model = parse_model(
            r#"{"parameters": [
                {"name": "v", "kind": "unary", "flag": "-v"},
                {"name": "n", "kind": "binary", "flag": "-n", "values": [1, 2]}
            ], "sut": {"command": "echo"}}"#,
        )
        .unwrap();
        let sut = model.sut.clone().unwrap();
        // `printf` without a trailing newline differs from echo on every case
        let mutants = MutantSet::new(vec![Mutant {
            id: "m1".into(),
            command: "printf".into(),
            args_prefix: Some(vec!["%s ".into()]),
        }])
        .unwrap();
        let config = ExperimentConfig::new(vec![Method::Random], 4, 1, 9);
        let report = run_experiment(&model, &sut, &mutants, None, &config).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert_eq!(report.rows[0].report.faults_detected, 1);
        assert_eq!(report.suites[0].cases.len(), 4);
        let csv = report.summary_csv();
        assert_eq!(
            csv,
            "method,repetition,detection_rate,faults_detected,faults_total\nrandom,1,1,1,1\n"
        );
        assert!(report.faults_csv().starts_with(
            "method,repetition,fault_id,status,detecting_cases\nrandom,1,m1,detected,c0000;"
        ));
    }
}
