//! Newline-delimited suite files.
//!
//! The first line is a JSON header object; every following non-empty line is
//! one case record:
//!
//! ```text
//! {"cctg_suite":1,"kind":"probe","parameters":["a","b"],"seed":7,"test_depth":2,...}
//! {"id":"c0000","assignment":[1,0],"argv":["-a"]}
//! {"id":"c0001","assignment":[1,2],"argv":["-a","--b","x"]}
//! ```
//!
//! `argv` is informational and ignored when reading.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{label_cases, LabeledCase, TestCase, TestModel, Verdict};
use crate::schedule::{AdvanceOrder, ChangeRecord, ProbeSuite};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SuiteFileError {
    #[error("suite file is empty")]
    Empty,
    #[error("suite file line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported suite format version {0}")]
    Version(u32),
    #[error("suite parameters {found:?} do not match the model's {expected:?}")]
    ParameterMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("case `{id}` is not valid for the model: {reason:?}")]
    InvalidCase { id: String, reason: Verdict },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SuiteHeader {
    Probe {
        parameters: Vec<String>,
        seed: u64,
        test_depth: usize,
        order: AdvanceOrder,
        rv_tables: Vec<Vec<usize>>,
        change_log: Vec<ChangeRecord>,
    },
    Generated {
        parameters: Vec<String>,
        method: String,
        seed: u64,
        requested: usize,
        produced: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Hand-written or regression suites.
    Imported { parameters: Vec<String> },
}

impl SuiteHeader {
    pub fn parameters(&self) -> &[String] {
        match self {
            SuiteHeader::Probe { parameters, .. }
            | SuiteHeader::Generated { parameters, .. }
            | SuiteHeader::Imported { parameters } => parameters,
        }
    }

    pub fn method(&self) -> Option<&str> {
        match self {
            SuiteHeader::Generated { method, .. } => Some(method),
            _ => None,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    cctg_suite: u32,
    #[serde(flatten)]
    header: SuiteHeader,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseLine {
    id: String,
    assignment: TestCase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    argv: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteFile {
    pub header: SuiteHeader,
    pub cases: Vec<LabeledCase>,
}

impl SuiteFile {
    pub fn from_probe(model: &TestModel, suite: &ProbeSuite) -> Self {
        SuiteFile {
            header: SuiteHeader::Probe {
                parameters: model.names(),
                seed: suite.seed,
                test_depth: suite.test_depth,
                order: suite.order,
                rv_tables: suite.rv_tables.clone(),
                change_log: suite.change_log.clone(),
            },
            cases: label_cases(suite.cases.iter().cloned()),
        }
    }

    pub fn test_cases(&self) -> Vec<TestCase> {
        self.cases.iter().map(|c| c.case.clone()).collect()
    }

    pub fn render(&self, model: &TestModel) -> String {
        let mut out = serde_json::to_string(&HeaderLine {
            cctg_suite: FORMAT_VERSION,
            header: self.header.clone(),
        })
        .expect("header serializes");
        out.push('\n');
        for c in &self.cases {
            let line = CaseLine {
                id: c.id.clone(),
                assignment: c.case.clone(),
                argv: Some(model.render_argv(&c.case)),
            };
            out.push_str(&serde_json::to_string(&line).expect("case serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<SuiteFile, SuiteFileError> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(SuiteFileError::Empty)?;
        let header: HeaderLine =
            serde_json::from_str(first).map_err(|e| SuiteFileError::Malformed {
                line: 1,
                message: e.to_string(),
            })?;
        if header.cctg_suite != FORMAT_VERSION {
            return Err(SuiteFileError::Version(header.cctg_suite));
        }
        let mut seen = HashSet::new();
        let mut cases = Vec::new();
        for (i, line) in lines {
            let record: CaseLine =
                serde_json::from_str(line).map_err(|e| SuiteFileError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if !seen.insert(record.id.clone()) {
                return Err(SuiteFileError::DuplicateId(record.id));
            }
            cases.push(LabeledCase {
                id: record.id,
                case: record.assignment,
            });
        }
        Ok(SuiteFile {
            header: header.header,
            cases,
        })
    }

    /// Checks that the suite was built for `model` and that every case is in
    /// bounds. Constraint violations are reported too, since every stage
    /// downstream assumes admissible cases.
    pub fn check_against(&self, model: &TestModel) -> Result<(), SuiteFileError> {
        let expected = model.names();
        if self.header.parameters() != expected.as_slice() {
            return Err(SuiteFileError::ParameterMismatch {
                expected,
                found: self.header.parameters().to_vec(),
            });
        }
        for c in &self.cases {
            let verdict = model.validate(&c.case);
            if !verdict.is_valid() {
                return Err(SuiteFileError::InvalidCase {
                    id: c.id.clone(),
                    reason: verdict,
                });
            }
        }
        Ok(())
    }
}
