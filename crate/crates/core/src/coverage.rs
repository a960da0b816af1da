//! Per-case line coverage and per-parameter impact weights.
//!
//! A parameter's weight is measured on groups of cases that agree on every
//! other parameter. Within each group of two or more cases the spread of the
//! coverage scalar (`max - min`) is recorded, and the weight is the mean of
//! those spreads. Weights are then normalized to sum to one.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabeledCase, TestModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoverageError {
    #[error("coverage report line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("no coverage record for case `{0}`")]
    MissingRecord(String),
    #[error("the symdiff metric needs covered-line sets, but case `{0}` only has a scalar")]
    MissingLineSet(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("weights must be finite and non-negative (parameter {0})")]
    InvalidWeight(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    /// One `path:lineno` per covered line.
    Lines,
    /// gcov annotated source.
    Gcov,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lines" => Ok(ReportFormat::Lines),
            "gcov" => Ok(ReportFormat::Gcov),
            other => Err(format!(
                "unknown coverage format `{other}` (expected lines or gcov)"
            )),
        }
    }
}

/// How the coverage change within a group of cases is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// `max - min` of the covered-line counts.
    #[default]
    Scalar,
    /// Largest symmetric difference of covered-line sets over the group's
    /// pairs. Sees path changes that leave the count unchanged.
    Symdiff,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scalar" => Ok(Metric::Scalar),
            "symdiff" => Ok(Metric::Symdiff),
            other => Err(format!(
                "unknown metric `{other}` (expected scalar or symdiff)"
            )),
        }
    }
}

pub type Line = (String, u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageRecord {
    pub case_id: String,
    pub covered_lines: Option<BTreeSet<Line>>,
    pub scalar: u64,
}

impl CoverageRecord {
    pub fn from_lines(case_id: impl Into<String>, lines: BTreeSet<Line>) -> Self {
        CoverageRecord {
            case_id: case_id.into(),
            scalar: lines.len() as u64,
            covered_lines: Some(lines),
        }
    }

    pub fn scalar_only(case_id: impl Into<String>, scalar: u64) -> Self {
        CoverageRecord {
            case_id: case_id.into(),
            covered_lines: None,
            scalar,
        }
    }
}

pub fn parse_coverage(
    case_id: &str,
    report: &str,
    format: ReportFormat,
) -> Result<CoverageRecord, CoverageError> {
    let lines = match format {
        ReportFormat::Lines => parse_lines_format(report)?,
        ReportFormat::Gcov => parse_gcov(report)?,
    };
    Ok(CoverageRecord::from_lines(case_id, lines))
}

fn parse_lines_format(report: &str) -> Result<BTreeSet<Line>, CoverageError> {
    let mut out = BTreeSet::new();
    for (i, raw) in report.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |message: &str| CoverageError::Malformed {
            line: i + 1,
            message: format!("{message}: `{line}`"),
        };
        let (path, number) = line
            .rsplit_once(':')
            .ok_or_else(|| malformed("expected `path:lineno`"))?;
        if path.is_empty() {
            return Err(malformed("empty path"));
        }
        let number: u32 = number
            .parse()
            .map_err(|_| malformed("line number is not a positive integer"))?;
        if number == 0 {
            return Err(malformed("line numbers start at 1"));
        }
        out.insert((path.to_string(), number));
    }
    Ok(out)
}

/// Extracts executed lines from gcov annotated source. Count fields may
/// carry gcov's `*` marker or a `k`/`M`/`G` suffix; `#####` and `=====` mark
/// unexecuted lines and `-` non-executable ones.
fn parse_gcov(report: &str) -> Result<BTreeSet<Line>, CoverageError> {
    const DIRECTIVES: [&str; 5] = ["function ", "branch ", "call ", "------", "unconditional "];
    let mut source = String::new();
    let mut out = BTreeSet::new();
    for (i, raw) in report.lines().enumerate() {
        let trimmed = raw.trim_start();
        if trimmed.is_empty() || DIRECTIVES.iter().any(|d| trimmed.starts_with(d)) {
            continue;
        }
        let malformed = |message: &str| CoverageError::Malformed {
            line: i + 1,
            message: format!("{message}: `{raw}`"),
        };
        let mut fields = trimmed.splitn(3, ':');
        let count = fields.next().unwrap_or("").trim();
        let (Some(number), rest) = (fields.next(), fields.next()) else {
            // Function headers of template instantiations: `_Z3fooi:`
            if trimmed.ends_with(':') {
                continue;
            }
            return Err(malformed("expected `count:line:source`"));
        };
        let number: u32 = number
            .trim()
            .parse()
            .map_err(|_| malformed("line number is not an integer"))?;
        if number == 0 {
            if let Some(path) = rest.and_then(|r| r.strip_prefix("Source:")) {
                source = path.to_string();
            }
            continue;
        }
        match count {
            "-" | "#####" | "=====" | "$$$$$" | "%%%%%" => {}
            _ => {
                if gcov_count(count).ok_or_else(|| malformed("unrecognized execution count"))? > 0.0
                {
                    out.insert((source.clone(), number));
                }
            }
        }
    }
    Ok(out)
}

fn gcov_count(field: &str) -> Option<f64> {
    let field = field.trim_end_matches('*');
    let (digits, scale) = match field.chars().last()? {
        'k' => (&field[..field.len() - 1], 1e3),
        'M' => (&field[..field.len() - 1], 1e6),
        'G' => (&field[..field.len() - 1], 1e9),
        _ => (field, 1.0),
    };
    let value: f64 = digits.parse().ok()?;
    (value.is_finite() && value >= 0.0).then_some(value * scale)
}

/// Impact of one parameter: mean coverage spread over groups of cases that
/// agree on every other parameter. Zero when no group has two members.
pub fn parameter_weight(
    cases: &[LabeledCase],
    coverage: &HashMap<String, CoverageRecord>,
    param: usize,
    metric: Metric,
) -> Result<f64, CoverageError> {
    let mut groups: BTreeMap<Vec<usize>, Vec<&CoverageRecord>> = BTreeMap::new();
    for c in cases {
        let record = coverage
            .get(&c.id)
            .ok_or_else(|| CoverageError::MissingRecord(c.id.clone()))?;
        let mut key = c.case.assignment().to_vec();
        key[param] = usize::MAX;
        groups.entry(key).or_default().push(record);
    }

    let mut spreads = Vec::new();
    for members in groups.values().filter(|m| m.len() >= 2) {
        spreads.push(group_spread(members, metric)?);
    }
    if spreads.is_empty() {
        return Ok(0.0);
    }
    Ok(spreads.iter().sum::<f64>() / spreads.len() as f64)
}

/// [`parameter_weight`] addressed by parameter name.
pub fn parameter_weight_by_name(
    cases: &[LabeledCase],
    coverage: &HashMap<String, CoverageRecord>,
    model: &TestModel,
    name: &str,
    metric: Metric,
) -> Result<f64, CoverageError> {
    let param = model
        .param_index(name)
        .ok_or_else(|| CoverageError::UnknownParameter(name.to_string()))?;
    parameter_weight(cases, coverage, param, metric)
}

fn group_spread(members: &[&CoverageRecord], metric: Metric) -> Result<f64, CoverageError> {
    match metric {
        Metric::Scalar => {
            let max = members.iter().map(|r| r.scalar).max().unwrap_or(0);
            let min = members.iter().map(|r| r.scalar).min().unwrap_or(0);
            Ok((max - min) as f64)
        }
        Metric::Symdiff => {
            let sets = members
                .iter()
                .map(|r| {
                    r.covered_lines
                        .as_ref()
                        .ok_or_else(|| CoverageError::MissingLineSet(r.case_id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut widest = 0;
            for (i, a) in sets.iter().enumerate() {
                for b in &sets[i + 1..] {
                    widest = widest.max(a.symmetric_difference(b).count());
                }
            }
            Ok(widest as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub parameters: Vec<String>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// True when no parameter moved coverage and weights fell back to uniform.
    pub degenerate: bool,
    #[serde(default)]
    pub metric: Metric,
}

impl WeightVector {
    pub fn from_raw(parameters: Vec<String>, raw: Vec<f64>) -> Result<Self, CoverageError> {
        if let Some(i) = raw.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(CoverageError::InvalidWeight(i));
        }
        let total: f64 = raw.iter().sum();
        let degenerate = total <= 0.0;
        let normalized = if degenerate {
            vec![1.0 / raw.len() as f64; raw.len()]
        } else {
            raw.iter().map(|w| w / total).collect()
        };
        Ok(WeightVector {
            parameters,
            raw,
            normalized,
            degenerate,
            metric: Metric::Scalar,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn matches(&self, model: &TestModel) -> bool {
        self.parameters == model.names()
            && self.raw.len() == model.len()
            && self.normalized.len() == model.len()
    }
}

pub fn compute_weights(
    cases: &[LabeledCase],
    coverage: &HashMap<String, CoverageRecord>,
    model: &TestModel,
    metric: Metric,
) -> Result<WeightVector, CoverageError> {
    let raw = (0..model.len())
        .map(|p| parameter_weight(cases, coverage, p, metric))
        .collect::<Result<Vec<_>, _>>()?;
    let mut weights = WeightVector::from_raw(model.names(), raw)?;
    weights.metric = metric;
    Ok(weights)
}

/// Reads `<case_id>.cov` for every case from a coverage directory.
pub fn load_coverage_dir(
    dir: &std::path::Path,
    cases: &[LabeledCase],
    format: ReportFormat,
) -> Result<HashMap<String, CoverageRecord>, LoadError> {
    let mut out = HashMap::new();
    for c in cases {
        let path = dir.join(format!("{}.cov", c.id));
        let text = std::fs::read_to_string(&path).map_err(|source| LoadError::Io {
            case_id: c.id.clone(),
            path: path.display().to_string(),
            source,
        })?;
        let record = parse_coverage(&c.id, &text, format).map_err(|source| LoadError::Parse {
            case_id: c.id.clone(),
            source,
        })?;
        out.insert(c.id.clone(), record);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("case `{case_id}`: cannot read {path}: {source}")]
    Io {
        case_id: String,
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("case `{case_id}`: {source}")]
    Parse {
        case_id: String,
        #[source]
        source: CoverageError,
    },
}
