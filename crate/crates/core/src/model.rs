//! SUT test model: parameters, their effective value lists, constraints and
//! the execution descriptor.
//!
//! Every parameter is represented by an *effective value list* whose index 0
//! is the exclusion of the parameter (nothing rendered on the command line).
//! A unary flag therefore has two entries (`[excluded, included]`), a binary
//! parameter has `1 + |values|` entries and a ranged parameter behaves like a
//! binary one once its range has been sampled down to `depth` values.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{self, Expr, Formula};

/// Index 0 of every effective value list.
pub const EXCLUDED: usize = 0;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parameter `{name}`: {message}")]
    Parameter { name: String, message: String },
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("model declares no parameters")]
    NoParameters,
    #[error("constraint #{index} (`{text}`): {source}")]
    Constraint {
        index: usize,
        text: String,
        #[source]
        source: constraints::ConstraintError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Unary,
    Binary,
    Ranged,
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Unary => "unary",
            ParamKind::Binary => "binary",
            ParamKind::Ranged => "ranged",
        })
    }
}

/// Inclusive integer range of a ranged parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueRange {
    pub min: i64,
    pub max: i64,
}

impl ValueRange {
    pub fn size(&self) -> u128 {
        (self.max as i128 - self.min as i128 + 1).max(0) as u128
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parameter {
    pub name: String,
    pub kind: ParamKind,
    /// Non-excluded values, in effective-list order starting at index 1. For
    /// a unary parameter this is the single "included" literal (its flag).
    pub values: Vec<String>,
    pub range: Option<ValueRange>,
    pub depth: Option<usize>,
    pub default_index: usize,
    pub flag: Option<String>,
}

impl Parameter {
    /// Number of entries in the effective value list, exclusion included.
    pub fn effective_len(&self) -> usize {
        1 + self.values.len()
    }

    /// Literal for an effective index; `None` for the exclusion.
    pub fn value(&self, index: usize) -> Option<&str> {
        if index == EXCLUDED {
            None
        } else {
            self.values.get(index - 1).map(String::as_str)
        }
    }

    /// Command-line token that introduces this parameter. An empty flag makes
    /// a binary parameter positional.
    pub fn flag_token(&self) -> &str {
        self.flag.as_deref().unwrap_or(&self.name)
    }
}

/// How a ranged parameter's `depth` values are picked from its range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RangeSelection {
    /// Evenly spaced, both endpoints included.
    #[default]
    RegularIntervals,
    /// Uniformly sampled without replacement, then sorted ascending.
    Random { seed: u64 },
}

/// How to invoke the system under test.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SutDescriptor {
    pub command: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub args_prefix: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workdir: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env: BTreeMap<String, String>,
}

/// A bound constraint: the source text it was parsed from and the formula
/// resolved against the model's parameter list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constraint {
    pub text: String,
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestModel {
    pub parameters: Vec<Parameter>,
    pub constraints: Vec<Constraint>,
    pub sut: Option<SutDescriptor>,
}

/// One value index per model parameter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestCase(pub Vec<usize>);

impl TestCase {
    pub fn new(assignment: Vec<usize>) -> Self {
        TestCase(assignment)
    }

    pub fn assignment(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, param: usize) -> usize {
        self.0[param]
    }

    pub fn with(&self, param: usize, value: usize) -> TestCase {
        let mut next = self.0.clone();
        next[param] = value;
        TestCase(next)
    }

    /// Number of positions in which two equally long cases differ.
    pub fn hamming(&self, other: &TestCase) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for TestCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// A test case with the identifier used for its coverage and result files.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledCase {
    pub id: String,
    pub case: TestCase,
}

/// Canonical case identifier: `c` followed by the zero-padded position.
pub fn case_id(index: usize) -> String {
    format!("c{index:04}")
}

/// Labels cases with their canonical identifiers.
pub fn label_cases<I: IntoIterator<Item = TestCase>>(cases: I) -> Vec<LabeledCase> {
    cases
        .into_iter()
        .enumerate()
        .map(|(i, case)| LabeledCase {
            id: case_id(i),
            case,
        })
        .collect()
}

/// Why a test case is not valid against a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Valid,
    WrongLength {
        expected: usize,
        found: usize,
    },
    OutOfBounds {
        param: usize,
        index: usize,
        len: usize,
    },
    ConstraintViolated {
        constraint: usize,
    },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid)
    }
}

impl TestModel {
    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.parameters.iter().map(|p| p.name.clone()).collect()
    }

    pub fn effective_lens(&self) -> Vec<usize> {
        self.parameters
            .iter()
            .map(Parameter::effective_len)
            .collect()
    }

    /// Every parameter at its default index.
    pub fn default_case(&self) -> TestCase {
        TestCase(self.parameters.iter().map(|p| p.default_index).collect())
    }

    pub fn formulas(&self) -> impl Iterator<Item = &Formula> {
        self.constraints.iter().map(|c| &c.formula)
    }

    /// True iff every constraint holds for a complete, in-bounds assignment.
    pub fn satisfies(&self, tc: &TestCase) -> bool {
        self.formulas().all(|f| f.eval(tc.assignment()))
    }

    pub fn validate(&self, tc: &TestCase) -> Verdict {
        if tc.len() != self.parameters.len() {
            return Verdict::WrongLength {
                expected: self.parameters.len(),
                found: tc.len(),
            };
        }
        for (param, (p, &index)) in self.parameters.iter().zip(tc.assignment()).enumerate() {
            if index >= p.effective_len() {
                return Verdict::OutOfBounds {
                    param,
                    index,
                    len: p.effective_len(),
                };
            }
        }
        match self.formulas().position(|f| !f.eval(tc.assignment())) {
            Some(constraint) => Verdict::ConstraintViolated { constraint },
            None => Verdict::Valid,
        }
    }

    /// Command-line tokens for a test case, in parameter order.
    pub fn render_argv(&self, tc: &TestCase) -> Vec<String> {
        let mut argv = Vec::new();
        for (p, &index) in self.parameters.iter().zip(tc.assignment()) {
            let Some(value) = p.value(index) else {
                continue;
            };
            match p.kind {
                ParamKind::Unary => argv.push(p.flag_token().to_string()),
                ParamKind::Binary | ParamKind::Ranged => {
                    let flag = p.flag_token();
                    if !flag.is_empty() {
                        argv.push(flag.to_string());
                    }
                    argv.push(value.to_string());
                }
            }
        }
        argv
    }

    /// Serializes to the model-file schema. Ranged parameters carry their
    /// selected values so that reparsing reproduces the same model.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            parameters: self
                .parameters
                .iter()
                .map(|p| ParamSpec {
                    name: p.name.clone(),
                    kind: p.kind,
                    flag: p.flag.clone(),
                    values: match p.kind {
                        ParamKind::Unary => None,
                        _ => Some(p.values.iter().cloned().map(Literal::Str).collect()),
                    },
                    range: p.range,
                    depth: p.depth,
                    default: (p.default_index != 0).then_some(p.default_index),
                })
                .collect(),
            constraints: self.constraints.iter().map(|c| c.text.clone()).collect(),
            sut: self.sut.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }
}

/// Value literal as written in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Literal {
    Str(String),
    Int(i64),
    Float(f64),
}

impl Literal {
    fn into_string(self) -> String {
        match self {
            Literal::Str(s) => s,
            Literal::Int(i) => i.to_string(),
            Literal::Float(x) => x.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamSpec {
    name: String,
    kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    flag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<Literal>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    range: Option<ValueRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    parameters: Vec<ParamSpec>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sut: Option<SutDescriptor>,
}

pub fn parse_model(text: &str) -> Result<TestModel, ModelError> {
    parse_model_with(text, RangeSelection::RegularIntervals)
}

pub fn parse_model_with(text: &str, selection: RangeSelection) -> Result<TestModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.parameters.is_empty() {
        return Err(ModelError::NoParameters);
    }

    let mut seen = HashSet::new();
    let mut parameters = Vec::with_capacity(file.parameters.len());
    for (i, spec) in file.parameters.into_iter().enumerate() {
        if !is_identifier(&spec.name) {
            return Err(param_err(
                &spec.name,
                "name must match [A-Za-z_][A-Za-z0-9_]*",
            ));
        }
        if !seen.insert(spec.name.clone()) {
            return Err(ModelError::DuplicateName(spec.name));
        }
        // Ranged selections are drawn per parameter so adding a parameter does
        // not reshuffle the others.
        let selection = match selection {
            RangeSelection::Random { seed } => RangeSelection::Random {
                seed: seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            },
            s => s,
        };
        parameters.push(build_parameter(spec, selection)?);
    }

    let mut model = TestModel {
        parameters,
        constraints: Vec::new(),
        sut: file.sut,
    };
    for (index, text) in file.constraints.into_iter().enumerate() {
        let formula = constraints::parse_constraint(&text)
            .and_then(|expr: Expr| expr.bind(&model))
            .map_err(|source| ModelError::Constraint {
                index,
                text: text.clone(),
                source,
            })?;
        model.constraints.push(Constraint { text, formula });
    }
    Ok(model)
}

fn param_err(name: &str, message: impl Into<String>) -> ModelError {
    ModelError::Parameter {
        name: name.to_string(),
        message: message.into(),
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn build_parameter(spec: ParamSpec, selection: RangeSelection) -> Result<Parameter, ModelError> {
    let name = spec.name;
    let values: Vec<String> = match spec.kind {
        ParamKind::Unary => {
            if spec.values.is_some() || spec.range.is_some() || spec.depth.is_some() {
                return Err(param_err(
                    &name,
                    "unary parameters take no values, range or depth",
                ));
            }
            let flag = spec.flag.clone().unwrap_or_else(|| name.clone());
            if flag.is_empty() {
                return Err(param_err(&name, "unary parameters need a non-empty flag"));
            }
            vec![flag]
        }
        ParamKind::Binary => {
            if spec.range.is_some() || spec.depth.is_some() {
                return Err(param_err(
                    &name,
                    "binary parameters take values, not range/depth",
                ));
            }
            let values: Vec<String> = spec
                .values
                .ok_or_else(|| param_err(&name, "binary parameters need `values`"))?
                .into_iter()
                .map(Literal::into_string)
                .collect();
            if values.is_empty() {
                return Err(param_err(&name, "`values` must not be empty"));
            }
            values
        }
        ParamKind::Ranged => {
            let range = spec
                .range
                .ok_or_else(|| param_err(&name, "ranged parameters need `range`"))?;
            let depth = spec
                .depth
                .ok_or_else(|| param_err(&name, "ranged parameters need `depth`"))?;
            if range.min > range.max {
                return Err(param_err(&name, "range min exceeds max"));
            }
            if depth == 0 {
                return Err(param_err(&name, "depth must be at least 1"));
            }
            if depth as u128 > range.size() {
                return Err(param_err(
                    &name,
                    format!("depth {depth} exceeds range size {}", range.size()),
                ));
            }
            match spec.values {
                // Already-selected values, as written by `TestModel::to_json`.
                Some(literals) => {
                    let mut picked = Vec::with_capacity(literals.len());
                    for lit in literals {
                        let text = lit.into_string();
                        let v: i64 = text.parse().map_err(|_| {
                            param_err(&name, format!("value `{text}` is not an integer"))
                        })?;
                        if v < range.min || v > range.max {
                            return Err(param_err(&name, format!("value {v} outside range")));
                        }
                        picked.push(v);
                    }
                    let distinct: HashSet<_> = picked.iter().collect();
                    if picked.len() != depth || distinct.len() != depth {
                        return Err(param_err(
                            &name,
                            format!("expected {depth} distinct values within the range"),
                        ));
                    }
                    picked.iter().map(i64::to_string).collect()
                }
                None => select_from_range(range, depth, selection)
                    .into_iter()
                    .map(|v| v.to_string())
                    .collect(),
            }
        }
    };

    let param = Parameter {
        name,
        kind: spec.kind,
        values,
        range: spec.range,
        depth: spec.depth,
        default_index: spec.default.unwrap_or(EXCLUDED),
        flag: spec.flag,
    };
    if param.default_index >= param.effective_len() {
        return Err(param_err(
            &param.name,
            format!(
                "default index {} out of bounds (effective size {})",
                param.default_index,
                param.effective_len()
            ),
        ));
    }
    Ok(param)
}

/// Picks `depth` distinct integers from an inclusive range.
pub fn select_from_range(range: ValueRange, depth: usize, selection: RangeSelection) -> Vec<i64> {
    let span = range.max as i128 - range.min as i128;
    match selection {
        RangeSelection::RegularIntervals => {
            if depth == 1 {
                return vec![range.min];
            }
            let steps = depth as i128 - 1;
            // round(min + k * span / steps), kept in integer arithmetic
            (0..depth as i128)
                .map(|k| (range.min as i128 + (2 * k * span + steps) / (2 * steps)) as i64)
                .collect()
        }
        RangeSelection::Random { seed } => {
            let mut rng = SplitMix64::seed_from_u64(seed);
            let size = usize::try_from(span + 1).unwrap_or(usize::MAX);
            let mut picked: Vec<i64> = index::sample(&mut rng, size, depth)
                .into_iter()
                .map(|off| (range.min as i128 + off as i128) as i64)
                .collect();
            picked.sort_unstable();
            picked
        }
    }
}
