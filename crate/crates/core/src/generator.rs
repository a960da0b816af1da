//! Final suite generation.
//!
//! All three methods walk a single running test case that starts at the
//! model default. Each attempt picks one parameter and moves it to another
//! value; the result is kept only if it satisfies the constraints and has not
//! been produced before. The methods differ only in how the parameter and
//! its target value are chosen:
//!
//! * `cctg` draws `r` from `(0, 100]` and picks the parameter whose segment of
//!   the weight axis contains `r`, then steps it to its cyclic successor.
//! * `random` picks a parameter uniformly and a target uniformly among the
//!   parameter's other values.
//! * `unweighted` visits parameters round-robin and steps each to its cyclic
//!   successor, with no randomness at all. When a whole round yields nothing
//!   new it counts through the value space (mixed radix) from the running
//!   case until an unseen admissible case turns up, so it enumerates the
//!   whole admissible space given enough retries.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{Backtracking, ConstraintError, SatOutcome, SatisfiabilityProvider};
use crate::coverage::WeightVector;
use crate::model::{TestCase, TestModel};
use crate::seed::{self, Rng};

pub const DEFAULT_MAX_RETRIES: u32 = 1000;
pub const AXIS_SPAN: f64 = 100.0;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("unsatisfiable model: the constraints admit no test case")]
    Unsatisfiable,
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("weights are for parameters {found:?}, the model has {expected:?}")]
    WeightMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("the cctg method needs a weight vector")]
    MissingWeights,
    #[error("n_cases and max_retries must both be at least 1")]
    InvalidConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cctg,
    Random,
    Unweighted,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cctg, Method::Random, Method::Unweighted];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cctg => "cctg",
            Method::Random => "random",
            Method::Unweighted => "unweighted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cctg" => Ok(Method::Cctg),
            "random" => Ok(Method::Random),
            "unweighted" => Ok(Method::Unweighted),
            other => Err(format!(
                "unknown method `{other}` (expected cctg, random or unweighted)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    pub n_cases: usize,
    pub seed: u64,
    /// Consecutive failed attempts (constraint dead end or duplicate) after
    /// which generation stops short.
    pub max_retries: u32,
    pub method: Method,
}

impl GenerationConfig {
    pub fn new(method: Method, n_cases: usize, seed: u64) -> Self {
        GenerationConfig {
            n_cases,
            seed,
            max_retries: DEFAULT_MAX_RETRIES,
            method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub param: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Segment {
    pub fn is_empty(&self) -> bool {
        self.upper <= self.lower
    }
}

/// The `(0, 100]` interval split into half-open `(lower, upper]` segments,
/// one per parameter in model order, sized by normalized weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightAxis {
    pub segments: Vec<Segment>,
}

impl WeightAxis {
    pub fn build(weights: &WeightVector) -> WeightAxis {
        // Cumulating the raw weights and dividing once keeps bounds such as
        // 15/75/100 exact for integral raw weights.
        let source = if weights.degenerate {
            &weights.normalized
        } else {
            &weights.raw
        };
        let total: f64 = source.iter().sum();
        let mut cumulative = 0.0;
        let mut uppers: Vec<f64> = source
            .iter()
            .map(|w| {
                cumulative += w;
                cumulative * AXIS_SPAN / total
            })
            .collect();
        if let Some(last) = source.iter().rposition(|w| *w > 0.0) {
            for u in &mut uppers[last..] {
                *u = AXIS_SPAN;
            }
        }
        let mut lower = 0.0;
        let segments = uppers
            .into_iter()
            .enumerate()
            .map(|(param, upper)| {
                let seg = Segment {
                    param,
                    lower,
                    upper,
                };
                lower = upper;
                seg
            })
            .collect();
        WeightAxis { segments }
    }

    /// Parameter whose segment contains `r`, for `r` in `(0, 100]`.
    pub fn select(&self, r: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.upper < r);
        self.segments[idx.min(self.segments.len() - 1)].param
    }

    pub fn draw(&self, rng: &mut Rng) -> usize {
        self.select(draw_r(rng))
    }
}

/// Uniform draw from `(0, 100]`.
pub fn draw_r(rng: &mut Rng) -> f64 {
    AXIS_SPAN * (1.0 - rng.gen::<f64>())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub cases: Vec<TestCase>,
    pub requested: usize,
    /// How many times each parameter was chosen, over all attempts.
    pub selection_counts: Vec<u64>,
    pub attempts: u64,
}

impl Generated {
    /// Number of requested cases that could not be produced.
    pub fn shortfall(&self) -> usize {
        self.requested.saturating_sub(self.cases.len())
    }
}

enum Move {
    /// Move one parameter, starting at the given target value.
    Step(usize, usize),
    /// Replace the running case wholesale.
    Jump(TestCase),
}

enum Chooser<'a> {
    Weighted(WeightAxis, &'a mut Rng),
    Uniform(&'a mut Rng),
    /// `cursor` is set while escaping a dead round by odometer counting.
    RoundRobin {
        next: usize,
        cursor: Option<TestCase>,
    },
}

impl Chooser<'_> {
    fn choose(&mut self, model: &TestModel, current: &TestCase) -> Move {
        let successor = |p: usize| (current.get(p) + 1) % model.parameters[p].effective_len();
        match self {
            Chooser::Weighted(axis, rng) => {
                let p = axis.draw(rng);
                Move::Step(p, successor(p))
            }
            Chooser::Uniform(rng) => {
                let p = rng.gen_range(0..model.len());
                let len = model.parameters[p].effective_len();
                // uniform over the len - 1 values other than the current one
                let k = rng.gen_range(0..len - 1);
                let target = if k >= current.get(p) { k + 1 } else { k };
                Move::Step(p, target)
            }
            Chooser::RoundRobin {
                cursor: Some(cursor),
                ..
            } => {
                *cursor = odometer_next(model, cursor);
                Move::Jump(cursor.clone())
            }
            Chooser::RoundRobin { next, cursor: None } => {
                let p = *next % model.len();
                *next += 1;
                Move::Step(p, successor(p))
            }
        }
    }

    fn succeeded(&mut self) {
        if let Chooser::RoundRobin { cursor, .. } = self {
            *cursor = None;
        }
    }

    fn failed(&mut self, consecutive: u32, params: usize, current: &TestCase) {
        // A whole round without a new case means the round-robin walk is
        // cycling. Count through the value space from the running case
        // until something new turns up.
        if let Chooser::RoundRobin {
            cursor: cursor @ None,
            ..
        } = self
        {
            if consecutive as usize >= params {
                *cursor = Some(current.clone());
            }
        }
    }
}

/// Mixed-radix increment, first parameter fastest.
fn odometer_next(model: &TestModel, case: &TestCase) -> TestCase {
    let mut next = case.clone();
    for (p, param) in model.parameters.iter().enumerate() {
        let v = (next.get(p) + 1) % param.effective_len();
        next.0[p] = v;
        if v != 0 {
            break;
        }
    }
    next
}

/// Weighted generation driven by coverage impact.
pub fn generate(
    model: &TestModel,
    weights: &WeightVector,
    config: &GenerationConfig,
) -> Result<Generated, GenerateError> {
    if !weights.matches(model) {
        return Err(GenerateError::WeightMismatch {
            expected: model.names(),
            found: weights.parameters.clone(),
        });
    }
    let mut rng = seed::rng(config.seed);
    let chooser = Chooser::Weighted(WeightAxis::build(weights), &mut rng);
    walk(model, config, chooser)
}

pub fn generate_random(
    model: &TestModel,
    config: &GenerationConfig,
) -> Result<Generated, GenerateError> {
    let mut rng = seed::rng(config.seed);
    walk(model, config, Chooser::Uniform(&mut rng))
}

pub fn generate_unweighted(
    model: &TestModel,
    config: &GenerationConfig,
) -> Result<Generated, GenerateError> {
    walk(
        model,
        config,
        Chooser::RoundRobin {
            next: 0,
            cursor: None,
        },
    )
}

/// Dispatches on `config.method`.
pub fn generate_with(
    model: &TestModel,
    weights: Option<&WeightVector>,
    config: &GenerationConfig,
) -> Result<Generated, GenerateError> {
    match config.method {
        Method::Cctg => generate(model, weights.ok_or(GenerateError::MissingWeights)?, config),
        Method::Random => generate_random(model, config),
        Method::Unweighted => generate_unweighted(model, config),
    }
}

/// Admissible first case: the model default, or a solver witness when the
/// default itself violates a constraint.
pub fn starting_case(model: &TestModel) -> Result<TestCase, GenerateError> {
    let default = model.default_case();
    if model.satisfies(&default) {
        return Ok(default);
    }
    match Backtracking::default().solve(model)? {
        SatOutcome::Satisfiable(witness) => Ok(witness),
        SatOutcome::Unsatisfiable => Err(GenerateError::Unsatisfiable),
    }
}

fn walk(
    model: &TestModel,
    config: &GenerationConfig,
    mut chooser: Chooser<'_>,
) -> Result<Generated, GenerateError> {
    if config.n_cases == 0 || config.max_retries == 0 {
        return Err(GenerateError::InvalidConfig);
    }
    let mut running = starting_case(model)?;
    let mut seen: HashSet<TestCase> = HashSet::from([running.clone()]);
    let mut cases = vec![running.clone()];
    let mut selection_counts = vec![0u64; model.len()];
    let mut attempts = 0u64;
    let mut failures = 0u32;

    while cases.len() < config.n_cases && failures < config.max_retries {
        attempts += 1;
        let candidate = match chooser.choose(model, &running) {
            Move::Step(param, target) => {
                selection_counts[param] += 1;
                let len = model.parameters[param].effective_len();
                let from = running.get(param);
                // target first, then its cyclic successors, never the current value
                (0..len)
                    .map(|k| (target + k) % len)
                    .filter(|&v| v != from)
                    .map(|v| running.with(param, v))
                    .find(|c| model.satisfies(c))
            }
            Move::Jump(case) => Some(case).filter(|c| model.satisfies(c)),
        };

        if let Some(next) = candidate {
            // The walk moves on even onto a repeat; only new cases are kept.
            running = next;
            if seen.insert(running.clone()) {
                cases.push(running.clone());
                failures = 0;
                chooser.succeeded();
                continue;
            }
        }
        failures += 1;
        chooser.failed(failures, model.len(), &running);
    }

    Ok(Generated {
        cases,
        requested: config.n_cases,
        selection_counts,
        attempts,
    })
}
