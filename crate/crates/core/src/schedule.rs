//! One-factor-change probing suite.
//!
//! Each parameter gets a shuffled list `RV` of `test_depth` values drawn from
//! its effective value list. The first case takes `RV[0]` of every parameter;
//! afterwards one parameter at a time steps to the next entry of its list
//! until every list is exhausted. Consecutive cases therefore differ in
//! exactly one position, which is what the weight computation in
//! [`crate::coverage`] relies on.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TestCase, TestModel};
use crate::seed;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("test depth must be at least 1")]
    ZeroDepth,
    #[error(
        "the first probe case violates the constraints after {attempts} repair attempts; \
         adjust the constraints or try another seed"
    )]
    InfeasibleStart { attempts: usize },
}

/// Order in which parameters take their steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvanceOrder {
    /// P1, P2, ..., Pn, P1, ... one step each per round.
    #[default]
    RoundRobin,
    /// Exhaust P1's list, then P2's, and so on.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeRecord {
    /// Index of the case produced by this step, or of the unchanged current
    /// case when the step was skipped.
    pub case_index: usize,
    pub param: usize,
    pub from: usize,
    pub to: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSuite {
    pub cases: Vec<TestCase>,
    pub change_log: Vec<ChangeRecord>,
    pub rv_tables: Vec<Vec<usize>>,
    pub seed: u64,
    pub test_depth: usize,
    pub order: AdvanceOrder,
}

impl ProbeSuite {
    /// Replays the applied steps of the change log from the first case.
    pub fn replay(&self) -> Vec<TestCase> {
        let Some(first) = self.cases.first() else {
            return Vec::new();
        };
        let mut out = vec![first.clone()];
        for change in self.change_log.iter().filter(|c| !c.skipped) {
            let next = out.last().unwrap().with(change.param, change.to);
            out.push(next);
        }
        out
    }

    pub fn skipped_steps(&self) -> usize {
        self.change_log.iter().filter(|c| c.skipped).count()
    }
}

pub fn build_probe_suite(
    model: &TestModel,
    test_depth: usize,
    seed: u64,
) -> Result<ProbeSuite, ScheduleError> {
    build_probe_suite_with(model, test_depth, seed, AdvanceOrder::RoundRobin)
}

pub fn build_probe_suite_with(
    model: &TestModel,
    test_depth: usize,
    seed: u64,
    order: AdvanceOrder,
) -> Result<ProbeSuite, ScheduleError> {
    if test_depth == 0 {
        return Err(ScheduleError::ZeroDepth);
    }
    let mut rng = seed::rng(seed);
    let mut rv_tables: Vec<Vec<usize>> = model
        .parameters
        .iter()
        .map(|p| {
            let mut values: Vec<usize> = (0..p.effective_len()).collect();
            values.shuffle(&mut rng);
            values.truncate(test_depth);
            values
        })
        .collect();

    repair_start(model, &mut rv_tables)?;

    let mut current = TestCase::new(rv_tables.iter().map(|rv| rv[0]).collect());
    let mut cases = vec![current.clone()];
    let mut change_log = Vec::new();

    for (param, pos) in step_sequence(&rv_tables, order) {
        let from = current.get(param);
        let to = rv_tables[param][pos];
        let candidate = current.with(param, to);
        if model.satisfies(&candidate) {
            current = candidate;
            cases.push(current.clone());
            change_log.push(ChangeRecord {
                case_index: cases.len() - 1,
                param,
                from,
                to,
                skipped: false,
            });
        } else {
            change_log.push(ChangeRecord {
                case_index: cases.len() - 1,
                param,
                from,
                to,
                skipped: true,
            });
        }
    }

    Ok(ProbeSuite {
        cases,
        change_log,
        rv_tables,
        seed,
        test_depth,
        order,
    })
}

/// `(parameter, position in its RV)` for every step after the first case.
fn step_sequence(rv_tables: &[Vec<usize>], order: AdvanceOrder) -> Vec<(usize, usize)> {
    let mut steps = Vec::new();
    match order {
        AdvanceOrder::RoundRobin => {
            let longest = rv_tables.iter().map(Vec::len).max().unwrap_or(0);
            for pos in 1..longest {
                for (param, rv) in rv_tables.iter().enumerate() {
                    if pos < rv.len() {
                        steps.push((param, pos));
                    }
                }
            }
        }
        AdvanceOrder::Sequential => {
            for (param, rv) in rv_tables.iter().enumerate() {
                steps.extend((1..rv.len()).map(|pos| (param, pos)));
            }
        }
    }
    steps
}

/// Rotates the RV lists of parameters named by violated constraints until the
/// first case is feasible, bounded by the total number of RV entries.
fn repair_start(model: &TestModel, rv_tables: &mut [Vec<usize>]) -> Result<(), ScheduleError> {
    let budget: usize = rv_tables.iter().map(Vec::len).sum();
    for attempt in 0..=budget {
        let start = TestCase::new(rv_tables.iter().map(|rv| rv[0]).collect());
        let Some(violated) = model.formulas().find(|f| !f.eval(start.assignment())) else {
            return Ok(());
        };
        if attempt == budget {
            break;
        }
        let params = violated.params();
        let param = params[attempt % params.len()];
        rv_tables[param].rotate_left(1);
    }
    Err(ScheduleError::InfeasibleStart { attempts: budget })
}

/// All index pairs `(i, j)`, `i < j`, whose cases agree everywhere except at
/// `param`, where they differ.
pub fn probe_pairs(cases: &[TestCase], param: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for i in 0..cases.len() {
        for j in i + 1..cases.len() {
            let (a, b) = (cases[i].assignment(), cases[j].assignment());
            if a[param] != b[param]
                && a.iter()
                    .zip(b)
                    .enumerate()
                    .all(|(k, (x, y))| k == param || x == y)
            {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn unary_model(n: usize) -> TestModel {
        let params: Vec<String> = (1..=n)
            .map(|i| format!(r#"{{"name": "P{i}", "kind": "binary", "values": ["a", "b", "c"]}}"#))
            .collect();
        parse_model(&format!(r#"{{"parameters": [{}]}}"#, params.join(","))).unwrap()
    }

    #[test]
    fn single_parameter_depth_two() {
        let model = parse_model(r#"{"parameters": [{"name": "A", "kind": "unary"}]}"#).unwrap();
        let suite = build_probe_suite(&model, 2, 1).unwrap();
        let rv = &suite.rv_tables[0];
        assert_eq!(
            suite.cases,
            vec![TestCase::new(vec![rv[0]]), TestCase::new(vec![rv[1]])]
        );
        assert_eq!(suite.change_log.len(), 1);
    }

    #[test]
    fn three_parameters_depth_two() {
        let model = unary_model(3);
        let suite = build_probe_suite(&model, 2, 42).unwrap();
        assert_eq!(suite.cases.len(), 4);
        let changed: Vec<usize> = suite.change_log.iter().map(|c| c.param).collect();
        assert_eq!(changed, vec![0, 1, 2]);
        for w in suite.cases.windows(2) {
            assert_eq!(w[0].hamming(&w[1]), 1);
        }
        assert_eq!(probe_pairs(&suite.cases, 0), vec![(0, 1)]);
    }

    #[test]
    fn two_parameters_depth_three_matches_hand_simulation() {
        let model = unary_model(2);
        let suite = build_probe_suite(&model, 3, 9).unwrap();
        let (a, b) = (&suite.rv_tables[0], &suite.rv_tables[1]);
        // base, P1 -> a1, P2 -> b1, P1 -> a2, P2 -> b2
        let expected = vec![
            TestCase::new(vec![a[0], b[0]]),
            TestCase::new(vec![a[1], b[0]]),
            TestCase::new(vec![a[1], b[1]]),
            TestCase::new(vec![a[2], b[1]]),
            TestCase::new(vec![a[2], b[2]]),
        ];
        assert_eq!(suite.cases, expected);
        assert_eq!(suite.replay(), expected);
    }

    #[test]
    fn sequential_order_exhausts_one_parameter_first() {
        let model = unary_model(2);
        let suite = build_probe_suite_with(&model, 3, 9, AdvanceOrder::Sequential).unwrap();
        let changed: Vec<usize> = suite.change_log.iter().map(|c| c.param).collect();
        assert_eq!(changed, vec![0, 0, 1, 1]);
    }

    #[test]
    fn ragged_parameters_exhaust_early() {
        let model = parse_model(
            r#"{"parameters": [
                {"name": "flag", "kind": "unary"},
                {"name": "n", "kind": "binary", "values": [1, 2, 3, 4]}
            ]}"#,
        )
        .unwrap();
        let suite = build_probe_suite(&model, 4, 3).unwrap();
        assert_eq!(suite.rv_tables[0].len(), 2);
        assert_eq!(suite.rv_tables[1].len(), 4);
        assert_eq!(suite.cases.len(), 1 + 1 + 3);
    }

    #[test]
    fn constraint_violations_are_skipped_and_logged() {
        // Forbid every non-excluded value of B while A is included.
        let model = parse_model(
            r#"{"parameters": [
                {"name": "A", "kind": "unary"},
                {"name": "B", "kind": "binary", "values": ["x", "y"]}
            ], "constraints": ["A=1 -> B=0"]}"#,
        )
        .unwrap();
        for seed in 0..50 {
            let suite = build_probe_suite(&model, 3, seed).unwrap();
            assert!(suite.cases.iter().all(|c| model.satisfies(c)));
            assert_eq!(suite.replay(), suite.cases);
            assert_eq!(suite.cases.len() + suite.skipped_steps(), 1 + 1 + 2);
            for w in suite.cases.windows(2) {
                assert_eq!(w[0].hamming(&w[1]), 1);
            }
        }
    }

    #[test]
    fn infeasible_start_is_repaired_or_reported() {
        let model = parse_model(
            r#"{"parameters": [{"name": "A", "kind": "binary", "values": ["x", "y"]}],
                "constraints": ["A=2"]}"#,
        )
        .unwrap();
        // Depth 3 covers the whole list, so rotation always finds A=2.
        for seed in 0..20 {
            let suite = build_probe_suite(&model, 3, seed).unwrap();
            assert_eq!(suite.cases, vec![TestCase::new(vec![2])]);
        }
        let impossible = parse_model(
            r#"{"parameters": [{"name": "A", "kind": "unary"}], "constraints": ["A=0", "A=1"]}"#,
        )
        .unwrap();
        assert!(matches!(
            build_probe_suite(&impossible, 2, 0),
            Err(ScheduleError::InfeasibleStart { .. })
        ));
    }

    #[test]
    fn zero_depth_rejected() {
        assert_eq!(
            build_probe_suite(&unary_model(1), 0, 0),
            Err(ScheduleError::ZeroDepth)
        );
    }

    #[test]
    fn pairs_edge_cases() {
        assert!(probe_pairs(&[TestCase::new(vec![0, 1])], 0).is_empty());
        let cases = [TestCase::new(vec![0, 1]), TestCase::new(vec![0, 2])];
        assert!(probe_pairs(&cases, 0).is_empty());
        assert_eq!(probe_pairs(&cases, 1), vec![(0, 1)]);
    }
}
