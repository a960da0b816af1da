//! Random model generation and brute-force oracles shared by the
//! integration tests. Nothing here calls into the evaluator or solver under
//! test; constraint trees are evaluated by their own interpreter.

#![allow(dead_code)]

use cctg::model::{parse_model, TestCase, TestModel};
use proptest::prelude::*;

/// Constraint tree over parameter positions, rendered to text with names
/// `p0`, `p1`, ...
#[derive(Debug, Clone)]
pub enum Tree {
    Eq(usize, usize),
    Ne(usize, usize),
    Excluded(usize),
    Not(Box<Tree>),
    And(Box<Tree>, Box<Tree>),
    Or(Box<Tree>, Box<Tree>),
    Implies(Box<Tree>, Box<Tree>),
}

impl Tree {
    pub fn holds(&self, a: &[usize]) -> bool {
        match self {
            Tree::Eq(p, v) => a[*p] == *v,
            Tree::Ne(p, v) => a[*p] != *v,
            Tree::Excluded(p) => a[*p] == 0,
            Tree::Not(t) => !t.holds(a),
            Tree::And(x, y) => x.holds(a) && y.holds(a),
            Tree::Or(x, y) => x.holds(a) || y.holds(a),
            Tree::Implies(x, y) => !x.holds(a) || y.holds(a),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Tree::Implies(..) => 1,
            Tree::Or(..) => 2,
            Tree::And(..) => 3,
            Tree::Not(_) => 4,
            _ => 5,
        }
    }

    /// Text with only the parentheses precedence requires.
    pub fn render(&self) -> String {
        let wrap = |t: &Tree, min: u8| {
            if t.precedence() < min {
                format!("({})", t.render())
            } else {
                t.render()
            }
        };
        match self {
            Tree::Eq(p, v) => format!("p{p}={v}"),
            Tree::Ne(p, v) => format!("p{p} != {v}"),
            Tree::Excluded(p) => format!("excluded(p{p})"),
            Tree::Not(t) => format!("!{}", wrap(t, 4)),
            Tree::And(x, y) => format!("{} && {}", wrap(x, 3), wrap(y, 4)),
            Tree::Or(x, y) => format!("{} || {}", wrap(x, 2), wrap(y, 3)),
            Tree::Implies(x, y) => format!("{} -> {}", wrap(x, 2), wrap(y, 1)),
        }
    }
}

/// Parameter shapes: `None` is unary, `Some(k)` binary with `k` values.
#[derive(Debug, Clone)]
pub struct Spec {
    pub shapes: Vec<Option<usize>>,
    pub defaults: Vec<usize>,
    pub constraints: Vec<Tree>,
}

impl Spec {
    pub fn lens(&self) -> Vec<usize> {
        self.shapes.iter().map(|s| s.map_or(2, |k| k + 1)).collect()
    }

    pub fn json(&self) -> String {
        let params: Vec<String> = self
            .shapes
            .iter()
            .zip(&self.defaults)
            .enumerate()
            .map(|(i, (shape, default))| match shape {
                None => format!(r#"{{"name": "p{i}", "kind": "unary", "flag": "--p{i}", "default": {default}}}"#),
                Some(k) => {
                    let values: Vec<String> = (0..*k).map(|v| format!("\"v{v}\"")).collect();
                    format!(
                        r#"{{"name": "p{i}", "kind": "binary", "flag": "--p{i}", "values": [{}], "default": {default}}}"#,
                        values.join(", ")
                    )
                }
            })
            .collect();
        let constraints: Vec<String> = self
            .constraints
            .iter()
            .map(|t| serde_json::to_string(&t.render()).unwrap())
            .collect();
        format!(
            r#"{{"parameters": [{}], "constraints": [{}]}}"#,
            params.join(", "),
            constraints.join(", ")
        )
    }

    pub fn model(&self) -> TestModel {
        parse_model(&self.json()).expect("generated model parses")
    }

    pub fn admits(&self, a: &[usize]) -> bool {
        self.constraints.iter().all(|t| t.holds(a))
    }

    pub fn valid_space(&self) -> Vec<Vec<usize>> {
        enumerate(&self.lens())
            .into_iter()
            .filter(|a| self.admits(a))
            .collect()
    }
}

/// Every assignment of the mixed-radix space, first position fastest.
pub fn enumerate(lens: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = lens.iter().product();
    (0..total)
        .map(|mut n| {
            lens.iter()
                .map(|&len| {
                    let v = n % len;
                    n /= len;
                    v
                })
                .collect()
        })
        .collect()
}

pub fn arb_tree(lens: Vec<usize>, depth: u32) -> BoxedStrategy<Tree> {
    let params = lens.len();
    let lens2 = lens.clone();
    let atom = (0..params)
        .prop_flat_map(move |p| (Just(p), 0..lens2[p], 0..3u8))
        .prop_map(|(p, v, kind)| match kind {
            0 => Tree::Eq(p, v),
            1 => Tree::Ne(p, v),
            _ => Tree::Excluded(p),
        });
    atom.prop_recursive(depth, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|t| Tree::Not(Box::new(t))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Tree::Or(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Tree::Implies(Box::new(a), Box::new(b))),
        ]
    })
    .boxed()
}

/// Models with up to `max_params` parameters of up to `max_values` values
/// and up to `max_constraints` constraints.
pub fn arb_spec(
    max_params: usize,
    max_values: usize,
    max_constraints: usize,
) -> impl Strategy<Value = Spec> {
    prop::collection::vec(prop::option::weighted(0.75, 1..=max_values), 1..=max_params)
        .prop_flat_map(move |shapes| {
            let lens: Vec<usize> = shapes.iter().map(|s| s.map_or(2, |k| k + 1)).collect();
            let defaults = lens.iter().map(|&l| 0..l).collect::<Vec<_>>();
            (
                Just(shapes),
                defaults,
                prop::collection::vec(arb_tree(lens, 3), 0..=max_constraints),
            )
        })
        .prop_map(|(shapes, defaults, constraints)| Spec {
            shapes,
            defaults,
            constraints,
        })
}

/// Unconstrained binary model with the given value counts.
pub fn binary_model(sizes: &[usize]) -> TestModel {
    Spec {
        shapes: sizes.iter().map(|&k| Some(k)).collect(),
        defaults: vec![0; sizes.len()],
        constraints: vec![],
    }
    .model()
}

pub fn case(a: &[usize]) -> TestCase {
    TestCase::new(a.to_vec())
}
