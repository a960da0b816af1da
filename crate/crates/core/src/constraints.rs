//! Boolean constraints over parameter value indices.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! formula := implies
//! implies := or ( '->' implies )?          right associative
//! or      := and ( '||' and )*
//! and     := unary ( '&&' unary )*
//! unary   := '!' unary | '(' formula ')' | atom
//! atom    := NAME '=' INT | NAME '!=' INT | 'excluded(' NAME ')'
//! ```
//!
//! A model's constraint list is a conjunction: a test case is admissible
//! only if every formula holds.

use std::fmt;

use thiserror::Error;

use crate::model::{TestCase, TestModel, EXCLUDED};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("value index {index} out of bounds for `{name}` (effective size {len})")]
    IndexOutOfBounds {
        name: String,
        index: usize,
        len: usize,
    },
    #[error("satisfiability search exceeded its budget of {budget} nodes")]
    BudgetExceeded { budget: u64 },
}

/// Syntax tree with parameter names, as parsed from text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Eq(String, usize),
    Ne(String, usize),
    Excluded(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
}

/// A constraint resolved against a model: atoms refer to parameter positions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Eq(usize, usize),
    Ne(usize, usize),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

impl Expr {
    /// Resolves names to parameter positions and checks index bounds.
    pub fn bind(&self, model: &TestModel) -> Result<Formula, ConstraintError> {
        let resolve = |name: &str, index: usize| -> Result<usize, ConstraintError> {
            let param = model
                .param_index(name)
                .ok_or_else(|| ConstraintError::UnknownParameter(name.to_string()))?;
            let len = model.parameters[param].effective_len();
            if index >= len {
                return Err(ConstraintError::IndexOutOfBounds {
                    name: name.to_string(),
                    index,
                    len,
                });
            }
            Ok(param)
        };
        Ok(match self {
            Expr::Eq(n, v) => Formula::Eq(resolve(n, *v)?, *v),
            Expr::Ne(n, v) => Formula::Ne(resolve(n, *v)?, *v),
            Expr::Excluded(n) => Formula::Eq(resolve(n, EXCLUDED)?, EXCLUDED),
            Expr::Not(a) => Formula::Not(Box::new(a.bind(model)?)),
            Expr::And(a, b) => Formula::And(Box::new(a.bind(model)?), Box::new(b.bind(model)?)),
            Expr::Or(a, b) => Formula::Or(Box::new(a.bind(model)?), Box::new(b.bind(model)?)),
            Expr::Implies(a, b) => {
                Formula::Implies(Box::new(a.bind(model)?), Box::new(b.bind(model)?))
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Eq(n, v) => write!(f, "{n}={v}"),
            Expr::Ne(n, v) => write!(f, "{n}!={v}"),
            Expr::Excluded(n) => write!(f, "excluded({n})"),
            Expr::Not(a) => write!(f, "!({a})"),
            Expr::And(a, b) => write!(f, "({a} && {b})"),
            Expr::Or(a, b) => write!(f, "({a} || {b})"),
            Expr::Implies(a, b) => write!(f, "({a} -> {b})"),
        }
    }
}

impl Formula {
    /// Evaluates over a complete assignment.
    pub fn eval(&self, assignment: &[usize]) -> bool {
        match self {
            Formula::Eq(p, v) => assignment[*p] == *v,
            Formula::Ne(p, v) => assignment[*p] != *v,
            Formula::Not(a) => !a.eval(assignment),
            Formula::And(a, b) => a.eval(assignment) && b.eval(assignment),
            Formula::Or(a, b) => a.eval(assignment) || b.eval(assignment),
            Formula::Implies(a, b) => !a.eval(assignment) || b.eval(assignment),
        }
    }

    /// Three-valued evaluation over a partial assignment (`None` = unassigned).
    pub fn eval_partial(&self, assignment: &[Option<usize>]) -> Option<bool> {
        match self {
            Formula::Eq(p, v) => assignment[*p].map(|x| x == *v),
            Formula::Ne(p, v) => assignment[*p].map(|x| x != *v),
            Formula::Not(a) => a.eval_partial(assignment).map(|x| !x),
            Formula::And(a, b) => match (a.eval_partial(assignment), b.eval_partial(assignment)) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            },
            Formula::Or(a, b) => match (a.eval_partial(assignment), b.eval_partial(assignment)) {
                (Some(true), _) | (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            },
            Formula::Implies(a, b) => {
                match (a.eval_partial(assignment), b.eval_partial(assignment)) {
                    (Some(false), _) | (_, Some(true)) => Some(true),
                    (Some(true), Some(false)) => Some(false),
                    _ => None,
                }
            }
        }
    }

    /// Parameter positions mentioned by the formula, sorted and deduplicated.
    pub fn params(&self) -> Vec<usize> {
        fn walk(f: &Formula, out: &mut Vec<usize>) {
            match f {
                Formula::Eq(p, _) | Formula::Ne(p, _) => out.push(*p),
                Formula::Not(a) => walk(a, out),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Rewrites `a -> b` as `!a || b` throughout.
    pub fn eliminate_implications(&self) -> Formula {
        match self {
            Formula::Eq(..) | Formula::Ne(..) => self.clone(),
            Formula::Not(a) => Formula::Not(Box::new(a.eliminate_implications())),
            Formula::And(a, b) => Formula::And(
                Box::new(a.eliminate_implications()),
                Box::new(b.eliminate_implications()),
            ),
            Formula::Or(a, b) => Formula::Or(
                Box::new(a.eliminate_implications()),
                Box::new(b.eliminate_implications()),
            ),
            Formula::Implies(a, b) => Formula::Or(
                Box::new(Formula::Not(Box::new(a.eliminate_implications()))),
                Box::new(b.eliminate_implications()),
            ),
        }
    }

    /// Negation normal form: implications removed and negations pushed down
    /// to atoms via De Morgan, where `!(p=v)` becomes `p!=v`.
    pub fn to_nnf(&self) -> Formula {
        fn nnf(f: &Formula, negate: bool) -> Formula {
            match (f, negate) {
                (Formula::Eq(p, v), false) | (Formula::Ne(p, v), true) => Formula::Eq(*p, *v),
                (Formula::Ne(p, v), false) | (Formula::Eq(p, v), true) => Formula::Ne(*p, *v),
                (Formula::Not(a), n) => nnf(a, !n),
                (Formula::And(a, b), false) | (Formula::Or(a, b), true) => {
                    Formula::And(Box::new(nnf(a, negate)), Box::new(nnf(b, negate)))
                }
                (Formula::Or(a, b), false) | (Formula::And(a, b), true) => {
                    Formula::Or(Box::new(nnf(a, negate)), Box::new(nnf(b, negate)))
                }
                // a -> b == !a || b ; !(a -> b) == a && !b
                (Formula::Implies(a, b), false) => {
                    Formula::Or(Box::new(nnf(a, true)), Box::new(nnf(b, false)))
                }
                (Formula::Implies(a, b), true) => {
                    Formula::And(Box::new(nnf(a, false)), Box::new(nnf(b, true)))
                }
            }
        }
        nnf(self, false)
    }
}

/// Conjunction of formulas over a complete test case.
pub fn evaluate<'a>(formulas: impl IntoIterator<Item = &'a Formula>, tc: &TestCase) -> bool {
    formulas.into_iter().all(|f| f.eval(tc.assignment()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SatOutcome {
    Satisfiable(TestCase),
    Unsatisfiable,
}

impl SatOutcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatOutcome::Satisfiable(_))
    }

    pub fn witness(&self) -> Option<&TestCase> {
        match self {
            SatOutcome::Satisfiable(tc) => Some(tc),
            SatOutcome::Unsatisfiable => None,
        }
    }
}

/// Something that can decide whether a model admits at least one test case.
pub trait SatisfiabilityProvider {
    fn solve(&self, model: &TestModel) -> Result<SatOutcome, ConstraintError>;
}

pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

/// Depth-first search over parameters in declaration order. Each parameter
/// tries its default value first, so an unconstrained model yields the
/// default test case. Candidate values are filtered by forward checking: a
/// value is kept only if no formula is already decided false.
#[derive(Debug, Clone, Copy)]
pub struct Backtracking {
    pub node_budget: u64,
}

impl Default for Backtracking {
    fn default() -> Self {
        Backtracking {
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl SatisfiabilityProvider for Backtracking {
    fn solve(&self, model: &TestModel) -> Result<SatOutcome, ConstraintError> {
        let formulas: Vec<&Formula> = model.formulas().collect();
        let mut partial = vec![None; model.len()];
        let mut nodes = 0u64;
        let found = search(
            model,
            &formulas,
            0,
            &mut partial,
            &mut nodes,
            self.node_budget,
        )?;
        Ok(if found {
            SatOutcome::Satisfiable(TestCase::new(
                partial.into_iter().map(Option::unwrap).collect(),
            ))
        } else {
            SatOutcome::Unsatisfiable
        })
    }
}

fn search(
    model: &TestModel,
    formulas: &[&Formula],
    depth: usize,
    partial: &mut [Option<usize>],
    nodes: &mut u64,
    budget: u64,
) -> Result<bool, ConstraintError> {
    if depth == partial.len() {
        return Ok(true);
    }
    let param = &model.parameters[depth];
    let order = std::iter::once(param.default_index)
        .chain((0..param.effective_len()).filter(|&v| v != param.default_index));
    for value in order {
        *nodes += 1;
        if *nodes > budget {
            return Err(ConstraintError::BudgetExceeded { budget });
        }
        partial[depth] = Some(value);
        let refuted = formulas
            .iter()
            .any(|f| f.eval_partial(partial) == Some(false));
        if !refuted && search(model, formulas, depth + 1, partial, nodes, budget)? {
            return Ok(true);
        }
    }
    partial[depth] = None;
    Ok(false)
}

/// Satisfiability with the built-in backtracking engine and default budget.
pub fn is_satisfiable(model: &TestModel) -> Result<SatOutcome, ConstraintError> {
    Backtracking::default().solve(model)
}

pub fn parse_constraint(text: &str) -> Result<Expr, ConstraintError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: text.len(),
    };
    let expr = parser.implies()?;
    match parser.peek() {
        None => Ok(expr),
        Some((tok, at)) => Err(ConstraintError::Syntax {
            position: at,
            message: format!("unexpected {tok}"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Name(String),
    Int(usize),
    Eq,
    Ne,
    Not,
    And,
    Or,
    Arrow,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Name(n) => write!(f, "name `{n}`"),
            Token::Int(i) => write!(f, "integer {i}"),
            Token::Eq => f.write_str("`=`"),
            Token::Ne => f.write_str("`!=`"),
            Token::Not => f.write_str("`!`"),
            Token::And => f.write_str("`&&`"),
            Token::Or => f.write_str("`||`"),
            Token::Arrow => f.write_str("`->`"),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ConstraintError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let two = bytes.get(i..i + 2);
        let tok = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => Token::LParen,
            b')' => Token::RParen,
            b'=' => Token::Eq,
            b'!' if two == Some(b"!=") => Token::Ne,
            b'!' => Token::Not,
            b'&' if two == Some(b"&&") => Token::And,
            b'|' if two == Some(b"||") => Token::Or,
            b'-' if two == Some(b"->") => Token::Arrow,
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n = text[start..i]
                    .parse()
                    .map_err(|_| ConstraintError::Syntax {
                        position: start,
                        message: "integer too large".into(),
                    })?;
                out.push((Token::Int(n), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Token::Name(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(ConstraintError::Syntax {
                    position: i,
                    message: format!(
                        "unexpected character `{}`",
                        text[i..].chars().next().unwrap()
                    ),
                })
            }
        };
        let width = match tok {
            Token::Ne | Token::And | Token::Or | Token::Arrow => 2,
            _ => 1,
        };
        out.push((tok, i));
        i += width;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<(&Token, usize)> {
        self.tokens.get(self.pos).map(|(t, at)| (t, *at))
    }

    fn eat(&mut self, tok: &Token) -> bool {
        if self.peek().map(|(t, _)| t) == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn next(&mut self, what: &str) -> Result<(Token, usize), ConstraintError> {
        let item = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ConstraintError::Syntax {
                position: self.end,
                message: format!("expected {what}, found end of input"),
            })?;
        self.pos += 1;
        Ok(item)
    }

    fn expect(&mut self, tok: Token) -> Result<(), ConstraintError> {
        let (found, at) = self.next(&tok.to_string())?;
        if found == tok {
            Ok(())
        } else {
            Err(ConstraintError::Syntax {
                position: at,
                message: format!("expected {tok}, found {found}"),
            })
        }
    }

    fn implies(&mut self) -> Result<Expr, ConstraintError> {
        let lhs = self.or()?;
        if self.eat(&Token::Arrow) {
            let rhs = self.implies()?;
            return Ok(Expr::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ConstraintError> {
        let mut lhs = self.and()?;
        while self.eat(&Token::Or) {
            let rhs = self.and()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ConstraintError> {
        let mut lhs = self.unary()?;
        while self.eat(&Token::And) {
            let rhs = self.unary()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ConstraintError> {
        let (tok, at) = self.next("a condition")?;
        match tok {
            Token::Not => Ok(Expr::Not(Box::new(self.unary()?))),
            Token::LParen => {
                let inner = self.implies()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Token::Name(name)
                if name == "excluded" && self.peek().map(|(t, _)| t) == Some(&Token::LParen) =>
            {
                self.expect(Token::LParen)?;
                let target = match self.next("a parameter name")? {
                    (Token::Name(n), _) => n,
                    (other, at) => {
                        return Err(ConstraintError::Syntax {
                            position: at,
                            message: format!("expected a parameter name, found {other}"),
                        })
                    }
                };
                self.expect(Token::RParen)?;
                Ok(Expr::Excluded(target))
            }
            Token::Name(name) => {
                let (op, op_at) = self.next("`=` or `!=`")?;
                if op != Token::Eq && op != Token::Ne {
                    return Err(ConstraintError::Syntax {
                        position: op_at,
                        message: format!("expected `=` or `!=`, found {op}"),
                    });
                }
                let (value, value_at) = self.next("a value index")?;
                let Token::Int(index) = value else {
                    return Err(ConstraintError::Syntax {
                        position: value_at,
                        message: format!("expected a value index, found {value}"),
                    });
                };
                Ok(if op == Token::Eq {
                    Expr::Eq(name, index)
                } else {
                    Expr::Ne(name, index)
                })
            }
            other => Err(ConstraintError::Syntax {
                position: at,
                message: format!("expected a condition, found {other}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn eq(n: &str, v: usize) -> Box<Expr> {
        Box::new(Expr::Eq(n.into(), v))
    }

    #[test]
    fn parses_grammar_forms() {
        assert_eq!(
            parse_constraint("A=1 -> B=0").unwrap(),
            Expr::Implies(eq("A", 1), eq("B", 0))
        );
        assert_eq!(
            parse_constraint("!(A=1 && B=1)").unwrap(),
            Expr::Not(Box::new(Expr::And(eq("A", 1), eq("B", 1))))
        );
        assert_eq!(
            parse_constraint("excluded(C) -> A != 0").unwrap(),
            Expr::Implies(
                Box::new(Expr::Excluded("C".into())),
                Box::new(Expr::Ne("A".into(), 0))
            )
        );
        // && binds tighter than ||
        assert_eq!(
            parse_constraint("A=1 || B=1 && C=1").unwrap(),
            Expr::Or(eq("A", 1), Box::new(Expr::And(eq("B", 1), eq("C", 1))))
        );
        assert_eq!(
            parse_constraint("A=1 -> B=1 -> C=1").unwrap(),
            Expr::Implies(eq("A", 1), Box::new(Expr::Implies(eq("B", 1), eq("C", 1))))
        );
    }

    #[test]
    fn implication_is_right_associative_semantically() {
        let model = parse_model(
            r#"{"parameters": [
                {"name": "A", "kind": "unary"}, {"name": "B", "kind": "unary"}, {"name": "C", "kind": "unary"}
            ]}"#,
        )
        .unwrap();
        let parsed = parse_constraint("A=1 -> B=1 -> C=1")
            .unwrap()
            .bind(&model)
            .unwrap();
        let right = Formula::Implies(
            Box::new(Formula::Eq(0, 1)),
            Box::new(Formula::Implies(
                Box::new(Formula::Eq(1, 1)),
                Box::new(Formula::Eq(2, 1)),
            )),
        );
        let left = Formula::Implies(
            Box::new(Formula::Implies(
                Box::new(Formula::Eq(0, 1)),
                Box::new(Formula::Eq(1, 1)),
            )),
            Box::new(Formula::Eq(2, 1)),
        );
        let mut disagreements = 0;
        for bits in 0..8usize {
            let a = [bits & 1, (bits >> 1) & 1, (bits >> 2) & 1];
            assert_eq!(parsed.eval(&a), right.eval(&a));
            if left.eval(&a) != right.eval(&a) {
                disagreements += 1;
            }
        }
        // The two groupings differ (e.g. at A=0,B=0,C=0), so the check above
        // actually discriminates.
        assert!(disagreements > 0);
    }

    #[test]
    fn syntax_errors_report_offsets() {
        let cases = [
            ("A=", 2),
            ("A 1", 2),
            ("(A=1", 4),
            ("A=1 && && B=1", 7),
            ("A=1 $", 4),
            ("excluded(1)", 9),
            ("A=1 B=1", 4),
        ];
        for (text, at) in cases {
            match parse_constraint(text) {
                Err(ConstraintError::Syntax { position, .. }) => {
                    assert_eq!(position, at, "{text}")
                }
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn empty_list_is_vacuously_true() {
        assert!(evaluate(&[], &TestCase::new(vec![3, 1])));
    }

    #[test]
    fn contradiction_is_unsat() {
        let model = parse_model(
            r#"{"parameters": [{"name": "A", "kind": "unary"}], "constraints": ["A=1", "A=0"]}"#,
        )
        .unwrap();
        assert_eq!(is_satisfiable(&model).unwrap(), SatOutcome::Unsatisfiable);
    }

    #[test]
    fn unconstrained_witness_is_default() {
        let model = parse_model(
            r#"{"parameters": [
                {"name": "A", "kind": "unary", "default": 1},
                {"name": "B", "kind": "binary", "values": ["x", "y"], "default": 2}
            ]}"#,
        )
        .unwrap();
        assert_eq!(
            is_satisfiable(&model).unwrap().witness(),
            Some(&model.default_case())
        );
    }

    #[test]
    fn budget_is_enforced() {
        // 12 binary flags, unsatisfiable only at the last parameter, with a
        // budget far below the 2^12 leaves the search would visit.
        let mut params = String::new();
        for i in 0..12 {
            params.push_str(&format!(r#"{{"name": "p{i}", "kind": "unary"}},"#));
        }
        params.pop();
        let json = format!(
            r#"{{"parameters": [{params}], "constraints": ["p11=1", "p11=0 || p0=1 && p0=0"]}}"#
        );
        let model = parse_model(&json).unwrap();
        let err = Backtracking { node_budget: 100 }.solve(&model).unwrap_err();
        assert_eq!(err, ConstraintError::BudgetExceeded { budget: 100 });
        assert_eq!(is_satisfiable(&model).unwrap(), SatOutcome::Unsatisfiable);
    }
}
