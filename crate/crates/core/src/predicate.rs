//! Three-valued evaluation of conditions and of the four contract
//! predicates σ, ε, π, ι.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{BitAnd, BitOr, Not};

use serde::Serialize;

use crate::condition::{CmpOp, ConditionExpr, Expr, ExprKind, Span};
use crate::config::Config;
use crate::contract::ContractTuple;
use crate::model::{action_bindings, Action, AttrMap, Dimension, EventKind, Scalar, TaskEpisode};
use crate::number::Number;

/// Strong Kleene truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TruthValue {
    True,
    False,
    Unknown,
}

impl TruthValue {
    pub const ALL: [TruthValue; 3] = [TruthValue::True, TruthValue::False, TruthValue::Unknown];

    pub fn is_true(self) -> bool {
        self == TruthValue::True
    }

    pub fn is_false(self) -> bool {
        self == TruthValue::False
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TruthValue::True => "true",
            TruthValue::False => "false",
            TruthValue::Unknown => "unknown",
        }
    }

    /// Kleene conjunction over any number of values; empty is `True`.
    pub fn all(values: impl IntoIterator<Item = TruthValue>) -> TruthValue {
        values.into_iter().fold(TruthValue::True, |a, b| a & b)
    }

    pub fn any(values: impl IntoIterator<Item = TruthValue>) -> TruthValue {
        values.into_iter().fold(TruthValue::False, |a, b| a | b)
    }

    /// Information order: `Unknown` sits below both definite values.
    pub fn refines(self, other: TruthValue) -> bool {
        self == other || self == TruthValue::Unknown
    }
}

impl From<bool> for TruthValue {
    fn from(b: bool) -> Self {
        if b {
            TruthValue::True
        } else {
            TruthValue::False
        }
    }
}

impl BitAnd for TruthValue {
    type Output = TruthValue;
    fn bitand(self, rhs: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, rhs) {
            (False, _) | (_, False) => False,
            (True, True) => True,
            _ => Unknown,
        }
    }
}

impl BitOr for TruthValue {
    type Output = TruthValue;
    fn bitor(self, rhs: TruthValue) -> TruthValue {
        use TruthValue::*;
        match (self, rhs) {
            (True, _) | (_, True) => True,
            (False, False) => False,
            _ => Unknown,
        }
    }
}

impl Not for TruthValue {
    type Output = TruthValue;
    fn not(self) -> TruthValue {
        match self {
            TruthValue::True => TruthValue::False,
            TruthValue::False => TruthValue::True,
            TruthValue::Unknown => TruthValue::Unknown,
        }
    }
}

impl fmt::Display for TruthValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A contract that cannot be evaluated as written: a comparison between
/// incompatible types, or a non-boolean used as a condition.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message} at {}..{}", span.start, span.end)]
pub struct EvalError {
    pub span: Span,
    pub message: String,
}

fn type_error(e: &Expr, message: String) -> EvalError {
    EvalError { span: e.span, message }
}

/// Value of a term; `None` means an unbound identifier.
fn operand(e: &Expr, b: &AttrMap) -> Result<Option<Scalar>, EvalError> {
    Ok(match &e.kind {
        ExprKind::Ident(n) => b.get(n).cloned(),
        ExprKind::Num(n) => Some(Scalar::Num(*n)),
        ExprKind::Str(s) => Some(Scalar::Str(s.clone())),
        ExprKind::Bool(v) => Some(Scalar::Bool(*v)),
        _ => match truth(e, b)? {
            TruthValue::True => Some(Scalar::Bool(true)),
            TruthValue::False => Some(Scalar::Bool(false)),
            TruthValue::Unknown => None,
        },
    })
}

fn compare(e: &Expr, op: CmpOp, l: &Scalar, r: &Scalar) -> Result<bool, EvalError> {
    use std::cmp::Ordering::*;
    let ord = match (l, r) {
        (Scalar::Num(x), Scalar::Num(y)) => x.cmp(y),
        (Scalar::Str(x), Scalar::Str(y)) => match op {
            CmpOp::Eq => return Ok(x == y),
            CmpOp::Ne => return Ok(x != y),
            _ => return Err(type_error(e, format!("operator {} is not defined on strings", op.symbol()))),
        },
        (Scalar::Bool(x), Scalar::Bool(y)) => match op {
            CmpOp::Eq => return Ok(x == y),
            CmpOp::Ne => return Ok(x != y),
            _ => return Err(type_error(e, format!("operator {} is not defined on booleans", op.symbol()))),
        },
        _ => return Err(type_error(e, format!("cannot compare {} with {}", l.type_name(), r.type_name()))),
    };
    Ok(match op {
        CmpOp::Le => ord != Greater,
        CmpOp::Ge => ord != Less,
        CmpOp::Lt => ord == Less,
        CmpOp::Gt => ord == Greater,
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
    })
}

fn truth(e: &Expr, b: &AttrMap) -> Result<TruthValue, EvalError> {
    match &e.kind {
        ExprKind::Bool(v) => Ok((*v).into()),
        ExprKind::Ident(n) => match b.get(n) {
            None => Ok(TruthValue::Unknown),
            Some(Scalar::Bool(v)) => Ok((*v).into()),
            Some(other) => Err(type_error(e, format!("`{n}` is a {} used as a condition", other.type_name()))),
        },
        ExprKind::Num(_) | ExprKind::Str(_) => Err(type_error(e, "literal used as a condition".into())),
        ExprKind::Not(inner) => Ok(!truth(inner, b)?),
        // Every operand is evaluated, so type errors surface regardless
        // of short-circuit order.
        ExprKind::And(items) => {
            let vals = items.iter().map(|i| truth(i, b)).collect::<Result<Vec<_>, _>>()?;
            Ok(TruthValue::all(vals))
        }
        ExprKind::Or(items) => {
            let vals = items.iter().map(|i| truth(i, b)).collect::<Result<Vec<_>, _>>()?;
            Ok(TruthValue::any(vals))
        }
        ExprKind::Cmp(op, l, r) => {
            let (lv, rv) = (operand(l, b)?, operand(r, b)?);
            match (lv, rv) {
                (Some(x), Some(y)) => Ok(compare(e, *op, &x, &y)?.into()),
                _ => Ok(TruthValue::Unknown),
            }
        }
    }
}

/// Evaluates a condition over a binding map.
pub fn eval_expr(expr: &ConditionExpr, bindings: &AttrMap) -> Result<TruthValue, EvalError> {
    truth(&expr.root, bindings)
}

pub fn eval_root(expr: &Expr, bindings: &AttrMap) -> Result<TruthValue, EvalError> {
    truth(expr, bindings)
}

/// Identifiers in the condition that have no binding, deduplicated and in
/// first-occurrence order.
pub fn missing_identifiers(expr: &ConditionExpr, bindings: &AttrMap) -> Vec<String> {
    let mut seen = BTreeSet::new();
    expr.root
        .identifiers()
        .into_iter()
        .filter(|n| !bindings.contains_key(*n) && seen.insert(*n))
        .map(str::to_string)
        .collect()
}

/// Outcome of one contract predicate on one action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredicateResult {
    pub dimension: Dimension,
    pub value: TruthValue,
    /// Fields whose absence made the value `Unknown`; empty otherwise.
    pub unresolved_fields: Vec<String>,
    /// Why the value is `False`; empty otherwise.
    pub violations: Vec<String>,
    pub probability: Number,
}

/// Accumulates a Kleene conjunction together with its explanations.
struct Acc {
    value: TruthValue,
    unresolved: Vec<String>,
    violations: Vec<String>,
}

impl Acc {
    fn new() -> Acc {
        Acc { value: TruthValue::True, unresolved: Vec::new(), violations: Vec::new() }
    }

    fn fail(&mut self, why: String) {
        self.value = self.value & TruthValue::False;
        self.violations.push(why);
    }

    fn unknown(&mut self, field: impl Into<String>) {
        self.value = self.value & TruthValue::Unknown;
        let field = field.into();
        if !self.unresolved.contains(&field) {
            self.unresolved.push(field);
        }
    }

    fn finish(mut self, dim: Dimension, config: &Config) -> PredicateResult {
        let probability = match self.value {
            TruthValue::True => Number::ONE,
            TruthValue::False => Number::ZERO,
            TruthValue::Unknown => config.p_unknown(dim),
        };
        if self.value != TruthValue::Unknown {
            self.unresolved.clear();
        }
        if self.value != TruthValue::False {
            self.violations.clear();
        }
        PredicateResult {
            dimension: dim,
            value: self.value,
            unresolved_fields: self.unresolved,
            violations: self.violations,
            probability,
        }
    }
}

/// Everything a predicate needs besides the action itself.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub episode: &'a TaskEpisode,
    pub contract: &'a ContractTuple,
    pub now: Number,
    pub config: &'a Config,
}

impl<'a> EvalContext<'a> {
    pub fn new(episode: &'a TaskEpisode, contract: &'a ContractTuple, now: Number, config: &'a Config) -> Self {
        EvalContext { episode, contract, now, config }
    }

    /// Actions already executed in the episode's initial history.
    pub fn history_executed(&self) -> Vec<&'a Action> {
        self.episode
            .history
            .events
            .iter()
            .filter(|e| e.q == EventKind::Execute)
            .filter_map(|e| e.action.as_ref())
            .collect()
    }
}

/// Evaluates one dimension, treating the episode history as the record of
/// prior executions.
pub fn eval_dimension(dim: Dimension, a: &Action, cx: &EvalContext) -> Result<PredicateResult, EvalError> {
    let prior = cx.history_executed();
    eval_dimension_after(dim, a, cx, &prior)
}

/// Evaluates one dimension given an explicit list of prior executions.
pub fn eval_dimension_after(
    dim: Dimension,
    a: &Action,
    cx: &EvalContext,
    prior: &[&Action],
) -> Result<PredicateResult, EvalError> {
    let acc = match dim {
        Dimension::Sem => semantic(a, cx)?,
        Dimension::Evid => evidentiary(a, cx),
        Dimension::Proc => procedural(a, cx, prior)?,
        Dimension::Inst => institutional(a, cx)?,
    };
    Ok(acc.finish(dim, cx.config))
}

fn condition_into(
    acc: &mut Acc,
    label: &str,
    expr: &ConditionExpr,
    b: &AttrMap,
    negate: bool,
) -> Result<(), EvalError> {
    let v = eval_expr(expr, b)?;
    let v = if negate { !v } else { v };
    match v {
        TruthValue::True => {}
        TruthValue::False => {
            let state = if negate { "holds" } else { "fails" };
            acc.fail(format!("{label} `{}` {state}", expr.root));
        }
        TruthValue::Unknown => {
            for m in missing_identifiers(expr, b) {
                acc.unknown(m);
            }
            if acc.unresolved.is_empty() {
                acc.unknown(label.to_string());
            }
        }
    }
    Ok(())
}

fn semantic(a: &Action, cx: &EvalContext) -> Result<Acc, EvalError> {
    let k = &cx.contract.semantic;
    let b = action_bindings(a, cx.episode);
    let mut acc = Acc::new();
    for entity in &k.entities {
        if !b.contains_key(entity) {
            acc.unknown(format!("entities.{entity}"));
        }
    }
    if k.open || cx.contract.is_unresolved(Dimension::Sem, "acceptance_criteria") {
        acc.unknown("acceptance_criteria");
    }
    for c in &k.acceptance_criteria {
        condition_into(&mut acc, "acceptance criterion", c, &b, false)?;
    }
    Ok(acc)
}

fn evidentiary(a: &Action, cx: &EvalContext) -> Acc {
    let k = &cx.contract.evidentiary;
    let mut acc = Acc::new();
    let sources_open = cx.contract.is_unresolved(Dimension::Evid, "admissible_sources");
    let mut cited_classes = BTreeSet::new();
    for id in &a.citations {
        let Some(rec) = cx.episode.evidence_record(id) else {
            acc.fail(format!("citation {id} does not resolve to an evidence record"));
            continue;
        };
        cited_classes.insert(rec.source_class.as_str());
        if rec.admissible_flag == Some(false) {
            acc.fail(format!("record {id} is marked inadmissible"));
            continue;
        }
        if sources_open {
            acc.unknown("admissible_sources");
            continue;
        }
        let Some(rule) = k.rule_for(&rec.source_class) else {
            acc.fail(format!("record {id}: source class {} is not admissible", rec.source_class));
            continue;
        };
        if let Some(max) = rule.max_age_seconds {
            let age = cx.now - rec.timestamp;
            if age > max {
                acc.fail(format!("record {id} is stale: age {age}s exceeds {max}s"));
            }
        }
        if rule.provenance_required && rec.provenance.as_deref().is_none_or(str::is_empty) {
            acc.fail(format!("record {id} lacks required provenance"));
        }
        if rule.version_match && rec.admissible_flag.is_none() {
            acc.unknown(format!("evidence.{id}.current_version"));
        }
    }
    for class in &k.required_sources {
        if !cited_classes.contains(class.as_str()) {
            acc.unknown(format!("required_sources.{class}"));
        }
    }
    acc
}

/// Index of the next workflow step, given prior executions.
pub fn workflow_cursor(k: &ContractTuple, prior: &[&Action]) -> usize {
    let wf = &k.procedural.workflow;
    let mut cursor = 0;
    for p in prior {
        if cursor < wf.len() && k.procedural.step_for(&p.op) == Some(wf[cursor].as_str()) {
            cursor += 1;
        }
    }
    cursor
}

fn procedural(a: &Action, cx: &EvalContext, prior: &[&Action]) -> Result<Acc, EvalError> {
    let k = &cx.contract.procedural;
    let mut acc = Acc::new();
    // Without a tool list the contract places no constraint on tools.
    if let Some(tools) = &k.allowed_tools {
        if !tools.contains(&a.tool) {
            acc.fail(format!("tool {} is not allowed", a.tool));
        }
    }
    if k.workflow.is_empty() {
        acc.unknown("workflow");
    } else {
        match k.step_for(&a.op) {
            None => acc.unknown(format!("step_of_op.{}", a.op)),
            Some(step) => {
                let cursor = workflow_cursor(cx.contract, prior);
                match k.workflow.get(cursor) {
                    None => acc.fail(format!("workflow already complete; {} has no step left", a.op)),
                    Some(next) if next != step => acc.fail(format!("step {step} is out of order; next step is {next}")),
                    Some(_) => {}
                }
            }
        }
    }
    if k.rollback_required_ops.contains(&a.op) && a.rollback_op.is_none() {
        acc.fail(format!("{} requires a rollback operation", a.op));
    }
    if !k.stop_conditions.is_empty() {
        let b = action_bindings(a, cx.episode);
        for c in &k.stop_conditions {
            condition_into(&mut acc, "stop condition", c, &b, true)?;
        }
    }
    Ok(acc)
}

fn institutional(a: &Action, cx: &EvalContext) -> Result<Acc, EvalError> {
    let k = &cx.contract.institutional;
    let b = action_bindings(a, cx.episode);
    let mut acc = Acc::new();
    match k.permits(&a.actor, &a.op) {
        Some(true) => {}
        Some(false) => acc.fail(format!("{} is not permitted to {}", a.actor, a.op)),
        None if k.role_permissions.is_none() => {}
        None => acc.unknown(format!("role_permissions.{}", a.actor)),
    }
    match &k.autonomous_if {
        Some(c) => condition_into(&mut acc, "autonomous_if", c, &b, false)?,
        None => acc.unknown("autonomous_if"),
    }
    match &k.escalate_if {
        Some(c) => condition_into(&mut acc, "escalate_if", c, &b, true)?,
        None => acc.unknown("escalate_if"),
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::parse_condition;
    use TruthValue::*;

    fn eval(src: &str, b: &[(&str, Scalar)]) -> Result<TruthValue, EvalError> {
        let m: AttrMap = b.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        eval_expr(&parse_condition(src).unwrap(), &m)
    }

    #[test]
    fn listing_guard() {
        let b = [("domestic", true.into()), ("fare_delta", 150.into())];
        assert_eq!(eval("domestic && fare_delta <= 200", &b).unwrap(), True);
        assert_eq!(eval("domestic && fare_delta <= 200", &b[..1]).unwrap(), Unknown);
        assert_eq!(eval("international || visa_risk", &[("international", false.into())]).unwrap(), Unknown);
    }

    #[test]
    fn type_mismatch_carries_span() {
        let err = eval("ok && n < \"x\"", &[("ok", true.into()), ("n", 1.into())]).unwrap_err();
        assert_eq!(err.span, Span { start: 6, end: 13 });
        assert!(eval("s < \"x\"", &[("s", "a".into())]).is_err());
        assert!(eval("n", &[("n", 1.into())]).is_err());
        assert_eq!(eval("s != \"x\"", &[("s", "a".into())]).unwrap(), True);
    }

    #[test]
    fn exact_rational_comparison() {
        let b = [("p", Scalar::Num("0.3".parse().unwrap()))];
        assert_eq!(eval("p == 0.3", &b).unwrap(), True);
        assert_eq!(eval("p > 0.29999999999999999", &b).unwrap(), True);
    }
}
