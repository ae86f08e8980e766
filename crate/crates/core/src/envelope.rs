//! Delegation envelopes: which actions may run autonomously under a
//! contract tuple, and how that set responds to tightening and
//! perturbation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::condition::{ConditionExpr, Expr, ExprKind};
use crate::config::Config;
use crate::contract::ContractTuple;
use crate::model::{Action, Dimension, RiskLevel, TaskEpisode};
use crate::number::Number;
use crate::predicate::{eval_dimension_after, EvalContext, PredicateResult, TruthValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Inside,
    Boundary,
    Outside,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Inside => "inside",
            Verdict::Boundary => "boundary",
            Verdict::Outside => "outside",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeDecision {
    pub verdict: Verdict,
    pub per_dim: BTreeMap<Dimension, PredicateResult>,
    pub joint_probability: Number,
    pub reasons: Vec<String>,
}

impl EnvelopeDecision {
    pub fn value(&self, d: Dimension) -> TruthValue {
        self.per_dim[&d].value
    }

    /// Dimensions whose predicate is false, most severe first.
    pub fn failing(&self) -> Vec<Dimension> {
        Dimension::ALL.iter().rev().copied().filter(|d| self.value(*d).is_false()).collect()
    }

    /// Dimensions whose predicate is unknown, most severe first.
    pub fn open(&self) -> Vec<Dimension> {
        Dimension::ALL.iter().rev().copied().filter(|d| self.value(*d) == TruthValue::Unknown).collect()
    }

    /// The same decision with dimension `d` treated as satisfied, as after
    /// a human ratified the action.
    pub fn waive(mut self, d: Dimension) -> Self {
        if let Some(r) = self.per_dim.get_mut(&d) {
            r.value = TruthValue::True;
            r.probability = Number::ONE;
            r.violations.clear();
            r.unresolved_fields.clear();
        }
        let prefix = format!("{}:", d.long_name());
        self.reasons.retain(|r| !r.starts_with(&prefix));
        EnvelopeDecision::from_results(self.per_dim, Vec::new()).with_reasons(self.reasons)
    }

    fn with_reasons(mut self, reasons: Vec<String>) -> Self {
        for r in reasons {
            if !self.reasons.contains(&r) {
                self.reasons.push(r);
            }
        }
        self
    }

    fn from_results(per_dim: BTreeMap<Dimension, PredicateResult>, mut reasons: Vec<String>) -> Self {
        let vals: Vec<TruthValue> = per_dim.values().map(|r| r.value).collect();
        let verdict = match TruthValue::all(vals) {
            TruthValue::True => Verdict::Inside,
            TruthValue::Unknown => Verdict::Boundary,
            TruthValue::False => Verdict::Outside,
        };
        let joint_probability = per_dim.values().map(|r| r.probability).fold(Number::ONE, |a, b| a * b);
        for d in Dimension::ALL.iter().rev() {
            let r = &per_dim[d];
            reasons.extend(r.violations.iter().map(|v| format!("{}: {v}", d.long_name())));
            reasons.extend(r.unresolved_fields.iter().map(|u| format!("{}: unresolved {u}", d.long_name())));
        }
        EnvelopeDecision { verdict, per_dim, joint_probability, reasons }
    }

    /// One-line summary such as `inside` or `outside: institutional`.
    pub fn summary(&self) -> String {
        let dims = match self.verdict {
            Verdict::Inside => return "inside".into(),
            Verdict::Boundary => self.open(),
            Verdict::Outside => self.failing(),
        };
        let names: Vec<&str> = dims.iter().map(|d| d.long_name()).collect();
        format!("{}: {}", self.verdict, names.join(", "))
    }
}

/// Membership given an explicit list of prior executions.
pub fn membership_after(a: &Action, cx: &EvalContext, prior: &[&Action]) -> EnvelopeDecision {
    let mut per_dim = BTreeMap::new();
    let mut reasons = Vec::new();
    for d in Dimension::ALL {
        let r = eval_dimension_after(d, a, cx, prior).unwrap_or_else(|err| {
            reasons.push(format!("{}: contract evaluation error: {err}", d.long_name()));
            PredicateResult {
                dimension: d,
                value: TruthValue::False,
                unresolved_fields: Vec::new(),
                violations: Vec::new(),
                probability: Number::ZERO,
            }
        });
        per_dim.insert(d, r);
    }
    EnvelopeDecision::from_results(per_dim, reasons)
}

/// Deterministic envelope membership of `a` after the episode history.
pub fn membership(a: &Action, cx: &EvalContext) -> EnvelopeDecision {
    membership_after(a, cx, &cx.history_executed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Authorize,
    Ask,
    Deny,
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Band::Authorize => "authorize",
            Band::Ask => "ask",
            Band::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbDecision {
    pub authorized: bool,
    pub band: Band,
    pub p: Number,
    pub alpha: Number,
    pub risk: RiskLevel,
}

/// Places a joint probability in the authorize / ask / deny bands around
/// threshold `alpha` with ask-band width `beta`.
pub fn band_for(p: Number, alpha: Number, beta: Number) -> Band {
    if p >= alpha {
        Band::Authorize
    } else if p >= alpha - beta {
        Band::Ask
    } else {
        Band::Deny
    }
}

/// Risk-sensitive probabilistic membership.
pub fn prob_membership(a: &Action, cx: &EvalContext) -> ProbDecision {
    let p = membership(a, cx).joint_probability;
    let risk = cx.contract.risk_of(&a.op, cx.config.default_risk);
    let alpha = cx.contract.alpha(risk);
    let band = band_for(p, alpha, cx.config.beta);
    ProbDecision { authorized: band == Band::Authorize, band, p, alpha, risk }
}

pub const ORDERING: &str = "ordering";
pub const SEPARATION_OF_DUTIES: &str = "separation_of_duties";
pub const CUMULATIVE_RISK: &str = "cumulative_risk";
pub const ROLLBACK_DEPENDENCY: &str = "rollback_dependency";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceVerdict {
    pub allowed: bool,
    pub component_failures: Vec<(usize, EnvelopeDecision)>,
    pub global_violations: Vec<String>,
}

/// Membership of a composite workflow. Each step is judged with the
/// earlier steps counted as executed, then the sequence-level constraints
/// are checked. When `composite` names an approved composite workflow the
/// per-step institutional check is waived; the other three still apply.
pub fn sequence_membership(seq: &[Action], composite: Option<&str>, cx: &EvalContext) -> SequenceVerdict {
    let k = &cx.contract.institutional;
    let inherited = composite.is_some_and(|c| k.approved_composites.contains(c));
    let history = cx.history_executed();

    let mut component_failures = Vec::new();
    for (i, a) in seq.iter().enumerate() {
        let mut prior = history.clone();
        prior.extend(seq[..i].iter());
        let d = membership_after(a, cx, &prior);
        let ok = Dimension::ALL
            .iter()
            .filter(|dim| !(inherited && **dim == Dimension::Inst))
            .all(|dim| d.value(*dim).is_true());
        if !ok {
            component_failures.push((i, d));
        }
    }

    let mut global = Vec::new();
    let ordering_ok = k.ordering_rules.iter().all(|(x, y)| {
        let mut seen_x = history.iter().any(|h| &h.op == x);
        seq.iter().all(|a| {
            seen_x |= &a.op == x;
            &a.op != y || seen_x
        })
    });
    if !ordering_ok {
        global.push(ORDERING.to_string());
    }
    let separated = k.separation_pairs.iter().all(|(x, y)| {
        let doers =
            |op: &str| -> BTreeSet<&str> { seq.iter().filter(|a| a.op == op).map(|a| a.actor.as_str()).collect() };
        doers(x).is_disjoint(&doers(y))
    });
    if !separated {
        global.push(SEPARATION_OF_DUTIES.to_string());
    }
    if let Some(cap) = k.cumulative_risk_cap {
        let total: Number =
            seq.iter().map(|a| cx.config.risk_score(cx.contract.risk_of(&a.op, cx.config.default_risk))).sum();
        if total > cap {
            global.push(CUMULATIVE_RISK.to_string());
        }
    }
    let rollback_ops = &cx.contract.procedural.rollback_required_ops;
    if seq.iter().any(|a| rollback_ops.contains(&a.op) && a.rollback_op.is_none()) {
        global.push(ROLLBACK_DEPENDENCY.to_string());
    }

    SequenceVerdict {
        allowed: component_failures.is_empty() && global.is_empty(),
        component_failures,
        global_violations: global,
    }
}

/// Inside-set indicator for every action of the episode, in action order.
/// Boundary counts as outside.
pub fn inside_set(k: &ContractTuple, e: &TaskEpisode, now: Number, config: &Config) -> Vec<bool> {
    let cx = EvalContext::new(e, k, now, config);
    let prior = cx.history_executed();
    let test = |a: &Action| membership_after(a, &cx, &prior).verdict == Verdict::Inside;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        e.action_space.par_iter().map(test).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        e.action_space.iter().map(test).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tightening {
    pub tightening: bool,
    pub witness: Option<Action>,
}

/// Checks empirically over the declared action space that every action
/// inside under `k2` is also inside under `k`.
pub fn check_tightening(
    k: &ContractTuple,
    k2: &ContractTuple,
    e: &TaskEpisode,
    now: Number,
    config: &Config,
) -> Tightening {
    let before = inside_set(k, e, now, config);
    let after = inside_set(k2, e, now, config);
    let witness = before.iter().zip(&after).position(|(b, a)| *a && !*b).map(|i| e.action_space[i].clone());
    Tightening { tightening: witness.is_none(), witness }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("empty action space")]
    EmptyActionSpace,
    #[error("empty perturbation set")]
    NoPerturbations,
    #[error("{0}")]
    Perturbation(String),
}

/// Fraction of the declared action space inside the envelope.
pub fn envelope_size(
    k: &ContractTuple,
    e: &TaskEpisode,
    now: Number,
    config: &Config,
) -> Result<Number, EnvelopeError> {
    if e.action_space.is_empty() {
        return Err(EnvelopeError::EmptyActionSpace);
    }
    let inside = inside_set(k, e, now, config).into_iter().filter(|b| *b).count();
    Ok(Number::from(inside) / Number::from(e.action_space.len()))
}

/// `|A △ B| / |A ∪ B|` over indicator vectors; zero when both are empty.
pub fn jaccard_distance(a: &[bool], b: &[bool]) -> Number {
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        return Number::ZERO;
    }
    let sym = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Number::from(sym) / Number::from(union)
}

/// Envelope stability under a set of contract perturbations.
pub fn envelope_stability(
    k: &ContractTuple,
    e: &TaskEpisode,
    deltas: &[PerturbationSpec],
    now: Number,
    config: &Config,
) -> Result<Number, EnvelopeError> {
    if deltas.is_empty() {
        return Err(EnvelopeError::NoPerturbations);
    }
    if e.action_space.is_empty() {
        return Err(EnvelopeError::EmptyActionSpace);
    }
    let base = inside_set(k, e, now, config);
    let mut total = Number::ZERO;
    for d in deltas {
        let perturbed = apply_perturbation(k, d)?;
        total = total + jaccard_distance(&base, &inside_set(&perturbed, e, now, config));
    }
    Ok(Number::ONE - total / Number::from(deltas.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Identity,
    ClauseReorder,
    NumericJitter,
    FieldRename,
    ClauseDrop,
}

impl PerturbationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::Identity => "identity",
            PerturbationKind::ClauseReorder => "clause_reorder",
            PerturbationKind::NumericJitter => "numeric_jitter",
            PerturbationKind::FieldRename => "field_rename",
            PerturbationKind::ClauseDrop => "clause_drop",
        }
    }
}

impl FromStr for PerturbationKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "identity" => PerturbationKind::Identity,
            "clause_reorder" => PerturbationKind::ClauseReorder,
            "numeric_jitter" => PerturbationKind::NumericJitter,
            "field_rename" => PerturbationKind::FieldRename,
            "clause_drop" => PerturbationKind::ClauseDrop,
            other => return Err(format!("unknown perturbation kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub magnitude: Number,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, magnitude: Number, seed: u64) -> Self {
        PerturbationSpec { kind, magnitude, seed }
    }

    pub fn identity() -> Self {
        PerturbationSpec::new(PerturbationKind::Identity, Number::ZERO, 0)
    }
}

impl FromStr for PerturbationSpec {
    type Err = String;

    /// `kind[:magnitude[:seed]]`, e.g. `numeric_jitter:50:7`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default().parse()?;
        let magnitude = match parts.next() {
            Some(m) => m.parse().map_err(|_| format!("invalid magnitude `{m}`"))?,
            None => Number::ZERO,
        };
        let seed = match parts.next() {
            Some(v) => v.parse().map_err(|_| format!("invalid seed `{v}`"))?,
            None => 0,
        };
        if parts.next().is_some() {
            return Err(format!("too many fields in perturbation `{s}`"));
        }
        Ok(PerturbationSpec { kind, magnitude, seed })
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind.as_str(), self.magnitude, self.seed)
    }
}

fn rebuild(c: &mut ConditionExpr) {
    c.source = c.root.to_string();
}

/// Applies a perturbation to every condition of the tuple. Deterministic in
/// the spec's seed.
pub fn apply_perturbation(k: &ContractTuple, spec: &PerturbationSpec) -> Result<ContractTuple, EnvelopeError> {
    let mut out = k.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        PerturbationKind::Identity => {}
        PerturbationKind::ClauseReorder => {
            out.semantic.acceptance_criteria.shuffle(&mut rng);
            for c in out.conditions_mut() {
                c.root.walk_mut(&mut |e| {
                    if let ExprKind::And(items) | ExprKind::Or(items) = &mut e.kind {
                        items.shuffle(&mut rng);
                    }
                });
                rebuild(c);
            }
        }
        PerturbationKind::NumericJitter => {
            if spec.magnitude.is_negative() {
                return Err(EnvelopeError::Perturbation("numeric_jitter magnitude must be nonnegative".into()));
            }
            for c in out.conditions_mut() {
                c.root.walk_mut(&mut |e| {
                    if let ExprKind::Num(n) = &mut e.kind {
                        let step: i64 = rng.gen_range(-100..=100);
                        *n = *n + spec.magnitude * Number::new(step as i128, 100);
                    }
                });
                rebuild(c);
            }
        }
        PerturbationKind::FieldRename => {
            let names: BTreeSet<String> =
                out.conditions().iter().flat_map(|c| c.root.identifiers()).map(str::to_string).collect();
            if let Some(target) = names.iter().nth(rng.gen_range(0..names.len().max(1))).cloned() {
                let alias = format!("{target}_alias");
                for c in out.conditions_mut() {
                    c.root.walk_mut(&mut |e| {
                        if let ExprKind::Ident(n) = &mut e.kind {
                            if *n == target {
                                n.clone_from(&alias);
                            }
                        }
                    });
                    rebuild(c);
                }
            }
        }
        PerturbationKind::ClauseDrop => {
            // Candidate conjunctions, identified by (condition, pre-order
            // position).
            let mut sites = Vec::new();
            for (ci, c) in out.conditions().iter().enumerate() {
                let mut pos = 0usize;
                collect_and_sites(&c.root, ci, &mut pos, &mut sites);
            }
            if !sites.is_empty() {
                let (ci, target, len) = sites[rng.gen_range(0..sites.len())];
                let drop = rng.gen_range(0..len);
                let c = &mut *out.conditions_mut().into_iter().nth(ci).expect("site index");
                let mut pos = 0usize;
                c.root.walk_mut(&mut |e| {
                    if let ExprKind::And(items) = &mut e.kind {
                        if pos == target {
                            items.remove(drop);
                        }
                        pos += 1;
                    }
                });
                c.root.walk_mut(&mut |e| {
                    if let ExprKind::And(items) = &mut e.kind {
                        if items.len() == 1 {
                            *e = items.pop().expect("one item");
                        }
                    }
                });
                rebuild(c);
            } else if out.semantic.acceptance_criteria.len() > 1 {
                let i = rng.gen_range(0..out.semantic.acceptance_criteria.len());
                out.semantic.acceptance_criteria.remove(i);
            }
        }
    }
    Ok(out)
}

fn collect_and_sites(e: &Expr, ci: usize, pos: &mut usize, out: &mut Vec<(usize, usize, usize)>) {
    if let ExprKind::And(items) = &e.kind {
        out.push((ci, *pos, items.len()));
        *pos += 1;
    }
    for c in e.children() {
        collect_and_sites(c, ci, pos, out);
    }
}
