//! Closure-gap estimation and next-move routing.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::contract::{required_fields, ContractTuple};
use crate::envelope::{EnvelopeDecision, Verdict};
use crate::model::{Action, Dimension};
use crate::number::Number;
use crate::predicate::{eval_dimension, EvalContext};

/// Estimated per-dimension closure gaps, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureGaps {
    pub sem: Number,
    pub evid: Number,
    pub proc: Number,
    pub inst: Number,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<BTreeMap<Dimension, Number>>,
}

impl ClosureGaps {
    pub fn zero() -> ClosureGaps {
        ClosureGaps::from_fn(|_| Number::ZERO)
    }

    pub fn from_fn(mut f: impl FnMut(Dimension) -> Number) -> ClosureGaps {
        ClosureGaps {
            sem: f(Dimension::Sem),
            evid: f(Dimension::Evid),
            proc: f(Dimension::Proc),
            inst: f(Dimension::Inst),
            cost: None,
        }
    }

    pub fn get(&self, d: Dimension) -> Number {
        match d {
            Dimension::Sem => self.sem,
            Dimension::Evid => self.evid,
            Dimension::Proc => self.proc,
            Dimension::Inst => self.inst,
        }
    }

    /// Adds the cost-sensitive view: gap times the unit cost of closing it.
    pub fn with_costs(mut self, config: &Config) -> ClosureGaps {
        self.cost = Some(Dimension::ALL.iter().map(|d| (*d, self.get(*d) * config.unit_cost[d])).collect());
        self
    }

    pub fn below(&self, thresholds: &BTreeMap<Dimension, Number>) -> bool {
        Dimension::ALL.iter().all(|d| self.get(*d) <= thresholds[d])
    }
}

/// Observable proxies for the latent gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProxySignals {
    pub clarification_count: u32,
    pub citation_conflicts: u32,
    pub retry_depth: u32,
    pub permission_denied_count: u32,
}

impl ProxySignals {
    pub fn count(&self, d: Dimension) -> u32 {
        match d {
            Dimension::Sem => self.clarification_count,
            Dimension::Evid => self.citation_conflicts,
            Dimension::Proc => self.retry_depth,
            Dimension::Inst => self.permission_denied_count,
        }
    }
}

impl FromStr for ProxySignals {
    type Err = String;

    /// `clarification_count=1,citation_conflicts=2`; short names
    /// `clarification`, `conflicts`, `retries`, `denied` also work.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut sig = ProxySignals::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| format!("expected name=count, found `{part}`"))?;
            let v: u32 = v.trim().parse().map_err(|_| format!("invalid count in `{part}`"))?;
            let slot = match k.trim() {
                "clarification_count" | "clarification" => &mut sig.clarification_count,
                "citation_conflicts" | "conflicts" => &mut sig.citation_conflicts,
                "retry_depth" | "retries" => &mut sig.retry_depth,
                "permission_denied_count" | "denied" => &mut sig.permission_denied_count,
                other => return Err(format!("unknown signal `{other}`")),
            };
            *slot = v;
        }
        Ok(sig)
    }
}

/// Gap estimate from unresolved contract fields, the candidate's
/// unresolved predicate inputs, and proxy signals.
pub fn estimate_gaps(cx: &EvalContext, sig: &ProxySignals, candidate: Option<&Action>) -> ClosureGaps {
    ClosureGaps::from_fn(|d| {
        let mut open: Vec<String> = cx.contract.unresolved(d).to_vec();
        if let Some(a) = candidate {
            // A contract that cannot be evaluated is handled by routing on
            // the decision, not by the gap estimate.
            if let Ok(r) = eval_dimension(d, a, cx) {
                for f in r.unresolved_fields {
                    if !open.contains(&f) {
                        open.push(f);
                    }
                }
            }
        }
        let required = Number::from(required_fields(d).len());
        let base = (Number::from(open.len()) / required).min(Number::ONE);
        let n = Number::from(sig.count(d) as usize);
        let bonus = cx.config.kappa * n / (n + Number::ONE);
        (base + bonus).clamp_unit()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Act,
    Search,
    Ask,
    Retrieve,
    Simulate,
    Escalate,
    Abstain,
}

impl MoveKind {
    pub const ALL: [MoveKind; 7] = [
        MoveKind::Act,
        MoveKind::Search,
        MoveKind::Ask,
        MoveKind::Retrieve,
        MoveKind::Simulate,
        MoveKind::Escalate,
        MoveKind::Abstain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Act => "act",
            MoveKind::Search => "search",
            MoveKind::Ask => "ask",
            MoveKind::Retrieve => "retrieve",
            MoveKind::Simulate => "simulate",
            MoveKind::Escalate => "escalate",
            MoveKind::Abstain => "abstain",
        }
    }
}

impl fmt::Display for MoveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MoveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        MoveKind::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown move `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Move {
    pub kind: MoveKind,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_dimension: Option<Dimension>,
}

impl Move {
    fn new(kind: MoveKind, target: Option<Dimension>, reason: impl Into<String>) -> Move {
        Move { kind, reason: reason.into(), target_dimension: target }
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if let Some(d) = self.target_dimension {
            write!(f, " ({})", d.long_name())?;
        }
        write!(f, ": {}", self.reason)
    }
}

fn closing_move(d: Dimension, k: &ContractTuple) -> MoveKind {
    match d {
        Dimension::Inst => {
            let no_path = k.is_unresolved(Dimension::Inst, "escalate_if") && k.institutional.role_permissions.is_none();
            if no_path {
                MoveKind::Abstain
            } else {
                MoveKind::Escalate
            }
        }
        Dimension::Proc => MoveKind::Simulate,
        Dimension::Evid => MoveKind::Retrieve,
        Dimension::Sem => MoveKind::Ask,
    }
}

/// Chooses the next move.
///
/// Gaps over threshold are closed first, most severe dimension first
/// (institutional, procedural, evidentiary, semantic). Otherwise the
/// envelope decides: a false predicate is repaired by the move that closes
/// its dimension, a boundary asks, and an inside decision acts unless the
/// checker rejected the candidate.
pub fn route(
    gaps: &ClosureGaps,
    decision: &EnvelopeDecision,
    checker_pass: Option<bool>,
    thresholds: &BTreeMap<Dimension, Number>,
    k: &ContractTuple,
) -> Move {
    for d in Dimension::ALL.iter().rev().copied() {
        let (g, t) = (gaps.get(d), thresholds[&d]);
        if g > t {
            return Move::new(closing_move(d, k), Some(d), format!("{} gap {g} exceeds threshold {t}", d.long_name()));
        }
    }
    match decision.verdict {
        Verdict::Outside => {
            let d = decision.failing()[0];
            let kind = match d {
                Dimension::Sem if checker_pass == Some(false) => MoveKind::Search,
                _ => closing_move(d, k),
            };
            let why = decision.per_dim[&d]
                .violations
                .first()
                .or(decision.reasons.first())
                .cloned()
                .unwrap_or_else(|| "predicate is false".into());
            Move::new(kind, Some(d), format!("outside the envelope: {why}"))
        }
        Verdict::Boundary => {
            let d = decision.open()[0];
            Move::new(MoveKind::Ask, Some(d), format!("{} predicate is unresolved", d.long_name()))
        }
        Verdict::Inside if checker_pass == Some(false) => {
            Move::new(MoveKind::Search, None, "inside the envelope but the candidate fails the checker")
        }
        Verdict::Inside => Move::new(MoveKind::Act, None, "inside the envelope"),
    }
}
