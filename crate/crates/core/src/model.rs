//! Domain types shared by every stage: episodes, actions, evidence and
//! event traces, plus their structural validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::number::Number;

/// A binding value. Bindings are flat: no nested maps or lists.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scalar {
    Bool(bool),
    Num(Number),
    Str(String),
}

impl Scalar {
    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Bool(_) => "boolean",
            Scalar::Num(_) => "number",
            Scalar::Str(_) => "string",
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::Num(n) => write!(f, "{n}"),
            Scalar::Str(s) => write!(f, "{s:?}"),
        }
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::Num(Number::int(v))
    }
}

impl From<Number> for Scalar {
    fn from(v: Number) -> Self {
        Scalar::Num(v)
    }
}

impl From<&str> for Scalar {
    fn from(v: &str) -> Self {
        Scalar::Str(v.to_string())
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Bool(b) => s.serialize_bool(*b),
            Scalar::Num(n) => n.serialize(s),
            Scalar::Str(v) => s.serialize_str(v),
        }
    }
}

struct ScalarVisitor;

impl Visitor<'_> for ScalarVisitor {
    type Value = Scalar;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a boolean, number or string")
    }
    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Scalar, E> {
        Ok(Scalar::Bool(v))
    }
    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Scalar, E> {
        Ok(Scalar::Num(Number::int(v)))
    }
    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Scalar, E> {
        Ok(Scalar::Num(Number::from(v as usize)))
    }
    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Scalar, E> {
        Number::from_f64(v).map(Scalar::Num).ok_or_else(|| E::custom("non-finite number"))
    }
    fn visit_str<E: de::Error>(self, v: &str) -> Result<Scalar, E> {
        Ok(Scalar::Str(v.to_string()))
    }
}

impl<'de> Deserialize<'de> for Scalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Scalar, D::Error> {
        d.deserialize_any(ScalarVisitor)
    }
}

pub type AttrMap = BTreeMap<String, Scalar>;

/// The four contract dimensions, in routing-priority order from least to
/// most severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Sem,
    Evid,
    Proc,
    Inst,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Sem, Dimension::Evid, Dimension::Proc, Dimension::Inst];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Sem => "sem",
            Dimension::Evid => "evid",
            Dimension::Proc => "proc",
            Dimension::Inst => "inst",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Dimension::Sem => "semantic",
            Dimension::Evid => "evidentiary",
            Dimension::Proc => "procedural",
            Dimension::Inst => "institutional",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sem" | "semantic" => Ok(Dimension::Sem),
            "evid" | "evidentiary" => Ok(Dimension::Evid),
            "proc" | "procedural" => Ok(Dimension::Proc),
            "inst" | "institutional" => Ok(Dimension::Inst),
            other => Err(format!("unknown dimension `{other}`")),
        }
    }
}

/// Action severity. Variant order is the materiality order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
    Critical,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 4] = [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High, RiskLevel::Critical];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
            RiskLevel::Critical => "critical",
        }
    }
}

impl FromStr for RiskLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "low" => Ok(RiskLevel::Low),
            "medium" => Ok(RiskLevel::Medium),
            "high" => Ok(RiskLevel::High),
            "critical" => Ok(RiskLevel::Critical),
            other => Err(format!("unknown risk level `{other}`")),
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A candidate action: operation, object, payload, principal, execution
/// channel and time, plus typed attributes used by the contracts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub obj: String,
    #[serde(default)]
    pub content: String,
    pub actor: String,
    pub tool: String,
    #[serde(default)]
    pub t: Number,
    #[serde(default)]
    pub bindings: AttrMap,
    #[serde(default)]
    pub citations: Vec<String>,
    #[serde(default)]
    pub reversible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollback_op: Option<String>,
}

impl Action {
    pub fn new(id: &str, op: &str, actor: &str, tool: &str) -> Action {
        Action {
            id: id.to_string(),
            op: op.to_string(),
            obj: String::new(),
            content: String::new(),
            actor: actor.to_string(),
            tool: tool.to_string(),
            t: Number::ZERO,
            bindings: AttrMap::new(),
            citations: Vec::new(),
            reversible: false,
            rollback_op: None,
        }
    }

    pub fn signature(&self) -> (&str, &str, &str, &str) {
        (&self.op, &self.obj, &self.actor, &self.tool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub id: String,
    pub source_class: String,
    pub timestamp: Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissible_flag: Option<bool>,
    #[serde(default)]
    pub payload: AttrMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Compile,
    Search,
    Escalate,
    Execute,
    Wait,
}

impl EventKind {
    pub const ALL: [EventKind; 5] =
        [EventKind::Compile, EventKind::Search, EventKind::Escalate, EventKind::Execute, EventKind::Wait];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Compile => "compile",
            EventKind::Search => "search",
            EventKind::Escalate => "escalate",
            EventKind::Execute => "execute",
            EventKind::Wait => "wait",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewOutcome {
    Changed,
    BoundaryConfirmed,
    NoChange,
}

/// One trace event. `c` is the accounting cost; when input omits it the
/// cost defaults to `f - s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawEvent")]
pub struct Event {
    pub q: EventKind,
    pub s: Number,
    pub f: Number,
    pub c: Number,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review_outcome: Option<ReviewOutcome>,
    #[serde(default)]
    pub human_review: bool,
}

#[derive(Deserialize)]
struct RawEvent {
    q: EventKind,
    s: Number,
    f: Number,
    #[serde(default)]
    c: Option<Number>,
    #[serde(default)]
    action_ref: Option<String>,
    #[serde(default)]
    action: Option<Action>,
    #[serde(default)]
    ratified: Option<bool>,
    #[serde(default)]
    review_outcome: Option<ReviewOutcome>,
    #[serde(default)]
    human_review: bool,
}

impl From<RawEvent> for Event {
    fn from(r: RawEvent) -> Event {
        let action_ref = r.action_ref.or_else(|| r.action.as_ref().map(|a| a.id.clone()));
        Event {
            q: r.q,
            s: r.s,
            f: r.f,
            c: r.c.unwrap_or(r.f - r.s),
            action_ref,
            action: r.action,
            ratified: r.ratified,
            review_outcome: r.review_outcome,
            human_review: r.human_review,
        }
    }
}

impl Event {
    /// An event whose cost equals its wall-clock duration.
    pub fn timed(q: EventKind, s: Number, f: Number) -> Event {
        Event {
            q,
            s,
            f,
            c: f - s,
            action_ref: None,
            action: None,
            ratified: None,
            review_outcome: None,
            human_review: false,
        }
    }

    pub fn with_action(mut self, action: Action) -> Event {
        self.action_ref = Some(action.id.clone());
        self.action = Some(action);
        self
    }

    pub fn duration(&self) -> Number {
        self.f - self.s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EventTrace {
    #[serde(default)]
    pub episode_id: String,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl EventTrace {
    pub fn new(episode_id: &str) -> EventTrace {
        EventTrace { episode_id: episode_id.to_string(), events: Vec::new() }
    }

    /// Operations of execute events that carry an action, in trace order.
    pub fn executed_ops(&self) -> impl Iterator<Item = &str> {
        self.events
            .iter()
            .filter(|e| e.q == EventKind::Execute)
            .filter_map(|e| e.action.as_ref().map(|a| a.op.as_str()))
    }
}

/// A task episode: request, context, finite action space, evidence,
/// policy reference and initial history.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskEpisode {
    pub id: String,
    #[serde(default)]
    pub request: String,
    #[serde(default)]
    pub context: AttrMap,
    #[serde(default)]
    pub action_space: Vec<Action>,
    #[serde(default)]
    pub evidence: Vec<EvidenceRecord>,
    #[serde(default)]
    pub policy: String,
    #[serde(default)]
    pub history: EventTrace,
    /// Ground-truth flag, only consulted by the benchmark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requires_escalation: Option<bool>,
}

impl TaskEpisode {
    pub fn action(&self, id: &str) -> Option<&Action> {
        self.action_space.iter().find(|a| a.id == id)
    }

    pub fn evidence_record(&self, id: &str) -> Option<&EvidenceRecord> {
        self.evidence.iter().find(|r| r.id == id)
    }

    /// Fills `action` on history events from `action_ref` where possible.
    pub fn resolve_history_refs(&mut self) {
        let space = self.action_space.clone();
        for ev in &mut self.history.events {
            if ev.action.is_none() {
                if let Some(r) = &ev.action_ref {
                    ev.action = space.iter().find(|a| &a.id == r).cloned();
                }
            }
        }
    }
}

/// A validation finding: which invariant failed and where.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub invariant: String,
    pub field: String,
}

impl Diagnostic {
    pub fn new(invariant: impl Into<String>, field: impl Into<String>) -> Diagnostic {
        Diagnostic { invariant: invariant.into(), field: field.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.field.is_empty() {
            f.write_str(&self.invariant)
        } else {
            write!(f, "{} ({})", self.invariant, self.field)
        }
    }
}

/// Checks every structural invariant of an episode. An empty result means
/// the episode is well formed.
pub fn validate_episode(e: &TaskEpisode) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if e.id.trim().is_empty() {
        out.push(Diagnostic::new("empty episode id", "id"));
    }
    if e.action_space.is_empty() {
        out.push(Diagnostic::new("empty action space", "action_space"));
    }

    let mut signatures = BTreeSet::new();
    let mut ids = BTreeSet::new();
    for (i, a) in e.action_space.iter().enumerate() {
        let at = |f: &str| format!("action_space[{i}].{f}");
        out.extend(validate_action(a, &format!("action_space[{i}]")));
        if !ids.insert(a.id.as_str()) {
            out.push(Diagnostic::new("duplicate action id", at("id")));
        }
        if !signatures.insert(a.signature()) {
            out.push(Diagnostic::new(
                "duplicate action signature",
                format!("action {} ({}, {}, {}, {})", a.id, a.op, a.obj, a.actor, a.tool),
            ));
        }
    }

    let mut evidence_ids = BTreeSet::new();
    for (i, r) in e.evidence.iter().enumerate() {
        if !evidence_ids.insert(r.id.as_str()) {
            out.push(Diagnostic::new("duplicate evidence id", format!("evidence[{i}].id")));
        }
    }

    out.extend(validate_trace(&e.history).into_iter().map(|mut d| {
        d.field = format!("history.{}", d.field);
        d
    }));
    out
}

fn validate_action(a: &Action, path: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (name, value) in [("op", &a.op), ("actor", &a.actor), ("tool", &a.tool)] {
        if value.trim().is_empty() {
            out.push(Diagnostic::new(format!("empty action {name}"), format!("{path}.{name}")));
        }
    }
    if a.reversible && a.rollback_op.is_none() {
        out.push(Diagnostic::new("reversible action without rollback_op", format!("action {}", a.id)));
    }
    if a.t.is_negative() {
        out.push(Diagnostic::new("negative timestamp", format!("{path}.t")));
    }
    out
}

/// Checks event ordering, durations and where review outcomes may appear.
pub fn validate_trace(trace: &EventTrace) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut prev_start: Option<Number> = None;
    for (j, ev) in trace.events.iter().enumerate() {
        let at = |f: &str| format!("events[{j}].{f}");
        if ev.f < ev.s {
            out.push(Diagnostic::new("event finishes before it starts", at("f")));
        }
        if ev.s.is_negative() {
            out.push(Diagnostic::new("negative timestamp", at("s")));
        }
        if let Some(p) = prev_start {
            if ev.s < p {
                out.push(Diagnostic::new("events not sorted by start", at("s")));
            }
        }
        prev_start = Some(ev.s);
        if ev.review_outcome.is_some() && !matches!(ev.q, EventKind::Escalate | EventKind::Wait) {
            out.push(Diagnostic::new("review outcome on non-review event", at("review_outcome")));
        }
        if let Some(a) = &ev.action {
            out.extend(validate_action(a, &at("action")));
        }
    }
    out
}

/// Episode ids must be unique within a suite.
pub fn validate_suite<'a>(episodes: impl IntoIterator<Item = &'a TaskEpisode>) -> Vec<Diagnostic> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in episodes {
        if !seen.insert(e.id.clone()) {
            out.push(Diagnostic::new("duplicate episode id", e.id.clone()));
        }
        out.extend(validate_episode(e).into_iter().map(|mut d| {
            d.field = format!("{}: {}", e.id, d.field);
            d
        }));
    }
    out
}

/// Reserved binding keys always supplied from the action itself.
pub const RESERVED_KEYS: [&str; 4] = ["op", "obj", "actor", "tool"];

/// Flattens episode context and action attributes into one binding map.
/// Action bindings shadow context keys; the reserved keys shadow both.
pub fn action_bindings(a: &Action, e: &TaskEpisode) -> AttrMap {
    let mut m = e.context.clone();
    m.extend(a.bindings.iter().map(|(k, v)| (k.clone(), v.clone())));
    m.insert("op".into(), Scalar::Str(a.op.clone()));
    m.insert("obj".into(), Scalar::Str(a.obj.clone()));
    m.insert("actor".into(), Scalar::Str(a.actor.clone()));
    m.insert("tool".into(), Scalar::Str(a.tool.clone()));
    m
}
