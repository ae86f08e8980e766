//! Intent documents and their compilation into a [`ContractTuple`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::condition::{parse_condition, ConditionError, ConditionExpr, Expr};
use crate::contract::{default_alpha_map, required_fields, AmbiguityMove, ContractTuple, SourceRule};
use crate::doc::{self, DocError, Node, Pos, Value};
use crate::model::{Dimension, RiskLevel};
use crate::number::Number;

pub const TOP_LEVEL_KEYS: [&str; 5] =
    ["task", "semantic_contract", "evidentiary_contract", "procedural_contract", "institutional_contract"];

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "task" => &["objective", "action_type", "version"],
        "semantic_contract" => &["entities", "acceptance_criteria", "ambiguity_policy"],
        "evidentiary_contract" => &["admissible_sources", "conflict_resolution", "required_sources", "freshness_clock"],
        "procedural_contract" => &[
            "workflow",
            "allowed_tools",
            "rollback",
            "step_of_op",
            "rollback_required_ops",
            "stop_conditions",
            "retry_limit",
        ],
        "institutional_contract" => &[
            "autonomous_if",
            "escalate_if",
            "audit",
            "audit_retention_days",
            "role_permissions",
            "risk_of_op",
            "alpha_map",
            "separation_pairs",
            "ordering_rules",
            "cumulative_risk_cap",
            "approved_composites",
        ],
        _ => &[],
    }
}

pub fn section_name(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Sem => "semantic_contract",
        Dimension::Evid => "evidentiary_contract",
        Dimension::Proc => "procedural_contract",
        Dimension::Inst => "institutional_contract",
    }
}

/// A note about the document that does not prevent compilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocDiagnostic {
    pub pos: Pos,
    pub path: String,
    pub message: String,
}

impl fmt::Display for DocDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.pos, self.message, self.path)
    }
}

/// A parsed intent document. The tree is kept whole, unknown keys
/// included, so it serializes back without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentDocument {
    pub root: Node,
    pub diagnostics: Vec<DocDiagnostic>,
}

impl IntentDocument {
    pub fn task(&self) -> &Node {
        self.root.get("task").expect("checked at parse time")
    }

    pub fn section(&self, dim: Dimension) -> Option<&Node> {
        self.root.get(section_name(dim))
    }

    /// Serializes the document tree.
    pub fn to_text(&self) -> String {
        doc::to_string(&self.root)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("{0}")]
    Syntax(#[from] DocError),
    #[error("missing task section")]
    MissingTask,
    #[error("{pos}: {message}")]
    Shape { pos: Pos, message: String },
}

pub fn parse_intent_document(text: &str) -> Result<IntentDocument, ParseError> {
    let root = doc::parse(text)?;
    if root.is_null() {
        return Err(ParseError::MissingTask);
    }
    let Value::Map(entries) = &root.value else {
        return Err(ParseError::Shape {
            pos: root.pos,
            message: format!("document must be a mapping, found {}", root.kind()),
        });
    };
    let mut diagnostics = Vec::new();
    for entry in entries {
        if !TOP_LEVEL_KEYS.contains(&entry.key.as_str()) {
            diagnostics.push(DocDiagnostic {
                pos: entry.key_pos,
                path: entry.key.clone(),
                message: format!("unknown key {}", entry.key),
            });
            continue;
        }
        match &entry.value.value {
            Value::Null => {}
            Value::Map(fields) => {
                let known = known_keys(&entry.key);
                for f in fields.iter().filter(|f| !known.contains(&f.key.as_str())) {
                    diagnostics.push(DocDiagnostic {
                        pos: f.key_pos,
                        path: format!("{}.{}", entry.key, f.key),
                        message: format!("unknown key {}", f.key),
                    });
                }
            }
            _ => {
                return Err(ParseError::Shape {
                    pos: entry.value.pos,
                    message: format!("section {} must be a mapping", entry.key),
                })
            }
        }
    }
    if root.get("task").is_none() {
        return Err(ParseError::MissingTask);
    }
    Ok(IntentDocument { root, diagnostics })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("alpha_map not nondecreasing")]
    AlphaNotMonotone,
    #[error("negative retention: audit_retention_days = {0}")]
    NegativeRetention(i64),
    #[error("{field}: unparseable condition `{text}`: {error}")]
    Condition { field: String, text: String, error: ConditionError },
    #[error("{pos}: {field}: expected {expected}, found {found}")]
    Type { pos: Pos, field: String, expected: &'static str, found: &'static str },
    #[error("{pos}: {field}: {message}")]
    Invalid { pos: Pos, field: String, message: String },
}

type CResult<T> = Result<T, CompileError>;

fn type_err(node: &Node, field: &str, expected: &'static str) -> CompileError {
    CompileError::Type { pos: node.pos, field: field.to_string(), expected, found: node.kind() }
}

fn invalid(node: &Node, field: &str, message: impl Into<String>) -> CompileError {
    CompileError::Invalid { pos: node.pos, field: field.to_string(), message: message.into() }
}

fn scalar_text(node: &Node) -> Option<String> {
    match &node.value {
        Value::Str(s) => Some(s.clone()),
        Value::Num(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn string(node: &Node, field: &str) -> CResult<String> {
    scalar_text(node).ok_or_else(|| type_err(node, field, "string"))
}

fn string_list(node: &Node, field: &str) -> CResult<Vec<String>> {
    match &node.value {
        Value::Seq(items) => items.iter().map(|n| string(n, field)).collect(),
        _ => Err(type_err(node, field, "sequence")),
    }
}

fn mapping<'a>(node: &'a Node, field: &str) -> CResult<&'a [doc::Entry]> {
    match &node.value {
        Value::Map(entries) => Ok(entries),
        _ => Err(type_err(node, field, "mapping")),
    }
}

fn number(node: &Node, field: &str) -> CResult<Number> {
    match &node.value {
        Value::Num(n) => Ok(*n),
        Value::Str(s) => s.parse().map_err(|_| type_err(node, field, "number")),
        _ => Err(type_err(node, field, "number")),
    }
}

fn integer(node: &Node, field: &str) -> CResult<i64> {
    let n = number(node, field)?;
    if !n.is_integer() {
        return Err(type_err(node, field, "integer"));
    }
    i64::try_from(n.ratio().to_integer()).map_err(|_| invalid(node, field, "integer out of range"))
}

fn condition(node: &Node, field: &str) -> CResult<ConditionExpr> {
    let text = string(node, field)?;
    parse_condition(&text).map_err(|error| CompileError::Condition { field: field.to_string(), text, error })
}

/// An acceptance criterion that does not parse as a condition but reads as
/// plain words becomes a named proposition, e.g. "arrival before
/// meeting_start_time" is bound as `arrival_before_meeting_start_time`.
fn proposition_name(text: &str) -> Option<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let wordy =
        !words.is_empty() && words.iter().all(|w| w.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-'));
    if !wordy {
        return None;
    }
    let name = words
        .iter()
        .map(|w| {
            w.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("_");
    name.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_').then_some(name)
}

/// Parses `class`, `class:<15min`, `class:<30s`, `class:<2h`,
/// `class:current_version` and `class:provenance`, suffixes combinable.
pub fn parse_source_rule(text: &str) -> Result<SourceRule, String> {
    let mut parts = text.split(':').map(str::trim);
    let class = parts.next().unwrap_or_default();
    if class.is_empty() {
        return Err("empty source class".into());
    }
    let mut rule = SourceRule::plain(class);
    for suffix in parts {
        if let Some(age) = suffix.strip_prefix('<') {
            let (digits, unit) =
                age.find(|c: char| !(c.is_ascii_digit() || c == '.')).map(|i| age.split_at(i)).unwrap_or((age, "s"));
            let n: Number = digits.parse().map_err(|_| format!("invalid freshness bound `{suffix}`"))?;
            let scale = match unit {
                "s" | "sec" => 1,
                "min" | "m" => 60,
                "h" => 3600,
                _ => return Err(format!("unknown freshness unit `{unit}`")),
            };
            let secs = n * Number::int(scale);
            if secs <= Number::ZERO {
                return Err(format!("freshness bound must be positive in `{suffix}`"));
            }
            rule.max_age_seconds = Some(secs);
        } else if suffix == "current_version" {
            rule.provenance_required = true;
            rule.version_match = true;
        } else if suffix == "provenance" {
            rule.provenance_required = true;
        } else {
            return Err(format!("unknown source qualifier `{suffix}`"));
        }
    }
    Ok(rule)
}

fn retention_from_audit(text: &str) -> Option<i64> {
    let rest = text.strip_prefix("retain_logs_")?;
    let days = rest.strip_suffix("_days").or_else(|| rest.strip_suffix("_day"))?;
    days.parse().ok()
}

/// Tracks unresolved fields and diagnostics for one section.
struct Section<'a> {
    dim: Dimension,
    node: Option<&'a Node>,
    unresolved: Vec<String>,
    notes: Vec<String>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a IntentDocument, dim: Dimension) -> Section<'a> {
        Section { dim, node: doc.section(dim), unresolved: Vec::new(), notes: Vec::new() }
    }

    /// The field's node, or `None` (recorded as unresolved when required)
    /// if it is absent or empty.
    fn field(&mut self, name: &str) -> Option<&'a Node> {
        let found = self.node.and_then(|n| n.get(name)).filter(|n| !n.is_null());
        if found.is_none() && required_fields(self.dim).contains(&name) {
            self.unresolve(name);
        }
        found
    }

    fn unresolve(&mut self, name: &str) {
        if !self.unresolved.iter().any(|u| u == name) {
            self.unresolved.push(name.to_string());
        }
    }

    fn path(&self, name: &str) -> String {
        format!("{}.{name}", section_name(self.dim))
    }
}

/// Compiles a parsed document into the contract tuple.
///
/// Every field of the document is either compiled, listed under
/// `unresolved`, or reported in `diagnostics`.
pub fn compile_contracts(doc: &IntentDocument) -> Result<ContractTuple, CompileError> {
    let mut k = ContractTuple::default();
    k.diagnostics.extend(doc.diagnostics.iter().map(|d| format!("{}: {}", d.path, d.message)));

    let task = doc.task();
    if let Some(n) = task.get("objective").filter(|n| !n.is_null()) {
        k.objective = string(n, "task.objective")?;
    }
    if let Some(n) = task.get("action_type").filter(|n| !n.is_null()) {
        k.action_type = string(n, "task.action_type")?;
    }
    if let Some(n) = task.get("version").filter(|n| !n.is_null()) {
        k.version = Some(string(n, "task.version")?);
    }

    let mut sections: Vec<Section> = Dimension::ALL.iter().map(|d| Section::new(doc, *d)).collect();
    for s in &mut sections {
        if s.node.is_none() || s.node.is_some_and(Node::is_null) {
            s.notes.push(format!("section {} is absent", section_name(s.dim)));
        }
    }
    let [sem, evid, proc_, inst] = &mut sections[..] else { unreachable!() };

    compile_semantic(sem, &mut k)?;
    compile_evidentiary(evid, &mut k)?;
    compile_procedural(proc_, &mut k)?;
    compile_institutional(inst, &mut k)?;

    for mut s in sections {
        let order = required_fields(s.dim);
        s.unresolved.sort_by_key(|f| order.iter().position(|r| r == f).unwrap_or(order.len()));
        k.unresolved.insert(s.dim, s.unresolved);
        k.diagnostics.extend(s.notes);
    }
    Ok(k)
}

fn compile_semantic(s: &mut Section, k: &mut ContractTuple) -> CResult<()> {
    let c = &mut k.semantic;
    if let Some(n) = s.field("entities") {
        c.entities = string_list(n, &s.path("entities"))?;
    }
    if let Some(n) = s.field("acceptance_criteria") {
        let field = s.path("acceptance_criteria");
        match &n.value {
            Value::Str(t) if t == "open" => {
                c.open = true;
                s.unresolve("acceptance_criteria");
                s.notes.push("acceptance_criteria marked open".into());
            }
            Value::Seq(items) if items.is_empty() => {
                s.unresolve("acceptance_criteria");
                s.notes.push("acceptance_criteria is empty".into());
            }
            Value::Seq(items) => {
                for item in items {
                    let text = string(item, &field)?;
                    match parse_condition(&text) {
                        Ok(expr) => c.acceptance_criteria.push(expr),
                        Err(error) => {
                            let Some(name) = proposition_name(&text) else {
                                return Err(CompileError::Condition { field, text, error });
                            };
                            s.notes.push(format!("acceptance criterion \"{text}\" compiled to proposition {name}"));
                            c.acceptance_criteria.push(ConditionExpr { source: text, root: Expr::ident(&name) });
                        }
                    }
                }
            }
            _ => return Err(type_err(n, &field, "sequence or `open`")),
        }
    }
    if let Some(n) = s.field("ambiguity_policy") {
        let field = s.path("ambiguity_policy");
        for e in mapping(n, &field)? {
            let mv: AmbiguityMove =
                string(&e.value, &field)?.parse().map_err(|m: String| invalid(&e.value, &field, m))?;
            c.ambiguity_policy.insert(e.key.clone(), mv);
        }
    }
    Ok(())
}

fn compile_evidentiary(s: &mut Section, k: &mut ContractTuple) -> CResult<()> {
    let c = &mut k.evidentiary;
    if let Some(n) = s.field("admissible_sources") {
        let field = s.path("admissible_sources");
        let Value::Seq(items) = &n.value else {
            return Err(type_err(n, &field, "sequence"));
        };
        for item in items {
            let rule = parse_source_rule(&string(item, &field)?).map_err(|m| invalid(item, &field, m))?;
            c.admissible_sources.push(rule);
        }
    }
    if let Some(n) = s.field("conflict_resolution") {
        let field = s.path("conflict_resolution");
        c.conflict_resolution = match &n.value {
            Value::Seq(_) => string_list(n, &field)?,
            _ => {
                let text = string(n, &field)?;
                let parts: Vec<String> = text.split(" overrides ").map(|p| p.trim().to_string()).collect();
                if parts.iter().any(String::is_empty) {
                    return Err(invalid(n, &field, format!("cannot read priority order from \"{text}\"")));
                }
                parts
            }
        };
    }
    if let Some(n) = s.field("required_sources") {
        c.required_sources = string_list(n, &s.path("required_sources"))?;
    }
    if let Some(n) = s.field("freshness_clock") {
        let clock = string(n, &s.path("freshness_clock"))?;
        if clock != "episode" {
            return Err(invalid(n, &s.path("freshness_clock"), "only the `episode` clock is supported"));
        }
        c.freshness_clock = clock;
    }
    Ok(())
}

fn compile_procedural(s: &mut Section, k: &mut ContractTuple) -> CResult<()> {
    let c = &mut k.procedural;
    if let Some(n) = s.field("workflow") {
        c.workflow = string_list(n, &s.path("workflow"))?;
        if c.workflow.is_empty() {
            s.unresolve("workflow");
        }
    }
    if let Some(n) = s.field("allowed_tools") {
        c.allowed_tools = Some(string_list(n, &s.path("allowed_tools"))?.into_iter().collect());
    }
    if let Some(n) = s.field("rollback") {
        c.rollback = Some(string(n, &s.path("rollback"))?);
    }
    if let Some(n) = s.field("step_of_op") {
        let field = s.path("step_of_op");
        for e in mapping(n, &field)? {
            let step = string(&e.value, &field)?;
            if !c.workflow.is_empty() && !c.workflow.contains(&step) {
                return Err(invalid(&e.value, &field, format!("step {step} is not in the workflow")));
            }
            c.step_of_op.insert(e.key.clone(), step);
        }
    }
    if let Some(n) = s.field("rollback_required_ops") {
        c.rollback_required_ops = string_list(n, &s.path("rollback_required_ops"))?.into_iter().collect();
    }
    if let Some(n) = s.field("stop_conditions") {
        let field = s.path("stop_conditions");
        let Value::Seq(items) = &n.value else {
            return Err(type_err(n, &field, "sequence"));
        };
        for item in items {
            c.stop_conditions.push(condition(item, &field)?);
        }
    }
    if let Some(n) = s.field("retry_limit") {
        let field = s.path("retry_limit");
        let v = integer(n, &field)?;
        c.retry_limit = u32::try_from(v).map_err(|_| invalid(n, &field, "must be a nonnegative integer"))?;
    }
    Ok(())
}

fn compile_institutional(s: &mut Section, k: &mut ContractTuple) -> CResult<()> {
    let c = &mut k.institutional;
    if let Some(n) = s.field("autonomous_if") {
        c.autonomous_if = Some(condition(n, &s.path("autonomous_if"))?);
    }
    if let Some(n) = s.field("escalate_if") {
        c.escalate_if = Some(condition(n, &s.path("escalate_if"))?);
    }

    let explicit = s.node.and_then(|n| n.get("audit_retention_days")).filter(|n| !n.is_null());
    let audit = s.node.and_then(|n| n.get("audit")).filter(|n| !n.is_null());
    if let Some(n) = explicit {
        c.audit_retention_days = Some(integer(n, &s.path("audit_retention_days"))?);
    } else if let Some(n) = audit {
        let text = string(n, &s.path("audit"))?;
        match retention_from_audit(&text) {
            Some(days) => c.audit_retention_days = Some(days),
            None => s.notes.push(format!("audit policy \"{text}\" has no retention period")),
        }
    }
    match c.audit_retention_days {
        Some(d) if d < 0 => return Err(CompileError::NegativeRetention(d)),
        Some(_) => {}
        None => s.unresolve("audit_retention_days"),
    }

    if let Some(n) = s.field("role_permissions") {
        let field = s.path("role_permissions");
        let mut roles = BTreeMap::new();
        for e in mapping(n, &field)? {
            let ops: BTreeSet<String> = string_list(&e.value, &field)?.into_iter().collect();
            roles.insert(e.key.clone(), ops);
        }
        c.role_permissions = Some(roles);
    }
    if let Some(n) = s.field("risk_of_op") {
        let field = s.path("risk_of_op");
        for e in mapping(n, &field)? {
            let level: RiskLevel =
                string(&e.value, &field)?.parse().map_err(|m: String| invalid(&e.value, &field, m))?;
            c.risk_of_op.insert(e.key.clone(), level);
        }
    }
    if let Some(n) = s.field("alpha_map") {
        let field = s.path("alpha_map");
        let mut declared = BTreeMap::new();
        for e in mapping(n, &field)? {
            let level: RiskLevel = e.key.parse().map_err(|m: String| invalid(&e.value, &field, m))?;
            let alpha = number(&e.value, &field)?;
            if alpha < Number::ZERO || alpha > Number::ONE {
                return Err(invalid(&e.value, &field, "threshold outside [0, 1]"));
            }
            declared.insert(level, alpha);
        }
        c.alpha_map = fill_alpha_map(&declared)?;
    }
    if let Some(n) = s.field("separation_pairs") {
        let field = s.path("separation_pairs");
        let Value::Seq(items) = &n.value else {
            return Err(type_err(n, &field, "sequence"));
        };
        for item in items {
            let pair = string_list(item, &field)?;
            let [x, y] = <[String; 2]>::try_from(pair).map_err(|_| invalid(item, &field, "expected [op, op]"))?;
            c.separation_pairs.push((x, y));
        }
    }
    if let Some(n) = s.field("ordering_rules") {
        let field = s.path("ordering_rules");
        let Value::Seq(items) = &n.value else {
            return Err(type_err(n, &field, "sequence"));
        };
        for item in items {
            let text = string(item, &field)?;
            let Some((x, y)) = text.split_once(" before ") else {
                return Err(invalid(item, &field, format!("expected \"x before y\", found \"{text}\"")));
            };
            c.ordering_rules.push((x.trim().to_string(), y.trim().to_string()));
        }
    }
    if let Some(n) = s.field("cumulative_risk_cap") {
        c.cumulative_risk_cap = Some(number(n, &s.path("cumulative_risk_cap"))?);
    }
    if let Some(n) = s.field("approved_composites") {
        c.approved_composites = string_list(n, &s.path("approved_composites"))?.into_iter().collect();
    }
    Ok(())
}

/// Checks the declared thresholds are nondecreasing in risk order, then
/// fills undeclared levels with the larger of the default and the level
/// below.
fn fill_alpha_map(declared: &BTreeMap<RiskLevel, Number>) -> CResult<BTreeMap<RiskLevel, Number>> {
    let values: Vec<Number> = declared.values().copied().collect();
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(CompileError::AlphaNotMonotone);
    }
    let defaults = default_alpha_map();
    let mut out = BTreeMap::new();
    let mut floor = Number::ZERO;
    for level in RiskLevel::ALL {
        let v = match declared.get(&level) {
            Some(v) => *v,
            None => {
                let next_declared = declared.range(level..).next().map(|(_, v)| *v).unwrap_or(Number::ONE);
                defaults[&level].max(floor).min(next_declared)
            }
        };
        floor = v;
        out.insert(level, v);
    }
    Ok(out)
}

/// Parses and compiles in one step.
pub fn compile_text(text: &str) -> Result<ContractTuple, IntentError> {
    let doc = parse_intent_document(text)?;
    Ok(compile_contracts(&doc)?)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntentError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::ExprKind;

    const LISTING: &str = r#"task:
  objective: "rebook employee travel after meeting change"
  action_type: "travel_rebooking"

semantic_contract:
  entities: [traveler_id, booking_id, destination]
  acceptance_criteria:
    - "arrival before meeting_start_time"
    - "same cabin unless approved"
  ambiguity_policy:
    missing_meeting_time: "ask"

evidentiary_contract:
  admissible_sources:
    - "corporate_travel_policy:current_version"
    - "current_booking_record"
    - "airline_inventory_api:<15min"
  conflict_resolution: "policy overrides preference"

procedural_contract:
  workflow:
    - retrieve_booking
    - check_policy
    - search_alternatives
    - hold_fare_if_within_envelope
  rollback: "release_fare_hold"

institutional_contract:
  autonomous_if: "domestic && fare_delta <= 200 && same_cabin"
  escalate_if: "international || fare_delta > 200 || visa_risk"
  audit: "retain_logs_365_days"
"#;

    #[test]
    fn listing_compiles_closed() {
        let doc = parse_intent_document(LISTING).unwrap();
        assert!(doc.diagnostics.is_empty());
        let k = compile_contracts(&doc).unwrap();
        assert_eq!(
            k.institutional.autonomous_if.as_ref().unwrap().source,
            "domestic && fare_delta <= 200 && same_cabin"
        );
        assert_eq!(k.institutional.audit_retention_days, Some(365));
        let air = k.evidentiary.rule_for("airline_inventory_api").unwrap();
        assert_eq!(air.max_age_seconds, Some(Number::int(900)));
        let policy = k.evidentiary.rule_for("corporate_travel_policy").unwrap();
        assert!(policy.provenance_required && policy.version_match);
        assert_eq!(k.evidentiary.conflict_resolution, ["policy", "preference"]);
        assert_eq!(
            k.semantic.acceptance_criteria[0].root.kind,
            ExprKind::Ident("arrival_before_meeting_start_time".into())
        );
        assert!(k.is_closed(), "{:?}", k.unresolved);
        assert_eq!(k.procedural.step_for("hold_fare"), Some("hold_fare_if_within_envelope"));
        assert_eq!(k.procedural.step_for("hold"), None);
    }

    #[test]
    fn empty_document_has_no_task() {
        assert_eq!(parse_intent_document("").unwrap_err(), ParseError::MissingTask);
        assert_eq!(
            parse_intent_document("semantic_contract:\n  entities: [a]\n").unwrap_err(),
            ParseError::MissingTask
        );
    }

    #[test]
    fn unknown_keys_are_kept_and_flagged() {
        let doc = parse_intent_document("task:\n  objective: x\n  foo: 1\n").unwrap();
        assert_eq!(doc.diagnostics.len(), 1);
        assert_eq!(doc.diagnostics[0].message, "unknown key foo");
        assert!(doc.task().get("foo").is_some());
        let k = compile_contracts(&doc).unwrap();
        assert!(k.diagnostics.iter().any(|d| d.contains("unknown key foo")));
    }

    #[test]
    fn absent_section_leaves_every_required_field_open() {
        let k = compile_text("task:\n  objective: x\n").unwrap();
        for dim in Dimension::ALL {
            assert_eq!(k.unresolved(dim), required_fields(dim));
        }
    }

    #[test]
    fn non_monotone_alpha_is_rejected() {
        let text = "task: {}\ninstitutional_contract:\n  alpha_map: {low: 0.9, high: 0.5}\n";
        assert_eq!(compile_text(text).unwrap_err().to_string(), "alpha_map not nondecreasing");
    }

    #[test]
    fn partial_alpha_map_is_filled_monotonically() {
        let text = "task: {}\ninstitutional_contract:\n  alpha_map: {low: 0.9}\n";
        let k = compile_text(text).unwrap();
        let v: Vec<Number> = k.institutional.alpha_map.values().copied().collect();
        assert_eq!(v, ["0.9", "0.9", "0.95", "0.99"].map(|s| s.parse().unwrap()));
    }

    #[test]
    fn negative_retention_is_rejected() {
        let text = "task: {}\ninstitutional_contract:\n  audit_retention_days: -1\n";
        assert!(matches!(compile_text(text).unwrap_err(), IntentError::Compile(CompileError::NegativeRetention(-1))));
    }

    #[test]
    fn bad_guard_is_an_error() {
        let text = "task: {}\ninstitutional_contract:\n  autonomous_if: \"a < b < c\"\n";
        let err = compile_text(text).unwrap_err().to_string();
        assert!(err.contains("chained comparison"), "{err}");
    }

    #[test]
    fn open_criteria_are_unresolved() {
        let text = "task: {}\nsemantic_contract:\n  acceptance_criteria: open\n";
        let k = compile_text(text).unwrap();
        assert!(k.semantic.open);
        assert!(k.is_unresolved(Dimension::Sem, "acceptance_criteria"));
    }

    #[test]
    fn source_rules() {
        assert_eq!(parse_source_rule("x:<30s").unwrap().max_age_seconds, Some(Number::int(30)));
        assert_eq!(parse_source_rule("x:<2h").unwrap().max_age_seconds, Some(Number::int(7200)));
        assert!(parse_source_rule("x:<0min").is_err());
        assert!(parse_source_rule("x:weird").is_err());
    }

    #[test]
    fn step_targets_must_be_in_workflow() {
        let text = "task: {}\nprocedural_contract:\n  workflow: [a, b]\n  step_of_op: {op: c}\n";
        assert!(compile_text(text).unwrap_err().to_string().contains("not in the workflow"));
    }

    #[test]
    fn round_trip_preserves_tree() {
        let doc = parse_intent_document(LISTING).unwrap();
        let again = parse_intent_document(&doc.to_text()).unwrap();
        assert_eq!(doc.root, again.root);
    }
}
