//! The compiled contract tuple `K = (S, E, M, I)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::condition::ConditionExpr;
use crate::model::{Dimension, RiskLevel};
use crate::number::Number;

impl Serialize for ConditionExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.root)
    }
}

/// Fields each dimension needs before its predicate can be fully decided.
pub fn required_fields(dim: Dimension) -> &'static [&'static str] {
    match dim {
        Dimension::Sem => &["entities", "acceptance_criteria", "ambiguity_policy"],
        Dimension::Evid => &["admissible_sources", "conflict_resolution"],
        Dimension::Proc => &["workflow", "rollback"],
        Dimension::Inst => &["autonomous_if", "escalate_if", "audit_retention_days"],
    }
}

/// What to do when an ambiguous binding is encountered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityMove {
    Ask,
    Escalate,
    Abstain,
}

impl FromStr for AmbiguityMove {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ask" => Ok(AmbiguityMove::Ask),
            "escalate" => Ok(AmbiguityMove::Escalate),
            "abstain" => Ok(AmbiguityMove::Abstain),
            other => Err(format!("unknown ambiguity move `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SemanticContract {
    pub entities: Vec<String>,
    pub acceptance_criteria: Vec<ConditionExpr>,
    /// Criteria explicitly left open by the author.
    pub open: bool,
    pub ambiguity_policy: BTreeMap<String, AmbiguityMove>,
}

/// Admissibility rule for one source class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SourceRule {
    pub source_class: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_age_seconds: Option<Number>,
    pub provenance_required: bool,
    /// Record must be confirmed as the current version (via its
    /// admissibility flag).
    pub version_match: bool,
}

impl SourceRule {
    pub fn plain(source_class: &str) -> SourceRule {
        SourceRule {
            source_class: source_class.to_string(),
            max_age_seconds: None,
            provenance_required: false,
            version_match: false,
        }
    }
}

impl fmt::Display for SourceRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source_class)?;
        if let Some(age) = self.max_age_seconds {
            write!(f, ":<{age}s")?;
        }
        if self.version_match {
            f.write_str(":current_version")?;
        } else if self.provenance_required {
            f.write_str(":provenance")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct EvidentiaryContract {
    pub admissible_sources: Vec<SourceRule>,
    /// Source classes, highest priority first.
    pub conflict_resolution: Vec<String>,
    /// Name of the clock `now` is read from. Only the episode clock exists.
    pub freshness_clock: String,
    /// Source classes every action must cite.
    pub required_sources: Vec<String>,
}

impl EvidentiaryContract {
    pub fn rule_for(&self, source_class: &str) -> Option<&SourceRule> {
        self.admissible_sources.iter().find(|r| r.source_class == source_class)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ProceduralContract {
    pub workflow: Vec<String>,
    /// `None` when the document leaves the tool set unspecified.
    pub allowed_tools: Option<BTreeSet<String>>,
    pub step_of_op: BTreeMap<String, String>,
    /// Operation that undoes the workflow's side effects.
    pub rollback: Option<String>,
    pub rollback_required_ops: BTreeSet<String>,
    pub stop_conditions: Vec<ConditionExpr>,
    pub retry_limit: u32,
}

impl ProceduralContract {
    /// Workflow step an operation performs. Falls back to a step named
    /// like the operation, then to a guarded step `<op>_if_<guard>`.
    pub fn step_for(&self, op: &str) -> Option<&str> {
        if let Some(s) = self.step_of_op.get(op) {
            return Some(s);
        }
        let guarded = |s: &&String| s.strip_prefix(op).is_some_and(|rest| rest.starts_with("_if_"));
        self.workflow.iter().find(|s| *s == op).or_else(|| self.workflow.iter().find(guarded)).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstitutionalContract {
    pub autonomous_if: Option<ConditionExpr>,
    pub escalate_if: Option<ConditionExpr>,
    pub role_permissions: Option<BTreeMap<String, BTreeSet<String>>>,
    pub risk_of_op: BTreeMap<String, RiskLevel>,
    pub alpha_map: BTreeMap<RiskLevel, Number>,
    pub audit_retention_days: Option<i64>,
    pub separation_pairs: Vec<(String, String)>,
    /// `(x, y)`: every `y` must be preceded by an `x`.
    pub ordering_rules: Vec<(String, String)>,
    pub cumulative_risk_cap: Option<Number>,
    pub approved_composites: BTreeSet<String>,
}

/// Risk thresholds used when a document gives no `alpha_map`.
pub fn default_alpha_map() -> BTreeMap<RiskLevel, Number> {
    [
        (RiskLevel::Low, Number::new(6, 10)),
        (RiskLevel::Medium, Number::new(8, 10)),
        (RiskLevel::High, Number::new(95, 100)),
        (RiskLevel::Critical, Number::new(99, 100)),
    ]
    .into_iter()
    .collect()
}

impl Default for InstitutionalContract {
    fn default() -> Self {
        InstitutionalContract {
            autonomous_if: None,
            escalate_if: None,
            role_permissions: None,
            risk_of_op: BTreeMap::new(),
            alpha_map: default_alpha_map(),
            audit_retention_days: None,
            separation_pairs: Vec::new(),
            ordering_rules: Vec::new(),
            cumulative_risk_cap: None,
            approved_composites: BTreeSet::new(),
        }
    }
}

impl InstitutionalContract {
    pub fn permits(&self, actor: &str, op: &str) -> Option<bool> {
        self.role_permissions.as_ref()?.get(actor).map(|ops| ops.contains(op))
    }
}

/// The four compiled contracts plus whatever the document left open.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractTuple {
    pub objective: String,
    pub action_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub semantic: SemanticContract,
    pub evidentiary: EvidentiaryContract,
    pub procedural: ProceduralContract,
    pub institutional: InstitutionalContract,
    /// Required-but-absent fields; always keyed by all four dimensions.
    pub unresolved: BTreeMap<Dimension, Vec<String>>,
    pub diagnostics: Vec<String>,
}

impl Default for ContractTuple {
    fn default() -> Self {
        ContractTuple {
            objective: String::new(),
            action_type: String::new(),
            version: None,
            semantic: SemanticContract::default(),
            evidentiary: EvidentiaryContract { freshness_clock: "episode".into(), ..Default::default() },
            procedural: ProceduralContract { retry_limit: 3, ..Default::default() },
            institutional: InstitutionalContract::default(),
            unresolved: Dimension::ALL.iter().map(|d| (*d, Vec::new())).collect(),
            diagnostics: Vec::new(),
        }
    }
}

impl ContractTuple {
    pub fn unresolved(&self, dim: Dimension) -> &[String] {
        self.unresolved.get(&dim).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_unresolved(&self, dim: Dimension, field: &str) -> bool {
        self.unresolved(dim).iter().any(|f| f == field)
    }

    /// Whether every dimension compiled with nothing left open.
    pub fn is_closed(&self) -> bool {
        self.unresolved.values().all(Vec::is_empty)
    }

    /// Mutable handles on every condition in the tuple, in a fixed order.
    pub fn conditions_mut(&mut self) -> Vec<&mut ConditionExpr> {
        let mut out: Vec<&mut ConditionExpr> = self.semantic.acceptance_criteria.iter_mut().collect();
        out.extend(self.procedural.stop_conditions.iter_mut());
        out.extend(self.institutional.autonomous_if.iter_mut());
        out.extend(self.institutional.escalate_if.iter_mut());
        out
    }

    pub fn conditions(&self) -> Vec<&ConditionExpr> {
        let mut out: Vec<&ConditionExpr> = self.semantic.acceptance_criteria.iter().collect();
        out.extend(self.procedural.stop_conditions.iter());
        out.extend(self.institutional.autonomous_if.iter());
        out.extend(self.institutional.escalate_if.iter());
        out
    }

    /// Risk level of an operation, or `default` when undeclared.
    pub fn risk_of(&self, op: &str, default: RiskLevel) -> RiskLevel {
        self.institutional.risk_of_op.get(op).copied().unwrap_or(default)
    }

    pub fn alpha(&self, level: RiskLevel) -> Number {
        self.institutional.alpha_map.get(&level).copied().unwrap_or(Number::ONE)
    }
}
