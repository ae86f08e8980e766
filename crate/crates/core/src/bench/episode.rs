//! Benchmark episodes and the `.case` file format they are stored in.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::condition::ConditionExpr;
use crate::contract::ContractTuple;
use crate::doc;
use crate::intent::{compile_text, IntentError};
use crate::model::{validate_episode, Action, AttrMap, Dimension, Event, EventTrace, EvidenceRecord, TaskEpisode};
use crate::number::Number;
use crate::predicate::{eval_expr, TruthValue};
use crate::router::MoveKind;

/// A stored alternative reading of one acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemVariant {
    pub index: usize,
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    /// Ranked candidate action ids, best first.
    pub candidates: Vec<String>,
    #[serde(default)]
    pub variants: Vec<SemVariant>,
    /// Actions a human reviewer approves when asked.
    #[serde(default)]
    pub ratified_actions: Vec<String>,
    #[serde(default)]
    pub rater_labels: Option<Vec<Vec<bool>>>,
    #[serde(default = "yes")]
    pub solvable: bool,
    /// Perturbation dimensions this episode takes part in; all when absent.
    #[serde(default)]
    pub dimensions: Option<Vec<String>>,
    #[serde(default)]
    pub now: Number,
}

fn yes() -> bool {
    true
}

/// The on-disk episode record.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseFile {
    pub id: String,
    #[serde(default)]
    pub family: String,
    #[serde(default)]
    pub request: String,
    pub policy: String,
    #[serde(default)]
    pub ground_truth_policy: Option<String>,
    #[serde(default)]
    pub context: AttrMap,
    #[serde(default)]
    pub action_space: Vec<Action>,
    #[serde(default)]
    pub evidence: Vec<EvidenceRecord>,
    #[serde(default)]
    pub history: Vec<Event>,
    #[serde(default)]
    pub requires_escalation: Option<bool>,
    #[serde(default)]
    pub bench: Option<BenchSection>,
}

#[derive(Debug, thiserror::Error)]
pub enum CaseError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Doc(#[from] doc::DocError),
    #[error("invalid episode: {0}")]
    Shape(String),
    #[error("{path}: {source}")]
    Policy { path: String, source: IntentError },
    #[error("episode {id}: {message}")]
    Invalid { id: String, message: String },
}

pub fn read_file(path: &Path) -> Result<String, CaseError> {
    std::fs::read_to_string(path)
        .map_err(|e| CaseError::Io { path: path.display().to_string(), message: e.to_string() })
}

impl CaseFile {
    pub fn parse(text: &str) -> Result<CaseFile, CaseError> {
        let node = doc::parse(text)?;
        serde_json::from_value(node.to_json()).map_err(|e| CaseError::Shape(e.to_string()))
    }

    /// The task episode, with history events linked to their actions.
    pub fn episode(&self) -> TaskEpisode {
        let mut e = TaskEpisode {
            id: self.id.clone(),
            request: self.request.clone(),
            context: self.context.clone(),
            action_space: self.action_space.clone(),
            evidence: self.evidence.clone(),
            policy: self.policy.clone(),
            history: EventTrace { episode_id: self.id.clone(), events: self.history.clone() },
            requires_escalation: self.requires_escalation,
        };
        e.resolve_history_refs();
        e
    }
}

/// Reads a `.case` file as a plain task episode.
pub fn load_episode(path: &Path) -> Result<TaskEpisode, CaseError> {
    Ok(CaseFile::parse(&read_file(path)?)?.episode())
}

/// Description of the perturbation applied to an episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbation {
    pub dimension: Dimension,
    pub seed: u64,
    pub description: String,
}

/// A benchmark instance: the world an agent acts in, the contract it is
/// given, the ground truth the oracle judges by, and oracle data.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchEpisode {
    pub base: TaskEpisode,
    pub family: String,
    /// Contract the agents see.
    pub contract: ContractTuple,
    /// Contract the ratification oracle judges by.
    pub ground_truth: ContractTuple,
    /// The competence checker: acceptance criteria as originally written.
    pub checker: Vec<ConditionExpr>,
    pub candidates: Vec<String>,
    pub variants: Vec<SemVariant>,
    /// Original versions of records a perturbation corrupted; retrieval
    /// restores them.
    pub fresh_evidence: Vec<EvidenceRecord>,
    pub ratified_actions: BTreeSet<String>,
    pub rater_labels: Option<Vec<Vec<bool>>>,
    pub solvable: bool,
    pub dimensions: Option<Vec<String>>,
    pub perturbation: Option<Perturbation>,
    pub expected_behavior: MoveKind,
    pub now: Number,
}

impl BenchEpisode {
    /// Loads a case file and the policy documents it names, resolving
    /// paths against the case file's directory.
    pub fn load(path: &Path) -> Result<BenchEpisode, CaseError> {
        let case = CaseFile::parse(&read_file(path)?)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let compile = |rel: &str| -> Result<ContractTuple, CaseError> {
            let p: PathBuf = dir.join(rel);
            compile_text(&read_file(&p)?).map_err(|source| CaseError::Policy { path: p.display().to_string(), source })
        };
        let contract = compile(&case.policy)?;
        let ground_truth = match &case.ground_truth_policy {
            Some(p) => compile(p)?,
            None => contract.clone(),
        };
        BenchEpisode::from_parts(case, contract, ground_truth)
    }

    pub fn from_parts(
        case: CaseFile,
        contract: ContractTuple,
        ground_truth: ContractTuple,
    ) -> Result<BenchEpisode, CaseError> {
        let bench = case
            .bench
            .clone()
            .ok_or_else(|| CaseError::Invalid { id: case.id.clone(), message: "no bench section".into() })?;
        let base = case.episode();
        let invalid = |message: String| CaseError::Invalid { id: base.id.clone(), message };
        if let Some(d) = validate_episode(&base).first() {
            return Err(invalid(d.to_string()));
        }
        if bench.candidates.is_empty() {
            return Err(invalid("no candidates".into()));
        }
        for c in bench.candidates.iter().chain(&bench.ratified_actions) {
            if base.action(c).is_none() {
                return Err(invalid(format!("unknown action {c}")));
            }
        }
        let mut ep = BenchEpisode {
            family: case.family.clone(),
            checker: contract.semantic.acceptance_criteria.clone(),
            contract,
            ground_truth,
            candidates: bench.candidates,
            variants: bench.variants,
            fresh_evidence: Vec::new(),
            ratified_actions: bench.ratified_actions.into_iter().collect(),
            rater_labels: bench.rater_labels,
            solvable: bench.solvable,
            dimensions: bench.dimensions,
            perturbation: None,
            expected_behavior: MoveKind::Act,
            now: bench.now,
            base,
        };
        let first = ep.base.action(&ep.candidates[0]).expect("checked").clone();
        if !ep.checker_passes(&ep.checker, &first) {
            ep.expected_behavior = MoveKind::Search;
        }
        Ok(ep)
    }

    pub fn first_candidate(&self) -> &Action {
        self.base.action(&self.candidates[0]).expect("validated at load")
    }

    /// Whether this episode takes part in the given dimension cell
    /// (`None` is the unperturbed cell).
    pub fn takes_part(&self, dim: Option<Dimension>) -> bool {
        let name = dim.map_or("none", Dimension::as_str);
        self.dimensions.as_ref().is_none_or(|ds| ds.iter().any(|d| d == name))
    }

    /// The competence check: every criterion definitely holds.
    pub fn checker_passes(&self, checker: &[ConditionExpr], a: &Action) -> bool {
        let b = crate::model::action_bindings(a, &self.base);
        checker.iter().all(|c| eval_expr(c, &b).is_ok_and(|v| v == TruthValue::True))
    }
}
