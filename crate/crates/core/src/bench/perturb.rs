//! Per-dimension perturbations that turn a clean episode into a
//! misclosure trap.

use crate::condition::{parse_condition, ConditionExpr, Expr};
use crate::contract::{ContractTuple, SourceRule};
use crate::model::Dimension;
use crate::router::MoveKind;

use super::episode::{BenchEpisode, Perturbation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PerturbError {
    #[error("episode {episode}: nothing to perturb on {dimension} ({why})")]
    NothingToPerturb { episode: String, dimension: Dimension, why: String },
    #[error("episode {0} is already perturbed")]
    AlreadyPerturbed(String),
    #[error("episode {episode}: invalid variant: {message}")]
    BadVariant { episode: String, message: String },
}

/// Suffix of the sanctioned alternative to a disallowed tool.
pub const SANCTIONED: &str = "_sanctioned";

fn variant_expr(text: &str) -> Result<ConditionExpr, String> {
    parse_condition(text).or_else(|e| {
        let words = text.split_whitespace().collect::<Vec<_>>();
        if words.is_empty() || !words.iter().all(|w| w.chars().all(|c| c.is_alphanumeric() || c == '_')) {
            return Err(e.to_string());
        }
        Ok(ConditionExpr { source: text.to_string(), root: Expr::ident(&words.join("_").to_lowercase()) })
    })
}

/// Applies the perturbation for `dim`, deterministically in `seed`. The
/// declared contract and the ground truth change together.
pub fn perturb(e: &BenchEpisode, dim: Dimension, seed: u64) -> Result<BenchEpisode, PerturbError> {
    if e.perturbation.is_some() {
        return Err(PerturbError::AlreadyPerturbed(e.base.id.clone()));
    }
    let nothing =
        |why: &str| PerturbError::NothingToPerturb { episode: e.base.id.clone(), dimension: dim, why: why.to_string() };
    let mut out = e.clone();
    let c1 = e.first_candidate().clone();
    let description;
    match dim {
        Dimension::Sem => {
            if e.variants.is_empty() {
                return Err(nothing("no stored criterion variants"));
            }
            let v = &e.variants[(seed % e.variants.len() as u64) as usize];
            let expr = variant_expr(&v.variant)
                .map_err(|message| PerturbError::BadVariant { episode: e.base.id.clone(), message })?;
            for k in [&mut out.contract, &mut out.ground_truth] {
                let slot = k.semantic.acceptance_criteria.get_mut(v.index).ok_or_else(|| PerturbError::BadVariant {
                    episode: e.base.id.clone(),
                    message: format!("criterion index {} out of range", v.index),
                })?;
                *slot = expr.clone();
            }
            description = format!("criterion {} read as \"{}\"", v.index, v.variant);
            out.expected_behavior = MoveKind::Ask;
        }
        Dimension::Evid => {
            // Candidate (record, mode) pairs over the first candidate's
            // citations with an admissibility rule.
            let mut options = Vec::new();
            for id in &c1.citations {
                let Some(rec) = e.base.evidence_record(id) else { continue };
                let Some(rule) = e.contract.evidentiary.rule_for(&rec.source_class) else {
                    continue;
                };
                if rule.max_age_seconds.is_some() {
                    options.push((id.clone(), "age"));
                }
                if rule.provenance_required && rec.provenance.is_some() {
                    options.push((id.clone(), "strip"));
                }
                options.push((id.clone(), "disallow"));
            }
            if options.is_empty() {
                return Err(nothing("the first candidate cites no admissible evidence"));
            }
            let (id, mode) = options[(seed % options.len() as u64) as usize].clone();
            let rec = out.base.evidence.iter_mut().find(|r| r.id == id).expect("cited record exists");
            out.fresh_evidence.push(rec.clone());
            let rule: SourceRule = e.contract.evidentiary.rule_for(&rec.source_class).expect("rule").clone();
            match mode {
                "age" => {
                    let max = rule.max_age_seconds.expect("age option has a bound");
                    rec.timestamp = e.now - max - crate::number::Number::int(60);
                    description = format!("record {id} aged to {}s", max + crate::number::Number::int(60));
                }
                "strip" => {
                    rec.provenance = None;
                    description = format!("record {id} provenance removed");
                }
                _ => {
                    rec.admissible_flag = Some(false);
                    description = format!("record {id} disallowed by policy");
                }
            }
            out.expected_behavior = MoveKind::Retrieve;
        }
        Dimension::Proc => {
            let Some(tools) = e.contract.procedural.allowed_tools.as_ref() else {
                return Err(nothing("allowed_tools is unresolved"));
            };
            if !tools.contains(&c1.tool) {
                return Err(nothing("the canonical tool is already disallowed"));
            }
            let sanctioned = format!("{}{SANCTIONED}", c1.tool);
            for k in [&mut out.contract, &mut out.ground_truth] {
                if let Some(t) = k.procedural.allowed_tools.as_mut() {
                    t.remove(&c1.tool);
                    t.insert(sanctioned.clone());
                }
            }
            let copies: Vec<_> = e
                .base
                .action_space
                .iter()
                .filter(|a| a.tool == c1.tool)
                .map(|a| {
                    let mut b = a.clone();
                    b.id = format!("{}{SANCTIONED}", a.id);
                    b.tool.clone_from(&sanctioned);
                    b
                })
                .collect();
            for c in &copies {
                if let Some(orig) = c.id.strip_suffix(SANCTIONED) {
                    if e.ratified_actions.contains(orig) {
                        out.ratified_actions.insert(c.id.clone());
                    }
                }
            }
            out.base.action_space.extend(copies);
            description = format!("tool {} disallowed; {sanctioned} sanctioned", c1.tool);
            out.expected_behavior = MoveKind::Simulate;
        }
        Dimension::Inst => {
            let permitted = e.contract.institutional.permits(&c1.actor, &c1.op);
            if permitted != Some(true) {
                return Err(nothing("the actor holds no permission for the executed op"));
            }
            for k in [&mut out.contract, &mut out.ground_truth] {
                remove_permission(k, &c1.actor, &c1.op);
            }
            description = format!("{} may no longer {}", c1.actor, c1.op);
            out.expected_behavior = MoveKind::Escalate;
            out.base.requires_escalation = Some(true);
            out.solvable = false;
        }
    }
    out.perturbation = Some(Perturbation { dimension: dim, seed, description });
    Ok(out)
}

fn remove_permission(k: &mut ContractTuple, actor: &str, op: &str) {
    if let Some(ops) = k.institutional.role_permissions.as_mut().and_then(|r| r.get_mut(actor)) {
        ops.remove(op);
    }
}
