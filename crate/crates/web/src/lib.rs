//! Browser bindings for the envelope explorer in `www/`.
//!
//! Every export takes plain text (intent document, case file, JSON
//! bindings) and returns a JSON string, so the page needs no glue beyond
//! `JSON.parse`. The `*_json` functions hold the logic and are plain Rust so
//! they can be tested natively.

use intentc::bench::CaseFile;
use intentc::envelope::{envelope_stability, membership_after, PerturbationKind, PerturbationSpec};
use intentc::model::{Action, Scalar};
use intentc::predicate::eval_expr;
use intentc::{compile_text, parse_condition, Config, ContractTuple, Dimension, EvalContext, Number, TaskEpisode};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const DEFAULT_POLICY: &str = include_str!("../../../corpus/policies/travel.intent");
pub const DEFAULT_CASE: &str = include_str!("../../../corpus/episodes/travel_domestic_rebook.case");

#[wasm_bindgen]
pub fn default_policy() -> String {
    DEFAULT_POLICY.to_string()
}

#[wasm_bindgen]
pub fn default_case() -> String {
    DEFAULT_CASE.to_string()
}

fn load(policy: &str, case: &str) -> Result<(ContractTuple, TaskEpisode, Number), String> {
    let k = compile_text(policy).map_err(|e| format!("policy: {e}"))?;
    let case = CaseFile::parse(case).map_err(|e| format!("case: {e}"))?;
    let now = case.bench.as_ref().map(|b| b.now).unwrap_or(Number::ZERO);
    Ok((k, case.episode(), now))
}

#[derive(Serialize)]
struct Row {
    action: String,
    fare_delta: Option<Number>,
    verdict: String,
    summary: String,
    dims: Vec<(String, String)>,
    reasons: Vec<String>,
}

fn row(a: &Action, cx: &EvalContext) -> Row {
    let prior = cx.history_executed();
    let d = membership_after(a, cx, &prior);
    Row {
        action: a.id.clone(),
        fare_delta: match a.bindings.get("fare_delta") {
            Some(Scalar::Num(n)) => Some(*n),
            _ => None,
        },
        verdict: d.verdict.to_string(),
        summary: d.summary(),
        dims: Dimension::ALL.iter().map(|dim| (dim.long_name().to_string(), d.value(*dim).to_string())).collect(),
        reasons: d.reasons.clone(),
    }
}

/// Compiles the policy and classifies every action of the case, then
/// sweeps `fare_delta` of the `template` action over `lo..=hi` in `step`s.
pub fn envelope_json(policy: &str, case: &str, template: &str, lo: i64, hi: i64, step: i64) -> Result<String, String> {
    if step <= 0 || hi < lo {
        return Err("grid needs lo <= hi and a positive step".into());
    }
    if (hi - lo) / step > 10_000 {
        return Err("grid too large".into());
    }
    let (k, e, now) = load(policy, case)?;
    let config = Config::default();
    let cx = EvalContext::new(&e, &k, now, &config);
    let actions: Vec<Row> = e.action_space.iter().map(|a| row(a, &cx)).collect();
    let mut grid = Vec::new();
    if let Some(t) = e.action(template) {
        let mut v = lo;
        while v <= hi {
            let mut a = t.clone();
            a.id = format!("{template}@{v}");
            a.bindings.insert("fare_delta".into(), v.into());
            grid.push(row(&a, &cx));
            v += step;
        }
    }
    let open: Vec<_> =
        Dimension::ALL.iter().map(|d| json!({ "dimension": d.long_name(), "unresolved": k.unresolved(*d) })).collect();
    Ok(json!({
        "objective": k.objective,
        "open": open,
        "actions": actions,
        "grid": grid,
    })
    .to_string())
}

/// Mean envelope stability under `seeds` random perturbations of one kind.
pub fn stability_json(policy: &str, case: &str, kind: &str, magnitude: &str, seeds: u32) -> Result<String, String> {
    let (k, e, now) = load(policy, case)?;
    let kind: PerturbationKind = kind.parse()?;
    let magnitude: Number = magnitude.parse().map_err(|_| format!("invalid magnitude `{magnitude}`"))?;
    let specs: Vec<PerturbationSpec> =
        (0..seeds.max(1) as u64).map(|s| PerturbationSpec::new(kind, magnitude, s)).collect();
    let s = envelope_stability(&k, &e, &specs, now, &Config::default()).map_err(|e| e.to_string())?;
    Ok(json!({ "stability": s, "perturbations": specs.len() }).to_string())
}

/// Evaluates a condition under Kleene logic. Missing identifiers are
/// unknown rather than errors.
pub fn condition_json(expr: &str, bindings: &str) -> Result<String, String> {
    let c = parse_condition(expr).map_err(|e| e.to_string())?;
    let b = if bindings.trim().is_empty() {
        Default::default()
    } else {
        serde_json::from_str(bindings).map_err(|e| format!("bindings: {e}"))?
    };
    let v = eval_expr(&c, &b).map_err(|e| e.to_string())?;
    Ok(json!({ "value": v, "normalized": c.root.to_string() }).to_string())
}

#[wasm_bindgen]
pub fn envelope(policy: &str, case: &str, template: &str, lo: i32, hi: i32, step: i32) -> Result<String, JsError> {
    envelope_json(policy, case, template, lo.into(), hi.into(), step.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(policy: &str, case: &str, kind: &str, magnitude: &str, seeds: u32) -> Result<String, JsError> {
    stability_json(policy, case, kind, magnitude, seeds).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn eval_condition(expr: &str, bindings: &str) -> Result<String, JsError> {
    condition_json(expr, bindings).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn fare_grid_crosses_the_threshold() {
        let v = parse(&envelope_json(DEFAULT_POLICY, DEFAULT_CASE, "hold_fare_150", 150, 250, 25).unwrap());
        let verdicts: Vec<_> = v["grid"].as_array().unwrap().iter().map(|r| r["verdict"].as_str().unwrap()).collect();
        assert_eq!(verdicts, ["inside", "inside", "inside", "outside", "outside"]);
        assert_eq!(v["actions"].as_array().unwrap().len(), 7);
    }

    #[test]
    fn unknown_template_gives_empty_grid() {
        let v = parse(&envelope_json(DEFAULT_POLICY, DEFAULT_CASE, "nope", 0, 10, 5).unwrap());
        assert!(v["grid"].as_array().unwrap().is_empty());
        assert!(envelope_json(DEFAULT_POLICY, DEFAULT_CASE, "nope", 10, 0, 5).is_err());
    }

    #[test]
    fn reordering_is_stable() {
        let v = parse(&stability_json(DEFAULT_POLICY, DEFAULT_CASE, "clause_reorder", "0", 4).unwrap());
        assert_eq!(v["stability"], 1);
        assert!(stability_json(DEFAULT_POLICY, DEFAULT_CASE, "melt", "0", 4).is_err());
    }

    #[test]
    fn kleene_evaluation() {
        let v = parse(&condition_json("fare_delta <= 200 || touches_auth", r#"{"fare_delta": 150}"#).unwrap());
        assert_eq!(v["value"], "true");
        let v = parse(&condition_json("fare_delta <= 200 && touches_auth", r#"{"fare_delta": 150}"#).unwrap());
        assert_eq!(v["value"], "unknown");
        assert!(condition_json("fare_delta <=", "").is_err());
    }
}
