mod common;

use common::*;
use intentc::bench::{
    classify_failure, internalization_gate, perturb, run_episode, wilson_lower, Agent, FailureLabel, GateError,
    GateThresholds, PerturbError, RoutineStats, Suite, Z95,
};
use intentc::envelope::membership_after;
use intentc::{Config, Dimension, EvalContext, MoveKind, TruthValue};

#[test]
fn inst_perturbation_keeps_drafting() {
    let e = perturb(&load("travel_domestic_rebook"), Dimension::Inst, 0).unwrap();
    let inst = &e.contract.institutional;
    assert_eq!(inst.permits("travel_agent", "draft_notification"), Some(true));
    assert_eq!(inst.permits("travel_agent", "hold_fare"), Some(false));
    assert_eq!(inst.permits("travel_agent", "purchase_ticket"), Some(false));
    assert_eq!(e.expected_behavior, MoveKind::Escalate);
}

#[test]
fn evid_age_pushes_inventory_past_its_window() {
    let base = load("travel_domestic_rebook");
    let config = Config::default();
    let mut hits = 0;
    for seed in 0..12 {
        let e = perturb(&base, Dimension::Evid, seed).unwrap();
        let p = e.perturbation.as_ref().unwrap();
        if p.description != "record inventory_ua512 aged to 960s" {
            continue;
        }
        hits += 1;
        let rec = e.base.evidence_record("inventory_ua512").unwrap();
        assert_eq!(e.now - rec.timestamp, n(960));
        let cx = EvalContext::new(&e.base, &e.contract, e.now, &config);
        let a = e.base.action("hold_fare_150").unwrap();
        let d = membership_after(a, &cx, &cx.history_executed());
        assert_eq!(d.value(Dimension::Evid), TruthValue::False);
        assert_eq!(e.expected_behavior, MoveKind::Retrieve);
    }
    assert!(hits > 0, "no seed ages the inventory record");
}

#[test]
fn evid_without_evidence_has_nothing_to_perturb() {
    let mut e = load("travel_domestic_rebook");
    e.base.evidence.clear();
    let err = perturb(&e, Dimension::Evid, 0).unwrap_err();
    assert!(matches!(err, PerturbError::NothingToPerturb { .. }));
    assert!(err.to_string().contains("nothing to perturb"));
}

#[test]
fn perturbing_twice_is_refused() {
    let e = perturb(&load("sw_feature_flag"), Dimension::Proc, 3).unwrap();
    assert!(matches!(perturb(&e, Dimension::Inst, 0), Err(PerturbError::AlreadyPerturbed(_))));
}

#[test]
fn search_cannot_fix_authority() {
    let config = Config::default();
    let e = perturb(&load("travel_domestic_rebook"), Dimension::Inst, 0).unwrap();

    let naive = run_episode(Agent::Naive, &e, &config).outcome;
    assert_eq!(naive.authorized, Some(false));
    assert_eq!(naive.label, FailureLabel::Misdelegation);

    let aware = run_episode(Agent::ContractAware, &e, &config);
    assert!(aware.outcome.moves.contains(&MoveKind::Escalate));
    let executed_unauthorized = aware.annotations.authorized.values().any(|ok| !ok);
    assert!(!executed_unauthorized);

    for k in [1, 4, 16] {
        let o = run_episode(Agent::SearchBooster(k), &e, &config).outcome;
        assert_eq!(o.authorized, Some(false), "k = {k}");
        assert_eq!(o.label, FailureLabel::Misdelegation, "k = {k}");
    }
}

#[test]
fn oracle_on_clean_episodes_is_labelled_none() {
    let config = Config::default();
    for name in ["travel_domestic_rebook", "sw_rate_limit_bump", "support_late_delivery"] {
        let o = run_episode(Agent::OracleContract, &load(name), &config).outcome;
        assert_eq!(o.label, FailureLabel::None, "{name}");
    }
}

#[test]
fn classifier_exemplars() {
    for (what, o, want) in exemplars() {
        assert_eq!(classify_failure(&o), want, "{what}");
    }
    assert_eq!(classify_failure(&executed(true, true)), FailureLabel::None);
}

fn stats(frequency: u64, ok: u64, trials: u64, stability: f64, rollback: bool) -> RoutineStats {
    RoutineStats {
        routine_id: "rebook".into(),
        frequency,
        compliance_successes: ok,
        compliance_trials: trials,
        stability,
        monitorable: true,
        rollback_defined: rollback,
    }
}

#[test]
fn gate_examples() {
    let th = GateThresholds::default();
    let v = internalization_gate(&stats(120, 97, 100, 0.98, true), &th).unwrap();
    assert!(v.eligible, "{v:?}");
    assert!((v.compliance_lower_bound - 0.915).abs() < 1e-3, "{}", v.compliance_lower_bound);
    let v = internalization_gate(&stats(120, 97, 100, 0.98, false), &th).unwrap();
    assert_eq!((v.eligible, v.failing), (false, vec!["rollback"]));
    let v = internalization_gate(&stats(3, 97, 100, 0.98, true), &th).unwrap();
    assert_eq!((v.eligible, v.failing), (false, vec!["frequency"]));
    assert!(matches!(internalization_gate(&stats(120, 0, 0, 0.98, true), &th), Err(GateError::NoTrials(_))));
}

#[test]
fn wilson_matches_score_test_inversion() {
    for trials in [1u64, 2, 5, 10, 37, 100, 1000] {
        for k in 0..=trials {
            let a = wilson_lower(k, trials, Z95);
            let b = brute_wilson_lower(k, trials, Z95);
            assert!((a - b).abs() < 1e-9, "{k}/{trials}: {a} vs {b}");
        }
    }
}

#[test]
fn small_suite_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("s.manifest");
    std::fs::write(
        &m,
        format!(
            "episodes:\n  - {}\n  - {}\nagents: [naive, \"search_booster:4\", oracle_contract]\ndimensions: [none, evid, inst]\nseeds: [0, 5]\n",
            corpus("episodes/travel_domestic_rebook.case").display(),
            corpus("episodes/support_duplicate_charge.case").display(),
        ),
    )
    .unwrap();
    let config = Config::default();
    let a = intentc::bench::run_suite(&Suite::load(&m).unwrap(), &config).unwrap().to_json();
    let b = intentc::bench::run_suite(&Suite::load(&m).unwrap(), &config).unwrap().to_json();
    assert_eq!(a, b);
}
