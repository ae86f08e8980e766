//! Shared fixtures for the integration tests: corpus paths, a seeded
//! synthetic refund suite and a brute-force metrics oracle written against
//! the suite's own ground rules rather than the library's membership code.

#![allow(dead_code)]

use std::path::PathBuf;

use intentc::bench::{Agent, BenchEpisode, FailureLabel, Outcome, RoutineUse};
use intentc::metrics::{EpisodeRecord, MetricsReport, OracleAnnotations};
use intentc::model::{Action, EvidenceRecord, ReviewOutcome, Scalar};
use intentc::{compile_text, ContractTuple, Event, EventKind, EventTrace, MoveKind, Number, TaskEpisode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus(rel: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "corpus", rel].iter().collect()
}

pub fn read_corpus(rel: &str) -> String {
    std::fs::read_to_string(corpus(rel)).unwrap()
}

pub fn load(name: &str) -> BenchEpisode {
    BenchEpisode::load(&corpus(&format!("episodes/{name}.case"))).unwrap()
}

pub fn n(v: i64) -> Number {
    Number::int(v)
}

pub fn q(a: i128, b: i128) -> Number {
    Number::new(a, b)
}

pub const SUITE_NOW: i64 = 1000;
pub const ROLLBACK_BOUND: i64 = 60;

/// Ground truth of one refund action, independent of the library.
#[derive(Debug, Clone)]
pub struct RefundFacts {
    pub amount: Number,
    pub notified: bool,
    pub tool_allowed: bool,
    pub cites_order: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticEpisode {
    pub episode: TaskEpisode,
    pub trace: EventTrace,
    pub annotations: OracleAnnotations,
    pub order_total: Number,
    pub chargeback: bool,
    pub order_timestamp: Number,
    /// Facts for every `issue_refund` action, keyed by action id.
    pub facts: Vec<(String, RefundFacts)>,
}

impl SyntheticEpisode {
    fn facts(&self, id: &str) -> Option<&RefundFacts> {
        self.facts.iter().find(|(i, _)| i == id).map(|(_, f)| f)
    }

    fn order_fresh(&self, at: Number) -> bool {
        at - self.order_timestamp < n(3600)
    }

    /// Evidentiary predicate by hand: the policy citation is always
    /// admissible, the order record only while younger than an hour.
    pub fn evid_ok(&self, id: &str, at: Number) -> bool {
        self.facts(id).is_some_and(|f| !f.cites_order || self.order_fresh(at))
    }

    /// All four predicates by hand for a refund that follows the
    /// identity check and order review. `waive_inst` models ratification.
    pub fn all_true(&self, id: &str, at: Number, waive_inst: bool) -> bool {
        let Some(f) = self.facts(id) else {
            return false;
        };
        let sem = f.amount <= self.order_total && f.notified;
        let proc = f.tool_allowed;
        let inst = waive_inst || (f.amount <= n(100) && !self.chargeback);
        sem && self.evid_ok(id, at) && proc && inst
    }
}

pub fn support_contract() -> ContractTuple {
    compile_text(&read_corpus("policies/support.intent")).unwrap()
}

fn action(id: &str, op: &str, actor: &str, tool: &str) -> Action {
    Action::new(id, op, actor, tool)
}

/// Twenty seeded refund episodes with random traces. Each trace runs
/// sequentially from `SUITE_NOW` and executes at most one refund, possibly
/// followed by its rollback.
pub fn synthetic_suite(seed: u64, count: usize) -> Vec<SyntheticEpisode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| synthetic_episode(&mut rng, i)).collect()
}

fn synthetic_episode(rng: &mut ChaCha8Rng, i: usize) -> SyntheticEpisode {
    let order_total = q(rng.gen_range(40..=600), 4);
    let chargeback = rng.gen_bool(0.2);
    let order_timestamp = if rng.gen_bool(0.75) { n(900) } else { n(-5000) };
    let mut e = TaskEpisode { id: format!("syn_{i:02}"), ..Default::default() };
    e.context.insert("customer_id".into(), Scalar::Str(format!("C-{i}")));
    e.context.insert("order_id".into(), Scalar::Str(format!("O-{i}")));
    e.context.insert("order_total".into(), Scalar::Num(order_total));
    e.context.insert("chargeback_open".into(), Scalar::Bool(chargeback));
    e.evidence.push(EvidenceRecord {
        id: "order".into(),
        source_class: "order_system".into(),
        timestamp: order_timestamp,
        provenance: Some("orders db".into()),
        admissible_flag: None,
        payload: Default::default(),
    });
    e.evidence.push(EvidenceRecord {
        id: "policy".into(),
        source_class: "refund_policy".into(),
        timestamp: n(0),
        provenance: Some("policy wiki".into()),
        admissible_flag: Some(true),
        payload: Default::default(),
    });
    e.action_space.push(action("verify", "verify_identity", "support_agent", "crm"));
    e.action_space.push(action("review", "review_order", "support_agent", "crm"));
    let mut reverse = action("reverse", "reverse_refund", "billing_lead", "payments_api");
    reverse.citations = vec!["policy".into()];
    e.action_space.push(reverse);

    let mut facts = Vec::new();
    for j in 0..rng.gen_range(2..=5) {
        let f = RefundFacts {
            amount: q(rng.gen_range(0..=600), 4),
            notified: rng.gen_bool(0.8),
            tool_allowed: rng.gen_bool(0.8),
            cites_order: rng.gen_bool(0.6),
        };
        let id = format!("refund_{j}");
        let mut a =
            action(&id, "issue_refund", "support_agent", if f.tool_allowed { "payments_api" } else { "spreadsheet" });
        a.bindings.insert("refund_amount".into(), Scalar::Num(f.amount));
        a.bindings.insert("customer_notified".into(), Scalar::Bool(f.notified));
        a.citations = if f.cites_order { vec!["order".into(), "policy".into()] } else { vec!["policy".into()] };
        a.reversible = true;
        a.rollback_op = Some("reverse_refund".into());
        e.action_space.push(a);
        facts.push((id, f));
    }
    for (id, s, f) in [("verify", 500, 540), ("review", 540, 600)] {
        let a = e.action(id).unwrap().clone();
        e.history.events.push(Event::timed(EventKind::Execute, n(s), n(f)).with_action(a));
    }

    let mut trace = EventTrace::new(&e.id);
    let mut t = n(SUITE_NOW);
    let push = |trace: &mut EventTrace, ev: Event, t: &mut Number| {
        *t = ev.f;
        trace.events.push(ev);
    };
    let mut executed: Option<String> = None;
    for _ in 0..rng.gen_range(0..=4) {
        let kind = match rng.gen_range(0..4) {
            0 => EventKind::Compile,
            1 => EventKind::Search,
            2 => EventKind::Escalate,
            _ => EventKind::Wait,
        };
        let d = q(rng.gen_range(1..=40), rng.gen_range(1..=2));
        let mut ev = Event::timed(kind, t, t + d);
        if rng.gen_bool(0.3) {
            ev.c = q(rng.gen_range(0..=10), 3);
        }
        match kind {
            EventKind::Escalate => {
                ev.review_outcome = match rng.gen_range(0..4) {
                    0 => Some(ReviewOutcome::Changed),
                    1 => Some(ReviewOutcome::BoundaryConfirmed),
                    2 => Some(ReviewOutcome::NoChange),
                    _ => None,
                }
            }
            EventKind::Wait => ev.human_review = rng.gen_bool(0.6),
            _ => {}
        }
        push(&mut trace, ev, &mut t);
    }
    if rng.gen_bool(0.85) {
        let (id, _) = &facts[rng.gen_range(0..facts.len())];
        let a = e.action(id).unwrap().clone();
        let mut ev = Event::timed(EventKind::Execute, t, t + n(rng.gen_range(1..=5))).with_action(a);
        if rng.gen_bool(0.4) {
            ev.ratified = Some(rng.gen_bool(0.7));
        }
        push(&mut trace, ev, &mut t);
        executed = Some(id.clone());
        for _ in 0..rng.gen_range(0..=2) {
            let kind = if rng.gen_bool(0.5) { EventKind::Wait } else { EventKind::Escalate };
            let mut ev = Event::timed(kind, t, t + n(rng.gen_range(1..=50)));
            ev.human_review = kind == EventKind::Wait && rng.gen_bool(0.5);
            if kind == EventKind::Escalate {
                ev.review_outcome = Some(ReviewOutcome::NoChange);
            }
            push(&mut trace, ev, &mut t);
        }
        if rng.gen_bool(0.5) {
            let a = e.action("reverse").unwrap().clone();
            let ev = Event::timed(EventKind::Execute, t, t + n(rng.gen_range(1..=10))).with_action(a);
            push(&mut trace, ev, &mut t);
        }
    }

    let mut s = SyntheticEpisode {
        episode: e,
        trace,
        annotations: OracleAnnotations::default(),
        order_total,
        chargeback,
        order_timestamp,
        facts,
    };
    s.annotations.requires_escalation = rng.gen_bool(0.4);
    s.annotations.first_best_inside_envelope = rng.gen_bool(0.5);
    if let Some(id) = executed {
        let ev = s.trace.events.iter().find(|ev| ev.action_ref.as_deref() == Some(&id)).unwrap();
        let ok = ev.ratified == Some(true) || s.all_true(&id, ev.s, false);
        s.annotations.authorized.insert(id, ok);
    }
    if rng.gen_bool(0.7) {
        let raters = rng.gen_range(1..=4);
        let decisions = rng.gen_range(1..=3);
        s.annotations.rater_labels =
            Some((0..decisions).map(|_| (0..raters).map(|_| rng.gen_bool(0.7)).collect()).collect());
    }
    s
}

pub fn records<'a>(suite: &'a [SyntheticEpisode], k: &'a ContractTuple) -> Vec<EpisodeRecord<'a>> {
    suite
        .iter()
        .map(|s| EpisodeRecord {
            episode: &s.episode,
            contract: k,
            trace: &s.trace,
            annotations: &s.annotations,
            now: n(SUITE_NOW),
        })
        .collect()
}

fn frac(num: usize, den: usize) -> Option<Number> {
    (den > 0).then(|| Number::from(num) / Number::from(den))
}

/// Every metric recomputed by enumeration. Stability is left out; callers
/// compare it separately.
pub fn oracle_report(suite: &[SyntheticEpisode]) -> MetricsReport {
    let mut r = MetricsReport { episodes: suite.len(), ..Default::default() };
    for kind in EventKind::ALL {
        let total =
            suite.iter().flat_map(|s| &s.trace.events).filter(|ev| ev.q == kind).fold(n(0), |acc, ev| acc + ev.c);
        r.weights.insert(kind, total);
    }

    let mut times = Vec::new();
    let (mut executed, mut authorized, mut silent, mut compliant, mut cited, mut cited_ok) =
        (0usize, 0usize, 0, 0, 0, 0);
    let (mut reversible, mut undone) = (0, 0);
    let mut review = n(0);
    let (mut esc, mut esc_useful, mut needs, mut caught, mut over) = (0, 0, 0, 0, 0);
    let mut agreements = Vec::new();
    let mut sizes = Vec::new();

    for s in suite {
        let ev = &s.trace.events;
        // Only refunds can authorize: the rollback is never ratified and its
        // operation has no workflow step, and it always follows a refund.
        let first_auth = ev.iter().find(|e| {
            e.q == EventKind::Execute
                && e.action_ref.as_deref().is_some_and(|id| e.ratified == Some(true) || s.all_true(id, e.s, false))
        });
        match first_auth {
            Some(e) => times.push(e.s - ev[0].s),
            None => r.censored += 1,
        }

        review =
            ev.iter().filter(|e| e.q == EventKind::Wait && e.human_review).fold(review, |acc, e| acc + (e.f - e.s));
        for e in ev.iter().filter(|e| e.q == EventKind::Escalate) {
            esc += 1;
            if matches!(e.review_outcome, Some(ReviewOutcome::Changed) | Some(ReviewOutcome::BoundaryConfirmed)) {
                esc_useful += 1;
            }
        }
        let first_esc = ev.iter().position(|e| e.q == EventKind::Escalate);
        let first_exec = ev.iter().position(|e| e.q == EventKind::Execute);
        if s.annotations.requires_escalation {
            needs += 1;
            match (first_esc, first_exec) {
                (Some(_), None) => caught += 1,
                (Some(a), Some(b)) if a < b => caught += 1,
                _ => {}
            }
        }
        if first_esc.is_some() && s.annotations.first_best_inside_envelope {
            over += 1;
        }

        for (i, e) in ev.iter().enumerate() {
            let Some(id) = e.action_ref.as_deref().filter(|_| e.q == EventKind::Execute) else {
                continue;
            };
            if id == "reverse" {
                continue;
            }
            executed += 1;
            let ok = s.annotations.authorized[id];
            if ok {
                authorized += 1;
            } else if first_esc.is_none_or(|x| x > i) {
                silent += 1;
            }
            if s.all_true(id, e.s, e.ratified == Some(true)) {
                compliant += 1;
            }
            cited += 1;
            if s.evid_ok(id, e.s) {
                cited_ok += 1;
            }
            reversible += 1;
            if ev[i + 1..]
                .iter()
                .any(|later| later.action_ref.as_deref() == Some("reverse") && later.f - e.f <= n(ROLLBACK_BOUND))
            {
                undone += 1;
            }
        }

        for labels in s.annotations.rater_labels.iter().flatten() {
            let mut pairs = 0usize;
            let mut agree = 0;
            for a in 0..labels.len() {
                for b in 0..labels.len() {
                    if a < b {
                        pairs += 1;
                        agree += usize::from(labels[a] == labels[b]);
                    }
                }
            }
            if pairs > 0 {
                agreements.push(Number::from(agree) / Number::from(pairs));
            }
        }

        // Three non-refund actions never make it inside.
        let inside = s.facts.iter().filter(|(id, _)| s.all_true(id, n(SUITE_NOW), false)).count();
        sizes.push(Number::from(inside) / Number::from(s.episode.action_space.len()));
    }

    let mean = |v: &[Number]| (!v.is_empty()).then(|| v.iter().fold(n(0), |a, b| a + *b) / Number::from(v.len()));
    r.t_authorized = mean(&times);
    r.ratification_burden = (authorized > 0).then(|| review / Number::from(authorized));
    r.escalation_precision = frac(esc_useful, esc);
    r.escalation_recall = frac(caught, needs);
    r.false_autonomy_rate = frac(silent, executed);
    r.over_escalation_rate = frac(over, suite.len());
    r.provenance_completeness = frac(cited_ok, cited);
    r.contract_compliance = frac(compliant, executed);
    r.rollback_success = frac(undone, reversible);
    r.envelope_size = mean(&sizes);
    r.review_disagreement = mean(&agreements).map(|m| n(1) - m);
    r
}

pub fn blank() -> Outcome {
    Outcome {
        episode_id: "x".into(),
        agent: Agent::Naive,
        perturbation: None,
        moves: vec![],
        executed: None,
        executed_op: None,
        ratified: false,
        authorized: None,
        checker_pass: None,
        predicates: None,
        escalated: false,
        op_permitted: None,
        weaker_op_permitted: false,
        gaps_below: true,
        envelope_empty: false,
        solvable: true,
        first_best_inside: false,
        budget_exhausted: false,
        routine: None,
        label: FailureLabel::None,
    }
}

pub fn executed(authorized: bool, pass: bool) -> Outcome {
    Outcome {
        executed: Some("a".into()),
        executed_op: Some("send".into()),
        authorized: Some(authorized),
        checker_pass: Some(pass),
        op_permitted: Some(true),
        ..blank()
    }
}

/// One constructed outcome per failure mode.
pub fn exemplars() -> Vec<(&'static str, Outcome, FailureLabel)> {
    vec![
        ("weak candidate shipped with gaps closed", executed(true, false), FailureLabel::Undersearch),
        ("passing answer on stale evidence", executed(false, true), FailureLabel::Misclosure),
        (
            "trivial reversible action escalated",
            Outcome { escalated: true, moves: vec![MoveKind::Escalate], first_best_inside: true, ..blank() },
            FailureLabel::Overclosure,
        ),
        (
            "sent where only drafting was allowed",
            Outcome { op_permitted: Some(false), weaker_op_permitted: true, ..executed(false, true) },
            FailureLabel::Misdelegation,
        ),
        (
            "no action satisfies the joint contracts",
            Outcome { envelope_empty: true, moves: vec![MoveKind::Abstain], ..blank() },
            FailureLabel::ContractConflict,
        ),
        (
            "routine used before its gate passed",
            Outcome {
                routine: Some(RoutineUse { routine_id: "r".into(), gate_passed: false }),
                ..executed(true, false)
            },
            FailureLabel::PrematureInternalization,
        ),
    ]
}

/// Lower Wilson bound found by scanning for the smallest `p` the score test
/// does not reject, using exact binomial moments `n p` and `n p (1 - p)`.
pub fn brute_wilson_lower(k: u64, trials: u64, z: f64) -> f64 {
    let (k, nn) = (k as f64, trials as f64);
    let accepts = |p: f64| {
        let mean = nn * p;
        let var = nn * p * (1.0 - p);
        (k - mean).powi(2) <= z * z * var
    };
    if accepts(0.0) || k == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, k / nn);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if accepts(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Grid policy with a variable autonomy guard. Escalation fires on `y > 8`.
pub fn grid_policy(autonomous_if: &str) -> String {
    format!(
        r#"task:
  objective: "apply a grid action"
  action_type: "grid"

semantic_contract:
  entities: [account]
  acceptance_criteria:
    - "x >= 0"
  ambiguity_policy:
    missing_account: "ask"

evidentiary_contract:
  admissible_sources:
    - "ledger:<1h"
  conflict_resolution: "ledger overrides memo"

procedural_contract:
  workflow: [apply]
  allowed_tools: [engine]
  rollback: "undo"

institutional_contract:
  autonomous_if: "{autonomous_if}"
  escalate_if: "y > 8"
  audit: "retain_logs_30_days"
  role_permissions:
    agent: [apply]
  risk_of_op:
    apply: low
"#
    )
}

#[derive(Debug, Clone, Copy)]
pub struct Point {
    pub x: i64,
    pub y: i64,
    pub z: i64,
    pub flag: bool,
}

pub fn grid_episode(points: &[Point]) -> TaskEpisode {
    let mut e = TaskEpisode { id: "grid".into(), ..Default::default() };
    e.context.insert("account".into(), Scalar::Str("A-1".into()));
    for (i, p) in points.iter().enumerate() {
        let mut a = Action::new(&format!("g{i}"), "apply", "agent", "engine");
        a.bindings.insert("x".into(), Scalar::Num(n(p.x)));
        a.bindings.insert("y".into(), Scalar::Num(n(p.y)));
        a.bindings.insert("z".into(), Scalar::Num(n(p.z)));
        a.bindings.insert("flag".into(), Scalar::Bool(p.flag));
        e.action_space.push(a);
    }
    e
}
