//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits nonzero if any failed.

mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use intentc::bench::{
    classify_failure, internalization_gate, run_suite, wilson_lower, Agent, CaseFile, FailureLabel, GateThresholds,
    RoutineStats, Suite, Z95,
};
use intentc::condition::{CmpOp, Expr, ExprKind};
use intentc::envelope::{
    apply_perturbation, check_tightening, envelope_size, envelope_stability, inside_set, PerturbationKind,
    PerturbationSpec,
};
use intentc::metrics::{accounting_weights, metrics_report, read_traces, resolve_actions, time_to_authorized};
use intentc::predicate::eval_expr;
use intentc::router::{estimate_gaps, ProxySignals};
use intentc::{
    compile_text, membership, parse_condition, route, Action, Config, ContractTuple, Dimension, Event, EventKind,
    EventTrace, MoveKind, Number, Scalar, TaskEpisode, TruthValue, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LAST_PANIC: Mutex<Option<String>> = Mutex::new(None);

fn within(limit: Duration, started: Instant, what: &str) {
    let took = started.elapsed();
    assert!(took < limit, "{what} took {took:.2?}, limit {limit:?}");
}

fn travel_case() -> (TaskEpisode, Number) {
    let case = CaseFile::parse(&read_corpus("episodes/travel_domestic_rebook.case")).unwrap();
    let now = case.bench.as_ref().unwrap().now;
    (case.episode(), now)
}

fn decide(k: &ContractTuple, e: &TaskEpisode, now: Number, id: &str) -> (Verdict, Vec<Dimension>, MoveKind) {
    let config = Config::default();
    let cx = intentc::EvalContext::new(e, k, now, &config);
    let a = e.action(id).unwrap();
    let d = membership(a, &cx);
    let gaps = estimate_gaps(&cx, &ProxySignals::default(), Some(a));
    let m = route(&gaps, &d, None, &config.thresholds, k);
    (d.verdict, d.failing(), m.kind)
}

fn listing_end_to_end() {
    let started = Instant::now();
    let k = compile_text(&read_corpus("policies/listing1.intent")).unwrap();
    assert!(k.is_closed(), "listing should compile closed");
    let (e, now) = travel_case();

    let got = decide(&k, &e, now, "hold_fare_150");
    assert_eq!(got, (Verdict::Inside, vec![], MoveKind::Act), "domestic, fare delta 150");

    let got = decide(&k, &e, now, "hold_fare_250");
    assert_eq!(got, (Verdict::Outside, vec![Dimension::Inst], MoveKind::Escalate), "fare delta 250");

    let mut intl = e.clone();
    intl.context.insert("international".into(), Scalar::Bool(true));
    intl.context.insert("domestic".into(), Scalar::Bool(false));
    let got = decide(&k, &intl, now, "hold_fare_150");
    assert_eq!(got, (Verdict::Outside, vec![Dimension::Inst], MoveKind::Escalate), "international");

    within(Duration::from_secs(1), started, "listing scenarios");
}

fn kleene_tables() {
    use TruthValue::{False as F, True as T, Unknown as U};
    let vals = [T, U, F];
    let bind = |m: &mut intentc::model::AttrMap, name: &str, v: TruthValue| match v {
        T => drop(m.insert(name.into(), Scalar::Bool(true))),
        F => drop(m.insert(name.into(), Scalar::Bool(false))),
        U => {}
    };
    let and = [[T, U, F], [U, U, F], [F, F, F]];
    let or = [[T, T, T], [T, U, U], [T, U, F]];
    let not = [F, U, T];
    let (p_and_q, p_or_q, not_p) =
        (parse_condition("p && q").unwrap(), parse_condition("p || q").unwrap(), parse_condition("!p").unwrap());
    let mut checked = 0;
    for (i, p) in vals.iter().enumerate() {
        for (j, q) in vals.iter().enumerate() {
            let mut m = Default::default();
            bind(&mut m, "p", *p);
            bind(&mut m, "q", *q);
            assert_eq!(eval_expr(&p_and_q, &m).unwrap(), and[i][j], "{p} && {q}");
            assert_eq!(eval_expr(&p_or_q, &m).unwrap(), or[i][j], "{p} || {q}");
            checked += 2;
        }
        let mut m = Default::default();
        bind(&mut m, "p", *p);
        assert_eq!(eval_expr(&not_p, &m).unwrap(), not[i], "!{p}");
        checked += 1;
    }
    assert_eq!(checked, 21);
}

#[derive(Clone, Copy, Debug)]
enum Atom {
    Cmp(usize, usize, i64),
    Flag(bool),
}

const VARS: [&str; 3] = ["x", "y", "z"];
const OPS: [&str; 6] = ["<=", ">=", "<", ">", "==", "!="];

impl Atom {
    fn random(rng: &mut ChaCha8Rng) -> Atom {
        if rng.gen_ratio(1, 6) {
            Atom::Flag(rng.gen())
        } else {
            Atom::Cmp(rng.gen_range(0..3), rng.gen_range(0..6), rng.gen_range(0..=10))
        }
    }

    fn text(self) -> String {
        match self {
            Atom::Cmp(v, o, c) => format!("{} {} {c}", VARS[v], OPS[o]),
            Atom::Flag(true) => "flag".into(),
            Atom::Flag(false) => "!flag".into(),
        }
    }

    fn holds(self, p: &Point) -> bool {
        match self {
            Atom::Flag(b) => p.flag == b,
            Atom::Cmp(v, o, c) => {
                let x = [p.x, p.y, p.z][v];
                match o {
                    0 => x <= c,
                    1 => x >= c,
                    2 => x < c,
                    3 => x > c,
                    4 => x == c,
                    _ => x != c,
                }
            }
        }
    }
}

fn hand_inside(guard: impl Fn(&Point) -> bool, points: &[Point]) -> Vec<bool> {
    points.iter().map(|p| guard(p) && p.y <= 8).collect()
}

fn tightening_property() {
    let started = Instant::now();
    let config = Config::default();
    let now = n(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grids: Vec<Vec<Point>> = (0..12)
        .map(|g| {
            let size = if g == 0 { 1000 } else { rng.gen_range(1..=1000) };
            (0..size)
                .map(|_| Point {
                    x: rng.gen_range(0..=10),
                    y: rng.gen_range(0..=10),
                    z: rng.gen_range(0..=10),
                    flag: rng.gen(),
                })
                .collect()
        })
        .collect();
    let episodes: Vec<TaskEpisode> = grids.iter().map(|g| grid_episode(g)).collect();

    let mut shrank = 0;
    for i in 0..500 {
        let (points, e) = (&grids[i % grids.len()], &episodes[i % grids.len()]);
        let base: Vec<Atom> = (0..rng.gen_range(1..=3)).map(|_| Atom::random(&mut rng)).collect();
        let extra = Atom::random(&mut rng);
        let base_text = base.iter().map(|a| a.text()).collect::<Vec<_>>().join(" && ");
        let k = compile_text(&grid_policy(&base_text)).unwrap();
        let k2 = compile_text(&grid_policy(&format!("{base_text} && {}", extra.text()))).unwrap();

        let before = inside_set(&k, e, now, &config);
        assert_eq!(before, hand_inside(|p| base.iter().all(|a| a.holds(p)), points), "pair {i}: {base_text}");
        let t = check_tightening(&k, &k2, e, now, &config);
        assert!(t.tightening, "pair {i}: adding {} loosened {base_text}", extra.text());
        let (s, s2) = (envelope_size(&k, e, now, &config).unwrap(), envelope_size(&k2, e, now, &config).unwrap());
        assert!(s2 <= s, "pair {i}: size grew from {s} to {s2}");
        shrank += usize::from(s2 < s);
    }

    let mut grew = 0;
    for i in 0..100 {
        let (points, e) = (&grids[i % grids.len()], &episodes[i % grids.len()]);
        let base: Vec<Atom> = (0..rng.gen_range(1..=3)).map(|_| Atom::random(&mut rng)).collect();
        let extra = Atom::random(&mut rng);
        let base_text = base.iter().map(|a| a.text()).collect::<Vec<_>>().join(" && ");
        let k = compile_text(&grid_policy(&base_text)).unwrap();
        let k2 = compile_text(&grid_policy(&format!("({base_text}) || {}", extra.text()))).unwrap();

        let before = hand_inside(|p| base.iter().all(|a| a.holds(p)), points);
        let after = hand_inside(|p| base.iter().all(|a| a.holds(p)) || extra.holds(p), points);
        let grows = before.iter().zip(&after).any(|(b, a)| *a && !*b);
        let t = check_tightening(&k, &k2, e, now, &config);
        assert_eq!(t.tightening, !grows, "pair {i}: ({base_text}) || {}", extra.text());
        if grows {
            grew += 1;
            let w = t.witness.unwrap_or_else(|| panic!("pair {i}: no witness"));
            let idx = e.action_space.iter().position(|a| a.id == w.id).unwrap();
            assert!(after[idx] && !before[idx], "pair {i}: {} is not a witness", w.id);
        } else {
            assert!(t.witness.is_none());
        }
    }
    assert!(shrank > 50 && grew > 20, "degenerate sample: {shrank} shrank, {grew} grew");
    within(Duration::from_secs(30), started, "tightening pairs");
}

fn fare_threshold(e: &Expr, want: CmpOp) -> Vec<Number> {
    match &e.kind {
        ExprKind::Cmp(op, l, r) if *op == want => match (&l.kind, &r.kind) {
            (ExprKind::Ident(name), ExprKind::Num(v)) if name == "fare_delta" => vec![*v],
            _ => vec![],
        },
        ExprKind::Not(x) => fare_threshold(x, want),
        ExprKind::And(xs) | ExprKind::Or(xs) => xs.iter().flat_map(|x| fare_threshold(x, want)).collect(),
        _ => vec![],
    }
}

fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    let sym = a.iter().zip(b).filter(|(x, y)| x != y).count();
    if union == 0 {
        0.0
    } else {
        sym as f64 / union as f64
    }
}

fn stability() {
    let config = Config::default();
    let k = compile_text(&read_corpus("policies/listing1.intent")).unwrap();
    let (travel, now) = travel_case();

    let template = travel.action("hold_fare_180").unwrap().clone();
    let fares: Vec<i64> = (0..9).map(|i| 120 + 20 * i).collect();
    let mut grid = travel.clone();
    grid.action_space = fares
        .iter()
        .map(|f| {
            let mut a = template.clone();
            a.id = format!("fare_{f}");
            a.bindings.insert("fare_delta".into(), Scalar::Num(n(*f)));
            a
        })
        .collect();

    for e in [&travel, &grid] {
        let s = envelope_stability(&k, e, &[PerturbationSpec::identity()], now, &config).unwrap();
        assert_eq!(s, n(1), "identity");
        let reorder: Vec<_> = (0..8).map(|s| PerturbationSpec::new(PerturbationKind::ClauseReorder, n(0), s)).collect();
        assert_eq!(envelope_stability(&k, e, &reorder, now, &config).unwrap(), n(1), "clause_reorder");
    }

    let hand =
        |le: f64, gt: f64| -> Vec<bool> { fares.iter().map(|f| (*f as f64) <= le && (*f as f64) <= gt).collect() };
    let base = hand(200.0, 200.0);
    assert_eq!(inside_set(&k, &grid, now, &config), base);

    let mut below_one = 0;
    for magnitude in [5, 20, 40, 80] {
        let specs: Vec<_> =
            (0..8).map(|s| PerturbationSpec::new(PerturbationKind::NumericJitter, n(magnitude), 100 + s)).collect();
        let got = envelope_stability(&k, &grid, &specs, now, &config).unwrap();
        let mut total = 0.0;
        for spec in &specs {
            let k2 = apply_perturbation(&k, spec).unwrap();
            let le = fare_threshold(&k2.institutional.autonomous_if.as_ref().unwrap().root, CmpOp::Le);
            let gt = fare_threshold(&k2.institutional.escalate_if.as_ref().unwrap().root, CmpOp::Gt);
            assert_eq!((le.len(), gt.len()), (1, 1), "{spec}");
            total += jaccard(&base, &hand(le[0].to_f64(), gt[0].to_f64()));
        }
        let want = 1.0 - total / specs.len() as f64;
        assert!((got.to_f64() - want).abs() < 1e-12, "magnitude {magnitude}: {got} vs {want}");
        below_one += usize::from(want < 1.0);
    }
    assert!(below_one > 0, "no jitter moved a grid point");
}

fn trace_arithmetic() {
    let config = Config::default();
    let k = compile_text(&read_corpus("policies/listing1.intent")).unwrap();
    let (e, _) = travel_case();

    let mut trace = read_traces(&read_corpus("traces/travel_domestic_rebook.jsonl")).unwrap().remove(0);
    resolve_actions(&mut trace, &e).unwrap();
    assert_eq!(time_to_authorized(&trace, &e, &k, &config), Some(n(10)));
    let w = accounting_weights(&trace);
    let order = [EventKind::Compile, EventKind::Search, EventKind::Escalate, EventKind::Wait, EventKind::Execute];
    assert_eq!(order.map(|q| w[&q]), [2, 3, 1, 4, 1].map(n));

    // Random sequential traces from the case clock, inside the inventory
    // freshness window. Every event starts when the previous ends, so the
    // elapsed time to the authorized execution is the summed cost of what
    // came before it. Unauthorized executions use the draft, which sits
    // outside the workflow and so leaves the hold step available.
    let inside = e.action("hold_fare_150").unwrap().clone();
    let unauthorized = e.action("draft_notification").unwrap().clone();
    let lone = EventTrace {
        episode_id: e.id.clone(),
        events: vec![Event::timed(EventKind::Execute, n(1000), n(1001)).with_action(unauthorized.clone())],
    };
    assert_eq!(time_to_authorized(&lone, &e, &k, &config), None);
    let fillers = [EventKind::Compile, EventKind::Search, EventKind::Escalate, EventKind::Wait];
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut censored = 0;
    for i in 0..300 {
        let mut t = EventTrace::new(&e.id);
        let mut clock = q(rng.gen_range(4000..4400), 4);
        let mut push = |t: &mut EventTrace, q_: EventKind, a: Option<&Action>, rng: &mut ChaCha8Rng| {
            let f = clock + q(rng.gen_range(0..=40), 4);
            let ev = Event::timed(q_, clock, f);
            t.events.push(match a {
                Some(a) => ev.with_action(a.clone()),
                None => ev,
            });
            clock = f;
        };
        for _ in 0..rng.gen_range(0..8) {
            match rng.gen_range(0..6) {
                0 => push(&mut t, EventKind::Execute, Some(&unauthorized), &mut rng),
                _ => push(&mut t, fillers[rng.gen_range(0..4)], None, &mut rng),
            }
        }
        let authorizes = rng.gen_ratio(4, 5);
        let at = t.events.len();
        if authorizes {
            push(&mut t, EventKind::Execute, Some(&inside), &mut rng);
        }
        for _ in 0..rng.gen_range(0..3) {
            push(&mut t, fillers[rng.gen_range(0..4)], None, &mut rng);
        }

        let got = time_to_authorized(&t, &e, &k, &config);
        if !authorizes || t.events.is_empty() {
            assert_eq!(got, None, "trace {i}");
            censored += 1;
            continue;
        }
        let prefix = EventTrace { episode_id: t.episode_id.clone(), events: t.events[..at].to_vec() };
        let sum = accounting_weights(&prefix).values().fold(n(0), |s, v| s + *v);
        assert_eq!(got, Some(sum), "trace {i}");
    }
    assert!(censored > 0 && censored < 300);
}

fn metrics_oracle() {
    let k = support_contract();
    for seed in [1, 2, 3, 11] {
        let suite = synthetic_suite(seed, 20);
        let got = metrics_report(&records(&suite, &k), &[], &Config::default()).unwrap();
        assert_eq!(got, oracle_report(&suite), "seed {seed}");
    }
}

fn corpus_suite() -> Suite {
    Suite::load(&corpus("suite.manifest")).unwrap()
}

fn separability() {
    let started = Instant::now();
    let suite = corpus_suite();
    let report = run_suite(&suite, &Config::default()).unwrap();
    let perturbed = [Dimension::Sem, Dimension::Evid, Dimension::Proc, Dimension::Inst];

    for d in perturbed {
        let cell = report.cell(Agent::Naive, Some(d)).unwrap();
        let mut ids: Vec<_> = cell.outcomes.iter().map(|o| o.episode_id.as_str()).collect();
        ids.dedup();
        assert!(ids.len() >= 5, "{d}: only {} episodes", ids.len());
    }

    for d in [Dimension::Inst, Dimension::Evid] {
        let labels = |k| -> Vec<(String, FailureLabel)> {
            let cell = report.cell(Agent::SearchBooster(k), Some(d)).unwrap();
            cell.outcomes.iter().map(|o| (o.episode_id.clone(), o.label)).collect()
        };
        let one = labels(1);
        assert!(!one.is_empty());
        assert_eq!(one, labels(4), "{d}: booster 1 vs 4");
        assert_eq!(one, labels(16), "{d}: booster 1 vs 16");
    }

    let naive = report.cell(Agent::Naive, Some(Dimension::Inst)).unwrap();
    let fa = naive.metrics.false_autonomy_rate.expect("naive executes on inst");
    assert!(fa > n(0), "naive false autonomy on inst is {fa}");

    let dims = std::iter::once(None).chain(perturbed.map(Some));
    for d in dims {
        let aware = report.cell(Agent::ContractAware, d).unwrap();
        let fa = aware.metrics.false_autonomy_rate;
        assert!(fa.is_none() || fa == Some(n(0)), "contract_aware false autonomy {fa:?} on {d:?}");
        let oracle = report.cell(Agent::OracleContract, d).unwrap();
        for o in &oracle.outcomes {
            assert!(
                o.label == FailureLabel::None || o.executed.is_none(),
                "oracle on {} ({d:?}): {:?} after executing {:?}",
                o.episode_id,
                o.label,
                o.executed
            );
        }
    }
    within(Duration::from_secs(60), started, "full suite");
}

fn classifier() {
    let cases = exemplars();
    assert_eq!(cases.len(), 6);
    let hits = cases.iter().filter(|(_, o, want)| classify_failure(o) == *want).count();
    for (what, o, want) in &cases {
        assert_eq!(classify_failure(o), *want, "{what}");
    }
    assert_eq!(hits, 6);
}

fn stats(frequency: u64, ok: u64, trials: u64, rollback: bool) -> RoutineStats {
    RoutineStats {
        routine_id: "rebook".into(),
        frequency,
        compliance_successes: ok,
        compliance_trials: trials,
        stability: 0.98,
        monitorable: true,
        rollback_defined: rollback,
    }
}

fn gate() {
    let th = GateThresholds::default();
    let v = internalization_gate(&stats(120, 97, 100, true), &th).unwrap();
    assert!(v.eligible, "{v:?}");
    let brute = brute_wilson_lower(97, 100, Z95);
    assert!((v.compliance_lower_bound - brute).abs() < 1e-9);
    let v = internalization_gate(&stats(120, 97, 100, false), &th).unwrap();
    assert_eq!((v.eligible, v.failing), (false, vec!["rollback"]));
    let v = internalization_gate(&stats(3, 97, 100, true), &th).unwrap();
    assert_eq!((v.eligible, v.failing), (false, vec!["frequency"]));
    for trials in [1u64, 7, 50, 100, 400] {
        for k in 0..=trials {
            let (a, b) = (wilson_lower(k, trials, Z95), brute_wilson_lower(k, trials, Z95));
            assert!((a - b).abs() < 1e-9, "{k}/{trials}: {a} vs {b}");
        }
    }
}

fn determinism() {
    let config = Config::default();
    let a = run_suite(&corpus_suite(), &config).unwrap().to_json();
    let b = run_suite(&corpus_suite(), &config).unwrap().to_json();
    assert!(a.len() > 1000);
    assert!(a.as_bytes() == b.as_bytes(), "reports differ");
}

fn main() {
    panic::set_hook(Box::new(|info| {
        let msg = match (info.payload().downcast_ref::<&str>(), info.payload().downcast_ref::<String>()) {
            (Some(s), _) => s.to_string(),
            (_, Some(s)) => s.clone(),
            _ => "panic".into(),
        };
        let at = info.location().map(|l| format!(" at line {}", l.line())).unwrap_or_default();
        *LAST_PANIC.lock().unwrap() = Some(format!("{msg}{at}"));
    }));

    let criteria: [(&str, fn()); 10] = [
        ("listing end to end", listing_end_to_end),
        ("kleene tables", kleene_tables),
        ("tightening property", tightening_property),
        ("envelope stability", stability),
        ("trace arithmetic", trace_arithmetic),
        ("metrics oracle", metrics_oracle),
        ("misclosure separability", separability),
        ("failure classifier", classifier),
        ("internalization gate", gate),
        ("determinism", determinism),
    ];

    let mut results = BTreeMap::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let ok = panic::catch_unwind(AssertUnwindSafe(f)).is_ok();
        let took = started.elapsed();
        if ok {
            println!("criterion {} ({name}): PASS [{took:.2?}]", i + 1);
        } else {
            let why = LAST_PANIC.lock().unwrap().take().unwrap_or_default();
            println!("criterion {} ({name}): FAIL {why}", i + 1);
        }
        results.insert(i + 1, ok);
    }
    let passed = results.values().filter(|ok| **ok).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed < results.len() {
        std::process::exit(1);
    }
}
