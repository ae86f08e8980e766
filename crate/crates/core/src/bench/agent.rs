//! Scripted agents and the episode step loop.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::condition::ConditionExpr;
use crate::config::Config;
use crate::contract::ContractTuple;
use crate::envelope::{inside_set, membership, EnvelopeDecision, Verdict};
use crate::metrics::OracleAnnotations;
use crate::model::{Action, Dimension, Event, EventKind, EventTrace, ReviewOutcome, TaskEpisode};
use crate::number::Number;
use crate::predicate::{EvalContext, TruthValue};
use crate::router::{estimate_gaps, route, MoveKind, ProxySignals};

use super::classify::{classify_failure, FailureLabel};
use super::episode::{BenchEpisode, Perturbation};

pub const STEP_BUDGET: usize = 32;

/// Simulated seconds per step.
pub mod durations {
    pub const COMPILE: i64 = 2;
    pub const SEARCH: i64 = 3;
    pub const RETRIEVE: i64 = 5;
    pub const SIMULATE: i64 = 5;
    pub const ESCALATE: i64 = 1;
    pub const REVIEW_WAIT: i64 = 60;
    pub const ASK_WAIT: i64 = 30;
    pub const EXECUTE: i64 = 1;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Agent {
    /// Executes its best candidate.
    Naive,
    /// Tries up to `k` candidates against the checker, then executes.
    SearchBooster(usize),
    /// Follows the router and executes only on `act`.
    ContractAware,
    /// Like `ContractAware`, but reads the ground-truth contract.
    OracleContract,
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Agent::Naive => f.write_str("naive"),
            Agent::SearchBooster(k) => write!(f, "search_booster:{k}"),
            Agent::ContractAware => f.write_str("contract_aware"),
            Agent::OracleContract => f.write_str("oracle_contract"),
        }
    }
}

impl FromStr for Agent {
    type Err = String;
    fn from_str(s: &str) -> Result<Agent, String> {
        match s {
            "naive" => Ok(Agent::Naive),
            "contract_aware" => Ok(Agent::ContractAware),
            "oracle_contract" => Ok(Agent::OracleContract),
            _ => match s.strip_prefix("search_booster:").map(str::parse::<usize>) {
                Some(Ok(k)) if k > 0 => Ok(Agent::SearchBooster(k)),
                _ => Err(format!("unknown agent `{s}`")),
            },
        }
    }
}

impl Serialize for Agent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// An internalized routine the agent relied on, and whether its gate held.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutineUse {
    pub routine_id: String,
    pub gate_passed: bool,
}

/// Everything the classifier and the report need about one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub episode_id: String,
    pub agent: Agent,
    pub perturbation: Option<Perturbation>,
    pub moves: Vec<MoveKind>,
    pub executed: Option<String>,
    pub executed_op: Option<String>,
    pub ratified: bool,
    /// Oracle verdict on the executed action.
    pub authorized: Option<bool>,
    /// The agent's checker on the executed action.
    pub checker_pass: Option<bool>,
    /// Ground-truth predicate values for the executed action.
    pub predicates: Option<std::collections::BTreeMap<Dimension, TruthValue>>,
    pub escalated: bool,
    /// Whether the actor may perform the executed op under the ground truth.
    pub op_permitted: Option<bool>,
    /// Whether the actor holds some other permitted op, such as drafting.
    pub weaker_op_permitted: bool,
    pub gaps_below: bool,
    /// No action in the repaired world satisfies the ground truth.
    pub envelope_empty: bool,
    pub solvable: bool,
    pub first_best_inside: bool,
    pub budget_exhausted: bool,
    pub routine: Option<RoutineUse>,
    pub label: FailureLabel,
}

/// The result of one run: its trace, the world as it ended, and the
/// oracle annotations the metrics need.
#[derive(Debug, Clone)]
pub struct Run {
    pub outcome: Outcome,
    pub trace: EventTrace,
    pub world: TaskEpisode,
    pub annotations: OracleAnnotations,
}

struct Sim<'a> {
    ep: &'a BenchEpisode,
    config: &'a Config,
    world: TaskEpisode,
    trace: EventTrace,
    clock: Number,
    moves: Vec<MoveKind>,
    escalated: bool,
    /// Executed action, whether ratified, checker result, start time.
    executed: Option<(Action, bool, bool, Number)>,
    budget_exhausted: bool,
}

impl<'a> Sim<'a> {
    fn new(ep: &'a BenchEpisode, config: &'a Config) -> Sim<'a> {
        Sim {
            ep,
            config,
            world: ep.base.clone(),
            trace: EventTrace::new(&ep.base.id),
            clock: ep.now,
            moves: Vec::new(),
            escalated: false,
            executed: None,
            budget_exhausted: false,
        }
    }

    fn push(&mut self, q: EventKind, secs: i64) -> &mut Event {
        let f = self.clock + Number::int(secs);
        self.trace.events.push(Event::timed(q, self.clock, f));
        self.clock = f;
        self.trace.events.last_mut().expect("just pushed")
    }

    fn candidate(&self, i: usize) -> Action {
        self.world.action(&self.ep.candidates[i]).expect("validated").clone()
    }

    fn execute(&mut self, a: Action, ratified: bool, checker_pass: bool) {
        let at = self.clock;
        let ev = self.push(EventKind::Execute, durations::EXECUTE);
        ev.action_ref = Some(a.id.clone());
        ev.action = Some(a.clone());
        if ratified {
            ev.ratified = Some(true);
        }
        self.executed = Some((a, ratified, checker_pass, at));
    }

    /// Asks a human reviewer; true when the action is approved.
    fn escalate(&mut self, a: &Action) -> bool {
        self.escalated = true;
        let approved = self.ep.ratified_actions.contains(&a.id);
        let ev = self.push(EventKind::Escalate, durations::ESCALATE);
        ev.action_ref = Some(a.id.clone());
        ev.review_outcome = Some(if approved { ReviewOutcome::BoundaryConfirmed } else { ReviewOutcome::Changed });
        self.push(EventKind::Wait, durations::REVIEW_WAIT).human_review = true;
        approved
    }

    /// Replaces corrupted records cited by `a` with their originals.
    fn refresh(&mut self, a: &Action) -> bool {
        let mut changed = false;
        for fresh in &self.ep.fresh_evidence {
            if !a.citations.contains(&fresh.id) {
                continue;
            }
            if let Some(r) = self.world.evidence.iter_mut().find(|r| r.id == fresh.id) {
                if r != fresh {
                    *r = fresh.clone();
                    changed = true;
                }
            }
        }
        changed
    }

    /// The same action through a tool the contract allows.
    fn sanctioned_variant(&self, a: &Action, k: &ContractTuple) -> Option<Action> {
        let allowed = k.procedural.allowed_tools.as_ref()?;
        self.world
            .action_space
            .iter()
            .find(|b| b.id != a.id && b.op == a.op && b.obj == a.obj && b.actor == a.actor && allowed.contains(&b.tool))
            .cloned()
    }

    fn run_naive(&mut self) {
        self.push(EventKind::Search, durations::SEARCH);
        let c = self.candidate(0);
        let pass = self.ep.checker_passes(&self.ep.checker, &c);
        self.moves.push(MoveKind::Act);
        self.execute(c, false, pass);
    }

    fn run_booster(&mut self, k: usize) {
        let n = k.min(self.ep.candidates.len());
        let mut chosen = None;
        for i in 0..n {
            self.push(EventKind::Search, durations::SEARCH);
            self.moves.push(MoveKind::Search);
            let c = self.candidate(i);
            let pass = self.ep.checker_passes(&self.ep.checker, &c);
            let last = i + 1 == n;
            if pass || last {
                chosen = Some((c, pass));
                break;
            }
        }
        let (c, pass) = chosen.expect("at least one candidate");
        self.moves.push(MoveKind::Act);
        self.execute(c, false, pass);
    }

    fn run_contract(&mut self, k: &ContractTuple) {
        let ep = self.ep;
        let mut checker: Vec<ConditionExpr> = ep.checker.clone();
        self.push(EventKind::Compile, durations::COMPILE);
        self.push(EventKind::Search, durations::SEARCH);
        let mut idx = 0;
        let mut current = self.candidate(0);
        let (mut asked, mut approved) = (false, false);
        for _ in 0..STEP_BUDGET {
            let cx = EvalContext::new(&self.world, k, self.clock, self.config);
            let mut decision = membership(&current, &cx);
            let mut gaps = estimate_gaps(&cx, &ProxySignals::default(), Some(&current));
            if approved {
                decision = decision.waive(Dimension::Inst);
                gaps.inst = Number::ZERO;
            }
            let pass = ep.checker_passes(&checker, &current);
            let mut kind = route(&gaps, &decision, Some(pass), &self.config.thresholds, k).kind;
            kind = match kind {
                MoveKind::Ask if asked => MoveKind::Escalate,
                MoveKind::Retrieve if !ep.fresh_evidence.iter().any(|r| current.citations.contains(&r.id)) => {
                    MoveKind::Escalate
                }
                MoveKind::Simulate if self.sanctioned_variant(&current, k).is_none() => MoveKind::Escalate,
                other => other,
            };
            if kind == MoveKind::Escalate && approved {
                kind = MoveKind::Abstain;
            }
            self.moves.push(kind);
            match kind {
                MoveKind::Act => {
                    debug_assert!(decision.verdict == Verdict::Inside);
                    self.execute(current, approved, pass);
                    return;
                }
                MoveKind::Search => {
                    idx += 1;
                    if idx >= ep.candidates.len() {
                        self.moves.push(MoveKind::Abstain);
                        return;
                    }
                    self.push(EventKind::Search, durations::SEARCH);
                    current = self.candidate(idx);
                }
                MoveKind::Ask => {
                    asked = true;
                    self.push(EventKind::Wait, durations::ASK_WAIT);
                    checker = k.semantic.acceptance_criteria.clone();
                }
                MoveKind::Retrieve => {
                    if !self.refresh(&current) {
                        self.moves.push(MoveKind::Abstain);
                        return;
                    }
                    self.push(EventKind::Search, durations::RETRIEVE);
                }
                MoveKind::Simulate => {
                    self.push(EventKind::Search, durations::SIMULATE);
                    current = self.sanctioned_variant(&current, k).expect("checked above");
                }
                MoveKind::Escalate => {
                    if !self.escalate(&current) {
                        return;
                    }
                    approved = true;
                }
                MoveKind::Abstain => return,
            }
        }
        self.budget_exhausted = true;
    }
}

/// Ground-truth verdict on `a` in `world`; a ratified action has its
/// institutional predicate waived.
fn oracle_decision(
    ep: &BenchEpisode,
    world: &TaskEpisode,
    a: &Action,
    ratified: bool,
    at: Number,
    config: &Config,
) -> EnvelopeDecision {
    let cx = EvalContext::new(world, &ep.ground_truth, at, config);
    let d = membership(a, &cx);
    if ratified {
        d.waive(Dimension::Inst)
    } else {
        d
    }
}

/// Whether the first-ranked candidate is inside the ground-truth envelope
/// of the episode as given.
pub fn first_best_inside(ep: &BenchEpisode, config: &Config) -> bool {
    oracle_decision(ep, &ep.base, ep.first_candidate(), false, ep.now, config).verdict == Verdict::Inside
}

/// Runs one agent on one episode and labels the outcome.
pub fn run_episode(agent: Agent, ep: &BenchEpisode, config: &Config) -> Run {
    let mut sim = Sim::new(ep, config);
    match agent {
        Agent::Naive => sim.run_naive(),
        Agent::SearchBooster(k) => sim.run_booster(k.max(1)),
        Agent::ContractAware => sim.run_contract(&ep.contract),
        Agent::OracleContract => sim.run_contract(&ep.ground_truth),
    }

    let mut repaired = sim.world.clone();
    for fresh in &ep.fresh_evidence {
        if let Some(r) = repaired.evidence.iter_mut().find(|r| r.id == fresh.id) {
            *r = fresh.clone();
        }
    }
    let envelope_empty = !inside_set(&ep.ground_truth, &repaired, ep.now, config).contains(&true);
    let first_best = first_best_inside(ep, config);

    let mut annotations = OracleAnnotations {
        requires_escalation: sim.world.requires_escalation.unwrap_or(false),
        first_best_inside_envelope: first_best,
        rater_labels: ep.rater_labels.clone(),
        ..Default::default()
    };

    let mut outcome = Outcome {
        episode_id: ep.base.id.clone(),
        agent,
        perturbation: ep.perturbation.clone(),
        moves: sim.moves.clone(),
        executed: None,
        executed_op: None,
        ratified: false,
        authorized: None,
        checker_pass: None,
        predicates: None,
        escalated: sim.escalated,
        op_permitted: None,
        weaker_op_permitted: false,
        gaps_below: true,
        envelope_empty,
        solvable: ep.solvable,
        first_best_inside: first_best,
        budget_exhausted: sim.budget_exhausted,
        routine: None,
        label: FailureLabel::None,
    };

    let judged = match &sim.executed {
        Some((a, ..)) => Some(a.clone()),
        None => {
            sim.trace.events.iter().rev().find_map(|e| e.action.clone()).or_else(|| Some(ep.first_candidate().clone()))
        }
    };
    if let Some(a) = &judged {
        let cx = EvalContext::new(&sim.world, &ep.contract, ep.now, config);
        outcome.gaps_below = estimate_gaps(&cx, &ProxySignals::default(), Some(a)).below(&config.thresholds);
    }
    if let Some((a, ratified, pass, at)) = &sim.executed {
        let d = oracle_decision(ep, &sim.world, a, *ratified, *at, config);
        let ok = d.verdict == Verdict::Inside;
        annotations.authorized.insert(a.id.clone(), ok);
        let inst = &ep.ground_truth.institutional;
        outcome.executed = Some(a.id.clone());
        outcome.executed_op = Some(a.op.clone());
        outcome.ratified = *ratified;
        outcome.authorized = Some(ok);
        outcome.checker_pass = Some(*pass);
        outcome.predicates = Some(d.per_dim.iter().map(|(k, r)| (*k, r.value)).collect());
        outcome.op_permitted = inst.permits(&a.actor, &a.op);
        outcome.weaker_op_permitted = inst
            .role_permissions
            .as_ref()
            .and_then(|r| r.get(&a.actor))
            .is_some_and(|ops| ops.iter().any(|op| *op != a.op));
    }
    outcome.label = classify_failure(&outcome);

    Run { outcome, trace: sim.trace, world: sim.world, annotations }
}
