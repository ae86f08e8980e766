//! The `intentc` command line.
//!
//! Exit status: 0 when the answer is "go ahead", 1 when the decision is
//! not an authorization (outside, boundary, ask, deny, escalate, abstain,
//! not a tightening), 2 for bad input and 3 for internal failures.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use intentc::bench::{self, CaseFile, Suite};
use intentc::config::Config;
use intentc::contract::ContractTuple;
use intentc::envelope::{
    check_tightening, envelope_stability, membership, prob_membership, Band, PerturbationSpec, Verdict,
};
use intentc::intent::{compile_contracts, parse_intent_document};
use intentc::metrics::{metrics_report, read_traces, resolve_actions, EpisodeRecord, OracleAnnotations};
use intentc::model::{Dimension, EventKind, TaskEpisode};
use intentc::number::Number;
use intentc::predicate::EvalContext;
use intentc::router::{estimate_gaps, route, MoveKind, ProxySignals};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DENIED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "intentc", version, about = "Compile intent documents and check actions against delegation envelopes")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value = "text")]
    format: Format,
    /// Calibration file (TOML). Falls back to $INTENTC_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a document and list what it leaves unresolved.
    Compile { doc: PathBuf },
    /// Decide whether one action is inside the envelope.
    Check {
        doc: PathBuf,
        episode: PathBuf,
        action: String,
        /// Use the risk-sensitive probabilistic envelope.
        #[arg(long)]
        prob: bool,
        /// Evaluation time in seconds; defaults to the episode's clock.
        #[arg(long)]
        now: Option<Number>,
    },
    /// Choose the next move for an episode.
    Route {
        doc: PathBuf,
        episode: PathBuf,
        /// Candidate action; defaults to the episode's first candidate.
        #[arg(long)]
        action: Option<String>,
        /// Proxy signals, e.g. `clarification=1,conflicts=2`.
        #[arg(long, default_value = "")]
        signals: ProxySignals,
        /// Result of an external competence check on the candidate.
        #[arg(long)]
        checker_pass: Option<bool>,
        /// Evaluation time in seconds.
        #[arg(long)]
        now: Option<Number>,
    },
    /// Compute authorized-action metrics over a JSONL trace file.
    Trace { trace: PathBuf, doc: PathBuf, episode: PathBuf },
    /// Check that the second document only narrows the first.
    Tighten {
        doc: PathBuf,
        tightened: PathBuf,
        episode: PathBuf,
        /// Evaluation time in seconds.
        #[arg(long)]
        now: Option<Number>,
    },
    /// Envelope stability under contract perturbations.
    Stability {
        doc: PathBuf,
        episode: PathBuf,
        /// `kind[:magnitude[:seed]]`; kinds: identity, clause_reorder,
        /// numeric_jitter, field_rename, clause_drop.
        #[arg(long = "perturb", required = true)]
        perturb: Vec<PerturbationSpec>,
        /// Evaluation time in seconds.
        #[arg(long)]
        now: Option<Number>,
    },
    /// Run a benchmark suite manifest.
    Bench {
        manifest: PathBuf,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: i32,
    message: String,
}

fn input(message: impl ToString) -> Failure {
    Failure { code: EXIT_INPUT, message: message.to_string() }
}

type Outcome = Result<(String, i32), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_contract(path: &Path) -> Result<(ContractTuple, Vec<String>), Failure> {
    let text = read(path)?;
    let doc = parse_intent_document(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let k = compile_contracts(&doc).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let warnings = doc.diagnostics.iter().map(|d| d.to_string()).collect();
    Ok((k, warnings))
}

fn load_case(path: &Path) -> Result<CaseFile, Failure> {
    CaseFile::parse(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn case_now(case: &CaseFile, now: Option<Number>) -> Number {
    now.or(case.bench.as_ref().map(|b| b.now)).unwrap_or(Number::ZERO)
}

fn to_json(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn compile(doc: &Path, format: Format) -> Outcome {
    let (k, warnings) = load_contract(doc)?;
    let out = match format {
        Format::Json => to_json(&json!({ "contract": k, "warnings": warnings })),
        Format::Text => {
            let mut s = format!("{} ({})\n", k.objective, k.action_type);
            for d in Dimension::ALL {
                let open = k.unresolved(d);
                if open.is_empty() {
                    let _ = writeln!(s, "  {}: closed", d.long_name());
                } else {
                    let _ = writeln!(s, "  {}: unresolved {}", d.long_name(), open.join(", "));
                }
            }
            for w in warnings.iter().chain(&k.diagnostics) {
                let _ = writeln!(s, "note: {w}");
            }
            s
        }
    };
    Ok((out, EXIT_OK))
}

fn find_action<'a>(e: &'a TaskEpisode, id: &str) -> Result<&'a intentc::model::Action, Failure> {
    e.action(id).ok_or_else(|| input(format!("episode {} has no action {id}", e.id)))
}

fn check(
    doc: &Path,
    episode: &Path,
    action: &str,
    prob: bool,
    now: Option<Number>,
    config: &Config,
    format: Format,
) -> Outcome {
    let (k, _) = load_contract(doc)?;
    let case = load_case(episode)?;
    let e = case.episode();
    let a = find_action(&e, action)?;
    let cx = EvalContext::new(&e, &k, case_now(&case, now), config);
    if prob {
        let d = prob_membership(a, &cx);
        let code = if d.band == Band::Authorize { EXIT_OK } else { EXIT_DENIED };
        let out = match format {
            Format::Json => to_json(&d),
            Format::Text => format!("{}: p = {}, alpha = {} ({} risk)\n", d.band, d.p, d.alpha, d.risk),
        };
        return Ok((out, code));
    }
    let d = membership(a, &cx);
    let code = if d.verdict == Verdict::Inside { EXIT_OK } else { EXIT_DENIED };
    let out = match format {
        Format::Json => to_json(&d),
        Format::Text => {
            let mut s = format!("{}\n", d.summary());
            for (dim, r) in &d.per_dim {
                let _ = writeln!(s, "  {:<14} {}", dim.long_name(), r.value);
            }
            for r in &d.reasons {
                let _ = writeln!(s, "  - {r}");
            }
            s
        }
    };
    Ok((out, code))
}

#[allow(clippy::too_many_arguments)]
fn route_cmd(
    doc: &Path,
    episode: &Path,
    action: Option<&str>,
    signals: &ProxySignals,
    checker_pass: Option<bool>,
    now: Option<Number>,
    config: &Config,
    format: Format,
) -> Outcome {
    let (k, _) = load_contract(doc)?;
    let case = load_case(episode)?;
    let e = case.episode();
    let id = match action {
        Some(id) => id.to_string(),
        None => case
            .bench
            .as_ref()
            .and_then(|b| b.candidates.first().cloned())
            .ok_or_else(|| input("no --action given and the episode lists no candidates"))?,
    };
    let a = find_action(&e, &id)?;
    let cx = EvalContext::new(&e, &k, case_now(&case, now), config);
    let decision = membership(a, &cx);
    let gaps = estimate_gaps(&cx, signals, Some(a)).with_costs(config);
    let mv = route(&gaps, &decision, checker_pass, &config.thresholds, &k);
    let code = match mv.kind {
        MoveKind::Ask | MoveKind::Escalate | MoveKind::Abstain => EXIT_DENIED,
        _ => EXIT_OK,
    };
    let out = match format {
        Format::Json => to_json(&json!({ "action": id, "move": mv, "gaps": gaps, "decision": decision.summary() })),
        Format::Text => format!("{mv}\n"),
    };
    Ok((out, code))
}

fn trace_cmd(trace: &Path, doc: &Path, episode: &Path, config: &Config, format: Format) -> Outcome {
    let (k, _) = load_contract(doc)?;
    let case = load_case(episode)?;
    let e = case.episode();
    let mut traces = read_traces(&read(trace)?).map_err(|err| input(format!("{}: {err}", trace.display())))?;
    let now = case_now(&case, None);
    let first_best_inside = case
        .bench
        .as_ref()
        .and_then(|b| b.candidates.first())
        .and_then(|id| e.action(id))
        .is_some_and(|a| membership(a, &EvalContext::new(&e, &k, now, config)).verdict == Verdict::Inside);
    let mut annotations = Vec::new();
    for t in &mut traces {
        resolve_actions(t, &e).map_err(input)?;
        // Without an external oracle, an execution counts as authorized
        // when it was ratified or inside the envelope when it started.
        let mut ann = OracleAnnotations {
            requires_escalation: e.requires_escalation.unwrap_or(false),
            first_best_inside_envelope: first_best_inside,
            rater_labels: case.bench.as_ref().and_then(|b| b.rater_labels.clone()),
            ..Default::default()
        };
        for ev in t.events.iter().filter(|ev| ev.q == EventKind::Execute) {
            if let Some(a) = &ev.action {
                let cx = EvalContext::new(&e, &k, ev.s, config);
                let ok = ev.ratified == Some(true) || membership(a, &cx).verdict == Verdict::Inside;
                let slot = ann.authorized.entry(a.id.clone()).or_insert(true);
                *slot = *slot && ok;
            }
        }
        annotations.push(ann);
    }
    let records: Vec<EpisodeRecord> = traces
        .iter()
        .zip(&annotations)
        .map(|(t, ann)| EpisodeRecord { episode: &e, contract: &k, trace: t, annotations: ann, now })
        .collect();
    let report = metrics_report(&records, &[], config).map_err(input)?;
    let out = match format {
        Format::Json => to_json(&report),
        Format::Text => {
            let value = serde_json::to_value(&report).expect("serializable");
            let mut s = String::new();
            for (name, v) in value.as_object().expect("object") {
                let shown = match v {
                    serde_json::Value::Null => "absent".to_string(),
                    serde_json::Value::String(x) => x.clone(),
                    serde_json::Value::Object(m) => m
                        .iter()
                        .map(|(k, v)| format!("{k}={}", v.as_str().map_or_else(|| v.to_string(), String::from)))
                        .collect::<Vec<_>>()
                        .join(" "),
                    other => other.to_string(),
                };
                let _ = writeln!(s, "{name}: {shown}");
            }
            s
        }
    };
    Ok((out, EXIT_OK))
}

fn tighten(
    doc: &Path,
    tightened: &Path,
    episode: &Path,
    now: Option<Number>,
    config: &Config,
    format: Format,
) -> Outcome {
    let (k, _) = load_contract(doc)?;
    let (k2, _) = load_contract(tightened)?;
    let case = load_case(episode)?;
    let e = case.episode();
    let t = check_tightening(&k, &k2, &e, case_now(&case, now), config);
    let code = if t.tightening { EXIT_OK } else { EXIT_DENIED };
    let out = match format {
        Format::Json => to_json(&t),
        Format::Text => match &t.witness {
            None => "tightening\n".to_string(),
            Some(a) => format!("not a tightening: {} is admitted only by the second contract\n", a.id),
        },
    };
    Ok((out, code))
}

fn stability(
    doc: &Path,
    episode: &Path,
    specs: &[PerturbationSpec],
    now: Option<Number>,
    config: &Config,
    format: Format,
) -> Outcome {
    let (k, _) = load_contract(doc)?;
    let case = load_case(episode)?;
    let e = case.episode();
    let s = envelope_stability(&k, &e, specs, case_now(&case, now), config).map_err(input)?;
    let out = match format {
        Format::Json => to_json(&json!({ "stability": s, "perturbations": specs })),
        Format::Text => format!("stability: {s}\n"),
    };
    Ok((out, EXIT_OK))
}

fn bench_cmd(manifest: &Path, out_path: Option<&Path>, config: &Config, format: Format) -> Outcome {
    let suite = Suite::load(manifest).map_err(input)?;
    let report = bench::run_suite(&suite, config).map_err(|e| match e {
        bench::SuiteError::Metrics(m) => Failure { code: EXIT_INTERNAL, message: m.to_string() },
        other => input(other),
    })?;
    let json = report.to_json();
    if let Some(p) = out_path {
        std::fs::write(p, &json).map_err(|e| input(format!("{}: {e}", p.display())))?;
    }
    let out = match (format, out_path) {
        (Format::Json, None) => json,
        _ => {
            let mut s = String::new();
            for (key, cell) in &report.cells {
                let labels: Vec<String> =
                    cell.labels.iter().filter(|(_, n)| **n > 0).map(|(l, n)| format!("{l}={n}")).collect();
                let far = cell.metrics.false_autonomy_rate.map_or_else(|| "absent".to_string(), |r| r.to_string());
                let _ = writeln!(s, "{key:<28} false_autonomy={far:<6} {}", labels.join(" "));
            }
            if let Some(p) = out_path {
                let _ = writeln!(s, "report written to {}", p.display());
            }
            s
        }
    };
    Ok((out, EXIT_OK))
}

fn load_config(path: Option<&Path>) -> Result<Config, Failure> {
    match path {
        Some(p) => Config::load(p).map_err(input),
        None => Config::from_env().map_err(input),
    }
}

/// Runs the command line and returns the exit status. Results go to
/// `out`; diagnostics go to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                eprint!("{e}");
            }
            return code;
        }
    };
    let result = load_config(cli.config.as_deref()).and_then(|config| {
        let f = cli.format;
        match &cli.command {
            Command::Compile { doc } => compile(doc, f),
            Command::Check { doc, episode, action, prob, now } => check(doc, episode, action, *prob, *now, &config, f),
            Command::Route { doc, episode, action, signals, checker_pass, now } => {
                route_cmd(doc, episode, action.as_deref(), signals, *checker_pass, *now, &config, f)
            }
            Command::Trace { trace, doc, episode } => trace_cmd(trace, doc, episode, &config, f),
            Command::Tighten { doc, tightened, episode, now } => tighten(doc, tightened, episode, *now, &config, f),
            Command::Stability { doc, episode, perturb, now } => stability(doc, episode, perturb, *now, &config, f),
            Command::Bench { manifest, out } => bench_cmd(manifest, out.as_deref(), &config, f),
        }
    });
    match result {
        Ok((text, code)) => match out.write_all(text.as_bytes()) {
            Ok(()) => code,
            Err(e) => {
                eprintln!("intentc: {e}");
                EXIT_INTERNAL
            }
        },
        Err(f) => {
            eprintln!("intentc: {}", f.message);
            f.code
        }
    }
}
