//! Typed intent compilation and delegation envelopes.
//!
//! An intent document is compiled into four contracts: semantic,
//! evidentiary, procedural and institutional. A candidate action is inside
//! the delegation envelope when all four predicates hold under strong
//! Kleene logic. Whatever the document leaves open stays visible as
//! unresolved fields, and the router turns those gaps into a next move.
//!
//! ```
//! use intentc::{compile_text, membership, Action, Config, EvalContext, Number, TaskEpisode, Verdict};
//!
//! let k = compile_text(
//!     "task:\n  objective: \"refund\"\n  action_type: \"support\"\n\
//!      institutional_contract:\n  autonomous_if: \"amount <= 100\"\n",
//! )
//! .unwrap();
//! let mut refund = Action::new("r1", "issue_refund", "agent", "payments");
//! refund.bindings.insert("amount".into(), 40.into());
//! let episode = TaskEpisode { action_space: vec![refund.clone()], ..Default::default() };
//! let config = Config::default();
//! let d = membership(&refund, &EvalContext::new(&episode, &k, Number::ZERO, &config));
//! // Most of the contract is still open, so the action sits on the boundary.
//! assert_eq!(d.verdict, Verdict::Boundary);
//! ```
//!
//! Numbers are exact rationals throughout, so metric and envelope
//! arithmetic reproduces hand computations digit for digit.

pub mod bench;
pub mod condition;
pub mod config;
pub mod contract;
pub mod doc;
pub mod envelope;
pub mod intent;
pub mod metrics;
pub mod model;
pub mod number;
pub mod predicate;
pub mod router;

pub use condition::{parse_condition, ConditionExpr};
pub use config::Config;
pub use contract::ContractTuple;
pub use envelope::{membership, prob_membership, EnvelopeDecision, Verdict};
pub use intent::{compile_contracts, compile_text, parse_intent_document, IntentDocument};
pub use model::{Action, Dimension, Event, EventKind, EventTrace, EvidenceRecord, RiskLevel, Scalar, TaskEpisode};
pub use number::Number;
pub use predicate::{EvalContext, TruthValue};
pub use router::{route, Move, MoveKind};
