//! Perturbation benchmark: episodes, scripted agents, the failure
//! classifier and the internalization gate.

mod agent;
mod classify;
mod episode;
mod gate;
mod perturb;
mod suite;

pub use agent::{durations, first_best_inside, run_episode, Agent, Outcome, RoutineUse, Run, STEP_BUDGET};
pub use classify::{classify_failure, FailureLabel};
pub use episode::{load_episode, read_file, BenchEpisode, BenchSection, CaseError, CaseFile, Perturbation, SemVariant};
pub use gate::{internalization_gate, wilson_lower, GateError, GateThresholds, GateVerdict, RoutineStats, Z95};
pub use perturb::{perturb, PerturbError, SANCTIONED};
pub use suite::{dimension_name, run_suite, CellReport, Manifest, Suite, SuiteError, SuiteReport};
