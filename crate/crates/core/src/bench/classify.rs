use std::fmt;

use serde::{Deserialize, Serialize};

use super::agent::Outcome;

/// Failure taxonomy for a single episode outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureLabel {
    None,
    Undersearch,
    Misclosure,
    Overclosure,
    Misdelegation,
    ContractConflict,
    PrematureInternalization,
}

impl FailureLabel {
    pub const ALL: [FailureLabel; 7] = [
        FailureLabel::None,
        FailureLabel::Undersearch,
        FailureLabel::Misclosure,
        FailureLabel::Overclosure,
        FailureLabel::Misdelegation,
        FailureLabel::ContractConflict,
        FailureLabel::PrematureInternalization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureLabel::None => "none",
            FailureLabel::Undersearch => "undersearch",
            FailureLabel::Misclosure => "misclosure",
            FailureLabel::Overclosure => "overclosure",
            FailureLabel::Misdelegation => "misdelegation",
            FailureLabel::ContractConflict => "contract_conflict",
            FailureLabel::PrematureInternalization => "premature_internalization",
        }
    }
}

impl fmt::Display for FailureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Labels an outcome. The first matching rule wins:
///
/// 1. authorized execution that passed the checker: `none`
/// 2. an internalized routine whose gate fails: `premature_internalization`
/// 3. empty ground-truth envelope on a solvable episode: `contract_conflict`
/// 4. unauthorized op while the actor held a weaker one: `misdelegation`
/// 5. unauthorized execution that passed the checker: `misclosure`
/// 6. execution that failed the checker: `undersearch` when the gaps were
///    closed or the action was authorized anyway, else `misclosure`
/// 7. no execution although the best candidate was inside: `overclosure`
/// 8. anything else is a correctly withheld action: `none`
pub fn classify_failure(o: &Outcome) -> FailureLabel {
    let executed = o.executed.is_some();
    let authorized = o.authorized == Some(true);
    let pass = o.checker_pass == Some(true);
    if executed && authorized && pass {
        return FailureLabel::None;
    }
    if o.routine.as_ref().is_some_and(|r| !r.gate_passed) {
        return FailureLabel::PrematureInternalization;
    }
    if o.envelope_empty && o.solvable {
        return FailureLabel::ContractConflict;
    }
    if executed && !authorized {
        if o.op_permitted == Some(false) && o.weaker_op_permitted && !o.ratified {
            return FailureLabel::Misdelegation;
        }
        if pass {
            return FailureLabel::Misclosure;
        }
    }
    if executed {
        return if authorized || o.gaps_below { FailureLabel::Undersearch } else { FailureLabel::Misclosure };
    }
    if o.first_best_inside {
        return FailureLabel::Overclosure;
    }
    FailureLabel::None
}
