//! Eligibility of a recurrent routine for controlled internalization.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutineStats {
    pub routine_id: String,
    pub frequency: u64,
    pub compliance_successes: u64,
    pub compliance_trials: u64,
    pub stability: f64,
    pub monitorable: bool,
    pub rollback_defined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateThresholds {
    pub min_frequency: u64,
    pub min_compliance: f64,
    pub min_stability: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds { min_frequency: 100, min_compliance: 0.9, min_stability: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateVerdict {
    pub eligible: bool,
    /// Unmet criteria among `frequency`, `compliance`, `stability`,
    /// `monitorable`, `rollback`.
    pub failing: Vec<&'static str>,
    pub compliance_lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GateError {
    #[error("routine {0}: no compliance trials")]
    NoTrials(String),
    #[error("routine {0}: more successes than trials")]
    TooManySuccesses(String),
}

/// Lower end of the Wilson score interval for `successes / trials`.
pub fn wilson_lower(successes: u64, trials: u64, z: f64) -> f64 {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - spread) / (1.0 + z2 / n)).max(0.0)
}

pub fn internalization_gate(stats: &RoutineStats, th: &GateThresholds) -> Result<GateVerdict, GateError> {
    if stats.compliance_trials == 0 {
        return Err(GateError::NoTrials(stats.routine_id.clone()));
    }
    if stats.compliance_successes > stats.compliance_trials {
        return Err(GateError::TooManySuccesses(stats.routine_id.clone()));
    }
    let lower = wilson_lower(stats.compliance_successes, stats.compliance_trials, Z95);
    let checks = [
        ("frequency", stats.frequency >= th.min_frequency),
        ("compliance", lower >= th.min_compliance),
        ("stability", stats.stability >= th.min_stability),
        ("monitorable", stats.monitorable),
        ("rollback", stats.rollback_defined),
    ];
    let failing: Vec<_> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Ok(GateVerdict { eligible: failing.is_empty(), failing, compliance_lower_bound: lower })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> RoutineStats {
        RoutineStats {
            routine_id: "fare_hold".into(),
            frequency: 120,
            compliance_successes: 97,
            compliance_trials: 100,
            stability: 0.98,
            monitorable: true,
            rollback_defined: true,
        }
    }

    #[test]
    fn worked_examples() {
        let th = GateThresholds::default();
        let v = internalization_gate(&stats(), &th).unwrap();
        assert!(v.eligible);
        assert!((v.compliance_lower_bound - 0.915).abs() < 0.005);

        let no_rollback = RoutineStats { rollback_defined: false, ..stats() };
        assert_eq!(internalization_gate(&no_rollback, &th).unwrap().failing, ["rollback"]);

        let rare = RoutineStats { frequency: 3, ..stats() };
        assert_eq!(internalization_gate(&rare, &th).unwrap().failing, ["frequency"]);
    }

    #[test]
    fn degenerate_trials() {
        let s = RoutineStats { compliance_trials: 0, compliance_successes: 0, ..stats() };
        assert!(matches!(internalization_gate(&s, &GateThresholds::default()), Err(GateError::NoTrials(_))));
    }

    #[test]
    fn every_failure_is_listed() {
        let s = RoutineStats {
            frequency: 0,
            compliance_successes: 1,
            stability: 0.1,
            monitorable: false,
            rollback_defined: false,
            ..stats()
        };
        let v = internalization_gate(&s, &GateThresholds::default()).unwrap();
        assert_eq!(v.failing, ["frequency", "compliance", "stability", "monitorable", "rollback"]);
    }
}
