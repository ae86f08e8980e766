//! Suite manifests and the stratified benchmark report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::doc;
use crate::envelope::PerturbationSpec;
use crate::metrics::{metrics_report, EpisodeRecord, MetricsError, MetricsReport};
use crate::model::Dimension;

use super::agent::{run_episode, Agent, Outcome, Run};
use super::classify::FailureLabel;
use super::episode::{read_file, BenchEpisode, CaseError};
use super::perturb::{perturb, PerturbError};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Case files, relative to the manifest.
    pub episodes: Vec<String>,
    pub agents: Vec<String>,
    #[serde(default = "all_dims")]
    pub dimensions: Vec<String>,
    #[serde(default = "seed_zero")]
    pub seeds: Vec<u64>,
    /// Contract perturbations for envelope stability; omitted when empty.
    #[serde(default)]
    pub stability: Vec<String>,
}

fn all_dims() -> Vec<String> {
    ["none", "sem", "evid", "proc", "inst"].map(String::from).to_vec()
}

fn seed_zero() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cell {0} has no episodes")]
    EmptyCell(String),
}

/// A loaded suite: episodes × dimensions × agents × seeds.
#[derive(Debug, Clone)]
pub struct Suite {
    pub episodes: Vec<BenchEpisode>,
    pub agents: Vec<Agent>,
    /// `None` is the unperturbed cell.
    pub dimensions: Vec<Option<Dimension>>,
    pub seeds: Vec<u64>,
    pub stability: Vec<PerturbationSpec>,
}

pub fn dimension_name(d: Option<Dimension>) -> &'static str {
    d.map_or("none", Dimension::as_str)
}

impl Suite {
    pub fn load(path: &Path) -> Result<Suite, SuiteError> {
        let text = read_file(path)?;
        let node = doc::parse(&text).map_err(|e| SuiteError::Manifest(e.to_string()))?;
        let m: Manifest = serde_json::from_value(node.to_json()).map_err(|e| SuiteError::Manifest(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let episodes = m.episodes.iter().map(|p| BenchEpisode::load(&dir.join(p))).collect::<Result<Vec<_>, _>>()?;
        Suite::new(episodes, &m)
    }

    pub fn new(episodes: Vec<BenchEpisode>, m: &Manifest) -> Result<Suite, SuiteError> {
        let agents =
            m.agents.iter().map(|a| a.parse::<Agent>()).collect::<Result<Vec<_>, _>>().map_err(SuiteError::Manifest)?;
        let dimensions = m
            .dimensions
            .iter()
            .map(|d| match d.as_str() {
                "none" => Ok(None),
                s => s.parse::<Dimension>().map(Some),
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SuiteError::Manifest(e.to_string()))?;
        let stability = m
            .stability
            .iter()
            .map(|s| s.parse::<PerturbationSpec>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| SuiteError::Manifest(e.to_string()))?;
        if agents.is_empty() || dimensions.is_empty() || m.seeds.is_empty() {
            return Err(SuiteError::Manifest("agents, dimensions and seeds must be nonempty".into()));
        }
        Ok(Suite { episodes, agents, dimensions, seeds: m.seeds.clone(), stability })
    }

    /// The episode instances of one dimension cell. The unperturbed cell
    /// uses each episode once; perturbed cells use every seed.
    pub fn instances(&self, dim: Option<Dimension>) -> Result<Vec<BenchEpisode>, SuiteError> {
        let mut out = Vec::new();
        for e in self.episodes.iter().filter(|e| e.takes_part(dim)) {
            match dim {
                None => out.push(e.clone()),
                Some(d) => {
                    for s in &self.seeds {
                        out.push(perturb(e, d, *s)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub agent: String,
    pub dimension: String,
    pub metrics: MetricsReport,
    pub labels: BTreeMap<FailureLabel, usize>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub cells: BTreeMap<String, CellReport>,
}

impl SuiteReport {
    pub fn cell(&self, agent: Agent, dim: Option<Dimension>) -> Option<&CellReport> {
        self.cells.get(&format!("{agent}/{}", dimension_name(dim)))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(feature = "parallel")]
fn run_all(agent: Agent, instances: &[BenchEpisode], config: &Config) -> Vec<Run> {
    use rayon::prelude::*;
    instances.par_iter().map(|e| run_episode(agent, e, config)).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(agent: Agent, instances: &[BenchEpisode], config: &Config) -> Vec<Run> {
    instances.iter().map(|e| run_episode(agent, e, config)).collect()
}

pub fn run_suite(suite: &Suite, config: &Config) -> Result<SuiteReport, SuiteError> {
    let mut cells = BTreeMap::new();
    for dim in &suite.dimensions {
        let mut instances = suite.instances(*dim)?;
        instances.sort_by(|a, b| {
            let seed = |e: &BenchEpisode| e.perturbation.as_ref().map_or(0, |p| p.seed);
            (&a.base.id, seed(a)).cmp(&(&b.base.id, seed(b)))
        });
        for agent in &suite.agents {
            let key = format!("{agent}/{}", dimension_name(*dim));
            if instances.is_empty() {
                return Err(SuiteError::EmptyCell(key));
            }
            let runs = run_all(*agent, &instances, config);
            let records: Vec<EpisodeRecord> = instances
                .iter()
                .zip(&runs)
                .map(|(e, r)| EpisodeRecord {
                    episode: &r.world,
                    contract: &e.ground_truth,
                    trace: &r.trace,
                    annotations: &r.annotations,
                    now: e.now,
                })
                .collect();
            let metrics = metrics_report(&records, &suite.stability, config)?;
            let mut labels: BTreeMap<FailureLabel, usize> = FailureLabel::ALL.iter().map(|l| (*l, 0)).collect();
            for r in &runs {
                *labels.get_mut(&r.outcome.label).expect("all labels") += 1;
            }
            cells.insert(
                key,
                CellReport {
                    agent: agent.to_string(),
                    dimension: dimension_name(*dim).to_string(),
                    metrics,
                    labels,
                    outcomes: runs.into_iter().map(|r| r.outcome).collect(),
                },
            );
        }
    }
    Ok(SuiteReport { cells })
}
