//! Problem configuration: JSON schema, validation, and conversion into the
//! core domain types. Unknown fields are rejected.

use serde::{Deserialize, Serialize};

use cbi_core::model::{IntervalPartition, Observation, ReliabilityTarget};
use cbi_core::oracle::ObjectiveKind;
use cbi_core::solver::SolverOptions;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub partition: PartitionConfig,
    pub observation: ObservationConfig,
    pub target: TargetConfig,
    #[serde(default)]
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub breakpoints: Vec<f64>,
    pub masses: MassesSpec,
    #[serde(default)]
    pub fault_free: bool,
}

/// Either explicit masses or the keyword assigning interval lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MassesSpec {
    Keyword(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub r: u64,
    pub k: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub m: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct ObjectiveConfig {
    #[serde(default)]
    pub kind: ObjectiveKindConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<u32>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKindConfig {
    #[default]
    Standard,
    Capped,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
        }
    }
}

impl ProblemConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))
    }

    pub fn partition(&self) -> Result<IntervalPartition, CliError> {
        let p = &self.partition;
        let built = match &p.masses {
            MassesSpec::Keyword(word) if word == "uniform-consistent" => {
                if p.fault_free {
                    return Err(CliError::Validation(
                        "uniform-consistent masses cannot carry a fault-free point mass".into(),
                    ));
                }
                IntervalPartition::uniform_consistent(&p.breakpoints)
            }
            MassesSpec::Keyword(word) => {
                return Err(CliError::Validation(format!(
                    "unknown masses keyword {word:?} (expected \"uniform-consistent\")"
                )));
            }
            MassesSpec::Values(masses) => {
                IntervalPartition::new(&p.breakpoints, masses, p.fault_free)
            }
        };
        built.map_err(|e| CliError::Validation(format!("invalid partition: {e}")))
    }

    pub fn observation(&self) -> Result<Observation, CliError> {
        Observation::new(self.observation.r as f64, self.observation.k as f64)
            .map_err(|e| CliError::Validation(format!("invalid observation: {e}")))
    }

    pub fn target(&self) -> Result<ReliabilityTarget, CliError> {
        ReliabilityTarget::new(self.target.m, self.target.alpha)
            .map_err(|e| CliError::Validation(format!("invalid target: {e}")))
    }

    pub fn alpha_required(&self) -> Result<f64, CliError> {
        self.target
            .alpha
            .ok_or_else(|| CliError::Validation("target.alpha is required for planning".into()))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            ..Default::default()
        }
    }

    pub fn objective_kind(&self) -> Result<ObjectiveKind, CliError> {
        match (self.objective.kind, self.objective.l) {
            (ObjectiveKindConfig::Standard, None) => Ok(ObjectiveKind::Standard),
            (ObjectiveKindConfig::Standard, Some(_)) => Err(CliError::Validation(
                "objective.l is only meaningful for kind \"capped\"".into(),
            )),
            (ObjectiveKindConfig::Capped, Some(l)) => Ok(ObjectiveKind::Capped { l }),
            (ObjectiveKindConfig::Capped, None) => Err(CliError::Validation(
                "objective.l is required for kind \"capped\"".into(),
            )),
        }
    }
}
