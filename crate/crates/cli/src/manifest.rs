//! Run descriptor written next to the data files.

use dbb_core::quantum_state::PhysicalParams;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::output::{sha256_hex, FileDigest};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Unit system of every number in the output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitSystem {
    pub hbar: f64,
    pub mass: f64,
    pub box_radius: f64,
    pub length: String,
    pub time: String,
    pub momentum: String,
}

impl UnitSystem {
    pub fn of(params: &PhysicalParams) -> Self {
        Self {
            hbar: params.hbar,
            mass: params.mass,
            box_radius: params.box_radius,
            length: "same unit as params.box_radius".into(),
            time: "same unit as params.t0; m a^2 / hbar when hbar = m = a = 1".into(),
            momentum: "mass * length / time".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureCounts {
    pub attempted: usize,
    pub detected: usize,
    pub failed: usize,
    pub resamples: usize,
    pub max_time_exceeded: usize,
    pub node_encounter: usize,
}

/// Everything needed to reproduce a run. Contains no timestamps or host
/// details, so identical inputs give a byte-identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub units: UnitSystem,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failures: Option<FailureCounts>,
    pub files: Vec<FileDigest>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig, failures: Option<FailureCounts>, files: Vec<FileDigest>) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            units: UnitSystem::of(&config.params),
            config: config.clone(),
            failures,
            files,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest fields are always serializable") + "\n"
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}
