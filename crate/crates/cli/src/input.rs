//! Instance documents: loading, error mapping and a printable summary.

use std::path::Path;

use imvote_core::model::{
    validate_instance, AgentTag, Alternative, Instance, ModelError, RawInstance, Setting,
};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Reads and validates an instance document.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_instance(path, &text)
}

pub fn parse_instance(path: &Path, text: &str) -> Result<Instance> {
    let raw: RawInstance = serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    validate_instance(&raw).map_err(|e| structural(path, e))
}

/// Malformed documents are parse errors naming the offending field; broken
/// model assumptions are validation errors.
fn structural(path: &Path, e: ModelError) -> CliError {
    let location = match &e {
        ModelError::FractionsNotNormalized(_) => "field `groups[].fraction`".to_string(),
        ModelError::BadFraction { group, .. } => format!("field `groups[{group}].fraction`"),
        ModelError::AgentCountMismatch { .. } => "field `agents`".to_string(),
        ModelError::Shape(_) => "fields `groups` / `agents`".to_string(),
        _ => {
            return CliError::Validation {
                path: path.to_path_buf(),
                source: e,
            }
        }
    };
    CliError::Parse {
        path: path.to_path_buf(),
        location,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub setting: Setting,
    pub n: usize,
    pub mu: f64,
    pub win_threshold: usize,
    pub friendly: usize,
    pub unfriendly: usize,
    pub contingent: usize,
    pub informed_majority: Vec<Alternative>,
    /// Tag of each group, when the instance comes from groups.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_tags: Option<Vec<AgentTag>>,
}

impl InstanceSummary {
    pub fn of(inst: &Instance) -> Self {
        let comp = inst.reference_composition();
        Self {
            setting: inst.setting(),
            n: inst.n_agents(),
            mu: inst.threshold(),
            win_threshold: inst.win_threshold(),
            friendly: inst.count(AgentTag::Friendly),
            unfriendly: inst.count(AgentTag::Unfriendly),
            contingent: inst.count(AgentTag::Contingent),
            informed_majority: (0..inst.n_states())
                .map(|s| comp.informed_majority(s))
                .collect(),
            group_tags: inst
                .family()
                .map(|f| f.group_types().iter().map(|t| t.tag).collect()),
        }
    }
}
