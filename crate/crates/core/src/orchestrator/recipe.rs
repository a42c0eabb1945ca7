use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::ProcessKind;
use crate::twin::{SemanticId, TypedValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleSpec {
    pub name: String,
    /// Submodel semantic ids a bound twin must expose.
    pub requires: Vec<SemanticId>,
}

/// Where a step argument comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Binding {
    Literal(TypedValue),
    FromStep { step: usize, output: String },
    /// Current value of a concept on the run's field twin.
    Field(SemanticId),
}

impl Binding {
    fn check_dataflow(&self, before: usize, at: &str) -> Result<()> {
        match self {
            Binding::FromStep { step, .. } if *step >= before => Err(Error::ParseError(format!(
                "{at} references step {step}, which does not precede it"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub role: String,
    /// Operation path (`submodel/op`) or operation semantic id (`urn:...`).
    pub op: String,
    #[serde(default)]
    pub args: BTreeMap<String, Binding>,
}

/// How the run's work record is assembled from step outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordSpec {
    pub executor: String,
    pub covered_area: Binding,
    #[serde(default)]
    pub outputs: BTreeMap<SemanticId, Binding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RecipeFile {
    name: String,
    crop_type: String,
    #[serde(default = "default_kind")]
    process_kind: ProcessKind,
    roles: Vec<RoleSpec>,
    steps: Vec<Step>,
    #[serde(default)]
    record: Option<RecordSpec>,
}

fn default_kind() -> ProcessKind {
    ProcessKind::WeedControl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Recipe {
    pub name: String,
    pub crop_type: String,
    pub process_kind: ProcessKind,
    pub roles: Vec<RoleSpec>,
    pub steps: Vec<Step>,
    pub record: RecordSpec,
    /// Hex SHA-256 of the definition bytes.
    pub definition_digest: String,
}

pub fn definition_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Recipe {
    pub fn load(definition: &[u8]) -> Result<Self> {
        let file: RecipeFile =
            serde_json::from_slice(definition).map_err(|e| Error::ParseError(format!("recipe: {e}")))?;
        if file.name.is_empty() {
            return Err(Error::ParseError("recipe name is empty".into()));
        }
        if file.steps.is_empty() {
            return Err(Error::ParseError(format!("recipe {} has no steps", file.name)));
        }
        let mut declared = BTreeSet::new();
        for r in &file.roles {
            if !declared.insert(r.name.as_str()) {
                return Err(Error::ParseError(format!("role '{}' declared twice", r.name)));
            }
        }
        for (i, step) in file.steps.iter().enumerate() {
            if !declared.contains(step.role.as_str()) {
                return Err(Error::DanglingRoleReference {
                    step: i,
                    role: step.role.clone(),
                });
            }
            for (name, b) in &step.args {
                b.check_dataflow(i, &format!("step {i} argument '{name}'"))?;
            }
        }
        let record = match file.record {
            Some(r) => r,
            None => {
                let last = file.steps.len() - 1;
                RecordSpec {
                    executor: file.steps[last].role.clone(),
                    covered_area: Binding::FromStep {
                        step: last,
                        output: "coveredArea".into(),
                    },
                    outputs: BTreeMap::new(),
                }
            }
        };
        if !declared.contains(record.executor.as_str()) {
            return Err(Error::DanglingRoleReference {
                step: file.steps.len(),
                role: record.executor.clone(),
            });
        }
        let n = file.steps.len();
        record.covered_area.check_dataflow(n, "record coveredArea")?;
        for (id, b) in &record.outputs {
            b.check_dataflow(n, &format!("record output {id}"))?;
        }
        Ok(Self {
            name: file.name,
            crop_type: file.crop_type,
            process_kind: file.process_kind,
            roles: file.roles,
            steps: file.steps,
            record,
            definition_digest: definition_digest(definition),
        })
    }

    pub fn role(&self, name: &str) -> Option<&RoleSpec> {
        self.roles.iter().find(|r| r.name == name)
    }
}

/// Recipe files shipped with the crate.
pub mod bundled {
    pub const WEED_CONTROL_POTATO: &str = include_str!("../../data/recipes/weed-control-potato.json");
    pub const WEED_CONTROL_SUGAR_BEET: &str = include_str!("../../data/recipes/weed-control-sugar-beet.json");
    pub const FERTILIZATION: &str = include_str!("../../data/recipes/fertilization.json");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_recipes_load() {
        let r = Recipe::load(bundled::WEED_CONTROL_POTATO.as_bytes()).unwrap();
        let roles: BTreeSet<&str> = r.roles.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(roles, BTreeSet::from(["routePlanner", "fieldRobot"]));
        assert_eq!(r.crop_type, "potato");
        let again = Recipe::load(bundled::WEED_CONTROL_POTATO.as_bytes()).unwrap();
        assert_eq!(r.definition_digest, again.definition_digest);
        assert!(Recipe::load(bundled::WEED_CONTROL_SUGAR_BEET.as_bytes()).is_ok());
        assert!(Recipe::load(bundled::FERTILIZATION.as_bytes()).is_ok());
    }

    #[test]
    fn dangling_role() {
        let def = br#"{"name":"x","cropType":"potato","roles":[{"name":"a","requires":[]}],
            "steps":[{"role":"b","op":"s/op","args":{}}]}"#;
        assert_eq!(
            Recipe::load(def).unwrap_err(),
            Error::DanglingRoleReference { step: 0, role: "b".into() }
        );
    }

    #[test]
    fn forward_reference_rejected() {
        let def = br#"{"name":"x","cropType":"potato","roles":[{"name":"a","requires":[]}],
            "steps":[{"role":"a","op":"s/op","args":{"v":{"fromStep":{"step":0,"output":"o"}}}}]}"#;
        assert_eq!(Recipe::load(def).unwrap_err().code(), "ParseError");
    }

    #[test]
    fn malformed_definition() {
        assert_eq!(Recipe::load(b"{not json").unwrap_err().code(), "ParseError");
    }
}
