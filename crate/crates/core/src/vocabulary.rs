//! Shared vocabulary: every semantic id used by a twin resolves to a concept
//! with one datatype and one canonical unit.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twin::{Datatype, SemanticId, SubmodelElement, TwinShell, TypedValue};

pub const NAMESPACE: &str = "urn:agrivoc:";
pub const INBOX_SUBMODEL_ID: &str = "urn:agrivoc:sm.inbox";

/// Concept file shipped with the crate (version 1).
pub const STANDARD_CONCEPTS: &str = include_str!("../data/vocabulary-v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConceptCategory {
    #[default]
    Property,
    Operation,
    Submodel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConceptDescription {
    pub semantic_id: SemanticId,
    pub preferred_name: String,
    pub definition: String,
    #[serde(default)]
    pub category: ConceptCategory,
    /// Required for property concepts, absent otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datatype: Option<Datatype>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical_unit: Option<String>,
}

impl ConceptDescription {
    pub fn property(id: &str, name: &str, datatype: Datatype, unit: &str) -> Result<Self> {
        Ok(Self {
            semantic_id: SemanticId::expand(id)?,
            preferred_name: name.to_owned(),
            definition: String::new(),
            category: ConceptCategory::Property,
            datatype: Some(datatype),
            canonical_unit: Some(unit.to_owned()),
        })
    }

    fn check(&self) -> Result<()> {
        let is_property = self.category == ConceptCategory::Property;
        if is_property != (self.datatype.is_some() && self.canonical_unit.is_some()) {
            return Err(Error::InvalidValue(format!(
                "concept {}: datatype and canonical unit are required exactly for property concepts",
                self.semantic_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "camelCase")]
pub enum Violation {
    #[error("unknown concept {semantic_id}")]
    UnknownConcept { semantic_id: SemanticId },
    #[error("{semantic_id} is not a property concept")]
    NotAProperty { semantic_id: SemanticId },
    #[error("{semantic_id} expects {expected:?}, got {actual:?}")]
    Datatype {
        semantic_id: SemanticId,
        expected: Datatype,
        actual: Datatype,
    },
    #[error("{semantic_id} expects unit '{expected}', got '{actual}'")]
    Unit {
        semantic_id: SemanticId,
        expected: String,
        actual: String,
    },
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        match v {
            Violation::UnknownConcept { semantic_id } => Error::UnresolvableSemanticId(semantic_id),
            Violation::NotAProperty { semantic_id } => Error::ConceptViolation {
                element: semantic_id.to_string(),
                reason: "not a property concept".into(),
            },
            Violation::Datatype {
                semantic_id,
                expected,
                actual,
            } => Error::DatatypeMismatch {
                path: semantic_id.to_string(),
                expected,
                actual,
            },
            Violation::Unit {
                semantic_id,
                expected,
                actual,
            } => Error::UnitViolation {
                semantic_id,
                expected,
                actual,
            },
        }
    }
}

/// Append-only concept registry.
#[derive(Debug, Default)]
pub struct Vocabulary {
    concepts: RwLock<BTreeMap<SemanticId, ConceptDescription>>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// The vocabulary seeded from the bundled concept file.
    pub fn standard() -> Self {
        Self::from_seed(STANDARD_CONCEPTS.as_bytes()).expect("bundled vocabulary is valid")
    }

    /// Seed file: a JSON array of concept objects.
    pub fn from_seed(bytes: &[u8]) -> Result<Self> {
        let concepts: Vec<ConceptDescription> = serde_json::from_slice(bytes)?;
        let vocab = Self::new();
        for c in concepts {
            vocab.register_concept(c)?;
        }
        Ok(vocab)
    }

    pub fn from_seed_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        Self::from_seed(&bytes)
    }

    pub fn register_concept(&self, concept: ConceptDescription) -> Result<()> {
        concept.check()?;
        let mut concepts = self.concepts.write().unwrap();
        if concepts.contains_key(&concept.semantic_id) {
            return Err(Error::DuplicateConcept(concept.semantic_id));
        }
        concepts.insert(concept.semantic_id.clone(), concept);
        Ok(())
    }

    pub fn lookup(&self, id: &SemanticId) -> Result<ConceptDescription> {
        self.concepts
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("concept {id}")))
    }

    pub fn contains(&self, id: &SemanticId) -> bool {
        self.concepts.read().unwrap().contains_key(id)
    }

    pub fn concepts(&self) -> Vec<ConceptDescription> {
        self.concepts.read().unwrap().values().cloned().collect()
    }

    /// Ok iff the concept exists, is a property concept, the datatype matches
    /// and `unit` is the canonical unit.
    pub fn validate_value(&self, id: &SemanticId, value: &TypedValue, unit: &str) -> Result<(), Violation> {
        let concepts = self.concepts.read().unwrap();
        let c = concepts.get(id).ok_or_else(|| Violation::UnknownConcept {
            semantic_id: id.clone(),
        })?;
        let (Some(datatype), Some(canonical)) = (c.datatype, c.canonical_unit.as_deref()) else {
            return Err(Violation::NotAProperty { semantic_id: id.clone() });
        };
        if value.datatype() != datatype {
            return Err(Violation::Datatype {
                semantic_id: id.clone(),
                expected: datatype,
                actual: value.datatype(),
            });
        }
        if unit != canonical {
            return Err(Violation::Unit {
                semantic_id: id.clone(),
                expected: canonical.to_owned(),
                actual: unit.to_owned(),
            });
        }
        Ok(())
    }

    /// Closed-world check over a shell: every semantic id resolves, and
    /// property datatypes and units agree with their concepts.
    pub fn check_shell(&self, shell: &TwinShell) -> Result<()> {
        let concepts = self.concepts.read().unwrap();
        let resolve = |id: &SemanticId| {
            concepts
                .get(id)
                .ok_or_else(|| Error::UnresolvableSemanticId(id.clone()))
        };
        for sm in &shell.submodels {
            resolve(&sm.semantic_id)?;
            for el in &sm.elements {
                let c = resolve(el.semantic_id())?;
                if let SubmodelElement::Property(p) = el {
                    let element = format!("{}/{}", sm.short_name, p.short_name);
                    if c.datatype != Some(p.datatype) {
                        return Err(Error::ConceptViolation {
                            element,
                            reason: format!("datatype {:?} differs from concept {:?}", p.datatype, c.datatype),
                        });
                    }
                    if c.canonical_unit.as_deref() != Some(p.unit.as_str()) {
                        return Err(Error::ConceptViolation {
                            element,
                            reason: format!("unit '{}' differs from canonical {:?}", p.unit, c.canonical_unit),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> SemanticId {
        SemanticId::expand(s).unwrap()
    }

    #[test]
    fn register_then_lookup() {
        let v = Vocabulary::new();
        let c = ConceptDescription::property("soil.nitrogen", "Soil nitrogen", Datatype::Decimal, "kg/ha").unwrap();
        v.register_concept(c.clone()).unwrap();
        assert_eq!(v.lookup(&sid("soil.nitrogen")).unwrap(), c);
        assert_eq!(v.lookup(&sid("soil.nitrogen")).unwrap(), v.lookup(&sid("soil.nitrogen")).unwrap());
        assert_eq!(v.register_concept(c).unwrap_err().code(), "DuplicateConcept");
        let crop = ConceptDescription::property("crop.type", "Crop", Datatype::Text, "1").unwrap();
        v.register_concept(crop).unwrap();
        assert!(v.lookup(&sid("crop.type")).is_ok());
        assert_eq!(v.lookup(&sid("nope")).unwrap_err().code(), "NotFound");
    }

    #[test]
    fn value_validation() {
        let v = Vocabulary::standard();
        let n = sid("soil.nitrogen");
        assert!(v.validate_value(&n, &TypedValue::Decimal(42.0), "kg/ha").is_ok());
        assert!(matches!(
            v.validate_value(&n, &TypedValue::Text("high".into()), "kg/ha"),
            Err(Violation::Datatype { .. })
        ));
        assert!(matches!(
            v.validate_value(&n, &TypedValue::Decimal(42.0), "mg/kg"),
            Err(Violation::Unit { .. })
        ));
        assert!(matches!(
            v.validate_value(&sid("nope"), &TypedValue::Decimal(1.0), "1"),
            Err(Violation::UnknownConcept { .. })
        ));
    }

    #[test]
    fn property_concepts_need_type_and_unit() {
        let v = Vocabulary::new();
        let mut c = ConceptDescription::property("x.y", "x", Datatype::Decimal, "1").unwrap();
        c.canonical_unit = None;
        assert!(v.register_concept(c).is_err());
    }
}
