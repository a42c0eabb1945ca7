use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::shell::{ElementPath, Parameter, SubmodelElement, TwinKind, TwinShell};
use super::value::{Datatype, SemanticId, TwinId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum ElementSignature {
    #[serde(rename_all = "camelCase")]
    Property {
        short_name: String,
        semantic_id: SemanticId,
        datatype: Datatype,
        unit: String,
    },
    #[serde(rename_all = "camelCase")]
    Operation {
        short_name: String,
        semantic_id: SemanticId,
        inputs: Vec<Parameter>,
        outputs: Vec<Parameter>,
    },
}

impl ElementSignature {
    pub fn short_name(&self) -> &str {
        match self {
            ElementSignature::Property { short_name, .. } | ElementSignature::Operation { short_name, .. } => {
                short_name
            }
        }
    }

    pub fn semantic_id(&self) -> &SemanticId {
        match self {
            ElementSignature::Property { semantic_id, .. }
            | ElementSignature::Operation { semantic_id, .. } => semantic_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubmodelSignature {
    pub short_name: String,
    pub semantic_id: SemanticId,
    pub elements: Vec<ElementSignature>,
}

/// Structure-only view of a shell: what the mediator and registry reflect on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShellDescriptor {
    pub id: TwinId,
    pub kind: TwinKind,
    pub endpoint: String,
    pub submodels: Vec<SubmodelSignature>,
    /// Hex SHA-256 over id, kind and submodel signatures. The endpoint is excluded.
    pub structure_digest: String,
}

impl ShellDescriptor {
    pub fn of(shell: &TwinShell, endpoint: String) -> Self {
        let submodels: Vec<SubmodelSignature> = shell
            .submodels
            .iter()
            .map(|sm| SubmodelSignature {
                short_name: sm.short_name.clone(),
                semantic_id: sm.semantic_id.clone(),
                elements: sm
                    .elements
                    .iter()
                    .map(|el| match el {
                        SubmodelElement::Property(p) => ElementSignature::Property {
                            short_name: p.short_name.clone(),
                            semantic_id: p.semantic_id.clone(),
                            datatype: p.datatype,
                            unit: p.unit.clone(),
                        },
                        SubmodelElement::Operation(op) => ElementSignature::Operation {
                            short_name: op.short_name.clone(),
                            semantic_id: op.semantic_id.clone(),
                            inputs: op.inputs.clone(),
                            outputs: op.outputs.clone(),
                        },
                    })
                    .collect(),
            })
            .collect();
        let structure_digest = structure_digest(&shell.id, shell.kind, &submodels);
        Self {
            id: shell.id.clone(),
            kind: shell.kind,
            endpoint,
            submodels,
            structure_digest,
        }
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    /// Paths of all elements annotated with `id`, in descriptor order.
    pub fn resolve(&self, id: &SemanticId) -> Vec<ElementPath> {
        self.catalog()
            .into_iter()
            .filter(|(sid, _)| sid == id)
            .map(|(_, path)| path)
            .collect()
    }

    /// Every element as `(semanticId, path)`, in descriptor order.
    pub fn catalog(&self) -> Vec<(SemanticId, ElementPath)> {
        self.submodels
            .iter()
            .flat_map(|sm| {
                sm.elements
                    .iter()
                    .map(|el| (el.semantic_id().clone(), ElementPath::new(&sm.short_name, el.short_name())))
            })
            .collect()
    }

    pub fn element(&self, path: &ElementPath) -> Option<&ElementSignature> {
        self.submodels
            .iter()
            .find(|sm| sm.short_name == path.submodel)
            .and_then(|sm| sm.elements.iter().find(|el| el.short_name() == path.element))
    }

    pub fn submodel_semantic_ids(&self) -> impl Iterator<Item = &SemanticId> {
        self.submodels.iter().map(|sm| &sm.semantic_id)
    }
}

fn structure_digest(id: &TwinId, kind: TwinKind, submodels: &[SubmodelSignature]) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        id: &'a TwinId,
        kind: TwinKind,
        submodels: &'a [SubmodelSignature],
    }
    let bytes = serde_json::to_vec(&Canonical { id, kind, submodels }).expect("descriptor serializes");
    hex::encode(Sha256::digest(bytes))
}
