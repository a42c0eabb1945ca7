use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::descriptor::ShellDescriptor;
use super::value::{Datatype, SemanticId, Timestamp, TwinId, TypedValue};
use crate::error::{Error, Result};
use crate::vocabulary::Vocabulary;

/// Named arguments or results of an operation call.
pub type Args = BTreeMap<String, TypedValue>;

/// Short name of the submodel that receives mediator deliveries.
pub const INBOX_SUBMODEL: &str = "inbox";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TwinKind {
    SystemTwin,
    FieldTwin,
}

/// `submodel/element` address inside one shell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ElementPath {
    pub submodel: String,
    pub element: String,
}

impl ElementPath {
    pub fn new(submodel: impl Into<String>, element: impl Into<String>) -> Self {
        Self {
            submodel: submodel.into(),
            element: element.into(),
        }
    }

    pub fn parse(path: &str) -> Result<Self> {
        match path.split_once('/') {
            Some((sm, el)) if !sm.is_empty() && !el.is_empty() && !el.contains('/') => {
                Ok(Self::new(sm, el))
            }
            _ => Err(Error::PathNotFound(path.to_owned())),
        }
    }
}

impl fmt::Display for ElementPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.submodel, self.element)
    }
}

impl TryFrom<String> for ElementPath {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<ElementPath> for String {
    fn from(p: ElementPath) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Property {
    pub short_name: String,
    pub semantic_id: SemanticId,
    pub datatype: Datatype,
    pub unit: String,
    pub value: Option<TypedValue>,
    pub last_updated: Option<Timestamp>,
}

impl Property {
    pub fn new(
        short_name: impl Into<String>,
        semantic_id: SemanticId,
        datatype: Datatype,
        unit: impl Into<String>,
    ) -> Self {
        Self {
            short_name: short_name.into(),
            semantic_id,
            datatype,
            unit: unit.into(),
            value: None,
            last_updated: None,
        }
    }

    pub fn with_value(mut self, value: TypedValue, at: Timestamp) -> Self {
        self.value = Some(value);
        self.last_updated = Some(at);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub datatype: Datatype,
    pub unit: String,
}

impl Parameter {
    pub fn new(name: impl Into<String>, datatype: Datatype, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            datatype,
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Operation {
    pub short_name: String,
    pub semantic_id: SemanticId,
    pub inputs: Vec<Parameter>,
    pub outputs: Vec<Parameter>,
}

impl Operation {
    /// Checks named values against one direction of the signature.
    pub fn check_args(&self, args: &Args, outputs: bool) -> Result<()> {
        let (params, dir) = if outputs {
            (&self.outputs, "output")
        } else {
            (&self.inputs, "input")
        };
        let mismatch = |reason: String| Error::SignatureMismatch {
            operation: self.short_name.clone(),
            reason,
        };
        for name in args.keys() {
            if !params.iter().any(|p| &p.name == name) {
                return Err(mismatch(format!("unexpected {dir} '{name}'")));
            }
        }
        for p in params {
            match args.get(&p.name) {
                None => return Err(mismatch(format!("missing {dir} '{}'", p.name))),
                Some(v) if v.datatype() != p.datatype => {
                    return Err(mismatch(format!(
                        "{dir} '{}' expects {:?}, got {:?}",
                        p.name,
                        p.datatype,
                        v.datatype()
                    )))
                }
                Some(v) => v.check_well_formed().map_err(|e| mismatch(e.to_string()))?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SubmodelElement {
    Property(Property),
    Operation(Operation),
}

impl SubmodelElement {
    pub fn short_name(&self) -> &str {
        match self {
            SubmodelElement::Property(p) => &p.short_name,
            SubmodelElement::Operation(o) => &o.short_name,
        }
    }

    pub fn semantic_id(&self) -> &SemanticId {
        match self {
            SubmodelElement::Property(p) => &p.semantic_id,
            SubmodelElement::Operation(o) => &o.semantic_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submodel {
    pub short_name: String,
    pub semantic_id: SemanticId,
    pub elements: Vec<SubmodelElement>,
}

impl Submodel {
    pub fn new(short_name: impl Into<String>, semantic_id: SemanticId) -> Self {
        Self {
            short_name: short_name.into(),
            semantic_id,
            elements: Vec::new(),
        }
    }

    pub fn with_property(mut self, p: Property) -> Self {
        self.elements.push(SubmodelElement::Property(p));
        self
    }

    pub fn with_operation(mut self, op: Operation) -> Self {
        self.elements.push(SubmodelElement::Operation(op));
        self
    }

    fn element(&self, name: &str) -> Option<&SubmodelElement> {
        self.elements.iter().find(|e| e.short_name() == name)
    }

    fn element_mut(&mut self, name: &str) -> Option<&mut SubmodelElement> {
        self.elements.iter_mut().find(|e| e.short_name() == name)
    }
}

/// A mediator delivery into a destination twin's inbox.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InboxEntry {
    pub semantic_id: SemanticId,
    pub unit: String,
    pub value: TypedValue,
    pub at: Timestamp,
}

/// The digital representative of a system or a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinShell {
    pub id: TwinId,
    pub kind: TwinKind,
    pub submodels: Vec<Submodel>,
}

impl TwinShell {
    /// Builds a structurally validated shell. With a vocabulary, every
    /// semantic id must resolve and property datatypes and units must match
    /// their concepts.
    pub fn create(
        id: TwinId,
        kind: TwinKind,
        submodels: Vec<Submodel>,
        vocabulary: Option<&Vocabulary>,
    ) -> Result<Self> {
        let shell = Self { id, kind, submodels };
        shell.validate(vocabulary)?;
        Ok(shell)
    }

    pub fn validate(&self, vocabulary: Option<&Vocabulary>) -> Result<()> {
        let mut submodel_names = HashSet::new();
        for sm in &self.submodels {
            if sm.short_name.is_empty() || sm.short_name.contains('/') {
                return Err(Error::InvalidId(format!("submodel name {:?}", sm.short_name)));
            }
            if !submodel_names.insert(sm.short_name.as_str()) {
                return Err(Error::DuplicateElementName {
                    scope: format!("shell {}", self.id),
                    name: sm.short_name.clone(),
                });
            }
            let mut names = HashSet::new();
            for el in &sm.elements {
                let name = el.short_name();
                if name.is_empty() || name.contains('/') {
                    return Err(Error::InvalidId(format!("element name {name:?}")));
                }
                if !names.insert(name) {
                    return Err(Error::DuplicateElementName {
                        scope: format!("submodel {}", sm.short_name),
                        name: name.to_owned(),
                    });
                }
                match el {
                    SubmodelElement::Property(p) => {
                        if let Some(v) = &p.value {
                            if v.datatype() != p.datatype {
                                return Err(Error::DatatypeMismatch {
                                    path: format!("{}/{}", sm.short_name, name),
                                    expected: p.datatype,
                                    actual: v.datatype(),
                                });
                            }
                            v.check_well_formed()?;
                        }
                    }
                    SubmodelElement::Operation(op) => {
                        for params in [&op.inputs, &op.outputs] {
                            let mut seen = HashSet::new();
                            if let Some(dup) = params.iter().find(|p| !seen.insert(&p.name)) {
                                return Err(Error::DuplicateElementName {
                                    scope: format!("operation {}", op.short_name),
                                    name: dup.name.clone(),
                                });
                            }
                        }
                    }
                }
            }
        }
        if let Some(vocab) = vocabulary {
            vocab.check_shell(self)?;
        }
        Ok(())
    }

    pub fn describe(&self) -> ShellDescriptor {
        ShellDescriptor::of(self, String::new())
    }

    pub fn submodel(&self, name: &str) -> Option<&Submodel> {
        self.submodels.iter().find(|s| s.short_name == name)
    }

    fn element(&self, path: &ElementPath) -> Result<&SubmodelElement> {
        self.submodel(&path.submodel)
            .and_then(|sm| sm.element(&path.element))
            .ok_or_else(|| Error::PathNotFound(path.to_string()))
    }

    pub fn get_property(&self, path: &ElementPath) -> Result<&Property> {
        match self.element(path)? {
            SubmodelElement::Property(p) => Ok(p),
            SubmodelElement::Operation(_) => Err(Error::PathNotFound(path.to_string())),
        }
    }

    pub fn get_operation(&self, path: &ElementPath) -> Result<&Operation> {
        match self.element(path)? {
            SubmodelElement::Operation(op) => Ok(op),
            SubmodelElement::Property(_) => Err(Error::PathNotFound(path.to_string())),
        }
    }

    fn property_mut(&mut self, path: &ElementPath) -> Result<&mut Property> {
        let el = self
            .submodels
            .iter_mut()
            .find(|s| s.short_name == path.submodel)
            .and_then(|sm| sm.element_mut(&path.element));
        match el {
            Some(SubmodelElement::Property(p)) => Ok(p),
            _ => Err(Error::PathNotFound(path.to_string())),
        }
    }

    /// Last-writer-wins by source timestamp: returns `false` and leaves the
    /// property untouched when `at` is older than its `last_updated`.
    pub fn set_property(&mut self, path: &ElementPath, value: TypedValue, at: Timestamp) -> Result<bool> {
        let prop = self.property_mut(path)?;
        if value.datatype() != prop.datatype {
            return Err(Error::DatatypeMismatch {
                path: path.to_string(),
                expected: prop.datatype,
                actual: value.datatype(),
            });
        }
        value.check_well_formed()?;
        if prop.last_updated.is_some_and(|t| at < t) {
            return Ok(false);
        }
        prop.value = Some(value);
        prop.last_updated = Some(at);
        Ok(true)
    }

    /// All element paths whose semantic id equals `id`, in shell order.
    pub fn resolve_by_semantic_id(&self, id: &SemanticId) -> Vec<ElementPath> {
        self.submodels
            .iter()
            .flat_map(|sm| {
                sm.elements
                    .iter()
                    .filter(|el| el.semantic_id() == id)
                    .map(|el| ElementPath::new(&sm.short_name, el.short_name()))
            })
            .collect()
    }

    /// Writes a delivery into the inbox submodel, creating it on first use.
    /// Currentness policy applies per semantic id.
    pub fn inbox_put(&mut self, entry: InboxEntry) -> Result<bool> {
        entry.value.check_well_formed()?;
        if self.submodel(INBOX_SUBMODEL).is_none() {
            self.submodels.push(Submodel::new(
                INBOX_SUBMODEL,
                SemanticId::new(crate::vocabulary::INBOX_SUBMODEL_ID)?,
            ));
        }
        let path = ElementPath::new(INBOX_SUBMODEL, entry.semantic_id.as_str());
        let sm = self
            .submodels
            .iter_mut()
            .find(|s| s.short_name == INBOX_SUBMODEL)
            .expect("inbox exists");
        match sm.element_mut(&path.element) {
            Some(SubmodelElement::Property(p)) => {
                if p.datatype != entry.value.datatype() || p.unit != entry.unit {
                    return Err(Error::DatatypeMismatch {
                        path: path.to_string(),
                        expected: p.datatype,
                        actual: entry.value.datatype(),
                    });
                }
                if p.last_updated.is_some_and(|t| entry.at < t) {
                    return Ok(false);
                }
                p.value = Some(entry.value);
                p.last_updated = Some(entry.at);
                Ok(true)
            }
            Some(SubmodelElement::Operation(_)) => Err(Error::PathNotFound(path.to_string())),
            None => {
                let datatype = entry.value.datatype();
                sm.elements.push(SubmodelElement::Property(
                    Property::new(path.element.clone(), entry.semantic_id, datatype, entry.unit)
                        .with_value(entry.value, entry.at),
                ));
                Ok(true)
            }
        }
    }

    /// All properties with their paths, in shell order.
    pub fn properties(&self) -> impl Iterator<Item = (ElementPath, &Property)> {
        self.submodels.iter().flat_map(|sm| {
            sm.elements.iter().filter_map(move |el| match el {
                SubmodelElement::Property(p) => {
                    Some((ElementPath::new(&sm.short_name, &p.short_name), p))
                }
                SubmodelElement::Operation(_) => None,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn sid(s: &str) -> SemanticId {
        SemanticId::expand(s).unwrap()
    }

    fn shell() -> TwinShell {
        let agronomic = Submodel::new("agronomic", sid("sm.agronomic"))
            .with_property(Property::new("soilNitrogen", sid("soil.nitrogen"), Datatype::Decimal, "kg/ha"))
            .with_property(Property::new("cropType", sid("crop.type"), Datatype::Text, "1"));
        TwinShell::create(
            TwinId::new("urn:agritwin:field:f").unwrap(),
            TwinKind::FieldTwin,
            vec![agronomic],
            None,
        )
        .unwrap()
    }

    fn t(h: u32) -> Timestamp {
        Utc.with_ymd_and_hms(2024, 4, 1, h, 0, 0).unwrap()
    }

    #[test]
    fn duplicate_element_names_rejected() {
        let sm = Submodel::new("weedwork", sid("sm.weedwork"))
            .with_property(Property::new("status", sid("crop.type"), Datatype::Text, "1"))
            .with_property(Property::new("status", sid("crop.type"), Datatype::Text, "1"));
        let err = TwinShell::create(TwinId::new("urn:x").unwrap(), TwinKind::SystemTwin, vec![sm], None)
            .unwrap_err();
        assert_eq!(err.code(), "DuplicateElementName");
    }

    #[test]
    fn last_writer_wins() {
        let mut s = shell();
        let path = ElementPath::parse("agronomic/soilNitrogen").unwrap();
        assert!(s.set_property(&path, TypedValue::Decimal(42.0), t(8)).unwrap());
        assert!(!s.set_property(&path, TypedValue::Decimal(40.0), t(7)).unwrap());
        let p = s.get_property(&path).unwrap();
        assert_eq!(p.value, Some(TypedValue::Decimal(42.0)));
        assert_eq!(p.last_updated, Some(t(8)));
        let err = s
            .set_property(&path, TypedValue::Text("high".into()), t(9))
            .unwrap_err();
        assert_eq!(err.code(), "DatatypeMismatch");
    }

    #[test]
    fn missing_path() {
        let s = shell();
        let err = s.get_property(&ElementPath::parse("agronomic/missing").unwrap()).unwrap_err();
        assert_eq!(err, Error::PathNotFound("agronomic/missing".into()));
        assert!(ElementPath::parse("nopath").is_err());
    }

    #[test]
    fn resolve_unknown_is_empty() {
        assert!(shell().resolve_by_semantic_id(&sid("unknown.thing")).is_empty());
        assert_eq!(
            shell().resolve_by_semantic_id(&sid("soil.nitrogen")),
            vec![ElementPath::parse("agronomic/soilNitrogen").unwrap()]
        );
    }

    #[test]
    fn inbox_is_created_on_demand() {
        let mut s = shell();
        let entry = InboxEntry {
            semantic_id: sid("crop.type"),
            unit: "1".into(),
            value: TypedValue::Text("potato".into()),
            at: t(6),
        };
        assert!(s.inbox_put(entry.clone()).unwrap());
        let path = ElementPath::new(INBOX_SUBMODEL, "urn:agrivoc:crop.type");
        assert_eq!(s.get_property(&path).unwrap().value, Some(TypedValue::Text("potato".into())));
        assert!(!s.inbox_put(InboxEntry { at: t(5), ..entry }).unwrap());
    }
}
