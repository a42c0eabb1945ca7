//! Declarative adapters: a skeleton shell plus field mappings turn a
//! vendor-native system into a standard twin.
//!
//! Property reads fetch the native state document and convert each mapped
//! field with `twin = native × factor + offset`. Operation arguments go the
//! other way, `native = (twin − offset) / factor`.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::access::TwinAccess;
use super::descriptor::ShellDescriptor;
use super::native::{json_get, json_set, NativeError, NativeNetwork, NativeRequest};
use super::shell::{Args, ElementPath, InboxEntry, Property, SubmodelElement, TwinShell, INBOX_SUBMODEL};
use super::value::{Datatype, SemanticId, Timestamp, TwinId, TypedValue};
use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::vocabulary::Vocabulary;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeCall {
    pub method: String,
    pub path: String,
}

/// Maps a native state field onto the twin property carrying `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PropertyMapping {
    pub native_path: String,
    pub target: SemanticId,
    #[serde(default = "one")]
    pub factor: f64,
    #[serde(default)]
    pub offset: f64,
    pub cast: Datatype,
}

/// Maps one operation parameter to a native payload field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldMapping {
    pub name: String,
    pub native_path: String,
    #[serde(default = "one")]
    pub factor: f64,
    #[serde(default)]
    pub offset: f64,
    /// Datatype on the far side of the conversion: native for arguments, twin for outputs.
    pub cast: Datatype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationMapping {
    pub operation: SemanticId,
    pub call: NativeCall,
    /// Request body template; mapped arguments are written into it.
    #[serde(default)]
    pub body: Value,
    #[serde(default)]
    pub args: Vec<FieldMapping>,
    #[serde(default)]
    pub outputs: Vec<FieldMapping>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AdapterSpec {
    pub native_endpoint: String,
    /// Request that returns the native state document properties are read from.
    pub state: NativeCall,
    pub mappings: Vec<PropertyMapping>,
    #[serde(default)]
    pub operations: Vec<OperationMapping>,
}

impl AdapterSpec {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

fn check_factor(what: &str, factor: f64, offset: f64) -> Result<()> {
    if factor == 0.0 || !factor.is_finite() || !offset.is_finite() {
        return Err(Error::InvalidAdapter(format!(
            "{what}: conversion factor must be finite and non-zero, offset finite"
        )));
    }
    Ok(())
}

/// Wraps a native system. Every mapping must land on an element of the
/// skeleton; with a vocabulary, every target must also resolve there.
pub fn wrap_native_system(
    spec: AdapterSpec,
    skeleton: TwinShell,
    network: Arc<NativeNetwork>,
    clock: Arc<dyn Clock>,
    vocabulary: Option<&Vocabulary>,
) -> Result<AdaptedTwin> {
    skeleton.validate(vocabulary)?;
    for m in &spec.mappings {
        check_factor(m.target.as_str(), m.factor, m.offset)?;
        if let Some(vocab) = vocabulary {
            vocab.lookup(&m.target).map_err(|_| Error::UnresolvableSemanticId(m.target.clone()))?;
        }
        let paths = skeleton.resolve_by_semantic_id(&m.target);
        let props: Vec<&Property> = paths.iter().filter_map(|p| skeleton.get_property(p).ok()).collect();
        if props.is_empty() {
            return Err(Error::MappingTargetMissing(m.target.to_string()));
        }
        if let Some(p) = props.iter().find(|p| p.datatype != m.cast) {
            return Err(Error::InvalidAdapter(format!(
                "mapping for {} casts to {:?} but property {} is {:?}",
                m.target, m.cast, p.short_name, p.datatype
            )));
        }
    }
    for om in &spec.operations {
        let path = skeleton
            .resolve_by_semantic_id(&om.operation)
            .into_iter()
            .find(|p| skeleton.get_operation(p).is_ok())
            .ok_or_else(|| Error::MappingTargetMissing(om.operation.to_string()))?;
        let op = skeleton.get_operation(&path)?;
        for a in &om.args {
            check_factor(&a.name, a.factor, a.offset)?;
            if !op.inputs.iter().any(|p| p.name == a.name) {
                return Err(Error::MappingTargetMissing(format!("{path} input {}", a.name)));
            }
        }
        if let Some(unmapped) = op.inputs.iter().find(|p| !om.args.iter().any(|a| a.name == p.name)) {
            return Err(Error::InvalidAdapter(format!("{path} input {} has no mapping", unmapped.name)));
        }
        for o in &om.outputs {
            check_factor(&o.name, o.factor, o.offset)?;
            match op.outputs.iter().find(|p| p.name == o.name) {
                None => return Err(Error::MappingTargetMissing(format!("{path} output {}", o.name))),
                Some(p) if p.datatype != o.cast => {
                    return Err(Error::InvalidAdapter(format!(
                        "{path} output {} is {:?}, mapping casts to {:?}",
                        o.name, p.datatype, o.cast
                    )))
                }
                Some(_) => {}
            }
        }
    }
    Ok(AdaptedTwin {
        endpoint: RwLock::new(format!("local://{}", skeleton.id)),
        shell: RwLock::new(skeleton),
        spec,
        network,
        clock,
    })
}

/// A live twin whose reads and calls are translated into native requests.
pub struct AdaptedTwin {
    shell: RwLock<TwinShell>,
    spec: AdapterSpec,
    network: Arc<NativeNetwork>,
    clock: Arc<dyn Clock>,
    endpoint: RwLock<String>,
}

impl std::fmt::Debug for AdaptedTwin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdaptedTwin")
            .field("id", &self.shell.read().unwrap().id)
            .field("native", &self.spec.native_endpoint)
            .finish()
    }
}

impl AdaptedTwin {
    pub fn spec(&self) -> &AdapterSpec {
        &self.spec
    }

    pub fn set_endpoint(&self, endpoint: impl Into<String>) {
        *self.endpoint.write().unwrap() = endpoint.into();
    }

    fn native(&self, call: &NativeCall, body: Value) -> Result<Value> {
        let request = NativeRequest::new(&call.method, &call.path, body);
        self.network
            .call(&self.spec.native_endpoint, &request)
            .map_err(|e| match e {
                NativeError::Unreachable(addr) => {
                    Error::DownstreamUnavailable(format!("{} (native {addr} unreachable)", self.twin_id()))
                }
                NativeError::Protocol { status, message } => Error::DownstreamUnavailable(format!(
                    "{}: native system answered {status}: {message}",
                    self.twin_id()
                )),
            })
    }

    fn extract(&self, doc: &Value, native_path: &str, cast: Datatype, factor: f64, offset: f64) -> Result<TypedValue> {
        let raw = json_get(doc, native_path).ok_or_else(|| {
            Error::DownstreamUnavailable(format!("native payload lacks field '{native_path}'"))
        })?;
        let native = if cast == Datatype::GeoPolygon || cast == Datatype::TimeSeries {
            TypedValue::from_json(cast, raw)
        } else {
            TypedValue::from_native(raw)
        }
        .map_err(|e| Error::DownstreamUnavailable(format!("native field '{native_path}': {e}")))?;
        native
            .convert(cast, factor, offset)
            .map_err(|e| Error::DownstreamUnavailable(format!("native field '{native_path}': {e}")))
    }

    /// Reads the native state once and returns every mapped property value.
    pub fn read_all(&self) -> Result<Vec<(ElementPath, TypedValue)>> {
        let doc = self.native(&self.spec.state, Value::Null)?;
        let shell = self.shell.read().unwrap();
        let mut out = Vec::new();
        for m in &self.spec.mappings {
            let v = self.extract(&doc, &m.native_path, m.cast, m.factor, m.offset)?;
            for path in shell.resolve_by_semantic_id(&m.target) {
                out.push((path, v.clone()));
            }
        }
        Ok(out)
    }

    fn mapping_for(&self, prop: &Property) -> Option<&PropertyMapping> {
        self.spec.mappings.iter().find(|m| m.target == prop.semantic_id)
    }
}

impl TwinAccess for AdaptedTwin {
    fn twin_id(&self) -> TwinId {
        self.shell.read().unwrap().id.clone()
    }

    fn describe(&self) -> Result<ShellDescriptor> {
        if !self.network.is_online(&self.spec.native_endpoint) {
            return Err(Error::DownstreamUnavailable(format!(
                "{} (native {} unreachable)",
                self.twin_id(),
                self.spec.native_endpoint
            )));
        }
        Ok(ShellDescriptor::of(&self.shell.read().unwrap(), self.endpoint.read().unwrap().clone()))
    }

    fn get_property(&self, path: &ElementPath) -> Result<Property> {
        let prop = self.shell.read().unwrap().get_property(path)?.clone();
        let Some(mapping) = self.mapping_for(&prop).cloned() else {
            return Ok(prop);
        };
        let doc = self.native(&self.spec.state, Value::Null)?;
        let value = self.extract(&doc, &mapping.native_path, mapping.cast, mapping.factor, mapping.offset)?;
        Ok(prop.with_value(value, self.clock.now()))
    }

    fn set_property(&self, path: &ElementPath, value: TypedValue, at: Timestamp) -> Result<bool> {
        let mut shell = self.shell.write().unwrap();
        let prop = shell.get_property(path)?;
        if self.mapping_for(prop).is_some() {
            return Err(Error::NotWritable(path.to_string()));
        }
        shell.set_property(path, value, at)
    }

    fn invoke_operation(&self, path: &ElementPath, args: &Args) -> Result<Args> {
        let op = self.shell.read().unwrap().get_operation(path)?.clone();
        op.check_args(args, false)?;
        let mapping = self
            .spec
            .operations
            .iter()
            .find(|m| m.operation == op.semantic_id)
            .ok_or_else(|| Error::DownstreamUnavailable(format!("no native binding for {path}")))?;
        let mut body = if mapping.body.is_null() {
            Value::Object(Default::default())
        } else {
            mapping.body.clone()
        };
        for a in &mapping.args {
            let twin_value = &args[&a.name];
            // inverse conversion: native = (twin - offset) / factor
            let native = twin_value.convert(a.cast, 1.0 / a.factor, -a.offset / a.factor)?;
            json_set(&mut body, &a.native_path, native.to_json());
        }
        let reply = self.native(&mapping.call, body)?;
        let mut outputs = Args::new();
        for o in &mapping.outputs {
            outputs.insert(o.name.clone(), self.extract(&reply, &o.native_path, o.cast, o.factor, o.offset)?);
        }
        op.check_args(&outputs, true)
            .map_err(|e| Error::DownstreamUnavailable(format!("native reply does not fit {path}: {e}")))?;
        Ok(outputs)
    }

    fn inbox_put(&self, entry: InboxEntry) -> Result<bool> {
        self.shell.write().unwrap().inbox_put(entry)
    }
}

impl AdaptedTwin {
    /// Full shell with every mapped property freshly read from the native system.
    pub fn snapshot(&self) -> Result<TwinShell> {
        let values = self.read_all()?;
        let now = self.clock.now();
        let mut shell = self.shell.read().unwrap().clone();
        for sm in &mut shell.submodels {
            if sm.short_name == INBOX_SUBMODEL {
                continue;
            }
            for el in &mut sm.elements {
                if let SubmodelElement::Property(p) = el {
                    let path = ElementPath::new(&sm.short_name, &p.short_name);
                    if let Some((_, v)) = values.iter().find(|(pp, _)| *pp == path) {
                        p.value = Some(v.clone());
                        p.last_updated = Some(now);
                    }
                }
            }
        }
        Ok(shell)
    }
}
