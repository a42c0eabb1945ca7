//! Digital field twins: the standard field shell, sensor ingestion,
//! work-record write-back and target-triggered processes.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::geo;
use crate::hub::TwinHub;
use crate::twin::{
    Args, Datatype, ElementPath, LocalTwin, Operation, OperationHandler, Parameter, Property, Sample,
    SemanticId, Submodel, Timestamp, TwinAccess, TwinId, TwinKind, TwinShell, TypedValue, INBOX_SUBMODEL,
};
use crate::vocabulary::Vocabulary;

fn sid(short: &str) -> SemanticId {
    SemanticId::expand(short).expect("static semantic id")
}

/// Well-known concepts of the field twin.
pub mod concepts {
    use super::sid;
    use crate::twin::SemanticId;

    pub fn boundaries() -> SemanticId {
        sid("field.boundaries")
    }
    pub fn slope() -> SemanticId {
        sid("field.slope")
    }
    pub fn observations() -> SemanticId {
        sid("weather.observations")
    }
    pub fn forecast() -> SemanticId {
        sid("weather.forecast")
    }
    pub fn soil_nitrogen() -> SemanticId {
        sid("soil.nitrogen")
    }
    pub fn plant_health() -> SemanticId {
        sid("plant.health")
    }
    pub fn crop_type() -> SemanticId {
        sid("crop.type")
    }
    pub fn weed_density() -> SemanticId {
        sid("weed.density")
    }
    pub fn work_history() -> SemanticId {
        sid("work.history")
    }
    pub fn nitrogen_applied() -> SemanticId {
        sid("fertilizer.nitrogenApplied")
    }
}

pub const SET_TARGET_PATH: &str = "agronomic/setTarget";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProcessKind {
    Fertilization,
    WeedControl,
}

impl std::fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Seed file content for one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldSeed {
    pub id: TwinId,
    pub boundaries: Vec<[f64; 2]>,
    pub slope_percent: f64,
    pub crop: String,
    pub initial_nitrogen: f64,
    #[serde(default = "default_health")]
    pub plant_health: f64,
    #[serde(default)]
    pub weed_density: f64,
}

fn default_health() -> f64 {
    0.8
}

impl FieldSeed {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Geographic, environmental and agronomic content of a field twin.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTwinModel {
    pub id: TwinId,
    pub boundaries: Vec<[f64; 2]>,
    pub slope_percent: f64,
    pub observations: Vec<Sample>,
    pub forecast: Vec<Sample>,
    pub soil_nitrogen: f64,
    pub plant_health: f64,
    pub crop: String,
    pub weed_density: f64,
}

impl FieldTwinModel {
    pub fn from_seed(seed: &FieldSeed, forecast: Vec<Sample>) -> Self {
        Self {
            id: seed.id.clone(),
            boundaries: geo::close_ring(seed.boundaries.clone()),
            slope_percent: seed.slope_percent,
            observations: Vec::new(),
            forecast,
            soil_nitrogen: seed.initial_nitrogen,
            plant_health: seed.plant_health,
            crop: seed.crop.clone(),
            weed_density: seed.weed_density,
        }
    }

    pub fn validate(&self) -> Result<()> {
        geo::check_ring(&self.boundaries)?;
        if geo::is_self_intersecting(&self.boundaries) {
            return Err(Error::InvariantViolation(format!("{}: boundaries self-intersect", self.id)));
        }
        check_range(&concepts::soil_nitrogen(), self.soil_nitrogen)?;
        check_range(&concepts::plant_health(), self.plant_health)?;
        check_range(&concepts::weed_density(), self.weed_density)?;
        Ok(())
    }

    /// The standard field shell, every value stamped `at`.
    pub fn to_shell(&self, at: Timestamp) -> Result<TwinShell> {
        self.validate()?;
        let geographic = Submodel::new("geographic", sid("sm.geographic"))
            .with_property(
                Property::new("boundaries", concepts::boundaries(), Datatype::GeoPolygon, "deg")
                    .with_value(TypedValue::GeoPolygon(self.boundaries.clone()), at),
            )
            .with_property(
                Property::new("slopePercent", concepts::slope(), Datatype::Decimal, "%")
                    .with_value(TypedValue::Decimal(self.slope_percent), at),
            );
        let environmental = Submodel::new("environmental", sid("sm.environmental"))
            .with_property(
                Property::new("weatherObservations", concepts::observations(), Datatype::TimeSeries, "Cel")
                    .with_value(TypedValue::TimeSeries(self.observations.clone()), at),
            )
            .with_property(
                Property::new("forecast", concepts::forecast(), Datatype::TimeSeries, "Cel")
                    .with_value(TypedValue::TimeSeries(self.forecast.clone()), at),
            );
        let agronomic = Submodel::new("agronomic", sid("sm.agronomic"))
            .with_property(
                Property::new("soilNitrogen", concepts::soil_nitrogen(), Datatype::Decimal, "kg/ha")
                    .with_value(TypedValue::Decimal(self.soil_nitrogen), at),
            )
            .with_property(
                Property::new("plantHealthIndex", concepts::plant_health(), Datatype::Decimal, "1")
                    .with_value(TypedValue::Decimal(self.plant_health), at),
            )
            .with_property(
                Property::new("cropType", concepts::crop_type(), Datatype::Text, "1")
                    .with_value(TypedValue::Text(self.crop.clone()), at),
            )
            .with_property(
                Property::new("weedDensity", concepts::weed_density(), Datatype::Decimal, "1/m2")
                    .with_value(TypedValue::Decimal(self.weed_density), at),
            )
            .with_property(
                Property::new("workHistory", concepts::work_history(), Datatype::TimeSeries, "1")
                    .with_value(TypedValue::TimeSeries(Vec::new()), at),
            )
            .with_operation(Operation {
                short_name: "setTarget".into(),
                semantic_id: sid("op.setTarget"),
                inputs: vec![
                    Parameter::new("semanticId", Datatype::Text, "1"),
                    Parameter::new("targetValue", Datatype::Decimal, "1"),
                ],
                outputs: vec![Parameter::new("triggerId", Datatype::Text, "1")],
            });
        TwinShell::create(
            self.id.clone(),
            TwinKind::FieldTwin,
            vec![geographic, environmental, agronomic],
            None,
        )
    }
}

/// Range invariants of agronomic concepts.
fn check_range(id: &SemanticId, value: f64) -> Result<()> {
    let ok = if *id == concepts::plant_health() {
        (0.0..=1.0).contains(&value)
    } else if *id == concepts::soil_nitrogen() || *id == concepts::weed_density() {
        value >= 0.0
    } else {
        true
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!("{id} = {value} out of range")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcessTrigger {
    pub trigger_id: String,
    pub process_kind: ProcessKind,
    pub field_id: TwinId,
    pub target_semantic_id: SemanticId,
    pub target_value: f64,
    pub issued_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct JobRecord {
    pub job_id: String,
    pub field_id: TwinId,
    pub process_kind: ProcessKind,
    pub executed_by: TwinId,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub covered_area_ha: f64,
    pub outputs: BTreeMap<SemanticId, TypedValue>,
}

/// JobRecord without identity and wall-clock fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormalizedJobRecord {
    pub field_id: TwinId,
    pub process_kind: ProcessKind,
    pub covered_area_ha: f64,
    pub outputs: BTreeMap<SemanticId, TypedValue>,
}

impl NormalizedJobRecord {
    /// Equal structure, decimals equal within `tolerance` (relative to magnitude, floor 1).
    pub fn equivalent(&self, other: &Self, tolerance: f64) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tolerance * a.abs().max(b.abs()).max(1.0);
        self.field_id == other.field_id
            && self.process_kind == other.process_kind
            && close(self.covered_area_ha, other.covered_area_ha)
            && self.outputs.len() == other.outputs.len()
            && self.outputs.iter().all(|(k, a)| match (a, other.outputs.get(k)) {
                (TypedValue::Decimal(x), Some(TypedValue::Decimal(y))) => close(*x, *y),
                (a, Some(b)) => a == b,
                (_, None) => false,
            })
    }
}

impl JobRecord {
    pub fn validate(&self) -> Result<()> {
        if self.finished_at < self.started_at {
            return Err(Error::InvariantViolation(format!(
                "job {}: finishedAt precedes startedAt",
                self.job_id
            )));
        }
        if self.covered_area_ha.is_nan() || self.covered_area_ha < 0.0 {
            return Err(Error::InvariantViolation(format!(
                "job {}: negative covered area",
                self.job_id
            )));
        }
        Ok(())
    }

    pub fn normalized(&self) -> NormalizedJobRecord {
        NormalizedJobRecord {
            field_id: self.field_id.clone(),
            process_kind: self.process_kind,
            covered_area_ha: self.covered_area_ha,
            outputs: self.outputs.clone(),
        }
    }
}

/// Receives emitted process triggers.
pub trait TriggerSink: Send + Sync {
    fn deliver(&self, trigger: ProcessTrigger);
}

/// FIFO trigger mailbox drained by whoever runs the processes.
#[derive(Debug, Default)]
pub struct TriggerQueue {
    pending: Mutex<VecDeque<ProcessTrigger>>,
}

impl TriggerQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn drain(&self) -> Vec<ProcessTrigger> {
        self.pending.lock().unwrap().drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.pending.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl TriggerSink for TriggerQueue {
    fn deliver(&self, trigger: ProcessTrigger) {
        self.pending.lock().unwrap().push_back(trigger);
    }
}

/// Implementation of the field twin's `setTarget` operation.
pub struct FieldOperations {
    clock: Arc<dyn Clock>,
    sink: Arc<dyn TriggerSink>,
    counter: AtomicU64,
    issued: Mutex<BTreeMap<String, ProcessTrigger>>,
}

impl FieldOperations {
    pub fn new(clock: Arc<dyn Clock>, sink: Arc<dyn TriggerSink>) -> Self {
        Self {
            clock,
            sink,
            counter: AtomicU64::new(0),
            issued: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn trigger(&self, id: &str) -> Option<ProcessTrigger> {
        self.issued.lock().unwrap().get(id).cloned()
    }

    fn set_target(&self, twin: &LocalTwin, target_id: &SemanticId, target: f64) -> Result<ProcessTrigger> {
        // only nitrogen is target-enabled
        if *target_id != concepts::soil_nitrogen() {
            return Err(Error::UnsupportedTargetConcept(target_id.clone()));
        }
        if !target.is_finite() {
            return Err(Error::InvalidValue(format!("target {target}")));
        }
        let path = twin
            .resolve_by_semantic_id(target_id)?
            .into_iter()
            .find(|p| p.submodel != INBOX_SUBMODEL)
            .ok_or_else(|| Error::UnsupportedTargetConcept(target_id.clone()))?;
        let current = twin.get_property(&path)?.value.and_then(|v| v.as_f64()).unwrap_or(0.0);
        if target <= current {
            return Err(Error::TargetNotAboveCurrent { current, target });
        }
        let n = self.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let trigger = ProcessTrigger {
            trigger_id: format!("trigger-{n:04}"),
            process_kind: ProcessKind::Fertilization,
            field_id: twin.twin_id(),
            target_semantic_id: target_id.clone(),
            target_value: target,
            issued_at: self.clock.now(),
        };
        self.issued
            .lock()
            .unwrap()
            .insert(trigger.trigger_id.clone(), trigger.clone());
        self.sink.deliver(trigger.clone());
        Ok(trigger)
    }
}

impl OperationHandler for FieldOperations {
    fn invoke(&self, twin: &LocalTwin, operation: &ElementPath, args: &Args) -> Result<Args> {
        if operation.to_string() != SET_TARGET_PATH {
            return Err(Error::PathNotFound(operation.to_string()));
        }
        let target_id = args["semanticId"]
            .as_text()
            .map(SemanticId::expand)
            .transpose()?
            .ok_or_else(|| Error::InvalidValue("semanticId".into()))?;
        let target = args["targetValue"].as_f64().unwrap_or(f64::NAN);
        let trigger = self.set_target(twin, &target_id, target)?;
        Ok(Args::from([("triggerId".to_owned(), TypedValue::Text(trigger.trigger_id))]))
    }
}

/// Value of one requested concept in a field read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum FieldReading {
    #[serde(rename_all = "camelCase")]
    Present {
        value: TypedValue,
        last_updated: Timestamp,
    },
    /// The concept is housed by the twin but has no value yet.
    Empty,
    NotFound,
}

/// What process execution needs from field twins, in process or remote.
pub trait FieldStore: Send + Sync {
    fn read_field_data(&self, field: &TwinId, ids: &[SemanticId]) -> Result<BTreeMap<SemanticId, FieldReading>>;
    fn record_work(&self, field: &TwinId, record: &JobRecord) -> Result<()>;
}

impl FieldStore for FieldService {
    fn read_field_data(&self, field: &TwinId, ids: &[SemanticId]) -> Result<BTreeMap<SemanticId, FieldReading>> {
        FieldService::read_field_data(self, field, ids)
    }

    fn record_work(&self, field: &TwinId, record: &JobRecord) -> Result<()> {
        FieldService::record_work(self, field, record)
    }
}

/// Field-twin operations on top of the hub's hosted twins.
pub struct FieldService {
    hub: Arc<TwinHub>,
    vocabulary: Arc<Vocabulary>,
    operations: Arc<FieldOperations>,
}

impl FieldService {
    /// Binds `operations` to every field twin the hub hosts from now on.
    pub fn new(hub: Arc<TwinHub>, operations: Arc<FieldOperations>) -> Self {
        hub.set_field_handler(operations.clone());
        Self {
            vocabulary: hub.vocabulary().clone(),
            hub,
            operations,
        }
    }

    pub fn hub(&self) -> &Arc<TwinHub> {
        &self.hub
    }

    pub fn host(&self, model: &FieldTwinModel, at: Timestamp) -> Result<String> {
        self.hub.host_field_twin(model.to_shell(at)?)
    }

    fn twin(&self, field: &TwinId) -> Result<Arc<LocalTwin>> {
        let twin = self.hub.hosted_twin(field)?;
        if !twin.is_online() {
            return Err(Error::TwinUnavailable(field.clone()));
        }
        Ok(twin)
    }

    fn housing(twin: &LocalTwin, id: &SemanticId) -> Result<Option<ElementPath>> {
        Ok(twin
            .resolve_by_semantic_id(id)?
            .into_iter()
            .find(|p| p.submodel != INBOX_SUBMODEL))
    }

    /// Vocabulary-validated write under the currentness policy.
    pub fn ingest_sensor_reading(
        &self,
        field: &TwinId,
        id: &SemanticId,
        value: TypedValue,
        unit: &str,
        at: Timestamp,
    ) -> Result<bool> {
        let twin = self.twin(field)?;
        self.vocabulary.validate_value(id, &value, unit)?;
        if let Some(x) = value.as_f64() {
            check_range(id, x)?;
        }
        let path = Self::housing(&twin, id)?.ok_or_else(|| Error::UnresolvableSemanticId(id.clone()))?;
        twin.set_property(&path, value, at)
    }

    pub fn read_field_data(&self, field: &TwinId, ids: &[SemanticId]) -> Result<BTreeMap<SemanticId, FieldReading>> {
        let twin = self.twin(field)?;
        let mut out = BTreeMap::new();
        for id in ids {
            let reading = match Self::housing(&twin, id)? {
                None => FieldReading::NotFound,
                Some(path) => {
                    let p = twin.get_property(&path)?;
                    match (p.value, p.last_updated) {
                        (Some(value), Some(last_updated)) => FieldReading::Present { value, last_updated },
                        _ => FieldReading::Empty,
                    }
                }
            };
            out.insert(id.clone(), reading);
        }
        Ok(out)
    }

    /// Appends the record to the work history and writes its outputs through
    /// to the properties housing the same concepts, stamped `finishedAt`.
    pub fn record_work(&self, field: &TwinId, record: &JobRecord) -> Result<()> {
        record.validate()?;
        if record.field_id != *field {
            return Err(Error::InvariantViolation(format!(
                "record for {} written to {field}",
                record.field_id
            )));
        }
        let twin = self.twin(field)?;
        let mut writes = Vec::new();
        for (id, value) in &record.outputs {
            if !self.vocabulary.contains(id) {
                return Err(Error::UnresolvableSemanticId(id.clone()));
            }
            if let Some(path) = Self::housing(&twin, id)? {
                let prop = twin.get_property(&path)?;
                if prop.datatype != value.datatype() {
                    return Err(Error::DatatypeMismatch {
                        path: path.to_string(),
                        expected: prop.datatype,
                        actual: value.datatype(),
                    });
                }
                if let Some(x) = value.as_f64() {
                    check_range(id, x)?;
                }
                writes.push((path, value.clone()));
            }
        }
        let history = Self::housing(&twin, &concepts::work_history())?
            .ok_or_else(|| Error::UnresolvableSemanticId(concepts::work_history()))?;
        let entry = serde_json::to_value(record)?;
        let at = record.finished_at;
        let accepted = twin.update_property(&history, at, |current| {
            let mut samples = match current {
                Some(TypedValue::TimeSeries(s)) => s.clone(),
                _ => Vec::new(),
            };
            if samples.last().is_some_and(|last| last.at > at) {
                return Err(Error::InvariantViolation(
                    "work history must stay in chronological order".into(),
                ));
            }
            samples.push(Sample { at, value: entry });
            Ok(TypedValue::TimeSeries(samples))
        })?;
        if !accepted {
            return Err(Error::InvariantViolation(format!(
                "job {} finished before the last history update",
                record.job_id
            )));
        }
        for (path, value) in writes {
            twin.set_property(&path, value, at)?;
        }
        Ok(())
    }

    /// Invokes the twin's `setTarget` operation and returns the emitted trigger.
    pub fn set_target(&self, field: &TwinId, id: &SemanticId, target: f64) -> Result<ProcessTrigger> {
        let twin = self.twin(field)?;
        let args = Args::from([
            ("semanticId".to_owned(), TypedValue::Text(id.to_string())),
            ("targetValue".to_owned(), TypedValue::Decimal(target)),
        ]);
        let out = twin.invoke_operation(&ElementPath::parse(SET_TARGET_PATH)?, &args)?;
        let trigger_id = out["triggerId"].as_text().unwrap_or_default().to_owned();
        self.operations
            .trigger(&trigger_id)
            .ok_or_else(|| Error::NotFound(format!("trigger {trigger_id}")))
    }

    /// Chronological job records from the work history.
    pub fn work_history(&self, field: &TwinId) -> Result<Vec<JobRecord>> {
        let twin = self.hub.hosted_twin(field)?;
        let path = Self::housing(&twin, &concepts::work_history())?
            .ok_or_else(|| Error::UnresolvableSemanticId(concepts::work_history()))?;
        match twin.get_property(&path)?.value {
            Some(TypedValue::TimeSeries(samples)) => samples
                .into_iter()
                .map(|s| serde_json::from_value(s.value).map_err(Error::from))
                .collect(),
            _ => Ok(Vec::new()),
        }
    }
}
