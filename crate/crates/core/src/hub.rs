//! TwinHub: the vendor-neutral registry that hosts digital field twins and
//! answers cross-twin search queries.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock, Weak};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::directory::TwinDirectory;
use crate::error::{Error, Result};
use crate::geo;
use crate::twin::{
    ElementPath, LocalTwin, OperationHandler, Property, SemanticId, ShellDescriptor, Timestamp, TwinAccess,
    TwinId, TwinKind, TwinObserver, TwinShell, TypedValue,
};
use crate::vocabulary::Vocabulary;

/// Environment variable naming the snapshot directory.
pub const DATA_DIR_ENV: &str = "AGRITWIN_DATA_DIR";

/// Scalar facet value used in tags and query predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Boolean(bool),
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn from_value(value: &TypedValue) -> Option<Self> {
        match value {
            TypedValue::Decimal(v) => Some(Scalar::Number(*v)),
            TypedValue::Integer(v) => Some(Scalar::Number(*v as f64)),
            TypedValue::Text(s) => Some(Scalar::Text(s.clone())),
            TypedValue::Boolean(b) => Some(Scalar::Boolean(*b)),
            _ => None,
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Text(s.to_owned())
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Number(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl Comparator {
    /// Numbers compare numerically, text lexicographically, booleans by
    /// equality only. Mixed kinds never match.
    pub fn holds(self, lhs: &Scalar, rhs: &Scalar) -> bool {
        use std::cmp::Ordering;
        let ord = match (lhs, rhs) {
            (Scalar::Number(a), Scalar::Number(b)) => a.partial_cmp(b),
            (Scalar::Text(a), Scalar::Text(b)) => Some(a.cmp(b)),
            (Scalar::Boolean(a), Scalar::Boolean(b)) => {
                return self == Comparator::Eq && a == b;
            }
            _ => None,
        };
        match (self, ord) {
            (_, None) => false,
            (Comparator::Eq, Some(o)) => o == Ordering::Equal,
            (Comparator::Lt, Some(o)) => o == Ordering::Less,
            (Comparator::Le, Some(o)) => o != Ordering::Greater,
            (Comparator::Gt, Some(o)) => o == Ordering::Greater,
            (Comparator::Ge, Some(o)) => o != Ordering::Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Predicate {
    pub semantic_id: SemanticId,
    pub op: Comparator,
    pub value: Scalar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GeoBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl GeoBox {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.lon_min && p[0] <= self.lon_max && p[1] >= self.lat_min && p[1] <= self.lat_max
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TwinQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<TwinKind>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    /// Applied to the centroid of the field boundaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo_box: Option<GeoBox>,
}

impl TwinQuery {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn with_predicate(mut self, id: SemanticId, op: Comparator, value: impl Into<Scalar>) -> Self {
        self.predicates.push(Predicate {
            semantic_id: id,
            op,
            value: value.into(),
        });
        self
    }

    pub fn matches(&self, entry: &RegistryEntry) -> bool {
        if self.kind.is_some_and(|k| k != entry.descriptor.kind) {
            return false;
        }
        if let Some(bx) = &self.geo_box {
            if !entry.location.is_some_and(|c| bx.contains(c)) {
                return false;
            }
        }
        self.predicates.iter().all(|p| {
            entry
                .tags
                .get(&p.semantic_id)
                .is_some_and(|v| p.op.holds(v, &p.value))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistryEntry {
    pub descriptor: ShellDescriptor,
    pub registered_at: Timestamp,
    pub tags: BTreeMap<SemanticId, Scalar>,
    /// Centroid of the field boundaries, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<[f64; 2]>,
}

/// Registry operations the mediator and orchestrator depend on; served by
/// [`TwinHub`] in process and by the HTTP client remotely.
pub trait Registry: Send + Sync {
    fn lookup(&self, id: &TwinId) -> Result<ShellDescriptor>;
    fn query(&self, query: &TwinQuery) -> Result<Vec<TwinId>>;
}

#[derive(Debug, Clone, Default)]
pub struct HubOptions {
    /// Snapshot directory; persistence is off when unset.
    pub data_dir: Option<PathBuf>,
    /// Base URL twins are served under (`{base}/twins/{id}`); `local://` when unset.
    pub public_base: Option<String>,
    /// Property concepts mirrored into registry tags.
    pub facets: Vec<SemanticId>,
}

impl HubOptions {
    pub fn default_facets() -> Vec<SemanticId> {
        ["crop.type", "soil.nitrogen", "plant.health", "field.slope", "weed.density"]
            .iter()
            .map(|s| SemanticId::expand(s).expect("static id"))
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct SnapshotLine {
    saved_at: Timestamp,
    shell: TwinShell,
}

struct SnapshotStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl SnapshotStore {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::BadConfig(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_owned(),
            write_lock: Mutex::new(()),
        })
    }

    fn file_for(&self, id: &TwinId) -> PathBuf {
        let safe: String = id
            .as_str()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
            .collect();
        self.dir.join(format!("{safe}.snapshots.jsonl"))
    }

    /// Appends the twin's current state; the snapshot is taken under the
    /// store lock so lines land in write order.
    fn append(&self, twin: &LocalTwin, saved_at: Timestamp) -> Result<()> {
        let _guard = self.write_lock.lock().unwrap();
        let line = SnapshotLine {
            saved_at,
            shell: twin.snapshot(),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.file_for(&line.shell.id))
            .map_err(|e| Error::BadConfig(e.to_string()))?;
        let mut bytes = serde_json::to_vec(&line)?;
        bytes.push(b'\n');
        file.write_all(&bytes).map_err(|e| Error::BadConfig(e.to_string()))?;
        file.sync_data().map_err(|e| Error::BadConfig(e.to_string()))
    }

    fn remove(&self, id: &TwinId) {
        let _guard = self.write_lock.lock().unwrap();
        let _ = fs::remove_file(self.file_for(id));
    }

    /// Last complete snapshot of every twin in the directory. A torn final
    /// line is ignored.
    fn load_all(&self) -> Result<Vec<TwinShell>> {
        let mut shells = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map_err(|e| Error::BadConfig(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".snapshots.jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let file = File::open(&path).map_err(|e| Error::BadConfig(e.to_string()))?;
            let last = BufReader::new(file)
                .lines()
                .map_while(std::result::Result::ok)
                .filter_map(|l| serde_json::from_str::<SnapshotLine>(&l).ok())
                .last();
            if let Some(line) = last {
                shells.push(line.shell);
            }
        }
        Ok(shells)
    }
}

struct HubState {
    vocabulary: Arc<Vocabulary>,
    clock: Arc<dyn Clock>,
    facets: Vec<SemanticId>,
    entries: RwLock<BTreeMap<TwinId, RegistryEntry>>,
    store: Option<SnapshotStore>,
}

impl HubState {
    fn refresh_tag(&self, id: &TwinId, prop: &Property) {
        let boundaries = SemanticId::expand("field.boundaries").expect("static id");
        let mut entries = self.entries.write().unwrap();
        let Some(entry) = entries.get_mut(id) else { return };
        if prop.semantic_id == boundaries {
            entry.location = prop.value.as_ref().and_then(TypedValue::as_polygon).map(geo::centroid);
        }
        if self.facets.contains(&prop.semantic_id) {
            if let Some(s) = prop.value.as_ref().and_then(Scalar::from_value) {
                entry.tags.insert(prop.semantic_id.clone(), s);
            }
        }
    }
}

/// Keeps registry tags and snapshots in step with a hosted twin.
struct HostedObserver {
    state: Weak<HubState>,
    twin: Weak<LocalTwin>,
}

impl TwinObserver for HostedObserver {
    fn property_written(&self, twin_id: &TwinId, _path: &ElementPath, property: &Property) {
        let (Some(state), Some(twin)) = (self.state.upgrade(), self.twin.upgrade()) else { return };
        state.refresh_tag(twin_id, property);
        if let Some(store) = &state.store {
            if let Err(e) = store.append(&twin, state.clock.now()) {
                log::error!("snapshot of {twin_id} failed: {e}");
            }
        }
    }

    fn structure_changed(&self, shell: &TwinShell) {
        let (Some(state), Some(twin)) = (self.state.upgrade(), self.twin.upgrade()) else { return };
        if let Some(entry) = state.entries.write().unwrap().get_mut(&shell.id) {
            entry.descriptor = ShellDescriptor::of(shell, twin.endpoint());
        }
        for (_, prop) in shell.properties() {
            state.refresh_tag(&shell.id, prop);
        }
        if let Some(store) = &state.store {
            if let Err(e) = store.append(&twin, state.clock.now()) {
                log::error!("snapshot of {} failed: {e}", shell.id);
            }
        }
    }
}

pub struct TwinHub {
    state: Arc<HubState>,
    hosted: RwLock<BTreeMap<TwinId, Arc<LocalTwin>>>,
    public_base: RwLock<Option<String>>,
    field_handler: RwLock<Option<Arc<dyn OperationHandler>>>,
    directory: Option<Arc<TwinDirectory>>,
}

impl TwinHub {
    pub fn new(vocabulary: Arc<Vocabulary>, clock: Arc<dyn Clock>, options: HubOptions) -> Result<Self> {
        let store = options.data_dir.as_deref().map(SnapshotStore::open).transpose()?;
        let facets = if options.facets.is_empty() {
            HubOptions::default_facets()
        } else {
            options.facets
        };
        Ok(Self {
            state: Arc::new(HubState {
                vocabulary,
                clock,
                facets,
                entries: RwLock::new(BTreeMap::new()),
                store,
            }),
            hosted: RwLock::new(BTreeMap::new()),
            public_base: RwLock::new(options.public_base),
            field_handler: RwLock::new(None),
            directory: None,
        })
    }

    /// Hosted twins are also published into `directory` so in-process
    /// clients can reach them by endpoint.
    pub fn with_directory(mut self, directory: Arc<TwinDirectory>) -> Self {
        self.directory = Some(directory);
        self
    }

    /// Operation implementation bound to every hosted field twin.
    pub fn set_field_handler(&self, handler: Arc<dyn OperationHandler>) {
        *self.field_handler.write().unwrap() = Some(handler);
    }

    pub fn set_public_base(&self, base: Option<String>) {
        *self.public_base.write().unwrap() = base;
        let hosted: Vec<Arc<LocalTwin>> = self.hosted.read().unwrap().values().cloned().collect();
        for twin in hosted {
            let endpoint = self.endpoint_for(&twin.twin_id());
            if let Some(dir) = &self.directory {
                dir.detach(&twin.endpoint());
                dir.attach(endpoint.clone(), twin.clone());
            }
            twin.set_endpoint(endpoint.clone());
            if let Some(e) = self.state.entries.write().unwrap().get_mut(&twin.twin_id()) {
                e.descriptor.endpoint = endpoint;
            }
        }
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.state.vocabulary
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.state.clock
    }

    fn endpoint_for(&self, id: &TwinId) -> String {
        match self.public_base.read().unwrap().as_deref() {
            Some(base) => format!(
                "{}/twins/{}",
                base.trim_end_matches('/'),
                urlencoding::encode(id.as_str())
            ),
            None => format!("local://{id}"),
        }
    }

    pub fn register_twin(&self, descriptor: ShellDescriptor, tags: BTreeMap<SemanticId, Scalar>) -> Result<()> {
        for id in tags.keys() {
            if !self.state.vocabulary.contains(id) {
                return Err(Error::UnresolvableSemanticId(id.clone()));
            }
        }
        let mut entries = self.state.entries.write().unwrap();
        if entries.contains_key(&descriptor.id) {
            return Err(Error::DuplicateTwinId(descriptor.id));
        }
        entries.insert(
            descriptor.id.clone(),
            RegistryEntry {
                descriptor,
                registered_at: self.state.clock.now(),
                tags,
                location: None,
            },
        );
        Ok(())
    }

    /// Moves a registered (not hosted) twin to a new endpoint.
    pub fn update_endpoint(&self, id: &TwinId, endpoint: impl Into<String>) -> Result<()> {
        let mut entries = self.state.entries.write().unwrap();
        let entry = entries.get_mut(id).ok_or_else(|| Error::NotFound(format!("twin {id}")))?;
        entry.descriptor.endpoint = endpoint.into();
        Ok(())
    }

    pub fn deregister_twin(&self, id: &TwinId) -> Result<()> {
        let removed = self.state.entries.write().unwrap().remove(id);
        if removed.is_none() {
            return Err(Error::NotFound(format!("twin {id}")));
        }
        if let Some(twin) = self.hosted.write().unwrap().remove(id) {
            if let Some(dir) = &self.directory {
                dir.detach(&twin.endpoint());
            }
            if let Some(store) = &self.state.store {
                store.remove(id);
            }
        }
        Ok(())
    }

    pub fn lookup(&self, id: &TwinId) -> Result<ShellDescriptor> {
        self.entry(id).map(|e| e.descriptor)
    }

    pub fn entry(&self, id: &TwinId) -> Result<RegistryEntry> {
        self.state
            .entries
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("twin {id}")))
    }

    pub fn entries(&self) -> Vec<RegistryEntry> {
        self.state.entries.read().unwrap().values().cloned().collect()
    }

    /// Registered twins satisfying every predicate, ordered by twin id.
    pub fn query(&self, query: &TwinQuery) -> Result<Vec<TwinId>> {
        for p in &query.predicates {
            if !self.state.vocabulary.contains(&p.semantic_id) {
                return Err(Error::UnresolvableSemanticId(p.semantic_id.clone()));
            }
        }
        Ok(self
            .state
            .entries
            .read()
            .unwrap()
            .values()
            .filter(|e| query.matches(e))
            .map(|e| e.descriptor.id.clone())
            .collect())
    }

    /// Hosts a field twin, registers it and returns its endpoint.
    pub fn host_field_twin(&self, model: TwinShell) -> Result<String> {
        if model.kind != TwinKind::FieldTwin {
            return Err(Error::NotAFieldTwin(model.id));
        }
        model.validate(Some(&self.state.vocabulary))?;
        if self.state.entries.read().unwrap().contains_key(&model.id) {
            return Err(Error::DuplicateTwinId(model.id));
        }
        let id = model.id.clone();
        let mut twin = LocalTwin::new(model);
        if let Some(h) = self.field_handler.read().unwrap().clone() {
            twin = twin.with_handler(h);
        }
        let twin = Arc::new(twin);
        let endpoint = self.endpoint_for(&id);
        twin.set_endpoint(endpoint.clone());

        let snapshot = twin.snapshot();
        let mut tags = BTreeMap::new();
        let mut location = None;
        for (_, prop) in snapshot.properties() {
            if let Some(v) = &prop.value {
                if self.state.facets.contains(&prop.semantic_id) {
                    if let Some(s) = Scalar::from_value(v) {
                        tags.insert(prop.semantic_id.clone(), s);
                    }
                }
                if prop.semantic_id.as_str().ends_with(":field.boundaries") {
                    location = v.as_polygon().map(geo::centroid);
                }
            }
        }
        {
            let mut entries = self.state.entries.write().unwrap();
            if entries.contains_key(&id) {
                return Err(Error::DuplicateTwinId(id));
            }
            entries.insert(
                id.clone(),
                RegistryEntry {
                    descriptor: ShellDescriptor::of(&snapshot, endpoint.clone()),
                    registered_at: self.state.clock.now(),
                    tags,
                    location,
                },
            );
        }
        twin.add_observer(Arc::new(HostedObserver {
            state: Arc::downgrade(&self.state),
            twin: Arc::downgrade(&twin),
        }));
        if let Some(store) = &self.state.store {
            store.append(&twin, self.state.clock.now())?;
        }
        if let Some(dir) = &self.directory {
            dir.attach(endpoint.clone(), twin.clone());
        }
        self.hosted.write().unwrap().insert(id, twin);
        Ok(endpoint)
    }

    /// Re-hosts every twin found in the snapshot directory with its last
    /// persisted values and timestamps. Returns the restored ids.
    pub fn restore(&self) -> Result<Vec<TwinId>> {
        let Some(store) = &self.state.store else {
            return Ok(Vec::new());
        };
        let mut restored = Vec::new();
        for shell in store.load_all()? {
            let id = shell.id.clone();
            if self.state.entries.read().unwrap().contains_key(&id) {
                continue;
            }
            self.host_field_twin(shell)?;
            restored.push(id);
        }
        Ok(restored)
    }

    pub fn hosted_twin(&self, id: &TwinId) -> Result<Arc<LocalTwin>> {
        self.hosted
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("hosted twin {id}")))
    }

    pub fn hosted_ids(&self) -> Vec<TwinId> {
        self.hosted.read().unwrap().keys().cloned().collect()
    }

    /// Takes a hosted twin off-line; its registry entry stays.
    pub fn stop_twin(&self, id: &TwinId) -> Result<()> {
        self.hosted_twin(id)?.stop();
        Ok(())
    }

    pub fn start_twin(&self, id: &TwinId) -> Result<()> {
        self.hosted_twin(id)?.start();
        Ok(())
    }
}

impl Registry for TwinHub {
    fn lookup(&self, id: &TwinId) -> Result<ShellDescriptor> {
        TwinHub::lookup(self, id)
    }

    fn query(&self, query: &TwinQuery) -> Result<Vec<TwinId>> {
        TwinHub::query(self, query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparator_semantics() {
        let n = |v: f64| Scalar::Number(v);
        assert!(Comparator::Le.holds(&n(1.0), &n(1.0)));
        assert!(!Comparator::Lt.holds(&n(1.0), &n(1.0)));
        assert!(Comparator::Gt.holds(&n(2.0), &n(1.0)));
        assert!(Comparator::Eq.holds(&Scalar::from("sugar beet"), &Scalar::from("sugar beet")));
        assert!(!Comparator::Eq.holds(&Scalar::from("1"), &n(1.0)));
        assert!(!Comparator::Ge.holds(&Scalar::Boolean(true), &Scalar::Boolean(true)));
    }

    #[test]
    fn comparator_wire_names() {
        let c: Comparator = serde_json::from_str("\"≤\"").unwrap();
        assert_eq!(c, Comparator::Le);
        assert_eq!(serde_json::to_string(&Comparator::Ge).unwrap(), "\">=\"");
    }
}
