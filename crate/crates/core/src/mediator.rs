//! Semantic data-exchange mediator.
//!
//! Accepts generic commands ("get these concepts from twin A, send them to
//! twin B"), checks them against farmer grants and executes them purely
//! through reflection on the twins' descriptors and the shared vocabulary.
//! The mediator never links against a twin-specific interface.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::directory::TwinConnector;
use crate::error::{Error, Result};
use crate::hub::Registry;
use crate::twin::{
    ElementPath, InboxEntry, SemanticId, ShellDescriptor, Timestamp, TwinAccess, TwinId, TypedValue, INBOX_SUBMODEL,
};
use crate::vocabulary::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExchangeVerb {
    #[default]
    CopyOneTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExchangeCommand {
    pub command_id: String,
    #[serde(default)]
    pub verb: ExchangeVerb,
    pub source_twin: TwinId,
    pub destination_twin: TwinId,
    pub items: Vec<SemanticId>,
    pub requested_by: String,
}

impl ExchangeCommand {
    pub fn copy(
        command_id: impl Into<String>,
        source: TwinId,
        destination: TwinId,
        items: Vec<SemanticId>,
        requested_by: impl Into<String>,
    ) -> Self {
        Self {
            command_id: command_id.into(),
            verb: ExchangeVerb::CopyOneTime,
            source_twin: source,
            destination_twin: destination,
            items,
            requested_by: requested_by.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.command_id.is_empty() {
            return Err(Error::InvalidCommand("commandId is empty".into()));
        }
        if self.items.is_empty() {
            return Err(Error::InvalidCommand("items must not be empty".into()));
        }
        if self.source_twin == self.destination_twin {
            return Err(Error::InvalidCommand("source and destination are the same twin".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrantScope {
    OneTime,
    Standing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Grant {
    pub grantor: String,
    pub subject: String,
    pub twin: TwinId,
    pub items: Vec<SemanticId>,
    pub scope: GrantScope,
    #[serde(default)]
    pub consumed: bool,
}

impl Grant {
    pub fn new(grantor: &str, subject: &str, twin: TwinId, items: Vec<SemanticId>, scope: GrantScope) -> Self {
        Self {
            grantor: grantor.to_owned(),
            subject: subject.to_owned(),
            twin,
            items,
            scope,
            consumed: false,
        }
    }

    fn covers(&self, cmd: &ExchangeCommand) -> bool {
        !self.consumed
            && self.subject == cmd.requested_by
            && self.twin == cmd.source_twin
            && cmd.items.iter().all(|i| self.items.contains(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiptStatus {
    Delivered,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "camelCase")]
pub enum ItemOutcome {
    #[serde(rename_all = "camelCase")]
    Delivered {
        semantic_id: SemanticId,
        value: TypedValue,
        unit: String,
        source_updated: Timestamp,
    },
    #[serde(rename_all = "camelCase")]
    Failed { semantic_id: SemanticId, reason: String },
}

impl ItemOutcome {
    pub fn semantic_id(&self) -> &SemanticId {
        match self {
            ItemOutcome::Delivered { semantic_id, .. } | ItemOutcome::Failed { semantic_id, .. } => semantic_id,
        }
    }

    pub fn is_delivered(&self) -> bool {
        matches!(self, ItemOutcome::Delivered { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExchangeReceipt {
    pub command_id: String,
    pub status: ReceiptStatus,
    pub per_item: Vec<ItemOutcome>,
    pub executed_at: Timestamp,
}

pub struct Mediator {
    registry: Arc<dyn Registry>,
    connector: Arc<dyn TwinConnector>,
    vocabulary: Arc<Vocabulary>,
    clock: Arc<dyn Clock>,
    grants: Mutex<BTreeMap<String, Grant>>,
    grant_counter: AtomicU64,
    receipts: Mutex<BTreeMap<String, ExchangeReceipt>>,
    destination_locks: Mutex<HashMap<TwinId, Arc<Mutex<()>>>>,
}

/// Prefers a twin's own elements over earlier deliveries in its inbox.
fn source_path(descriptor: &ShellDescriptor, item: &SemanticId) -> Option<ElementPath> {
    let paths = descriptor.resolve(item);
    paths
        .iter()
        .find(|p| p.submodel != INBOX_SUBMODEL)
        .or_else(|| paths.first())
        .cloned()
}

fn unavailable(twin: &TwinId) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::TwinUnavailable(_) | Error::DownstreamUnavailable(_) | Error::Transport(_) => {
            Error::TwinUnavailable(twin.clone())
        }
        other => other,
    }
}

impl Mediator {
    pub fn new(
        registry: Arc<dyn Registry>,
        connector: Arc<dyn TwinConnector>,
        vocabulary: Arc<Vocabulary>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            registry,
            connector,
            vocabulary,
            clock,
            grants: Mutex::new(BTreeMap::new()),
            grant_counter: AtomicU64::new(0),
            receipts: Mutex::new(BTreeMap::new()),
            destination_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn register_grant(&self, grant: Grant) -> Result<String> {
        if grant.items.is_empty() {
            return Err(Error::InvalidCommand("grant covers no items".into()));
        }
        for item in &grant.items {
            if !self.vocabulary.contains(item) {
                return Err(Error::UnresolvableSemanticId(item.clone()));
            }
        }
        let n = self.grant_counter.fetch_add(1, Ordering::SeqCst) + 1;
        let id = format!("grant-{n:04}");
        self.grants
            .lock()
            .unwrap()
            .insert(id.clone(), Grant { consumed: false, ..grant });
        Ok(id)
    }

    pub fn grant(&self, id: &str) -> Result<Grant> {
        self.grants
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("grant {id}")))
    }

    pub fn receipt(&self, command_id: &str) -> Result<ExchangeReceipt> {
        self.receipts
            .lock()
            .unwrap()
            .get(command_id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("exchange {command_id}")))
    }

    /// Semantic catalog of a registered twin, obtained from the twin's own
    /// reflective descriptor.
    pub fn introspect_source(&self, twin: &TwinId) -> Result<Vec<(SemanticId, ElementPath)>> {
        let registered = self.registry.lookup(twin)?;
        let live = self.connector.connect(&registered).map_err(unavailable(twin))?;
        Ok(live.describe().map_err(unavailable(twin))?.catalog())
    }

    fn destination_lock(&self, twin: &TwinId) -> Arc<Mutex<()>> {
        self.destination_locks
            .lock()
            .unwrap()
            .entry(twin.clone())
            .or_default()
            .clone()
    }

    /// Atomically claims a covering grant; one-time grants are marked
    /// consumed immediately and released again if the exchange fails.
    fn claim_grant(&self, cmd: &ExchangeCommand) -> Result<(String, GrantScope)> {
        let mut grants = self.grants.lock().unwrap();
        let (id, grant) = grants
            .iter_mut()
            .find(|(_, g)| g.covers(cmd))
            .ok_or_else(|| Error::AccessNotGranted {
                principal: cmd.requested_by.clone(),
                twin: cmd.source_twin.clone(),
            })?;
        if grant.scope == GrantScope::OneTime {
            grant.consumed = true;
        }
        Ok((id.clone(), grant.scope))
    }

    fn release_grant(&self, id: &str) {
        if let Some(g) = self.grants.lock().unwrap().get_mut(id) {
            g.consumed = false;
        }
    }

    pub fn submit_exchange(&self, cmd: &ExchangeCommand) -> Result<ExchangeReceipt> {
        if let Ok(r) = self.receipt(&cmd.command_id) {
            return Ok(r);
        }
        cmd.validate()?;
        for item in &cmd.items {
            if !self.vocabulary.contains(item) {
                return Err(Error::UnresolvableSemanticId(item.clone()));
            }
        }
        let source_desc = self.registry.lookup(&cmd.source_twin)?;
        let dest_desc = self.registry.lookup(&cmd.destination_twin)?;

        let lock = self.destination_lock(&cmd.destination_twin);
        let _serialized = lock.lock().unwrap();
        if let Ok(r) = self.receipt(&cmd.command_id) {
            return Ok(r);
        }
        let (grant_id, scope) = self.claim_grant(cmd)?;
        let result = self.execute(cmd, &source_desc, &dest_desc);
        let receipt = match result {
            Ok(r) => r,
            Err(e) => {
                if scope == GrantScope::OneTime {
                    self.release_grant(&grant_id);
                }
                return Err(e);
            }
        };
        if receipt.status == ReceiptStatus::Failed && scope == GrantScope::OneTime {
            self.release_grant(&grant_id);
        }
        self.receipts
            .lock()
            .unwrap()
            .insert(cmd.command_id.clone(), receipt.clone());
        Ok(receipt)
    }

    fn execute(
        &self,
        cmd: &ExchangeCommand,
        source_desc: &ShellDescriptor,
        dest_desc: &ShellDescriptor,
    ) -> Result<ExchangeReceipt> {
        let source = self.connector.connect(source_desc).map_err(unavailable(&cmd.source_twin))?;
        let reflected = source.describe().map_err(unavailable(&cmd.source_twin))?;
        let mut plan = Vec::with_capacity(cmd.items.len());
        for item in &cmd.items {
            let path = source_path(&reflected, item).ok_or_else(|| Error::ItemNotFoundOnSource {
                twin: cmd.source_twin.clone(),
                item: item.clone(),
            })?;
            plan.push((item, path));
        }
        let destination = self
            .connector
            .connect(dest_desc)
            .map_err(unavailable(&cmd.destination_twin))?;
        destination.describe().map_err(unavailable(&cmd.destination_twin))?;

        let per_item: Vec<ItemOutcome> = plan
            .into_iter()
            .map(|(item, path)| self.transfer(source.as_ref(), destination.as_ref(), item, &path))
            .collect();
        let status = if per_item.iter().all(ItemOutcome::is_delivered) {
            ReceiptStatus::Delivered
        } else {
            ReceiptStatus::Failed
        };
        Ok(ExchangeReceipt {
            command_id: cmd.command_id.clone(),
            status,
            per_item,
            executed_at: self.clock.now(),
        })
    }

    fn transfer(
        &self,
        source: &dyn TwinAccess,
        destination: &dyn TwinAccess,
        item: &SemanticId,
        path: &ElementPath,
    ) -> ItemOutcome {
        let failed = |reason: String| ItemOutcome::Failed {
            semantic_id: item.clone(),
            reason,
        };
        let prop = match source.get_property(path) {
            Ok(p) => p,
            Err(e) => return failed(format!("read {path}: {e}")),
        };
        let (Some(value), Some(at)) = (prop.value, prop.last_updated) else {
            return failed(format!("{path} has no value"));
        };
        if let Err(v) = self.vocabulary.validate_value(item, &value, &prop.unit) {
            return failed(v.to_string());
        }
        let entry = InboxEntry {
            semantic_id: item.clone(),
            unit: prop.unit.clone(),
            value: value.clone(),
            at,
        };
        match destination.inbox_put(entry) {
            Ok(true) => ItemOutcome::Delivered {
                semantic_id: item.clone(),
                value,
                unit: prop.unit,
                source_updated: at,
            },
            Ok(false) => failed("destination holds a newer value".into()),
            Err(e) => failed(format!("write to destination: {e}")),
        }
    }
}
