//! Fertilization recommendation service.
//!
//! Finds field data sources at run time through the registry and the twins'
//! own descriptors, requests the data through the mediator and reads what
//! arrives in its inbox. It contains no knowledge of any particular FMIS.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::hub::{Registry, TwinQuery};
use crate::mediator::{ExchangeCommand, ExchangeReceipt, Mediator};
use crate::orchestrator::definition_digest;
use crate::twin::{
    Datatype, ElementPath, LocalTwin, Property, SemanticId, Submodel, TwinAccess, TwinId, TwinKind, TwinShell,
    TypedValue, INBOX_SUBMODEL,
};
use crate::vocabulary::Vocabulary;

/// The service's own source, digested to show it is not modified.
pub const SOURCE: &str = include_str!("recommendation.rs");
pub const DEFAULT_CONFIG: &str = include_str!("../../data/recommendation-config.json");

const RATE_PATH: &str = "recommendation/nitrogenRate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecommendationConfig {
    pub principal: String,
    /// Target soil nitrogen per crop, kg/ha.
    pub targets_kg_ha: BTreeMap<String, f64>,
    pub required_items: Vec<SemanticId>,
}

pub struct RecommendationService {
    twin: Arc<LocalTwin>,
    config: RecommendationConfig,
    config_digest: String,
    registry: Arc<dyn Registry>,
    mediator: Arc<Mediator>,
    clock: Arc<dyn Clock>,
}

impl RecommendationService {
    pub fn new(
        config_bytes: &[u8],
        registry: Arc<dyn Registry>,
        mediator: Arc<Mediator>,
        clock: Arc<dyn Clock>,
        vocabulary: &Vocabulary,
    ) -> Result<Self> {
        let config: RecommendationConfig =
            serde_json::from_slice(config_bytes).map_err(|e| Error::BadConfig(format!("recommendation config: {e}")))?;
        for id in &config.required_items {
            vocabulary.lookup(id).map_err(|_| Error::UnresolvableSemanticId(id.clone()))?;
        }
        let sm = Submodel::new("recommendation", SemanticId::expand("sm.recommendation")?).with_property(Property::new(
            "nitrogenRate",
            SemanticId::expand("recommendation.nitrogenRate")?,
            Datatype::Decimal,
            "kg/ha",
        ));
        let shell = TwinShell::create(config.principal.parse()?, TwinKind::SystemTwin, vec![sm], Some(vocabulary))?;
        Ok(Self {
            twin: Arc::new(LocalTwin::new(shell)),
            config,
            config_digest: definition_digest(config_bytes),
            registry,
            mediator,
            clock,
        })
    }

    pub fn twin(&self) -> &Arc<LocalTwin> {
        &self.twin
    }

    pub fn id(&self) -> TwinId {
        self.twin.twin_id()
    }

    pub fn code_digest() -> String {
        definition_digest(SOURCE.as_bytes())
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    /// Registered system twins whose descriptors carry every required concept.
    pub fn discover_sources(&self) -> Result<Vec<TwinId>> {
        let me = self.id();
        let candidates = self.registry.query(&TwinQuery {
            kind: Some(TwinKind::SystemTwin),
            ..TwinQuery::default()
        })?;
        let mut found = Vec::new();
        for id in candidates.into_iter().filter(|id| *id != me) {
            let catalog = match self.mediator.introspect_source(&id) {
                Ok(c) => c,
                Err(e) => {
                    log::debug!("skipping {id}: {e}");
                    continue;
                }
            };
            let own: Vec<&SemanticId> = catalog
                .iter()
                .filter(|(_, p)| p.submodel != INBOX_SUBMODEL)
                .map(|(s, _)| s)
                .collect();
            if self.config.required_items.iter().all(|r| own.contains(&r)) {
                found.push(id);
            }
        }
        Ok(found)
    }

    pub fn request_field_data(&self, source: &TwinId, command_id: &str) -> Result<ExchangeReceipt> {
        self.mediator.submit_exchange(&ExchangeCommand::copy(
            command_id,
            source.clone(),
            self.id(),
            self.config.required_items.clone(),
            self.config.principal.clone(),
        ))
    }

    fn received(&self, short: &str) -> Result<TypedValue> {
        let id = SemanticId::expand(short)?;
        self.twin
            .get_property(&ElementPath::new(INBOX_SUBMODEL, id.as_str()))?
            .value
            .ok_or_else(|| Error::NotFound(format!("{id} not received")))
    }

    /// Recommended nitrogen rate from the field data in the inbox.
    pub fn recommend(&self) -> Result<f64> {
        let crop = self.received("crop.type")?;
        let crop = crop.as_text().unwrap_or_default();
        let nitrogen = self
            .received("soil.nitrogen")?
            .as_f64()
            .ok_or_else(|| Error::InvalidValue("soil nitrogen is not numeric".into()))?;
        let target = *self
            .config
            .targets_kg_ha
            .get(crop)
            .ok_or_else(|| Error::InvalidValue(format!("no nitrogen target for crop '{crop}'")))?;
        let rate = (target - nitrogen).max(0.0);
        self.twin
            .set_property(&ElementPath::parse(RATE_PATH)?, TypedValue::Decimal(rate), self.clock.now())?;
        Ok(rate)
    }
}
