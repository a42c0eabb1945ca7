//! Ground truth: the "real" fields the twins represent.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::field::FieldSeed;
use crate::geo;
use crate::twin::TwinId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruthField {
    pub id: TwinId,
    pub crop: String,
    pub boundaries: Vec<[f64; 2]>,
    pub nitrogen_kg_ha: f64,
    pub weed_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerEntry {
    pub field: TwinId,
    pub process: String,
    pub nitrogen_delta: f64,
}

#[derive(Debug, Default)]
struct State {
    fields: BTreeMap<TwinId, GroundTruthField>,
    initial_nitrogen: BTreeMap<TwinId, f64>,
    ledger: Vec<LedgerEntry>,
}

/// Every mutation goes through one lock, so changes are serialized.
#[derive(Debug, Default)]
pub struct GroundTruth {
    state: Mutex<State>,
}

impl GroundTruth {
    pub fn new(fields: impl IntoIterator<Item = GroundTruthField>) -> Self {
        let mut state = State::default();
        for f in fields {
            state.initial_nitrogen.insert(f.id.clone(), f.nitrogen_kg_ha);
            state.fields.insert(f.id.clone(), f);
        }
        Self {
            state: Mutex::new(state),
        }
    }

    pub fn from_seed(seed: &FieldSeed) -> GroundTruthField {
        GroundTruthField {
            id: seed.id.clone(),
            crop: seed.crop.clone(),
            boundaries: geo::close_ring(seed.boundaries.clone()),
            nitrogen_kg_ha: seed.initial_nitrogen,
            weed_density: seed.weed_density,
        }
    }

    pub fn field(&self, id: &TwinId) -> Option<GroundTruthField> {
        self.state.lock().unwrap().fields.get(id).cloned()
    }

    pub fn fields(&self) -> Vec<GroundTruthField> {
        self.state.lock().unwrap().fields.values().cloned().collect()
    }

    /// The field whose boundaries contain `point`.
    pub fn field_at(&self, point: [f64; 2]) -> Option<TwinId> {
        self.state
            .lock()
            .unwrap()
            .fields
            .values()
            .find(|f| geo::contains(&f.boundaries, point))
            .map(|f| f.id.clone())
    }

    pub fn nitrogen(&self, id: &TwinId) -> Option<f64> {
        self.field(id).map(|f| f.nitrogen_kg_ha)
    }

    /// Adds `kg_ha` of nitrogen and returns the new level.
    pub fn apply_nitrogen(&self, id: &TwinId, kg_ha: f64, process: &str) -> Option<f64> {
        let mut state = self.state.lock().unwrap();
        let f = state.fields.get_mut(id)?;
        f.nitrogen_kg_ha += kg_ha;
        let after = f.nitrogen_kg_ha;
        state.ledger.push(LedgerEntry {
            field: id.clone(),
            process: process.to_owned(),
            nitrogen_delta: kg_ha,
        });
        Some(after)
    }

    /// Removes the fraction `efficacy` of weeds and returns the residual density.
    pub fn apply_weed_control(&self, id: &TwinId, efficacy: f64) -> Option<f64> {
        let mut state = self.state.lock().unwrap();
        let f = state.fields.get_mut(id)?;
        f.weed_density *= 1.0 - efficacy;
        Some(f.weed_density)
    }

    pub fn ledger(&self) -> Vec<LedgerEntry> {
        self.state.lock().unwrap().ledger.clone()
    }

    /// Nitrogen of every field equals its initial level plus the ledgered
    /// process applications, replayed in order.
    pub fn conservation_holds(&self) -> bool {
        let state = self.state.lock().unwrap();
        state.fields.values().all(|f| {
            let replayed = state
                .ledger
                .iter()
                .filter(|e| e.field == f.id)
                .fold(state.initial_nitrogen[&f.id], |acc, e| acc + e.nitrogen_delta);
            replayed == f.nitrogen_kg_ha
        })
    }
}
