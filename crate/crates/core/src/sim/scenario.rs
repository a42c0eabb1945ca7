//! Scenario harness: environment, stimulus and checked response clauses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::natives;
use super::recommendation::RecommendationService;
use super::systems;
use super::world::{start_world, ScenarioSpec, World};
use crate::error::{Error, Result};
use crate::field::{concepts, FieldReading, JobRecord};
use crate::geo;
use crate::mediator::{Grant, GrantScope, ReceiptStatus};
use crate::orchestrator::{bundled, definition_digest, RoleBindings};
use crate::twin::{NativeError, NativeRequest, TwinId, TypedValue};

/// Relative tolerance for decimals in the behavioural-equivalence check.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-9;

pub mod specs {
    pub const ADIOP1: &str = include_str!("../../data/scenarios/adiop1.json");
    pub const ADIOP2: &str = include_str!("../../data/scenarios/adiop2.json");
    pub const CLOSEDLOOP: &str = include_str!("../../data/scenarios/closedloop.json");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub clause: String,
    pub expected: Value,
    pub observed: Value,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub cast: BTreeMap<String, String>,
    pub clauses: Vec<Clause>,
    pub pass: bool,
}

struct Clauses(Vec<Clause>);

impl Clauses {
    fn check(&mut self, clause: &str, expected: Value, observed: Value, pass: bool) {
        self.0.push(Clause {
            clause: clause.to_owned(),
            expected,
            observed,
            pass,
        });
    }

    fn equal(&mut self, clause: &str, expected: Value, observed: Value) {
        let pass = expected == observed;
        self.check(clause, expected, observed, pass);
    }
}

/// The bundled spec for `name`.
pub fn bundled_spec(name: &str) -> Result<ScenarioSpec> {
    let bytes = match name {
        "adiop1" => specs::ADIOP1,
        "adiop2" => specs::ADIOP2,
        "closedloop" => specs::CLOSEDLOOP,
        other => return Err(Error::ScenarioUnknown(other.to_owned())),
    };
    ScenarioSpec::from_json(bytes.as_bytes())
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport> {
    spec.validate()?;
    let clauses = match spec.name.as_str() {
        "adiop1" => adiop1(spec)?,
        "adiop2" => adiop2(spec)?,
        "closedloop" => closed_loop(spec)?,
        other => return Err(Error::ScenarioUnknown(other.to_owned())),
    };
    let pass = clauses.0.iter().all(|c| c.pass);
    Ok(ScenarioReport {
        scenario: spec.name.clone(),
        seed: spec.seed,
        cast: spec.cast.clone(),
        clauses: clauses.0,
        pass,
    })
}

fn weed_recipe_for(crop: &str) -> Result<&'static str> {
    match crop {
        "potato" => Ok("weed-control-potato"),
        "sugar beet" => Ok("weed-control-sugar-beet"),
        other => Err(Error::BadConfig(format!("no weed-control recipe for crop '{other}'"))),
    }
}

fn field_text(world: &World, field: &TwinId, id: crate::twin::SemanticId) -> Result<TypedValue> {
    match world.fields.read_field_data(field, std::slice::from_ref(&id))?.remove(&id) {
        Some(FieldReading::Present { value, .. }) => Ok(value),
        _ => Err(Error::NotFound(format!("{id} on {field}"))),
    }
}

fn weeding_bindings(robot: &str) -> Result<RoleBindings> {
    Ok(RoleBindings::from([
        ("routePlanner".to_owned(), systems::ROUTE_PLANNER.parse()?),
        ("fieldRobot".to_owned(), robot.parse()?),
    ]))
}

fn run_weeding(world: &World, recipe: &str, robot: &str, field: &TwinId) -> Result<JobRecord> {
    let recipe = world.orchestrator.recipe(recipe)?;
    let bound = world.orchestrator.bind_roles(&recipe, &weeding_bindings(robot)?)?;
    world.orchestrator.run(&bound, field)
}

fn record_json(r: &JobRecord) -> Value {
    serde_json::to_value(r.normalized()).unwrap_or(Value::Null)
}

/// Sys_1 plans, Sys_2 executes; Sys_2 is replaced by Sys_3 and the same
/// recipe keeps working.
fn adiop1(spec: &ScenarioSpec) -> Result<Clauses> {
    let mut c = Clauses(Vec::new());
    let world = start_world(spec.clone())?;
    let field = spec.field();
    let crop = field_text(&world, &field, concepts::crop_type())?;
    let recipe_name = weed_recipe_for(crop.as_text().unwrap_or_default())?;
    let shipped = match recipe_name {
        "weed-control-potato" => bundled::WEED_CONTROL_POTATO,
        _ => bundled::WEED_CONTROL_SUGAR_BEET,
    };
    let digest_before = world.orchestrator.recipe(recipe_name)?.definition_digest.clone();

    let alpha = run_weeding(&world, recipe_name, systems::ROBOT_ALPHA, &field)?;
    let boundaries = world
        .truth
        .field(&field)
        .ok_or_else(|| Error::NotFound(format!("ground truth for {field}")))?
        .boundaries;
    let area = geo::area_ha(&boundaries);
    c.check(
        "robot-alpha run covers the seeded field area (ha)",
        json!(area),
        json!(alpha.covered_area_ha),
        (alpha.covered_area_ha - area).abs() <= EQUIVALENCE_TOLERANCE * area.max(1.0),
    );

    world.stimulus_replace_system(systems::ROBOT_ALPHA, systems::ROBOT_BETA)?;
    let registered: Vec<String> = world
        .hub
        .entries()
        .into_iter()
        .map(|e| e.descriptor.id.to_string())
        .filter(|id| id.starts_with("robot-"))
        .collect();
    c.equal("registry reflects the replacement", json!([systems::ROBOT_BETA]), json!(registered));

    let recipe = world.orchestrator.recipe(recipe_name)?;
    let conformant = world
        .orchestrator
        .bind_roles(&recipe, &weeding_bindings(systems::ROBOT_BETA)?)
        .map(|_| "conformant".to_owned())
        .unwrap_or_else(|e| e.to_string());
    c.equal("robot-beta conforms to the fieldRobot role", json!("conformant"), json!(conformant));

    let beta_live = run_weeding(&world, recipe_name, systems::ROBOT_BETA, &field)?;
    let digest_after = world.orchestrator.recipe(recipe_name)?.definition_digest.clone();
    c.equal(
        "recipe digest unchanged across the replacement",
        json!(digest_before),
        json!(digest_after),
    );
    c.equal(
        "loaded recipe matches the shipped definition file",
        json!(definition_digest(shipped.as_bytes())),
        json!(digest_after),
    );
    c.equal(
        "only the role binding differs between the runs",
        json!({ "alpha": systems::ROBOT_ALPHA, "beta": systems::ROBOT_BETA }),
        json!({ "alpha": alpha.executed_by, "beta": beta_live.executed_by }),
    );
    c.check(
        "Sys_1 and Sys_3 exchanged data: robot-beta covered the planned route",
        json!(area),
        json!(beta_live.covered_area_ha),
        (beta_live.covered_area_ha - area).abs() <= EQUIVALENCE_TOLERANCE * area.max(1.0),
    );

    // Reference: the same seeded world with robot-beta from the start.
    let reference = start_world(spec.clone())?;
    reference.stimulus_replace_system(systems::ROBOT_ALPHA, systems::ROBOT_BETA)?;
    let beta = run_weeding(&reference, recipe_name, systems::ROBOT_BETA, &field)?;
    c.check(
        "normalized JobRecords equal (all fields except jobId, executedBy and timestamps; decimals within 1e-9 relative)",
        record_json(&alpha),
        record_json(&beta),
        alpha.normalized().equivalent(&beta.normalized(), EQUIVALENCE_TOLERANCE),
    );

    let history: Vec<String> = world.fields.work_history(&field)?.into_iter().map(|r| r.job_id).collect();
    c.equal(
        "field work history lists both runs in completion order",
        json!([alpha.job_id, beta_live.job_id]),
        json!(history),
    );

    let cross = world.network.call(
        natives::BETA_ADDRESS,
        &NativeRequest::new(
            "POST",
            "/api/executeJob",
            json!({ "waypoints": boundaries, "crop": crop.as_text().unwrap_or_default() }),
        ),
    );
    c.check(
        "robot-alpha payload is rejected by robot-beta's native API",
        json!("protocol error"),
        json!(match &cross {
            Err(e) => e.to_string(),
            Ok(_) => "accepted".to_owned(),
        }),
        matches!(cross, Err(NativeError::Protocol { .. })),
    );
    Ok(c)
}

/// S_1 gets field data from an FMIS registered after it started, through
/// the mediator and reflection only.
fn adiop2(spec: &ScenarioSpec) -> Result<Clauses> {
    let mut c = Clauses(Vec::new());
    let world = start_world(spec.clone())?;
    let s1 = &world.recommender;
    let code_before = RecommendationService::code_digest();
    let config_before = s1.config_digest().to_owned();
    let s1_id = s1.id();
    let items = vec![concepts::boundaries(), concepts::crop_type(), concepts::soil_nitrogen()];

    // Environment: the farmer works with FMIS_1.
    let fmis1: TwinId = systems::FMIS_1.parse()?;
    world.mediator.register_grant(Grant::new(
        "farmer",
        s1_id.as_str(),
        fmis1.clone(),
        items.clone(),
        GrantScope::OneTime,
    ))?;
    let before_sources = s1.discover_sources()?;
    let before = match before_sources.first() {
        Some(src) => s1.request_field_data(src, "exchange-0001")?.status == ReceiptStatus::Delivered,
        None => false,
    };
    let rate_before = s1.recommend().ok();
    c.check(
        "environment: S_1 served from FMIS_1",
        json!({ "sources": [systems::FMIS_1], "delivered": true }),
        json!({ "sources": before_sources, "delivered": before }),
        before_sources == vec![fmis1.clone()] && before,
    );

    // Stimulus: the farmer switches to the new FMIS.
    world.clock.advance();
    world.stimulus_replace_system(systems::FMIS_1, systems::FMIS_NEW)?;
    let fmis_new: TwinId = systems::FMIS_NEW.parse()?;
    let s1_registered = world.hub.entry(&s1_id)?.registered_at;
    let new_registered = world.hub.entry(&fmis_new)?.registered_at;
    c.check(
        "new FMIS twin registered after S_1 started",
        json!(format!("after {s1_registered}")),
        json!(new_registered.to_string()),
        new_registered > s1_registered,
    );

    let grant_id = world.mediator.register_grant(Grant::new(
        "farmer",
        s1_id.as_str(),
        fmis_new.clone(),
        items.clone(),
        GrantScope::OneTime,
    ))?;
    let sources = s1.discover_sources()?;
    c.equal(
        "S_1 discovers the new FMIS through registry and reflection",
        json!([systems::FMIS_NEW]),
        json!(sources),
    );
    let receipt = s1.request_field_data(&fmis_new, "exchange-0002")?;
    c.equal(
        "exchange delivered every requested item",
        json!("Delivered"),
        json!(receipt.status),
    );

    // What the new FMIS holds natively, converted by hand: g/m² × 10 = kg/ha.
    let native = world
        .network
        .call(natives::FMIS_NEW_ADDRESS, &NativeRequest::new("GET", "/parcels/field-7/parcelData", Value::Null))
        .map_err(|e| Error::DownstreamUnavailable(e.to_string()))?;
    let expected_nitrogen = native["parcelData"]["nitrogenStock_g_m2"].as_f64().unwrap_or(f64::NAN) * 10.0;
    let expected_crop = native["parcelData"]["cultivatedCrop"].as_str().unwrap_or_default().to_owned();
    let delivered: BTreeMap<String, Value> = receipt
        .per_item
        .iter()
        .filter_map(|o| match o {
            crate::mediator::ItemOutcome::Delivered { semantic_id, value, .. } => {
                Some((semantic_id.to_string(), value.to_json()))
            }
            _ => None,
        })
        .collect();
    let got_nitrogen = delivered
        .get(concepts::soil_nitrogen().as_str())
        .and_then(Value::as_f64)
        .unwrap_or(f64::NAN);
    c.check(
        "S_1 receives the new FMIS's field data in vocabulary units",
        json!({
            "boundaries": native["parcelData"]["outline"],
            "crop": expected_crop,
            "soilNitrogenKgHa": expected_nitrogen,
        }),
        json!({
            "boundaries": delivered.get(concepts::boundaries().as_str()),
            "crop": delivered.get(concepts::crop_type().as_str()),
            "soilNitrogenKgHa": got_nitrogen,
        }),
        delivered.get(concepts::boundaries().as_str()) == Some(&native["parcelData"]["outline"])
            && delivered.get(concepts::crop_type().as_str()) == Some(&json!(expected_crop))
            && (got_nitrogen - expected_nitrogen).abs() <= 1e-9 * expected_nitrogen.abs().max(1.0),
    );

    let config: Value = serde_json::from_str(super::recommendation::DEFAULT_CONFIG)?;
    let target = config["targetsKgHa"][&expected_crop].as_f64().unwrap_or(f64::NAN);
    let rate = s1.recommend()?;
    c.check(
        "S_1 understands the data: recommendation = crop target − soil nitrogen",
        json!((target - expected_nitrogen).max(0.0)),
        json!(rate),
        (rate - (target - expected_nitrogen).max(0.0)).abs() < 1e-9,
    );
    c.equal(
        "same recommendation as with FMIS_1",
        json!(rate_before),
        json!(Some(rate)),
    );
    c.equal(
        "S_1 code digest unchanged",
        json!(code_before),
        json!(RecommendationService::code_digest()),
    );
    c.equal(
        "S_1 configuration digest unchanged",
        json!(config_before),
        json!(s1.config_digest()),
    );

    let consumed = world.mediator.grant(&grant_id)?.consumed;
    let replay = s1.request_field_data(&fmis_new, "exchange-0002")?;
    let second = s1.request_field_data(&fmis_new, "exchange-0003");
    c.check(
        "one-time grant consumed exactly once",
        json!({ "consumed": true, "replay": "identical receipt", "freshCommand": "AccessNotGranted" }),
        json!({
            "consumed": consumed,
            "replay": if replay == receipt { "identical receipt" } else { "different receipt" },
            "freshCommand": match &second { Err(e) => e.code(), Ok(_) => "Delivered" },
        }),
        consumed && replay == receipt && matches!(second, Err(Error::AccessNotGranted { .. })),
    );
    Ok(c)
}

/// Target nitrogen set on the field twin drives fertilization passes until
/// the twin reaches it.
fn closed_loop(spec: &ScenarioSpec) -> Result<Clauses> {
    let mut c = Clauses(Vec::new());
    let world = start_world(spec.clone())?;
    let field = spec.field();
    let initial = world
        .truth
        .nitrogen(&field)
        .ok_or_else(|| Error::NotFound(format!("ground truth for {field}")))?;
    let target = spec.overrides.target_nitrogen.unwrap_or(60.0);
    let per_pass = spec.nitrogen_per_pass();
    let noise = spec.overrides.sensor_noise.unwrap_or(0.0);

    let trigger = world.fields.set_target(&field, &concepts::soil_nitrogen(), target)?;
    let queued = world.triggers.drain();
    c.equal("setTarget emits one trigger", json!([trigger.trigger_id]), json!(queued.iter().map(|t| &t.trigger_id).collect::<Vec<_>>()));

    let outcome = world.orchestrator.handle_trigger(&trigger)?;
    let expected_passes = ((target - initial) / per_pass).ceil().max(0.0) as usize;
    c.equal(
        "fertilization passes",
        json!(expected_passes),
        json!(outcome.records.len()),
    );
    let applied: f64 = outcome
        .records
        .iter()
        .filter_map(|r| r.outputs.get(&concepts::nitrogen_applied()).and_then(TypedValue::as_f64))
        .sum();
    c.equal(
        "nitrogen applied in total (kg/ha)",
        json!(expected_passes as f64 * per_pass),
        json!(applied),
    );
    let truth_final = world.truth.nitrogen(&field).unwrap_or(f64::NAN);
    c.equal(
        "ground truth reaches the expected level (kg/ha)",
        json!(initial + expected_passes as f64 * per_pass),
        json!(truth_final),
    );
    c.check(
        "ground truth at or above target",
        json!(format!(">= {target}")),
        json!(truth_final),
        truth_final >= target,
    );

    let tolerance = 4.0 * noise;
    let trace = world.trace();
    let tracking = trace.len() == outcome.records.len()
        && trace.iter().all(|s| (s.twin - s.truth).abs() <= tolerance);
    c.check(
        "twin tracks ground truth at every sampling tick",
        json!({ "ticks": outcome.records.len(), "tolerance": tolerance }),
        serde_json::to_value(&trace)?,
        tracking,
    );
    let twin_final = match world.fields.read_field_data(&field, &[concepts::soil_nitrogen()])?.remove(&concepts::soil_nitrogen()) {
        Some(FieldReading::Present { value, .. }) => value.as_f64().unwrap_or(f64::NAN),
        _ => f64::NAN,
    };
    c.check(
        "twin equals ground truth after the last tick",
        json!(truth_final),
        json!(twin_final),
        (twin_final - truth_final).abs() <= tolerance,
    );
    c.equal(
        "ground truth conserved: only fertilization changed nitrogen",
        json!(true),
        json!(world.truth.conservation_holds()),
    );
    let history = world.fields.work_history(&field)?.len();
    c.equal(
        "every pass recorded in the field's work history",
        json!(outcome.records.len()),
        json!(history),
    );
    Ok(c)
}
