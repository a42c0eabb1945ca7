//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod support;

use std::collections::BTreeMap;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use agritwin::clock::{Clock, SimClock};
use agritwin::directory::TwinDirectory;
use agritwin::field::{concepts, FieldOperations, FieldSeed, FieldService, TriggerQueue};
use agritwin::http::{ApiServer, HttpTwinClient, HubClient, Services};
use agritwin::hub::{HubOptions, TwinHub};
use agritwin::mediator::{ExchangeCommand, Grant, GrantScope, Mediator, ReceiptStatus};
use agritwin::orchestrator::{bundled, missing_submodels, Recipe};
use agritwin::sim::natives::{self};
use agritwin::sim::world::seeds;
use agritwin::sim::{run_scenario, start_world, ScenarioSpec};
use agritwin::twin::{ElementPath, NativeError, NativeRequest, TwinAccess, TwinId, TypedValue};
use agritwin::vocabulary::Vocabulary;
use agritwin::Error;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde_json::{json, Value};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn id(s: &str) -> TwinId {
    s.parse().unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn cli_scenario(name: &str) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = dir.path().join("report.json");
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_agrictl"))
        .args(["scenario", "run", name, "--report-out"])
        .arg(&report)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(out.status.code() == Some(0), format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    ensure(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    let v: Value = serde_json::from_slice(&std::fs::read(&report).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let clauses = v["clauses"].as_array().map(Vec::len).unwrap_or(0);
    ensure(v["pass"] == json!(true) && clauses > 0, "report does not pass")?;
    Ok(format!("{clauses} clauses, {:.2}s", elapsed.as_secs_f64()))
}

fn exchanges() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let bad = support::mediator_violations(&mut rng, 200);
    ensure(bad.is_empty(), format!("{} violations, first: {}", bad.len(), bad.first().cloned().unwrap_or_default()))?;
    Ok("200 exchanges, 0 violations".into())
}

fn closed_loop() -> Outcome {
    let spec: ScenarioSpec = agritwin::sim::bundled_spec("closedloop").map_err(|e| e.to_string())?;
    let w = start_world(spec.clone()).map_err(|e| e.to_string())?;
    let field = spec.field();
    let t = w.fields.set_target(&field, &concepts::soil_nitrogen(), 60.0).map_err(|e| e.to_string())?;
    let out = w.orchestrator.handle_trigger(&t).map_err(|e| e.to_string())?;
    let truth = w.truth.nitrogen(&field).ok_or("no ground truth for field")?;
    ensure(out.records.len() == 3, format!("{} passes", out.records.len()))?;
    ensure(truth == 60.0, format!("truth {truth}"))?;
    let trace = w.trace();
    ensure(trace.iter().all(|s| (s.twin - s.truth).abs() < 1e-9), "twin diverged from truth")?;
    let report = run_scenario(&spec).map_err(|e| e.to_string())?;
    ensure(report.pass, "closedloop report fails")?;
    Ok(format!("3 passes, truth {truth}, {} trace samples", trace.len()))
}

fn registry_queries() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let bad = support::registry_mismatches(&mut rng, 20, 50);
    ensure(bad.is_empty(), format!("{} mismatches, first: {}", bad.len(), bad.first().cloned().unwrap_or_default()))?;
    Ok("20 registries x 50 queries, 0 mismatches".into())
}

fn hub_server(dir: &std::path::Path) -> Result<(Arc<TwinHub>, ApiServer), Error> {
    let clock: Arc<dyn Clock> = Arc::new(SimClock::standard());
    let vocabulary = Arc::new(Vocabulary::standard());
    let options = HubOptions {
        data_dir: Some(dir.to_owned()),
        ..HubOptions::default()
    };
    let hub = Arc::new(TwinHub::new(vocabulary.clone(), clock.clone(), options)?);
    let fields = Arc::new(FieldService::new(
        hub.clone(),
        Arc::new(FieldOperations::new(clock, Arc::new(TriggerQueue::new()))),
    ));
    hub.restore()?;
    let server = ApiServer::bind(
        "127.0.0.1:0",
        Arc::new(Services {
            vocabulary: Some(vocabulary),
            hub: Some(hub.clone()),
            fields: Some(fields),
            ..Services::default()
        }),
    )?;
    hub.set_public_base(Some(server.url()));
    Ok((hub, server))
}

fn availability() -> Outcome {
    let s = |e: Error| e.to_string();
    let w = start_world(ScenarioSpec::new("adiop2", 7)).map_err(s)?;
    let server = w.serve("127.0.0.1:0").map_err(s)?;
    let hub = HubClient::new(&server.url());
    let clock: Arc<dyn Clock> = w.clock.clone();
    let mediator = Mediator::new(
        Arc::new(hub.clone()),
        Arc::new(TwinDirectory::new().with_timeout(Duration::from_secs(5))),
        Arc::new(Vocabulary::standard()),
        clock,
    );
    let field = id("field-7");
    let dest = w.recommender.id();
    let items = vec![concepts::soil_nitrogen(), concepts::crop_type()];
    mediator
        .register_grant(Grant::new("farmer", dest.as_str(), field.clone(), items.clone(), GrantScope::Standing))
        .map_err(s)?;
    let cmd = |n: &str| ExchangeCommand::copy(n, field.clone(), dest.clone(), items.clone(), dest.as_str());
    let before = mediator.submit_exchange(&cmd("avail-1")).map_err(s)?;
    ensure(before.status == ReceiptStatus::Delivered, "baseline exchange failed")?;

    let twin = hub.twin(&field);
    twin.stop().map_err(s)?;
    let started = Instant::now();
    let down = mediator.submit_exchange(&cmd("avail-2"));
    let waited = started.elapsed();
    ensure(matches!(down, Err(Error::TwinUnavailable(ref t)) if *t == field), format!("got {down:?}"))?;
    ensure(waited < Duration::from_secs(5), format!("took {waited:?}"))?;
    ensure(hub.entry(&field).is_ok(), "registry lookup failed while twin stopped")?;

    twin.start().map_err(s)?;
    let after = mediator.submit_exchange(&cmd("avail-3")).map_err(s)?;
    ensure(after.status == ReceiptStatus::Delivered, "exchange failed after restart")?;
    ensure(after.per_item == before.per_item, "values changed across restart")?;

    // Killing the serving process: lookups now fail, and a client holding
    // the endpoint sees the twin as unavailable rather than hanging.
    let endpoint = hub.entry(&field).map_err(s)?.descriptor.endpoint;
    drop(server);
    let gone = HttpTwinClient::new(field.clone(), &endpoint, Duration::from_secs(5)).describe();
    ensure(matches!(gone, Err(Error::TwinUnavailable(_))), format!("after kill: {gone:?}"))?;

    // Snapshot reload: a restarted hub serves the same value.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = ElementPath::parse("agronomic/soilNitrogen").map_err(s)?;
    let value = {
        let (_hub, server) = hub_server(dir.path()).map_err(s)?;
        let client = HubClient::new(&server.url());
        let seed = FieldSeed::from_json(seeds::FIELD_8.as_bytes()).map_err(s)?;
        client.host_field(&seed).map_err(s)?;
        let t = client.twin(&seed.id);
        t.set_property(&path, TypedValue::Decimal(48.25), SimClock::standard().at_step(2)).map_err(s)?;
        t.get_property(&path).map_err(s)?
    };
    let (_hub, server) = hub_server(dir.path()).map_err(s)?;
    let reloaded = HubClient::new(&server.url()).twin(&id("field-8")).get_property(&path).map_err(s)?;
    ensure(reloaded == value, format!("reloaded {reloaded:?} vs {value:?}"))?;
    Ok(format!("unavailable after {waited:?}, restored exchange and snapshot"))
}

fn alpha_request(ring: &[[f64; 2]], crop: &str) -> NativeRequest {
    NativeRequest::new("POST", "/api/executeJob", json!({ "waypoints": ring, "crop": crop }))
}

fn beta_request(ring: &[[f64; 2]], crop: &str) -> NativeRequest {
    NativeRequest::new(
        "POST",
        &format!("/v2/robots/{}/missions", natives::BETA_ROBOT_ID),
        json!({ "mission": { "path": { "type": "ring", "coordinates": ring }, "cropKind": crop } }),
    )
}

fn cross_vendor() -> Outcome {
    let s = |e: Error| e.to_string();
    let w = start_world(ScenarioSpec::new("adiop1", 7)).map_err(s)?;
    // Beta is out of service until the swap; the probe needs both endpoints up.
    w.network.set_online(natives::BETA_ADDRESS, true);
    let alpha = w.system_twin(&id("robot-alpha")).map_err(s)?.describe().map_err(s)?;
    let beta = w.system_twin(&id("robot-beta")).map_err(s)?.describe().map_err(s)?;
    let recipe = Recipe::load(bundled::WEED_CONTROL_POTATO.as_bytes()).map_err(s)?;
    let role = recipe.roles.iter().find(|r| r.name == "fieldRobot").ok_or("no fieldRobot role")?;
    ensure(missing_submodels(role, &alpha).is_empty() && missing_submodels(role, &beta).is_empty(), "a robot does not conform")?;
    ensure(alpha.submodels == beta.submodels, "submodel signatures differ")?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xC505);
    let attempts = 250;
    let mut accepted = Vec::new();
    for n in 0..attempts {
        let known = ["field-7", "field-8", "field-9"][n % 3];
        let ring = if n % 2 == 0 {
            w.truth.field(&id(known)).ok_or("no ground truth")?.boundaries.clone()
        } else {
            let center = [rng.gen_range(5.0..15.0), rng.gen_range(45.0..55.0)];
            let mut ring = support::random_ring(&mut rng, center);
            ring.push(ring[0]);
            ring
        };
        let crop = support::CROPS[rng.gen_range(0..support::CROPS.len())];
        let (a, b) = (alpha_request(&ring, crop), beta_request(&ring, crop));
        // Own-vendor calls work, so a rejection is about the format alone.
        for (addr, req) in [(natives::ALPHA_ADDRESS, &a), (natives::BETA_ADDRESS, &b)] {
            if n == 0 {
                w.network.call(addr, req).map_err(|e| format!("own-vendor call failed: {e}"))?;
            }
        }
        let swapped_body = |req: &NativeRequest, body: &NativeRequest| NativeRequest::new(&req.method, &req.path, body.body.clone());
        let cross = [
            (natives::BETA_ADDRESS, a.clone()),
            (natives::ALPHA_ADDRESS, b.clone()),
            (natives::ALPHA_ADDRESS, swapped_body(&a, &b)),
            (natives::BETA_ADDRESS, swapped_body(&b, &a)),
        ];
        for (addr, req) in cross {
            match w.network.call(addr, &req) {
                Err(NativeError::Protocol { status: 404 | 405 | 422, .. }) => {}
                other => accepted.push(format!("{addr} {} -> {other:?}", req.path)),
            }
        }
    }
    ensure(accepted.is_empty(), format!("{} cross calls not rejected: {}", accepted.len(), accepted.first().cloned().unwrap_or_default()))?;
    Ok(format!("{} cross-vendor calls rejected, shared conformance holds", attempts * 4))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 adiop1 via agrictl", || cli_scenario("adiop1")),
        ("2 adiop2 via agrictl", || cli_scenario("adiop2")),
        ("3 mediated exchanges", exchanges),
        ("4 closed loop", closed_loop),
        ("5 registry queries", registry_queries),
        ("6 twin availability", availability),
        ("7 cross-vendor protocols", cross_vendor),
    ];
    let mut failed = 0;
    let mut summary = BTreeMap::new();
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
        summary.insert(name, outcome.is_ok());
    }
    println!("{} of {} criteria passed", summary.values().filter(|p| **p).count(), summary.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
