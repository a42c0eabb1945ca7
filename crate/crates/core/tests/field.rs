mod support;

use agritwin::clock::Clock;
use agritwin::field::{concepts, FieldReading, JobRecord, ProcessKind};
use agritwin::geo;
use agritwin::mediator::{ExchangeCommand, Grant, GrantScope, ItemOutcome};
use agritwin::sim::world::seeds;
use agritwin::sim::{start_world, ScenarioSpec, World};
use agritwin::twin::{ElementPath, TwinAccess, TwinId, TypedValue, INBOX_SUBMODEL};
use proptest::prelude::*;
use std::collections::BTreeMap;
use support::sid;

fn world() -> World {
    start_world(ScenarioSpec::new("closedloop", 7)).unwrap()
}

fn f7() -> TwinId {
    "field-7".parse().unwrap()
}

fn nitrogen(w: &World) -> f64 {
    match w.fields.read_field_data(&f7(), &[concepts::soil_nitrogen()]).unwrap().remove(&concepts::soil_nitrogen()) {
        Some(FieldReading::Present { value, .. }) => value.as_f64().unwrap(),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sensor_ingest_follows_currentness_and_vocabulary() {
    let w = world();
    let n = concepts::soil_nitrogen();
    let (t0, t1, t2) = (w.clock.at_step(1), w.clock.at_step(2), w.clock.at_step(3));
    assert!(w.fields.ingest_sensor_reading(&f7(), &n, TypedValue::Decimal(42.0), "kg/ha", t1).unwrap());
    assert_eq!(nitrogen(&w), 42.0);
    assert!(!w.fields.ingest_sensor_reading(&f7(), &n, TypedValue::Decimal(40.0), "kg/ha", t0).unwrap());
    assert_eq!(nitrogen(&w), 42.0);
    let err = w.fields.ingest_sensor_reading(&f7(), &n, TypedValue::Decimal(42.0), "mg/kg", t2).unwrap_err();
    assert_eq!(err.code(), "UnitViolation");
    let err = w.fields.ingest_sensor_reading(&f7(), &n, TypedValue::Text("high".into()), "kg/ha", t2).unwrap_err();
    assert_eq!(err.code(), "DatatypeMismatch");
    let err = w.fields.ingest_sensor_reading(&f7(), &sid("no.such"), TypedValue::Decimal(1.0), "1", t2).unwrap_err();
    assert_eq!(err.code(), "UnresolvableSemanticId");
}

#[test]
fn read_field_data_reports_per_id() {
    let w = world();
    let got = w.fields.read_field_data(&f7(), &[concepts::boundaries(), concepts::crop_type()]).unwrap();
    assert!(got.values().all(|r| matches!(r, FieldReading::Present { .. })));
    assert!(w.fields.read_field_data(&f7(), &[]).unwrap().is_empty());
    let got = w.fields.read_field_data(&f7(), &[sid("unknown.id")]).unwrap();
    assert_eq!(got[&sid("unknown.id")], FieldReading::NotFound);
    w.hub.stop_twin(&f7()).unwrap();
    assert_eq!(w.fields.read_field_data(&f7(), &[]).unwrap_err().code(), "TwinUnavailable");
}

fn record(w: &World, job: &str, step: i64, outputs: BTreeMap<agritwin::twin::SemanticId, TypedValue>) -> JobRecord {
    JobRecord {
        job_id: job.into(),
        field_id: f7(),
        process_kind: ProcessKind::Fertilization,
        executed_by: "spreader-1".parse().unwrap(),
        started_at: w.clock.at_step(step),
        finished_at: w.clock.at_step(step + 1),
        covered_area_ha: 1.0,
        outputs,
    }
}

#[test]
fn record_work_writes_through_and_keeps_order() {
    let w = world();
    let r1 = record(&w, "j1", 1, BTreeMap::from([(concepts::soil_nitrogen(), TypedValue::Decimal(60.0))]));
    w.fields.record_work(&f7(), &r1).unwrap();
    assert_eq!(nitrogen(&w), 60.0);
    let p = w.hub.hosted_twin(&f7()).unwrap().get_property(&ElementPath::parse("agronomic/soilNitrogen").unwrap()).unwrap();
    assert_eq!(p.last_updated, Some(r1.finished_at));

    let r2 = record(&w, "j2", 3, BTreeMap::new());
    w.fields.record_work(&f7(), &r2).unwrap();
    let history = w.fields.work_history(&f7()).unwrap();
    assert_eq!(history, vec![r1.clone(), r2]);

    let mut bad = record(&w, "j3", 5, BTreeMap::new());
    bad.finished_at = w.clock.at_step(4);
    assert_eq!(w.fields.record_work(&f7(), &bad).unwrap_err().code(), "InvariantViolation");
    let unknown = record(&w, "j4", 6, BTreeMap::from([(sid("no.such"), TypedValue::Decimal(1.0))]));
    assert_eq!(w.fields.record_work(&f7(), &unknown).unwrap_err().code(), "UnresolvableSemanticId");
    assert_eq!(w.fields.work_history(&f7()).unwrap().len(), 2);
}

#[test]
fn set_target_rules() {
    let w = world();
    let t = w.fields.set_target(&f7(), &concepts::soil_nitrogen(), 60.0).unwrap();
    assert_eq!((t.process_kind, t.target_value), (ProcessKind::Fertilization, 60.0));
    assert_eq!(w.triggers.drain(), vec![t]);
    let err = w.fields.set_target(&f7(), &concepts::soil_nitrogen(), 25.0).unwrap_err();
    assert_eq!(err.code(), "TargetNotAboveCurrent");
    let err = w.fields.set_target(&f7(), &concepts::plant_health(), 0.95).unwrap_err();
    assert_eq!(err.code(), "UnsupportedTargetConcept");
    assert!(w.triggers.is_empty());
}

#[test]
fn seeded_fields_have_positive_area() {
    for s in [seeds::FIELD_7, seeds::FIELD_8, seeds::FIELD_9] {
        let seed = agritwin::field::FieldSeed::from_json(s.as_bytes()).unwrap();
        // Shoelace by hand on the raw degrees.
        let r = &seed.boundaries;
        let twice: f64 = (0..r.len()).map(|i| {
            let (a, b) = (r[i], r[(i + 1) % r.len()]);
            a[0] * b[1] - b[0] * a[1]
        }).sum();
        assert!(twice.abs() > 0.0);
        assert!(geo::area_ha(r) > 0.0);
    }
}

#[test]
fn direct_read_equals_mediated_copy() {
    let w = world();
    let s1 = w.recommender.id();
    let items = vec![concepts::soil_nitrogen(), concepts::crop_type()];
    w.mediator.register_grant(Grant::new("farmer", s1.as_str(), f7(), items.clone(), GrantScope::Standing)).unwrap();
    for i in 0..5 {
        w.clock.advance();
        let n = 30.0 + i as f64 * 3.0;
        w.fields.ingest_sensor_reading(&f7(), &concepts::soil_nitrogen(), TypedValue::Decimal(n), "kg/ha", w.clock.now()).unwrap();
        let direct = w.fields.read_field_data(&f7(), &items).unwrap();
        let receipt = w.mediator.submit_exchange(&ExchangeCommand::copy(format!("c{i}"), f7(), s1.clone(), items.clone(), s1.as_str())).unwrap();
        for outcome in &receipt.per_item {
            let ItemOutcome::Delivered { semantic_id, value, source_updated, .. } = outcome else { panic!("{outcome:?}") };
            match &direct[semantic_id] {
                FieldReading::Present { value: v, last_updated } => {
                    assert_eq!((v, last_updated), (value, source_updated));
                }
                other => panic!("{other:?}"),
            }
            let inbox = w.recommender.twin().get_property(&ElementPath::new(INBOX_SUBMODEL, semantic_id.as_str())).unwrap();
            assert_eq!(inbox.value.as_ref(), Some(value));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// For any start level, target above it and pass size, the loop stops
    /// at the first pass reaching the target and the twin tracks the truth.
    #[test]
    fn closed_loop_converges(n0 in 0u32..150, gap in 1u32..120, step in 1u32..30) {
        let mut spec = ScenarioSpec::new("closedloop", 3);
        spec.overrides.initial_nitrogen = Some(n0 as f64);
        spec.overrides.nitrogen_per_pass = Some(step as f64);
        let w = start_world(spec).unwrap();
        let target = (n0 + gap) as f64;
        let t = w.fields.set_target(&f7(), &concepts::soil_nitrogen(), target).unwrap();
        let out = w.orchestrator.handle_trigger(&t).unwrap();
        let passes = gap.div_ceil(step) as usize;
        prop_assert_eq!(out.records.len(), passes);
        let truth = w.truth.nitrogen(&f7()).unwrap();
        prop_assert_eq!(truth, n0 as f64 + (passes as u32 * step) as f64);
        prop_assert!(truth >= target);
        prop_assert_eq!(nitrogen(&w), truth);
        prop_assert!(w.trace().iter().all(|s| s.twin == s.truth));
        prop_assert!(w.truth.conservation_holds());
    }
}
