use std::sync::Arc;

use agritwin::field::{concepts, ProcessKind, ProcessTrigger};
use agritwin::geo;
use agritwin::orchestrator::{bundled, definition_digest, RoleBindings};
use agritwin::sim::natives;
use agritwin::sim::{start_world, ScenarioSpec, World};
use agritwin::twin::TwinId;

fn world() -> World {
    start_world(ScenarioSpec::new("adiop1", 7)).unwrap()
}

fn id(s: &str) -> TwinId {
    s.parse().unwrap()
}

fn weeding(robot: &str) -> RoleBindings {
    RoleBindings::from([("routePlanner".into(), id("route-planner")), ("fieldRobot".into(), id(robot))])
}

#[test]
fn bundled_recipe_roles() {
    let w = world();
    let r = w.orchestrator.recipe("weed-control-potato").unwrap();
    let roles: Vec<&str> = r.roles.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(roles, ["routePlanner", "fieldRobot"]);
    assert_eq!(r.definition_digest, definition_digest(bundled::WEED_CONTROL_POTATO.as_bytes()));
}

#[test]
fn binding_checks_conformance() {
    let w = world();
    let r = w.orchestrator.recipe("weed-control-potato").unwrap();
    assert!(w.orchestrator.bind_roles(&r, &weeding("robot-alpha")).is_ok());
    let err = w.orchestrator.bind_roles(&r, &weeding("route-planner")).err().unwrap();
    assert_eq!(err.code(), "NonconformantTwin");
    assert!(err.to_string().contains("sm.weedwork"));
    let mut partial = weeding("robot-alpha");
    partial.remove("routePlanner");
    assert_eq!(w.orchestrator.bind_roles(&r, &partial).err().unwrap().code(), "UnboundRole");
    // robot-beta is not registered until the swap.
    assert_eq!(w.orchestrator.bind_roles(&r, &weeding("robot-beta")).err().unwrap().code(), "NotFound");
    w.stimulus_replace_system("robot-alpha", "robot-beta").unwrap();
    let bound = w.orchestrator.bind_roles(&r, &weeding("robot-beta")).unwrap();
    assert_eq!(bound.recipe.definition_digest, r.definition_digest);
}

#[test]
fn run_covers_the_seeded_area() {
    let w = world();
    let r = w.orchestrator.recipe("weed-control-potato").unwrap();
    let bound = w.orchestrator.bind_roles(&r, &weeding("robot-alpha")).unwrap();
    let rec = w.orchestrator.run(&bound, &id("field-7")).unwrap();
    let area = geo::area_ha(&w.truth.field(&id("field-7")).unwrap().boundaries);
    assert!((rec.covered_area_ha - area).abs() < 1e-9 * area);
    assert_eq!(rec.executed_by, id("robot-alpha"));
    assert_eq!(rec.process_kind, ProcessKind::WeedControl);
    assert_eq!(w.fields.work_history(&id("field-7")).unwrap(), vec![rec]);
}

#[test]
fn stopped_robot_fails_the_execution_step_without_write_back() {
    let w = world();
    let r = w.orchestrator.recipe("weed-control-potato").unwrap();
    let bound = w.orchestrator.bind_roles(&r, &weeding("robot-alpha")).unwrap();
    w.network.set_online(natives::ALPHA_ADDRESS, false);
    let err = w.orchestrator.run(&bound, &id("field-7")).unwrap_err();
    assert!(matches!(err, agritwin::Error::StepDownstreamUnavailable { step: 1, .. }), "{err}");
    assert_eq!(err.code(), "DownstreamUnavailable");
    assert!(w.fields.work_history(&id("field-7")).unwrap().is_empty());
}

#[test]
fn submitted_runs_are_queryable() {
    let w = world();
    let (run, status) = w.orchestrator.submit_run("weed-control-potato", &weeding("robot-alpha"), &id("field-7")).unwrap();
    assert_eq!(w.orchestrator.run_status(&run).unwrap(), status);
    assert!(matches!(status, agritwin::orchestrator::RunStatus::Completed { .. }));
    let err = w.orchestrator.submit_run("weed-control-potato", &weeding("route-planner"), &id("field-7")).unwrap_err();
    assert_eq!(err.code(), "NonconformantTwin");
    w.network.set_online(natives::ALPHA_ADDRESS, false);
    let (failed_run, failed) = w.orchestrator.submit_run("weed-control-potato", &weeding("robot-alpha"), &id("field-7")).unwrap();
    assert!(matches!(failed, agritwin::orchestrator::RunStatus::Failed { .. }));
    assert_ne!(failed_run, run);
    assert_eq!(w.orchestrator.run_status("run-9999").unwrap_err().code(), "NotFound");
}

#[test]
fn concurrent_runs_share_the_planner() {
    let w = Arc::new(world());
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let w = w.clone();
            std::thread::spawn(move || {
                let (recipe, field) = if i % 2 == 0 {
                    ("weed-control-potato", "field-7")
                } else {
                    ("weed-control-sugar-beet", "field-9")
                };
                let r = w.orchestrator.recipe(recipe).unwrap();
                let bound = w.orchestrator.bind_roles(&r, &weeding("robot-alpha")).unwrap();
                w.orchestrator.run(&bound, &id(field)).unwrap()
            })
        })
        .collect();
    let mut jobs: Vec<String> = handles.into_iter().map(|h| h.join().unwrap().job_id).collect();
    jobs.sort();
    jobs.dedup();
    assert_eq!(jobs.len(), 8);
    assert_eq!(w.fields.work_history(&id("field-7")).unwrap().len(), 4);
    assert_eq!(w.fields.work_history(&id("field-9")).unwrap().len(), 4);
}

#[test]
fn trigger_errors() {
    let w = world();
    let t = w.fields.set_target(&id("field-7"), &concepts::soil_nitrogen(), 1e6).unwrap();
    let err = w.orchestrator.handle_trigger(&t).unwrap_err();
    assert!(matches!(err, agritwin::Error::TargetUnreachable { passes: 100, .. }), "{err}");

    let weeds = ProcessTrigger {
        trigger_id: "t-weeds".into(),
        process_kind: ProcessKind::WeedControl,
        ..t
    };
    assert_eq!(w.orchestrator.handle_trigger(&weeds).unwrap_err().code(), "NoRecipeForProcess");
}

#[test]
fn repeated_trigger_runs_once() {
    let w = start_world(ScenarioSpec::new("closedloop", 7)).unwrap();
    let t = w.fields.set_target(&id("field-7"), &concepts::soil_nitrogen(), 60.0).unwrap();
    let first = w.orchestrator.handle_trigger(&t).unwrap();
    let again = w.orchestrator.handle_trigger(&t).unwrap();
    assert_eq!(first, again);
    assert_eq!(first.records.len(), 3);
    assert_eq!(first.final_value, 60.0);
    assert_eq!(w.fields.work_history(&id("field-7")).unwrap().len(), 3);
}
