use agritwin::sim::{bundled_spec, run_scenario};

fn run(name: &str) -> agritwin::sim::ScenarioReport {
    let report = run_scenario(&bundled_spec(name).unwrap()).unwrap();
    for c in report.clauses.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: expected {} observed {}", c.clause, c.expected, c.observed);
    }
    report
}

#[test]
fn adiop1_passes() {
    assert!(run("adiop1").pass);
}

#[test]
fn adiop2_passes() {
    assert!(run("adiop2").pass);
}

#[test]
fn closedloop_passes() {
    assert!(run("closedloop").pass);
}

#[test]
fn reports_are_deterministic_per_seed() {
    for name in ["adiop1", "adiop2", "closedloop"] {
        let spec = bundled_spec(name).unwrap();
        let a = serde_json::to_string(&run_scenario(&spec).unwrap()).unwrap();
        let b = serde_json::to_string(&run_scenario(&spec).unwrap()).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn unknown_scenario_is_rejected() {
    let err = bundled_spec("harvest").unwrap_err();
    assert_eq!(err.code(), "ScenarioUnknown");
}
