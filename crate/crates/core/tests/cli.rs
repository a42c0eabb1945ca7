use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn agrictl() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_agrictl"));
    c.env_remove("AGRITWIN_HUB_URL").env_remove("AGRITWIN_DATA_DIR").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    agrictl().args(args).output().unwrap()
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Simfarm {
    child: Child,
    url: String,
}

impl Simfarm {
    // The child is killed and reaped in Drop.
    #[allow(clippy::zombie_processes)]
    fn start(data_dir: &Path) -> Self {
        let port = free_port();
        let child = agrictl()
            .args(["serve", "simfarm", "--port", &port.to_string()])
            .env("AGRITWIN_DATA_DIR", data_dir)
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        let url = format!("http://127.0.0.1:{port}");
        let deadline = Instant::now() + Duration::from_secs(10);
        while Instant::now() < deadline {
            if run(&["--hub-url", &url, "twin", "list"]).status.success() {
                return Self { child, url };
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        panic!("simfarm did not come up on {url}");
    }
}

impl Drop for Simfarm {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[test]
fn unknown_scenario_exits_2() {
    let out = run(&["scenario", "run", "nosuch"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ScenarioUnknown"));
}

#[test]
fn scenario_run_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let out = run(&["scenario", "run", "adiop1", "--seed", "11", "--report-out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!((v["scenario"].as_str(), v["seed"].as_u64(), v["pass"].as_bool()), (Some("adiop1"), Some(11), Some(true)));

    // Default location is under the data dir.
    let out = agrictl()
        .args(["scenario", "run", "closedloop"])
        .env("AGRITWIN_DATA_DIR", dir.path().join("data"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("data/reports/closedloop-seed7.json").exists());
}

#[test]
fn twin_commands_against_a_simfarm() {
    let dir = tempfile::tempdir().unwrap();
    let farm = Simfarm::start(dir.path());
    let hub = farm.url.as_str();

    let list = run(&["--hub-url", hub, "twin", "list"]);
    let text = String::from_utf8(list.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().next().unwrap().starts_with("field-7"));

    let json = |args: &[&str]| -> Value {
        let mut full = vec!["--hub-url", hub, "--format", "json"];
        full.extend_from_slice(args);
        let out = run(&full);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    };
    let shown = json(&["twin", "show", "field-7"]);
    assert_eq!(shown["id"], "field-7");
    assert_eq!(shown, json(&["twin", "show", "field-7"]));
    assert_eq!(json(&["twin", "query", "--where", "crop.type=potato"]), serde_json::json!(["field-7"]));
    assert_eq!(
        json(&["twin", "query", "--where", "soil.nitrogen>=40", "--kind", "field"]),
        serde_json::json!(["field-8", "field-9"])
    );

    let missing = run(&["--hub-url", hub, "twin", "show", "nope"]);
    assert_eq!(missing.status.code(), Some(2));

    let port = hub.rsplit(':').next().unwrap();
    let clash = run(&["serve", "hub", "--port", port]);
    assert_eq!(clash.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&clash.stderr).contains("PortInUse"));
}

#[test]
fn unreachable_hub_is_a_runtime_failure() {
    let port = free_port();
    let out = run(&["--hub-url", &format!("http://127.0.0.1:{port}"), "twin", "list"]);
    assert_eq!(out.status.code(), Some(1));
}
