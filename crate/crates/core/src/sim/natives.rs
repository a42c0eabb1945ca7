//! Vendor-native systems. Each speaks its own wire format; none of them
//! knows about twins or the shared vocabulary.

use std::sync::{Arc, Mutex};

use serde_json::{json, Map, Value};

use super::ground::GroundTruth;
use crate::field::FieldSeed;
use crate::geo;
use crate::twin::{NativeRequest, NativeResponse, NativeService};

pub const ALPHA_ADDRESS: &str = "alpha.robots.local";
pub const BETA_ADDRESS: &str = "beta.robots.local";
pub const PLANNER_ADDRESS: &str = "planner.local";
pub const SPREADER_ADDRESS: &str = "spreader.local";
pub const FMIS1_ADDRESS: &str = "fmis1.local";
pub const FMIS_NEW_ADDRESS: &str = "fmis-new.local";

pub const BETA_ROBOT_ID: &str = "BETA-7";

type Reply = Result<Value, (u16, String)>;

fn reply(r: Reply) -> NativeResponse {
    match r {
        Ok(v) => NativeResponse::ok(v),
        Err((status, msg)) => NativeResponse::error(status, msg),
    }
}

fn unprocessable(msg: impl Into<String>) -> (u16, String) {
    (422, msg.into())
}

/// Object body with exactly the `allowed` keys present.
fn strict_object<'a>(body: &'a Value, allowed: &[&str]) -> Result<&'a Map<String, Value>, (u16, String)> {
    let obj = body.as_object().ok_or_else(|| unprocessable("body must be an object"))?;
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(unprocessable(format!("unexpected field '{k}'")));
    }
    if let Some(k) = allowed.iter().find(|k| !obj.contains_key(**k)) {
        return Err(unprocessable(format!("missing field '{k}'")));
    }
    Ok(obj)
}

fn parse_ring(v: &Value) -> Result<Vec<[f64; 2]>, (u16, String)> {
    let pts = v.as_array().ok_or_else(|| unprocessable("ring must be an array"))?;
    let ring: Option<Vec<[f64; 2]>> = pts
        .iter()
        .map(|p| match p.as_array().map(Vec::as_slice) {
            Some([x, y]) => Some([x.as_f64()?, y.as_f64()?]),
            _ => None,
        })
        .collect();
    let ring = ring.ok_or_else(|| unprocessable("ring points must be [lon, lat] pairs"))?;
    geo::check_ring(&ring).map_err(|e| unprocessable(e.to_string()))?;
    Ok(ring)
}

fn text<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, (u16, String)> {
    obj[key].as_str().ok_or_else(|| unprocessable(format!("'{key}' must be a string")))
}

/// Machine parameters shared by both robot models.
#[derive(Debug, Clone)]
pub struct RobotConfig {
    pub serial: String,
    pub tank_l: f64,
    pub speed_kmh: f64,
    pub working_width_m: f64,
    pub dose_l_per_ha: f64,
    pub efficacy: f64,
}

impl RobotConfig {
    pub fn standard(serial: &str) -> Self {
        Self {
            serial: serial.to_owned(),
            tank_l: 400.0,
            speed_kmh: 6.0,
            working_width_m: 6.0,
            dose_l_per_ha: 1.5,
            efficacy: 0.9,
        }
    }
}

/// Outcome of one weeding job in SI base units.
#[derive(Debug, Clone, PartialEq)]
pub struct WeedingOutcome {
    pub job_number: u32,
    pub area_m2: f64,
    pub duration_s: f64,
    pub herbicide_l: f64,
    pub weeds_after: f64,
}

/// Behaviour common to both robot models; the vendors differ only in codec.
pub struct RobotCore {
    config: RobotConfig,
    tank_l: f64,
    jobs: u32,
    truth: Arc<GroundTruth>,
}

impl RobotCore {
    pub fn new(config: RobotConfig, truth: Arc<GroundTruth>) -> Self {
        Self {
            tank_l: config.tank_l,
            config,
            jobs: 0,
            truth,
        }
    }

    fn execute(&mut self, ring: &[[f64; 2]]) -> Result<WeedingOutcome, (u16, String)> {
        let area_m2 = geo::area_m2(ring);
        let herbicide_l = area_m2 / 10_000.0 * self.config.dose_l_per_ha;
        if herbicide_l > self.tank_l {
            return Err((409, format!("tank holds {:.1} L, job needs {herbicide_l:.1} L", self.tank_l)));
        }
        let field = self
            .truth
            .field_at(geo::centroid(ring))
            .ok_or_else(|| unprocessable("route lies outside every known field"))?;
        let weeds_after = self
            .truth
            .apply_weed_control(&field, self.config.efficacy)
            .ok_or_else(|| unprocessable("field vanished"))?;
        let speed_mps = self.config.speed_kmh / 3.6;
        self.tank_l -= herbicide_l;
        self.jobs += 1;
        Ok(WeedingOutcome {
            job_number: self.jobs,
            area_m2,
            duration_s: area_m2 / self.config.working_width_m / speed_mps,
            herbicide_l,
            weeds_after,
        })
    }
}

/// Verb-style API, metric units (L, km/h, ha, min).
pub struct RobotAlpha {
    core: Mutex<RobotCore>,
}

impl RobotAlpha {
    pub fn new(core: RobotCore) -> Self {
        Self { core: Mutex::new(core) }
    }

    fn route(&self, req: &NativeRequest) -> Reply {
        match (req.method.as_str(), req.path.as_str()) {
            ("POST", "/api/getStatus") => {
                let core = self.core.lock().unwrap();
                Ok(json!({
                    "serial": core.config.serial,
                    "tankLevelL": core.tank_l,
                    "speedKmh": core.config.speed_kmh,
                    "jobsCompleted": core.jobs,
                }))
            }
            ("POST", "/api/executeJob") => {
                let body = strict_object(&req.body, &["waypoints", "crop"])?;
                let ring = parse_ring(&body["waypoints"])?;
                text(body, "crop")?;
                let out = self.core.lock().unwrap().execute(&ring)?;
                Ok(json!({
                    "jobRef": format!("A-{:04}", out.job_number),
                    "areaHa": out.area_m2 / 10_000.0,
                    "durationMin": out.duration_s / 60.0,
                    "herbicideL": out.herbicide_l,
                    "weedDensityAfter": out.weeds_after,
                }))
            }
            (_, "/api/getStatus" | "/api/executeJob") => Err((405, "method not allowed".into())),
            _ => Err((404, format!("no such endpoint {}", req.path))),
        }
    }
}

impl NativeService for RobotAlpha {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

/// Resource-style API, sub-units (mL, m/s, m², s).
pub struct RobotBeta {
    core: Mutex<RobotCore>,
}

impl RobotBeta {
    pub fn new(core: RobotCore) -> Self {
        Self { core: Mutex::new(core) }
    }

    fn route(&self, req: &NativeRequest) -> Reply {
        let base = format!("/v2/robots/{BETA_ROBOT_ID}");
        let state = format!("{base}/state");
        let missions = format!("{base}/missions");
        match (req.method.as_str(), req.path.as_str()) {
            ("GET", p) if p == state => {
                let core = self.core.lock().unwrap();
                Ok(json!({
                    "robot": {
                        "id": core.config.serial,
                        "reservoir": { "level_ml": core.tank_l * 1000.0 },
                        "kinematics": { "velocity_mps": core.config.speed_kmh / 3.6 },
                        "missionCount": core.jobs,
                    }
                }))
            }
            ("POST", p) if p == missions => {
                let body = strict_object(&req.body, &["mission"])?;
                let mission = strict_object(&body["mission"], &["path", "cropKind"])?;
                let path = strict_object(&mission["path"], &["type", "coordinates"])?;
                if path["type"] != "ring" {
                    return Err(unprocessable("mission.path.type must be 'ring'"));
                }
                let ring = parse_ring(&path["coordinates"])?;
                text(mission, "cropKind")?;
                let out = self.core.lock().unwrap().execute(&ring)?;
                Ok(json!({
                    "mission": {
                        "id": format!("mission-{}", out.job_number),
                        "coverage_m2": out.area_m2,
                        "elapsed_s": out.duration_s,
                        "agent_used_ml": out.herbicide_l * 1000.0,
                        "residual_weeds_per_m2": out.weeds_after,
                    }
                }))
            }
            (_, p) if p == state || p == missions => Err((405, "method not allowed".into())),
            _ => Err((404, format!("resource {} not found", req.path))),
        }
    }
}

impl NativeService for RobotBeta {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

/// Route planning service: a coverage route is the closed field outline.
#[derive(Default)]
pub struct RoutePlanner;

impl RoutePlanner {
    fn route(&self, req: &NativeRequest) -> Reply {
        match (req.method.as_str(), req.path.as_str()) {
            ("GET", "/status") => Ok(json!({ "version": "2.1", "ready": true })),
            ("POST", "/plan") => {
                let body = strict_object(&req.body, &["field"])?;
                let field = strict_object(&body["field"], &["outline"])?;
                let ring = geo::close_ring(parse_ring(&field["outline"])?);
                let local = geo::project_local(&ring);
                let length: f64 = local
                    .windows(2)
                    .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
                    .sum();
                Ok(json!({ "route": { "ring": ring }, "lengthM": length }))
            }
            (_, "/status" | "/plan") => Err((405, "method not allowed".into())),
            _ => Err((404, format!("no such endpoint {}", req.path))),
        }
    }
}

impl NativeService for RoutePlanner {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

/// Fertilizer spreader applying a fixed nitrogen rate per pass.
pub struct Spreader {
    serial: String,
    rate_kg_ha: f64,
    jobs: Mutex<u32>,
    truth: Arc<GroundTruth>,
}

impl Spreader {
    pub fn new(serial: &str, rate_kg_ha: f64, truth: Arc<GroundTruth>) -> Self {
        Self {
            serial: serial.to_owned(),
            rate_kg_ha,
            jobs: Mutex::new(0),
            truth,
        }
    }

    fn route(&self, req: &NativeRequest) -> Reply {
        match (req.method.as_str(), req.path.as_str()) {
            ("GET", "/status") => Ok(json!({ "serial": self.serial, "jobs": *self.jobs.lock().unwrap() })),
            ("POST", "/jobs/spread") => {
                let body = strict_object(&req.body, &["area"])?;
                let area = strict_object(&body["area"], &["polygon"])?;
                let ring = parse_ring(&area["polygon"])?;
                let field = self
                    .truth
                    .field_at(geo::centroid(&ring))
                    .ok_or_else(|| unprocessable("area lies outside every known field"))?;
                let mut jobs = self.jobs.lock().unwrap();
                *jobs += 1;
                let after = self
                    .truth
                    .apply_nitrogen(&field, self.rate_kg_ha, "fertilization")
                    .ok_or_else(|| unprocessable("field vanished"))?;
                Ok(json!({
                    "jobId": format!("SP-{:04}", *jobs),
                    "areaHa": geo::area_ha(&ring),
                    "appliedKgHa": self.rate_kg_ha,
                    "soilNitrogenAfterKgHa": after,
                }))
            }
            (_, "/status" | "/jobs/spread") => Err((405, "method not allowed".into())),
            _ => Err((404, format!("no such endpoint {}", req.path))),
        }
    }
}

impl NativeService for Spreader {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

/// The farmer's current FMIS: GeoJSON-ish records, nitrogen in kg/ha.
pub struct FmisOne {
    records: Vec<FieldSeed>,
}

impl FmisOne {
    pub fn new(records: Vec<FieldSeed>) -> Self {
        Self { records }
    }

    fn route(&self, req: &NativeRequest) -> Reply {
        let segs: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        match (req.method.as_str(), segs.as_slice()) {
            ("GET", ["api", "v1", "fields"]) => Ok(json!(self.records.iter().map(|r| r.id.as_str()).collect::<Vec<_>>())),
            ("GET", ["api", "v1", "fields", id]) => {
                let r = self
                    .records
                    .iter()
                    .find(|r| r.id.as_str() == *id)
                    .ok_or((404, format!("field {id} unknown")))?;
                Ok(json!({
                    "fieldId": r.id,
                    "geometry": { "type": "Polygon", "coordinates": geo::close_ring(r.boundaries.clone()) },
                    "crop": { "name": r.crop },
                    "soil": { "n_kg_ha": r.initial_nitrogen },
                }))
            }
            (_, ["api", "v1", ..]) => Err((405, "method not allowed".into())),
            _ => Err((404, format!("no such endpoint {}", req.path))),
        }
    }
}

impl NativeService for FmisOne {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

/// The replacement FMIS: parcel documents, nitrogen stock in g/m².
pub struct FmisNew {
    records: Vec<FieldSeed>,
}

impl FmisNew {
    pub fn new(records: Vec<FieldSeed>) -> Self {
        Self { records }
    }

    fn route(&self, req: &NativeRequest) -> Reply {
        let segs: Vec<&str> = req.path.trim_matches('/').split('/').collect();
        match (req.method.as_str(), segs.as_slice()) {
            ("GET", ["parcels", id, "parcelData"]) => {
                let r = self
                    .records
                    .iter()
                    .find(|r| r.id.as_str() == *id)
                    .ok_or((404, format!("parcel {id} unknown")))?;
                Ok(json!({
                    "parcelData": {
                        "outline": geo::close_ring(r.boundaries.clone()),
                        "cultivatedCrop": r.crop,
                        // 1 g/m² = 10 kg/ha
                        "nitrogenStock_g_m2": r.initial_nitrogen / 10.0,
                    }
                }))
            }
            (_, ["parcels", ..]) => Err((405, "method not allowed".into())),
            _ => Err((404, format!("no such endpoint {}", req.path))),
        }
    }
}

impl NativeService for FmisNew {
    fn handle(&self, request: &NativeRequest) -> NativeResponse {
        reply(self.route(request))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Arc<GroundTruth> {
        Arc::new(GroundTruth::new([super::super::ground::GroundTruthField {
            id: "f".parse().unwrap(),
            crop: "potato".into(),
            boundaries: vec![[0.0, 0.0], [0.01, 0.0], [0.01, 0.01], [0.0, 0.01], [0.0, 0.0]],
            nitrogen_kg_ha: 30.0,
            weed_density: 10.0,
        }]))
    }

    #[test]
    fn alpha_rejects_unknown_fields() {
        let a = RobotAlpha::new(RobotCore::new(RobotConfig::standard("A"), truth()));
        let r = a.handle(&NativeRequest::new(
            "POST",
            "/api/executeJob",
            json!({"waypoints": [[0.001, 0.001], [0.002, 0.001], [0.002, 0.002]], "crop": "potato", "x": 1}),
        ));
        assert_eq!(r.status, 422);
    }

    #[test]
    fn beta_reports_sub_units() {
        let b = RobotBeta::new(RobotCore::new(RobotConfig::standard("B"), truth()));
        let r = b.handle(&NativeRequest::new("GET", "/v2/robots/BETA-7/state", Value::Null));
        assert_eq!(r.status, 200);
        assert_eq!(r.body["robot"]["reservoir"]["level_ml"], 400_000.0);
        let wrong = b.handle(&NativeRequest::new("POST", "/v2/robots/BETA-7/state", Value::Null));
        assert_eq!(wrong.status, 405);
    }

    #[test]
    fn spreader_adds_configured_rate() {
        let t = truth();
        let s = Spreader::new("S", 10.0, t.clone());
        let r = s.handle(&NativeRequest::new(
            "POST",
            "/jobs/spread",
            json!({"area": {"polygon": [[0.0, 0.0], [0.01, 0.0], [0.01, 0.01], [0.0, 0.01], [0.0, 0.0]]}}),
        ));
        assert_eq!(r.body["soilNitrogenAfterKgHa"], 40.0);
        assert!(t.conservation_holds());
    }
}
