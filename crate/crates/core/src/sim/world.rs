//! A complete simulated farm: native systems, ground truth and the twin
//! platform wired together.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ground::GroundTruth;
use super::natives::{self, FmisNew, FmisOne, RobotAlpha, RobotBeta, RobotConfig, RobotCore, RoutePlanner, Spreader};
use super::recommendation::{RecommendationService, DEFAULT_CONFIG};
use super::systems::{self, adapters};
use crate::clock::{Clock, SimClock};
use crate::directory::TwinDirectory;
use crate::error::{Error, Result};
use crate::field::{concepts, FieldOperations, FieldSeed, FieldService, FieldTwinModel, JobRecord, ProcessKind, ProcessTrigger, TriggerQueue};
use crate::http::{ApiServer, Services};
use crate::hub::{HubOptions, Registry, TwinHub};
use crate::mediator::Mediator;
use crate::orchestrator::{bundled, Orchestrator, PassObserver, RoleBindings};
use crate::twin::{wrap_native_system, NativeNetwork, Sample, ShellDescriptor, TwinAccess, TwinId, TypedValue};
use crate::vocabulary::Vocabulary;

pub mod seeds {
    pub const FIELD_7: &str = include_str!("../../data/fields/field-7.json");
    pub const FIELD_8: &str = include_str!("../../data/fields/field-8.json");
    pub const FIELD_9: &str = include_str!("../../data/fields/field-9.json");
}

pub const SCENARIOS: [&str; 3] = ["adiop1", "adiop2", "closedloop"];

/// Role symbols of the scenario tables and the components playing them.
pub fn default_cast() -> BTreeMap<String, String> {
    [
        ("SP_1", "service-provider"),
        ("Sys_1", systems::ROUTE_PLANNER),
        ("Sys_2", systems::ROBOT_ALPHA),
        ("Sys_3", systems::ROBOT_BETA),
        ("S_1", systems::RECOMMENDER),
        ("F_1", "field-7"),
        ("FMIS_1", systems::FMIS_1),
        ("new FMIS", systems::FMIS_NEW),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v.to_owned()))
    .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nitrogen_per_pass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_nitrogen: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_nitrogen: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_passes: Option<u32>,
    /// Standard deviation of Gaussian sensor noise, kg/ha.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_noise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_cast")]
    pub cast: BTreeMap<String, String>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ScenarioSpec {
    pub fn new(name: &str, seed: u64) -> Self {
        Self {
            name: name.to_owned(),
            seed,
            cast: default_cast(),
            overrides: Overrides::default(),
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::BadConfig(format!("scenario spec: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.contains(&self.name.as_str()) {
            return Err(Error::ScenarioUnknown(self.name.clone()));
        }
        let expected = default_cast();
        if self.cast.keys().ne(expected.keys()) {
            return Err(Error::BadConfig(format!(
                "cast must name exactly the roles {:?}",
                expected.keys().collect::<Vec<_>>()
            )));
        }
        for (role, component) in &self.cast {
            let ok = if role == "F_1" {
                ["field-7", "field-8", "field-9"].contains(&component.as_str())
            } else {
                *component == expected[role]
            };
            if !ok {
                return Err(Error::BadConfig(format!("role {role} cannot be played by '{component}'")));
            }
        }
        let o = &self.overrides;
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x.is_finite() && x > 0.0) => Err(Error::BadConfig(format!("{name} must be positive"))),
            _ => Ok(()),
        };
        positive("nitrogenPerPass", o.nitrogen_per_pass)?;
        positive("targetNitrogen", o.target_nitrogen)?;
        if o.initial_nitrogen.is_some_and(|x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::BadConfig("initialNitrogen must be non-negative".into()));
        }
        if o.sensor_noise.is_some_and(|x| !(x.is_finite() && x >= 0.0)) {
            return Err(Error::BadConfig("sensorNoise must be non-negative".into()));
        }
        if o.max_passes == Some(0) {
            return Err(Error::BadConfig("maxPasses must be at least 1".into()));
        }
        Ok(())
    }

    pub fn field(&self) -> TwinId {
        self.cast["F_1"].parse().expect("validated cast")
    }

    pub fn nitrogen_per_pass(&self) -> f64 {
        self.overrides.nitrogen_per_pass.unwrap_or(10.0)
    }
}

/// One sampling tick: ground truth against the twin after a pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceSample {
    pub step: i64,
    pub truth: f64,
    pub twin: f64,
}

struct SystemSlot {
    twin: Arc<dyn TwinAccess>,
    native: Option<String>,
    active: bool,
}

/// Advances the clock after each process pass and samples the field sensor.
struct SensorTick {
    clock: Arc<SimClock>,
    truth: Arc<GroundTruth>,
    fields: Arc<FieldService>,
    noise: Option<Normal<f64>>,
    rng: Mutex<ChaCha8Rng>,
    trace: Mutex<Vec<TraceSample>>,
}

impl SensorTick {
    fn sample(&self, field: &TwinId) -> Result<TraceSample> {
        let step = self.clock.advance();
        let truth = self
            .truth
            .nitrogen(field)
            .ok_or_else(|| Error::NotFound(format!("ground truth for {field}")))?;
        let noise = self
            .noise
            .map(|n| n.sample(&mut *self.rng.lock().unwrap()))
            .unwrap_or(0.0);
        let reading = (truth + noise).max(0.0);
        self.fields.ingest_sensor_reading(
            field,
            &concepts::soil_nitrogen(),
            TypedValue::Decimal(reading),
            "kg/ha",
            self.clock.now(),
        )?;
        let twin = self
            .fields
            .read_field_data(field, &[concepts::soil_nitrogen()])?
            .remove(&concepts::soil_nitrogen())
            .and_then(|r| match r {
                crate::field::FieldReading::Present { value, .. } => value.as_f64(),
                _ => None,
            })
            .unwrap_or(f64::NAN);
        let s = TraceSample { step, truth, twin };
        self.trace.lock().unwrap().push(s.clone());
        Ok(s)
    }
}

impl PassObserver for SensorTick {
    fn after_pass(&self, trigger: &ProcessTrigger, _record: &JobRecord) {
        if let Err(e) = self.sample(&trigger.field_id) {
            log::warn!("sensor tick failed: {e}");
        }
    }
}

pub struct World {
    pub spec: ScenarioSpec,
    pub clock: Arc<SimClock>,
    pub vocabulary: Arc<Vocabulary>,
    pub network: Arc<NativeNetwork>,
    pub truth: Arc<GroundTruth>,
    pub directory: Arc<TwinDirectory>,
    pub hub: Arc<TwinHub>,
    pub triggers: Arc<TriggerQueue>,
    pub fields: Arc<FieldService>,
    pub mediator: Arc<Mediator>,
    pub orchestrator: Arc<Orchestrator>,
    pub recommender: Arc<RecommendationService>,
    sensor: Arc<SensorTick>,
    systems: Mutex<BTreeMap<TwinId, SystemSlot>>,
    public_base: Mutex<Option<String>>,
}

fn seeds() -> Result<Vec<FieldSeed>> {
    [seeds::FIELD_7, seeds::FIELD_8, seeds::FIELD_9]
        .iter()
        .map(|s| FieldSeed::from_json(s.as_bytes()))
        .collect()
}

/// Hourly temperature forecast for the next day.
fn forecast(rng: &mut ChaCha8Rng, clock: &SimClock) -> Vec<Sample> {
    (1..=24)
        .map(|h| {
            let diurnal = 6.0 * ((h as f64 - 9.0) / 24.0 * std::f64::consts::TAU).sin();
            let t = 9.0 + diurnal + rng.gen_range(-1.0..1.0);
            Sample {
                at: clock.at_step(h),
                value: serde_json::json!((t * 10.0).round() / 10.0),
            }
        })
        .collect()
}

/// Builds the world for `spec`. Equal seeds give identical worlds.
pub fn start_world(spec: ScenarioSpec) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clock = Arc::new(SimClock::standard());
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let vocabulary = Arc::new(Vocabulary::standard());
    let network = Arc::new(NativeNetwork::new());

    let base_seeds = seeds()?;
    let field_id = spec.field();
    let mut models = Vec::new();
    let mut truths = Vec::new();
    for seed in &base_seeds {
        let mut seed = seed.clone();
        seed.weed_density = (seed.weed_density * rng.gen_range(0.8..1.2) * 100.0).round() / 100.0;
        if seed.id == field_id {
            if let Some(n) = spec.overrides.initial_nitrogen {
                seed.initial_nitrogen = n;
            }
        }
        let model = FieldTwinModel::from_seed(&seed, forecast(&mut rng, &clock));
        model.validate()?;
        truths.push(GroundTruth::from_seed(&seed));
        models.push(model);
    }
    let truth: Arc<GroundTruth> = Arc::new(GroundTruth::new(truths));

    network.attach(
        natives::ALPHA_ADDRESS,
        Arc::new(RobotAlpha::new(RobotCore::new(RobotConfig::standard("ALPHA-0042"), truth.clone()))),
    );
    network.attach(
        natives::BETA_ADDRESS,
        Arc::new(RobotBeta::new(RobotCore::new(
            RobotConfig::standard(natives::BETA_ROBOT_ID),
            truth.clone(),
        ))),
    );
    network.attach(natives::PLANNER_ADDRESS, Arc::new(RoutePlanner));
    network.attach(
        natives::SPREADER_ADDRESS,
        Arc::new(Spreader::new("SPR-310", spec.nitrogen_per_pass(), truth.clone())),
    );
    network.attach(natives::FMIS1_ADDRESS, Arc::new(FmisOne::new(base_seeds.clone())));
    network.attach(natives::FMIS_NEW_ADDRESS, Arc::new(FmisNew::new(base_seeds.clone())));

    let directory = Arc::new(TwinDirectory::new());
    let hub = Arc::new(
        TwinHub::new(vocabulary.clone(), dyn_clock.clone(), HubOptions::default())?.with_directory(directory.clone()),
    );
    let triggers = Arc::new(TriggerQueue::new());
    let operations = Arc::new(FieldOperations::new(dyn_clock.clone(), triggers.clone()));
    let fields = Arc::new(FieldService::new(hub.clone(), operations));
    for model in &models {
        fields.host(model, clock.now())?;
    }

    let registry: Arc<dyn Registry> = hub.clone();
    let mediator = Arc::new(Mediator::new(
        registry.clone(),
        directory.clone(),
        vocabulary.clone(),
        dyn_clock.clone(),
    ));
    let recommender = Arc::new(RecommendationService::new(
        DEFAULT_CONFIG.as_bytes(),
        registry.clone(),
        mediator.clone(),
        dyn_clock.clone(),
        &vocabulary,
    )?);

    let mut orchestrator = Orchestrator::new(registry, directory.clone(), fields.clone(), dyn_clock.clone());
    if let Some(n) = spec.overrides.max_passes {
        orchestrator = orchestrator.with_max_passes(n);
    }
    let orchestrator = Arc::new(orchestrator);
    for def in [bundled::WEED_CONTROL_POTATO, bundled::WEED_CONTROL_SUGAR_BEET, bundled::FERTILIZATION] {
        orchestrator.load_recipe(def.as_bytes())?;
    }
    orchestrator.register_process(
        ProcessKind::Fertilization,
        "fertilization",
        RoleBindings::from([("spreader".to_owned(), systems::SPREADER.parse()?)]),
    )?;
    let noise = match spec.overrides.sensor_noise {
        Some(sd) if sd > 0.0 => Some(Normal::new(0.0, sd).map_err(|e| Error::BadConfig(e.to_string()))?),
        _ => None,
    };
    let sensor = Arc::new(SensorTick {
        clock: clock.clone(),
        truth: truth.clone(),
        fields: fields.clone(),
        noise,
        rng: Mutex::new(ChaCha8Rng::seed_from_u64(rng.gen())),
        trace: Mutex::new(Vec::new()),
    });
    orchestrator.set_observer(sensor.clone());

    let world = World {
        spec,
        clock,
        vocabulary,
        network,
        truth,
        directory,
        hub,
        triggers,
        fields,
        mediator,
        orchestrator,
        recommender,
        sensor,
        systems: Mutex::new(BTreeMap::new()),
        public_base: Mutex::new(None),
    };
    world.install_systems()?;
    Ok(world)
}

impl World {
    fn install_systems(&self) -> Result<()> {
        let v = &*self.vocabulary;
        let adapted = [
            (systems::ROUTE_PLANNER, systems::route_planner(systems::ROUTE_PLANNER, v)?, adapters::ROUTE_PLANNER, true),
            (systems::ROBOT_ALPHA, systems::field_robot(systems::ROBOT_ALPHA, v)?, adapters::ROBOT_ALPHA, true),
            (systems::ROBOT_BETA, systems::field_robot(systems::ROBOT_BETA, v)?, adapters::ROBOT_BETA, false),
            (systems::SPREADER, systems::spreader(systems::SPREADER, v)?, adapters::SPREADER, true),
            (systems::FMIS_1, systems::fmis(systems::FMIS_1, v)?, adapters::FMIS_1, true),
            (systems::FMIS_NEW, systems::fmis(systems::FMIS_NEW, v)?, adapters::FMIS_NEW, false),
        ];
        for (id, skeleton, spec, active) in adapted {
            let spec = systems::adapter(spec)?;
            let native = spec.native_endpoint.clone();
            let twin = wrap_native_system(spec, skeleton, self.network.clone(), self.clock.clone(), Some(v))?;
            self.add_system(id.parse()?, Arc::new(twin), Some(native), active)?;
        }
        self.add_system(self.recommender.id(), self.recommender.twin().clone(), None, true)
    }

    fn add_system(&self, id: TwinId, twin: Arc<dyn TwinAccess>, native: Option<String>, active: bool) -> Result<()> {
        self.systems.lock().unwrap().insert(
            id.clone(),
            SystemSlot {
                twin,
                native: native.clone(),
                active: false,
            },
        );
        if active {
            self.activate(&id)?;
        } else if let Some(addr) = native {
            self.network.set_online(&addr, false);
        }
        Ok(())
    }

    fn endpoint_for(&self, id: &TwinId) -> String {
        match self.public_base.lock().unwrap().as_deref() {
            Some(base) => format!("{base}/twins/{}", urlencoding::encode(id.as_str())),
            None => format!("local://{id}"),
        }
    }

    fn activate(&self, id: &TwinId) -> Result<()> {
        let mut systems = self.systems.lock().unwrap();
        let slot = systems.get_mut(id).ok_or_else(|| Error::UnknownSystem(id.to_string()))?;
        if let Some(addr) = &slot.native {
            self.network.set_online(addr, true);
        }
        let endpoint = self.endpoint_for(id);
        self.directory.attach(format!("local://{id}"), slot.twin.clone());
        self.directory.attach(endpoint.clone(), slot.twin.clone());
        let descriptor = slot.twin.describe()?.with_endpoint(endpoint);
        self.hub.register_twin(descriptor, BTreeMap::new())?;
        slot.active = true;
        Ok(())
    }

    /// Twin ids of the simulated systems and whether each is registered.
    pub fn systems(&self) -> Vec<(TwinId, bool)> {
        self.systems
            .lock()
            .unwrap()
            .iter()
            .map(|(id, s)| (id.clone(), s.active))
            .collect()
    }

    pub fn system_twin(&self, id: &TwinId) -> Result<Arc<dyn TwinAccess>> {
        self.systems
            .lock()
            .unwrap()
            .get(id)
            .map(|s| s.twin.clone())
            .ok_or_else(|| Error::UnknownSystem(id.to_string()))
    }

    /// Takes `old` out of service and brings `new` in. Nothing else is
    /// touched: no recipe, binding table or other component changes.
    pub fn stimulus_replace_system(&self, old: &str, new: &str) -> Result<()> {
        let old_id: TwinId = old.parse().map_err(|_| Error::UnknownSystem(old.to_owned()))?;
        let new_id: TwinId = new.parse().map_err(|_| Error::UnknownSystem(new.to_owned()))?;
        {
            let systems = self.systems.lock().unwrap();
            match systems.get(&old_id) {
                Some(s) if s.active => {}
                _ => return Err(Error::UnknownSystem(old.to_owned())),
            }
            match systems.get(&new_id) {
                Some(s) if !s.active => {}
                _ => return Err(Error::UnknownSystem(new.to_owned())),
            }
        }
        self.hub.deregister_twin(&old_id)?;
        {
            let mut systems = self.systems.lock().unwrap();
            let slot = systems.get_mut(&old_id).expect("checked above");
            if let Some(addr) = &slot.native {
                self.network.set_online(addr, false);
            }
            self.directory.detach(&format!("local://{old_id}"));
            self.directory.detach(&self.endpoint_for(&old_id));
            slot.active = false;
        }
        self.activate(&new_id)
    }

    /// Sensor trace of trigger-driven passes so far.
    pub fn trace(&self) -> Vec<TraceSample> {
        self.sensor.trace.lock().unwrap().clone()
    }

    pub fn descriptor(&self, id: &TwinId) -> Result<ShellDescriptor> {
        self.hub.lookup(id)
    }

    /// Serves the whole world over HTTP; registered endpoints switch to it.
    pub fn serve(&self, addr: &str) -> Result<ApiServer> {
        let services = Arc::new(Services {
            vocabulary: Some(self.vocabulary.clone()),
            hub: Some(self.hub.clone()),
            fields: Some(self.fields.clone()),
            mediator: Some(self.mediator.clone()),
            orchestrator: Some(self.orchestrator.clone()),
            twins: Default::default(),
        });
        for s in self.systems.lock().unwrap().values() {
            services.serve_twin(s.twin.clone());
        }
        let server = ApiServer::bind(addr, services)?;
        let base = server.url();
        *self.public_base.lock().unwrap() = Some(base.clone());
        self.hub.set_public_base(Some(base));
        let systems = self.systems.lock().unwrap();
        for (id, s) in systems.iter().filter(|(_, s)| s.active) {
            let endpoint = self.endpoint_for(id);
            self.directory.attach(endpoint.clone(), s.twin.clone());
            self.hub.update_endpoint(id, endpoint)?;
        }
        Ok(server)
    }
}
