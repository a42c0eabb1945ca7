//! Two robots with unrelated native APIs, wrapped into twins with the same
//! shape. Reads and jobs go through the twin and come back in shared units.

use std::sync::Arc;

use agritwin::clock::{Clock, SimClock};
use agritwin::field::FieldSeed;
use agritwin::sim::ground::GroundTruth;
use agritwin::sim::natives::{self, RobotAlpha, RobotBeta, RobotConfig, RobotCore};
use agritwin::sim::systems::{self, adapters};
use agritwin::sim::world::seeds;
use agritwin::twin::{wrap_native_system, AdapterSpec, Args, ElementPath, NativeNetwork, TwinAccess, TypedValue};
use agritwin::vocabulary::Vocabulary;

fn main() -> agritwin::Result<()> {
    let seed = FieldSeed::from_json(seeds::FIELD_7.as_bytes())?;
    let truth = Arc::new(GroundTruth::new([GroundTruth::from_seed(&seed)]));
    let network = Arc::new(NativeNetwork::new());
    network.attach(
        natives::ALPHA_ADDRESS,
        Arc::new(RobotAlpha::new(RobotCore::new(RobotConfig::standard("ALPHA-0042"), truth.clone()))),
    );
    network.attach(
        natives::BETA_ADDRESS,
        Arc::new(RobotBeta::new(RobotCore::new(RobotConfig::standard(natives::BETA_ROBOT_ID), truth))),
    );

    let vocabulary = Vocabulary::standard();
    let clock: Arc<dyn Clock> = Arc::new(SimClock::standard());
    let mut ring = seed.boundaries.clone();
    ring.push(ring[0]);
    let job = Args::from([
        ("route".to_owned(), TypedValue::GeoPolygon(ring)),
        ("cropType".to_owned(), TypedValue::Text(seed.crop.clone())),
    ]);

    for (id, spec) in [(systems::ROBOT_ALPHA, adapters::ROBOT_ALPHA), (systems::ROBOT_BETA, adapters::ROBOT_BETA)] {
        let twin = wrap_native_system(
            AdapterSpec::from_json(spec.as_bytes())?,
            systems::field_robot(id, &vocabulary)?,
            network.clone(),
            clock.clone(),
            Some(&vocabulary),
        )?;
        let shell = twin.describe()?;
        println!("{id}: digest {}", &shell.structure_digest[..16]);
        for path in ["machineStatus/tankLevel", "machineStatus/speed"] {
            let p = twin.get_property(&ElementPath::parse(path)?)?;
            println!("  {path} = {:?} {}", p.value, p.unit);
        }
        let out = twin.invoke_operation(&ElementPath::parse("weedwork/executeJob")?, &job)?;
        for (k, v) in &out {
            println!("  {k}: {v:?}");
        }
    }
    Ok(())
}
