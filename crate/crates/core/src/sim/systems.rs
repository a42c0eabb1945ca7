//! Standard twin skeletons for the simulated systems and their adapter files.

use crate::error::Result;
use crate::twin::{
    AdapterSpec, Datatype, Operation, Parameter, Property, SemanticId, Submodel, TwinId, TwinKind, TwinShell,
};
use crate::vocabulary::Vocabulary;

pub const ROBOT_ALPHA: &str = "robot-alpha";
pub const ROBOT_BETA: &str = "robot-beta";
pub const ROUTE_PLANNER: &str = "route-planner";
pub const SPREADER: &str = "spreader-1";
pub const FMIS_1: &str = "fmis-1";
pub const FMIS_NEW: &str = "fmis-new";
pub const RECOMMENDER: &str = "frs-1";

pub mod adapters {
    pub const ROBOT_ALPHA: &str = include_str!("../../data/adapters/robot-alpha.json");
    pub const ROBOT_BETA: &str = include_str!("../../data/adapters/robot-beta.json");
    pub const ROUTE_PLANNER: &str = include_str!("../../data/adapters/route-planner.json");
    pub const SPREADER: &str = include_str!("../../data/adapters/spreader.json");
    pub const FMIS_1: &str = include_str!("../../data/adapters/fmis-1.json");
    pub const FMIS_NEW: &str = include_str!("../../data/adapters/fmis-new.json");
}

fn sid(short: &str) -> SemanticId {
    SemanticId::expand(short).expect("static id")
}

fn param(name: &str, datatype: Datatype, unit: &str) -> Parameter {
    Parameter::new(name, datatype, unit)
}

fn machine_status(with_tank: bool) -> Submodel {
    let mut sm = Submodel::new("machineStatus", sid("sm.machineStatus"))
        .with_property(Property::new("serial", sid("machine.serial"), Datatype::Text, "1"));
    if with_tank {
        sm = sm
            .with_property(Property::new("tankLevel", sid("machine.tankLevel"), Datatype::Decimal, "L"))
            .with_property(Property::new("speed", sid("machine.speed"), Datatype::Decimal, "km/h"));
    }
    sm.with_property(Property::new(
        "jobsCompleted",
        sid("machine.jobsCompleted"),
        Datatype::Integer,
        "1",
    ))
}

/// Interface shared by every weeding robot, whatever its vendor.
pub fn field_robot(id: &str, vocabulary: &Vocabulary) -> Result<TwinShell> {
    let weedwork = Submodel::new("weedwork", sid("sm.weedwork")).with_operation(Operation {
        short_name: "executeJob".into(),
        semantic_id: sid("op.executeJob"),
        inputs: vec![
            param("route", Datatype::GeoPolygon, "deg"),
            param("cropType", Datatype::Text, "1"),
        ],
        outputs: vec![
            param("jobRef", Datatype::Text, "1"),
            param("coveredArea", Datatype::Decimal, "ha"),
            param("duration", Datatype::Decimal, "min"),
            param("herbicideUsed", Datatype::Decimal, "L"),
            param("weedDensityAfter", Datatype::Decimal, "1/m2"),
        ],
    });
    TwinShell::create(
        id.parse::<TwinId>()?,
        TwinKind::SystemTwin,
        vec![machine_status(true), weedwork],
        Some(vocabulary),
    )
}

pub fn route_planner(id: &str, vocabulary: &Vocabulary) -> Result<TwinShell> {
    let planning = Submodel::new("routePlanning", sid("sm.routePlanning")).with_operation(Operation {
        short_name: "planRoute".into(),
        semantic_id: sid("op.planRoute"),
        inputs: vec![param("boundaries", Datatype::GeoPolygon, "deg")],
        outputs: vec![
            param("route", Datatype::GeoPolygon, "deg"),
            param("length", Datatype::Decimal, "m"),
        ],
    });
    TwinShell::create(id.parse()?, TwinKind::SystemTwin, vec![planning], Some(vocabulary))
}

pub fn spreader(id: &str, vocabulary: &Vocabulary) -> Result<TwinShell> {
    let fertilizing = Submodel::new("fertilizing", sid("sm.fertilizing")).with_operation(Operation {
        short_name: "applyNitrogen".into(),
        semantic_id: sid("op.applyNitrogen"),
        inputs: vec![param("area", Datatype::GeoPolygon, "deg")],
        outputs: vec![
            param("jobRef", Datatype::Text, "1"),
            param("coveredArea", Datatype::Decimal, "ha"),
            param("appliedNitrogen", Datatype::Decimal, "kg/ha"),
            param("nitrogenAfter", Datatype::Decimal, "kg/ha"),
        ],
    });
    TwinShell::create(
        id.parse()?,
        TwinKind::SystemTwin,
        vec![machine_status(false), fertilizing],
        Some(vocabulary),
    )
}

/// Field record exposed by a farm management system.
pub fn fmis(id: &str, vocabulary: &Vocabulary) -> Result<TwinShell> {
    let parcel = Submodel::new("parcelData", sid("sm.parcelData"))
        .with_property(Property::new("boundaries", sid("field.boundaries"), Datatype::GeoPolygon, "deg"))
        .with_property(Property::new("cropType", sid("crop.type"), Datatype::Text, "1"))
        .with_property(Property::new("soilNitrogen", sid("soil.nitrogen"), Datatype::Decimal, "kg/ha"));
    TwinShell::create(id.parse()?, TwinKind::SystemTwin, vec![parcel], Some(vocabulary))
}

pub fn adapter(spec: &str) -> Result<AdapterSpec> {
    AdapterSpec::from_json(spec.as_bytes())
}
