//! Facet and geographic queries against the hub of a simulated farm.

use agritwin::field::concepts;
use agritwin::hub::{Comparator, GeoBox, TwinQuery};
use agritwin::sim::{start_world, ScenarioSpec};
use agritwin::twin::TwinKind;

fn main() -> agritwin::Result<()> {
    let world = start_world(ScenarioSpec::new("adiop1", 7))?;
    for e in world.hub.entries() {
        println!("{:<14} {:?} tags={}", e.descriptor.id.to_string(), e.descriptor.kind, e.tags.len());
    }

    let queries = [
        ("potato fields", TwinQuery::all().with_predicate(concepts::crop_type(), Comparator::Eq, "potato")),
        (
            "nitrogen below 50",
            TwinQuery::all().with_predicate(concepts::soil_nitrogen(), Comparator::Lt, 50.0),
        ),
        (
            "system twins",
            TwinQuery {
                kind: Some(TwinKind::SystemTwin),
                ..TwinQuery::all()
            },
        ),
        (
            "fields inside a box",
            TwinQuery {
                geo_box: Some(GeoBox { lon_min: -180.0, lat_min: -90.0, lon_max: 180.0, lat_max: 90.0 }),
                ..TwinQuery::all()
            },
        ),
    ];
    for (label, q) in queries {
        let ids: Vec<String> = world.hub.query(&q)?.iter().map(ToString::to_string).collect();
        println!("{label}: {}", ids.join(", "));
    }
    Ok(())
}
