//! A field twin hosted on a hub: sensor ingest, a stale reading, a work record
//! and a target that raises a process trigger.

use std::collections::BTreeMap;
use std::sync::Arc;

use agritwin::clock::{Clock, SimClock};
use agritwin::field::{concepts, FieldOperations, FieldSeed, FieldService, FieldTwinModel, JobRecord, ProcessKind, TriggerQueue};
use agritwin::hub::{HubOptions, TwinHub};
use agritwin::sim::world::seeds;
use agritwin::twin::TypedValue;
use agritwin::vocabulary::Vocabulary;

fn main() -> agritwin::Result<()> {
    let clock = Arc::new(SimClock::standard());
    let dyn_clock: Arc<dyn Clock> = clock.clone();
    let hub = Arc::new(TwinHub::new(Arc::new(Vocabulary::standard()), dyn_clock.clone(), HubOptions::default())?);
    let triggers = Arc::new(TriggerQueue::new());
    let fields = FieldService::new(hub.clone(), Arc::new(FieldOperations::new(dyn_clock, triggers.clone())));

    let seed = FieldSeed::from_json(seeds::FIELD_7.as_bytes())?;
    let endpoint = fields.host(&FieldTwinModel::from_seed(&seed, Vec::new()), clock.now())?;
    println!("hosted {} at {endpoint}", seed.id);
    println!("area {:.3} ha", agritwin::geo::area_ha(&seed.boundaries));

    let n = concepts::soil_nitrogen();
    let fresh = fields.ingest_sensor_reading(&seed.id, &n, TypedValue::Decimal(34.0), "kg/ha", clock.at_step(2))?;
    let stale = fields.ingest_sensor_reading(&seed.id, &n, TypedValue::Decimal(20.0), "kg/ha", clock.at_step(1))?;
    println!("reading at step 2 accepted: {fresh}, older reading accepted: {stale}");

    fields.record_work(
        &seed.id,
        &JobRecord {
            job_id: "job-1".into(),
            field_id: seed.id.clone(),
            process_kind: ProcessKind::Fertilization,
            executed_by: "spreader-1".parse()?,
            started_at: clock.at_step(3),
            finished_at: clock.at_step(4),
            covered_area_ha: agritwin::geo::area_ha(&seed.boundaries),
            outputs: BTreeMap::from([(n.clone(), TypedValue::Decimal(44.0))]),
        },
    )?;
    for (id, reading) in fields.read_field_data(&seed.id, &[n.clone(), concepts::crop_type()])? {
        println!("{id}: {reading:?}");
    }

    let trigger = fields.set_target(&seed.id, &n, 60.0)?;
    println!("trigger {} for {:?} up to {}", trigger.trigger_id, trigger.process_kind, trigger.target_value);
    match fields.set_target(&seed.id, &n, 10.0) {
        Err(e) => println!("target below current: {e}"),
        Ok(_) => unreachable!(),
    }
    println!("{} trigger(s) queued", triggers.drain().len());
    Ok(())
}
