//! Granted copy of field data into a recommender's inbox. Replays return the
//! stored receipt; a spent one-time grant blocks the next command.

use agritwin::field::concepts;
use agritwin::mediator::{ExchangeCommand, Grant, GrantScope};
use agritwin::sim::{start_world, ScenarioSpec};

fn main() -> agritwin::Result<()> {
    let world = start_world(ScenarioSpec::new("adiop2", 7))?;
    let field: agritwin::twin::TwinId = "field-7".parse()?;
    let dest = world.recommender.id();
    let items = vec![concepts::soil_nitrogen(), concepts::crop_type(), concepts::boundaries()];

    let cmd = |id: &str| ExchangeCommand::copy(id, field.clone(), dest.clone(), items.clone(), dest.as_str());
    match world.mediator.submit_exchange(&cmd("x-1")) {
        Err(e) => println!("before any grant: {e}"),
        Ok(_) => unreachable!(),
    }

    let grant = world
        .mediator
        .register_grant(Grant::new("farmer", dest.as_str(), field.clone(), items.clone(), GrantScope::OneTime))?;
    println!("grant {grant}");
    let receipt = world.mediator.submit_exchange(&cmd("x-2"))?;
    println!("{:?}", receipt.status);
    for item in &receipt.per_item {
        println!("  {item:?}");
    }
    let replay = world.mediator.submit_exchange(&cmd("x-2"))?;
    println!("replay identical: {}", replay == receipt);
    if let Err(e) = world.mediator.submit_exchange(&cmd("x-3")) {
        println!("after the grant is spent: {e}");
    }
    Ok(())
}
