//! Raise soil nitrogen to a target and watch twin and ground truth per pass.
//!
//! `cargo run --example closed_loop -- 80 15` sets target 80 at 15 kg/ha a pass.

use agritwin::field::concepts;
use agritwin::sim::{start_world, ScenarioSpec};

fn main() -> agritwin::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let target = args.next().unwrap_or(60.0);
    let mut spec = ScenarioSpec::new("closedloop", 7);
    spec.overrides.initial_nitrogen = Some(30.0);
    spec.overrides.nitrogen_per_pass = Some(args.next().unwrap_or(10.0));
    let world = start_world(spec.clone())?;
    let field = spec.field();

    let trigger = world.fields.set_target(&field, &concepts::soil_nitrogen(), target)?;
    let outcome = world.orchestrator.handle_trigger(&trigger)?;
    println!("pass  step    twin   truth");
    for (i, s) in world.trace().iter().enumerate() {
        println!("{:>4}  {:>4}  {:>6.1}  {:>6.1}", i + 1, s.step, s.twin, s.truth);
    }
    println!("{} passes, final {}", outcome.records.len(), outcome.final_value);
    Ok(())
}
