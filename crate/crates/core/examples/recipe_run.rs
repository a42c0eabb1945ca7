//! Weed control with a bundled recipe, then the same recipe after swapping
//! the robot. Nothing but the role binding changes.

use agritwin::orchestrator::RoleBindings;
use agritwin::sim::systems;
use agritwin::sim::{start_world, ScenarioSpec};

fn main() -> agritwin::Result<()> {
    let world = start_world(ScenarioSpec::new("adiop1", 7))?;
    let recipe = world.orchestrator.recipe("weed-control-potato")?;
    println!("{} ({}), digest {}", recipe.name, recipe.roles.len(), &recipe.definition_digest[..16]);
    let field = "field-7".parse()?;

    for robot in [systems::ROBOT_ALPHA, systems::ROBOT_BETA] {
        if robot == systems::ROBOT_BETA {
            world.stimulus_replace_system(systems::ROBOT_ALPHA, systems::ROBOT_BETA)?;
        }
        let bindings = RoleBindings::from([
            ("routePlanner".into(), systems::ROUTE_PLANNER.parse()?),
            ("fieldRobot".into(), robot.parse()?),
        ]);
        let bound = world.orchestrator.bind_roles(&recipe, &bindings)?;
        let record = world.orchestrator.run(&bound, &field)?;
        println!(
            "{} by {}: {:.3} ha, outputs {:?}",
            record.job_id, record.executed_by, record.covered_area_ha, record.outputs
        );
    }
    println!("history: {} records", world.fields.work_history(&field)?.len());
    Ok(())
}
