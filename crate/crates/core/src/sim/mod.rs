//! Deterministic farm simulation: vendor-native systems with incompatible
//! APIs, field ground truth and the scenario harness.

pub mod ground;
pub mod natives;
pub mod recommendation;
pub mod scenario;
pub mod systems;
pub mod world;

pub use scenario::{bundled_spec, run_scenario, Clause, ScenarioReport};
pub use world::{start_world, Overrides, ScenarioSpec, TraceSample, World};
